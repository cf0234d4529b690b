//! Block decomposition of a tripartite Markov state.
//!
//! On the support of `rho_B`, the operators steered by `A` and by `E`,
//! whitened by `rho_B^{-1/2}`, generate algebras of the form
//! `⊕_k B(L_k) ⊗ I` and `⊕_k I ⊗ B(R_k)`. Blocks are split along the
//! centers of both algebras until nothing changes; each block is then
//! factored from the dimension and eigenspaces of the `A` algebra. The
//! result is always checked by reconstruction.

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::algebra::{
    center, eigen_clusters, generated_algebra, projected_basis, random_element, random_hermitian_element,
};
use super::{
    left_label, right_label, verify_decomposition, BlockSpec, MarkovDecomposition, MarkovReport, Partition,
    WEIGHT_DROP,
};
use crate::error::Error;
use crate::linalg::{self, c, CMatrix};
use crate::measures::conditional_mutual_information;
use crate::state::{MultipartiteState, SubsystemLayout};

const MAX_MIDDLE_DIM: usize = 16;
/// Eigenvalues of `rho_B` above this span its support.
const SUPPORT_FLOOR: f64 = 1e-10;
const FINDER_SEED: u64 = 0x6d61_726b_6f76;
const ATTEMPTS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum FindError {
    #[error("state is not Markov: CMI exceeds the tolerance {}", .0.tolerance)]
    NotMarkov(MarkovReport),
    #[error("no verifying decomposition found: {reason}")]
    Inconclusive { report: MarkovReport, reason: String },
    #[error(transparent)]
    Invalid(#[from] Error),
}

struct Block {
    d_l: usize,
    d_r: usize,
    /// Columns `l * d_r + r` in the coordinates of `B`.
    basis: CMatrix,
}

/// Find `⊕_k lambda_k rho_{A L_k} ⊗ rho_{R_k E}` for a state on `(A, B, E)`.
///
/// Fails with [`FindError::NotMarkov`] when `I(A;E|B) > tol`, and with
/// [`FindError::Inconclusive`] when no decomposition reconstructs the state
/// within `10 tol`. Deterministic for identical input.
pub fn find_markov_decomposition(rho: &MultipartiteState, tol: f64) -> Result<MarkovDecomposition, FindError> {
    let layout = rho.layout();
    if layout.len() != 3 {
        return Err(Error::Labeling(format!(
            "decomposition needs a tripartite (A, B, E) layout, got {} parts",
            layout.len()
        ))
        .into());
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Contract(format!("tolerance must be positive, got {tol}")).into());
    }
    let labels: Vec<&str> = layout.labels().collect();
    let dims = layout.dims();
    if dims[1] > MAX_MIDDLE_DIM {
        return Err(Error::Shape(format!(
            "middle subsystem dimension {} exceeds {MAX_MIDDLE_DIM}",
            dims[1]
        ))
        .into());
    }
    let partition = Partition::new([labels[0]], [labels[1]], [labels[2]]);
    let cmi = conditional_mutual_information(rho, &partition.a, &partition.b, &partition.e)?;
    let mut values = IndexMap::new();
    values.insert(partition.to_string(), cmi);
    let report = MarkovReport::from_values(values, tol);
    if cmi > tol {
        return Err(FindError::NotMarkov(report));
    }
    let inconclusive = |reason: String, residual: Option<f64>| {
        let mut report = report.clone();
        if let Some(r) = residual {
            report.residual = r;
        }
        FindError::Inconclusive { report, reason }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(FINDER_SEED);
    let blocks = find_blocks(rho, [dims[0], dims[1], dims[2]], &mut rng).map_err(|r| inconclusive(r, None))?;
    let decomp = assemble(rho, [labels[0], labels[1], labels[2]], blocks).map_err(|r| inconclusive(r, None))?;
    let residual = verify_decomposition(rho, &decomp)?;
    if residual.is_nan() || residual > 10.0 * tol {
        return Err(inconclusive(
            format!("reconstruction residual {residual:e} exceeds {:e}", 10.0 * tol),
            Some(residual),
        ));
    }
    Ok(decomp)
}

/// `X_{a a'}[b, b'] = sum_e rho[(a,b,e), (a',b',e)]`.
fn steered_by_first(m: &CMatrix, [da, db, de]: [usize; 3]) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(da * da);
    for a in 0..da {
        for a2 in 0..da {
            out.push(CMatrix::from_fn(db, db, |b, b2| {
                (0..de).map(|e| m[((a * db + b) * de + e, (a2 * db + b2) * de + e)]).sum()
            }));
        }
    }
    out
}

/// `Y_{e e'}[b, b'] = sum_a rho[(a,b,e), (a,b',e')]`.
fn steered_by_last(m: &CMatrix, [da, db, de]: [usize; 3]) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(de * de);
    for e in 0..de {
        for e2 in 0..de {
            out.push(CMatrix::from_fn(db, db, |b, b2| {
                (0..da).map(|a| m[((a * db + b) * de + e, (a * db + b2) * de + e2)]).sum()
            }));
        }
    }
    out
}

/// Split the block with orthonormal columns `q` along the center of the
/// algebra its compressed generators produce.
fn split_by_center(q: &CMatrix, gens: &[CMatrix], rng: &mut ChaCha8Rng) -> Result<Vec<CMatrix>, String> {
    let n = q.ncols();
    if n == 1 {
        return Ok(vec![q.clone()]);
    }
    let restricted: Vec<CMatrix> = gens.iter().map(|g| q.adjoint() * g * q).collect();
    let alg = generated_algebra(&restricted, n);
    let cen = center(&alg, &restricted).map_err(|e| e.to_string())?;
    if cen.len() <= 1 {
        return Ok(vec![q.clone()]);
    }
    for _ in 0..ATTEMPTS {
        let z = random_hermitian_element(&cen, rng);
        let clusters = eigen_clusters(&z).map_err(|e| e.to_string())?;
        if clusters.len() == cen.len() {
            return Ok(clusters.iter().map(|cl| q * cl).collect());
        }
    }
    Err(format!("could not resolve a center of dimension {}", cen.len()))
}

fn find_blocks(rho: &MultipartiteState, dims: [usize; 3], rng: &mut ChaCha8Rng) -> Result<Vec<Block>, String> {
    let db = dims[1];
    let rho_b = linalg::partial_trace_dims(rho.matrix(), &dims, &[1]);
    let spec = linalg::eig_hermitian(&rho_b).map_err(|e| e.to_string())?;
    let rank = spec.eigenvalues.iter().filter(|&&x| x > SUPPORT_FLOOR).count();
    if rank == 0 {
        return Err("the middle marginal has no support".into());
    }
    let support = spec.eigenvectors.columns(0, rank).into_owned();
    let whiten = CMatrix::from_fn(db, rank, |i, k| support[(i, k)] / spec.eigenvalues[k].sqrt());
    let compress = |ops: Vec<CMatrix>| -> Vec<CMatrix> {
        ops.iter().map(|x| whiten.adjoint() * x * &whiten).collect()
    };
    let gens_a = compress(steered_by_first(rho.matrix(), dims));
    let gens_e = compress(steered_by_last(rho.matrix(), dims));

    let mut parts: Vec<CMatrix> = vec![linalg::identity(rank)];
    loop {
        let mut changed = false;
        let mut next = Vec::new();
        for q in &parts {
            let mut pieces = vec![q.clone()];
            for gens in [&gens_a, &gens_e] {
                let mut refined = Vec::new();
                for p in &pieces {
                    refined.extend(split_by_center(p, gens, rng)?);
                }
                pieces = refined;
            }
            changed |= pieces.len() > 1;
            next.extend(pieces);
        }
        parts = next;
        if !changed {
            break;
        }
    }

    let mut blocks = Vec::with_capacity(parts.len() + 1);
    for q in &parts {
        blocks.push(factor_block(q, &support, &gens_a, rng)?);
    }
    if rank < db {
        let kernel = linalg::identity(db) - &support * support.adjoint();
        blocks.push(Block {
            d_l: 1,
            d_r: db - rank,
            basis: projected_basis(&kernel, db - rank),
        });
    }
    Ok(blocks)
}

/// Product basis `|l>|r>` of one block, from the `A` algebra restricted to it.
fn factor_block(q: &CMatrix, support: &CMatrix, gens_a: &[CMatrix], rng: &mut ChaCha8Rng) -> Result<Block, String> {
    let n = q.ncols();
    let restricted: Vec<CMatrix> = gens_a.iter().map(|g| q.adjoint() * g * q).collect();
    let alg = generated_algebra(&restricted, n);
    let a = alg.len();
    let d_l = (a as f64).sqrt().round() as usize;
    if d_l * d_l != a || !n.is_multiple_of(d_l) {
        return Err(format!("left algebra of dimension {a} does not factor a block of size {n}"));
    }
    let d_r = n / d_l;
    let qb = support * q;
    if d_l == 1 || d_r == 1 {
        return Ok(Block {
            d_l,
            d_r,
            basis: projected_basis(&(&qb * qb.adjoint()), n),
        });
    }
    for _ in 0..ATTEMPTS {
        let y = random_hermitian_element(&alg, rng);
        let clusters = eigen_clusters(&y).map_err(|e| e.to_string())?;
        if clusters.len() != d_l || clusters.iter().any(|cl| cl.ncols() != d_r) {
            continue;
        }
        let projectors: Vec<CMatrix> = clusters
            .iter()
            .map(|cl| {
                let f = &qb * cl;
                &f * f.adjoint()
            })
            .collect();
        let f0 = projected_basis(&projectors[0], d_r);
        let x = &qb * random_element(&alg, rng) * qb.adjoint();
        let mut basis = CMatrix::zeros(qb.nrows(), n);
        basis.columns_mut(0, d_r).copy_from(&f0);
        let mut ok = true;
        for (l, p) in projectors.iter().enumerate().skip(1) {
            let moved = p * &x * &f0;
            let scale = moved.column(0).norm();
            if scale < 1e-6 {
                ok = false;
                break;
            }
            basis.columns_mut(l * d_r, d_r).copy_from(&(moved / c(scale, 0.0)));
        }
        if ok {
            return Ok(Block { d_l, d_r, basis });
        }
    }
    Err(format!("could not factor a block of size {n} as {d_l} x {d_r}"))
}

/// Make the first significant entry of each `|0>|r>` and each `|l>|0>`
/// column real positive, using phases of the form `alpha_l beta_r` so the
/// product structure is kept.
fn canonical_phases(w: &mut CMatrix, offset: usize, d_l: usize, d_r: usize) {
    let leading = |w: &CMatrix, col: usize| {
        w.column(col)
            .iter()
            .find(|z| z.norm() > 1e-10)
            .map(|z| z.conj() / z.norm())
            .unwrap_or(linalg::ONE)
    };
    for r in 0..d_r {
        let beta = leading(w, offset + r);
        for l in 0..d_l {
            let mut col = w.column_mut(offset + l * d_r + r);
            col *= beta;
        }
    }
    for l in 0..d_l {
        let alpha = leading(w, offset + l * d_r);
        for r in 0..d_r {
            let mut col = w.column_mut(offset + l * d_r + r);
            col *= alpha;
        }
    }
}

fn assemble(rho: &MultipartiteState, labels: [&str; 3], blocks: Vec<Block>) -> Result<MarkovDecomposition, String> {
    let dims = rho.layout().dims();
    let (da, db, de) = (dims[0], dims[1], dims[2]);
    let mut w = CMatrix::zeros(db, db);
    let mut offset = 0;
    for b in &blocks {
        w.columns_mut(offset, b.basis.ncols()).copy_from(&b.basis);
        offset += b.basis.ncols();
    }
    if offset != db {
        return Err(format!("blocks cover {offset} of {db} dimensions"));
    }
    let mut w = linalg::polar_isometry(&w).map_err(|e| e.to_string())?;

    // Weights first, so blocks can be sorted before their phases are fixed.
    let mut offset = 0;
    let mut weighted = Vec::with_capacity(blocks.len());
    for b in &blocks {
        let n = b.d_l * b.d_r;
        let wk = w.columns(offset, n).into_owned();
        let big = linalg::kron(&linalg::kron(&linalg::identity(da), &wk), &linalg::identity(de));
        let tau = big.adjoint() * rho.matrix() * &big;
        let weight = linalg::trace(&tau).re;
        weighted.push((b.d_l, b.d_r, weight, wk));
        offset += n;
    }
    weighted.sort_by(|x, y| y.0.cmp(&x.0).then(y.1.cmp(&x.1)).then(y.2.total_cmp(&x.2)));

    let mut offset = 0;
    for (d_l, d_r, _, wk) in &weighted {
        w.columns_mut(offset, wk.ncols()).copy_from(wk);
        canonical_phases(&mut w, offset, *d_l, *d_r);
        offset += wk.ncols();
    }
    let block_dims: Vec<(usize, usize)> = weighted.iter().map(|b| (b.0, b.1)).collect();
    let spec = BlockSpec::new(block_dims, w).map_err(|e| e.to_string())?;

    let [a, b, e] = labels;
    let mut weights = Vec::with_capacity(spec.len());
    let mut cores = Vec::with_capacity(spec.len());
    let mut envs = Vec::with_capacity(spec.len());
    for (k, &(d_l, d_r)) in spec.blocks().iter().enumerate() {
        let core_layout = SubsystemLayout::new([(a.to_string(), da), (left_label(b), d_l)]).map_err(|e| e.to_string())?;
        let env_layout = SubsystemLayout::new([(right_label(b), d_r), (e.to_string(), de)]).map_err(|e| e.to_string())?;
        let wk = spec.block_isometry(k);
        let big = linalg::kron(&linalg::kron(&linalg::identity(da), &wk), &linalg::identity(de));
        let tau = big.adjoint() * rho.matrix() * &big;
        let weight = linalg::trace(&tau).re;
        if weight < WEIGHT_DROP {
            weights.push(0.0);
            cores.push(MultipartiteState::maximally_mixed(core_layout));
            envs.push(MultipartiteState::maximally_mixed(env_layout));
            continue;
        }
        let tau = linalg::hermitian_part(&tau) / c(weight, 0.0);
        let local = [da, d_l, d_r, de];
        let core = linalg::partial_trace_dims(&tau, &local, &[0, 1]);
        let env = linalg::partial_trace_dims(&tau, &local, &[2, 3]);
        weights.push(weight);
        cores.push(MultipartiteState::new(linalg::hermitian_part(&core), core_layout).map_err(|e| e.to_string())?);
        envs.push(MultipartiteState::new(linalg::hermitian_part(&env), env_layout).map_err(|e| e.to_string())?);
    }
    let total: f64 = weights.iter().sum();
    let weights = weights.into_iter().map(|x| x / total).collect();
    MarkovDecomposition::tripartite(labels, spec, weights, cores, envs).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;
    use crate::markov::construct_markov_state;
    use crate::random::{self, SplitSystem};

    fn layout(parts: &[(&str, usize)]) -> SubsystemLayout {
        SubsystemLayout::new(parts.iter().map(|&(l, d)| (l, d))).unwrap()
    }

    fn sorted_blocks(d: &MarkovDecomposition) -> Vec<(usize, usize)> {
        let mut b = d.subsystems()[0].1.blocks().to_vec();
        b.sort_unstable();
        b
    }

    #[test]
    fn product_state_gives_one_trivial_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho_ab = random::random_full_rank_state(&mut rng, layout(&[("A", 2), ("B", 3)]));
        let rho_e = random::random_full_rank_state(&mut rng, layout(&[("E", 2)]));
        let s = rho_ab.tensor(&rho_e).unwrap();
        let d = find_markov_decomposition(&s, 1e-9).unwrap();
        let spec = &d.subsystems()[0].1;
        assert_eq!(spec.blocks(), [(3, 1)]);
        assert!(linalg::max_abs(&(spec.isometry() - linalg::identity(3))) < 1e-9);
        assert!(verify_decomposition(&s, &d).unwrap() < 1e-9);
    }

    #[test]
    fn recovers_rotated_block_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for blocks in [vec![(1, 2), (2, 1)], vec![(2, 2)], vec![(1, 1), (1, 2)], vec![(2, 3)], vec![(1, 3), (1, 3)]] {
            let gen = random::random_markov_decomposition(
                &mut rng,
                &[("A", 2)],
                &[SplitSystem::new("B", &blocks, "E", 2)],
                true,
            )
            .unwrap();
            let s = construct_markov_state(&gen).unwrap();
            let d = find_markov_decomposition(&s, 1e-8).unwrap();
            let mut want = blocks.clone();
            want.sort_unstable();
            assert_eq!(sorted_blocks(&d), want);
            assert!(verify_decomposition(&s, &d).unwrap() < 1e-7);
        }
    }

    #[test]
    fn ghz_is_not_markov() {
        let mut v = vec![ZERO; 8];
        v[0] = c(1.0, 0.0);
        v[7] = c(1.0, 0.0);
        let s = MultipartiteState::pure(&v, layout(&[("A", 2), ("B", 2), ("E", 2)])).unwrap();
        match find_markov_decomposition(&s, 1e-9) {
            Err(FindError::NotMarkov(rep)) => {
                assert!((rep.cmi_values["A;B;E"] - 1.0).abs() < 1e-12);
                assert!(!rep.certified);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_tripartite_layouts() {
        let s = MultipartiteState::maximally_mixed(layout(&[("A", 2), ("B", 2)]));
        assert!(matches!(find_markov_decomposition(&s, 1e-9), Err(FindError::Invalid(_))));
    }

    #[test]
    fn rank_deficient_middle_gets_a_kernel_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho_a = random::random_full_rank_state(&mut rng, layout(&[("A", 2)]));
        let rho_e = random::random_full_rank_state(&mut rng, layout(&[("E", 2)]));
        let b = MultipartiteState::basis(0, layout(&[("B", 2)])).unwrap();
        let s = rho_a.tensor(&b).unwrap().tensor(&rho_e).unwrap();
        let d = find_markov_decomposition(&s, 1e-9).unwrap();
        assert!(verify_decomposition(&s, &d).unwrap() < 1e-9);
        assert!(d.weights().contains(&0.0));
    }

    #[test]
    fn deterministic_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gen = random::random_markov_decomposition(
            &mut rng,
            &[("A", 2)],
            &[SplitSystem::new("B", &[(1, 2), (2, 1)], "E", 2)],
            true,
        )
        .unwrap();
        let s = construct_markov_state(&gen).unwrap();
        let d1 = find_markov_decomposition(&s, 1e-8).unwrap();
        let d2 = find_markov_decomposition(&s, 1e-8).unwrap();
        assert_eq!(d1, d2);
    }
}
