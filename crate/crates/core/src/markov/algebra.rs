//! Finite-dimensional operator algebras generated by a few matrices.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{self, c, CMatrix};

/// A product is a new direction when its residual after projection exceeds
/// this fraction of its norm.
const ACCEPT_RESIDUAL: f64 = 1e-8;
/// Commutator Gram eigenvalues below this count as zero (generators and
/// basis elements have unit Frobenius norm).
const CENTER_FLOOR: f64 = 1e-14;
/// Eigenvalues closer than this fraction of the spectral radius share a cluster.
const CLUSTER_GAP: f64 = 1e-6;

/// Remove the components along an orthonormal `basis` (twice, for
/// stability) and return the normalized remainder if it is significant.
fn orthogonalize(basis: &[CMatrix], mut p: CMatrix) -> Option<CMatrix> {
    let norm0 = p.norm();
    if norm0 == 0.0 || !norm0.is_finite() {
        return None;
    }
    for _ in 0..2 {
        for b in basis {
            let overlap = b.dotc(&p);
            p -= b * overlap;
        }
    }
    let r = p.norm();
    (r > ACCEPT_RESIDUAL * norm0).then(|| p / c(r, 0.0))
}

/// Orthonormal basis of the span of `ops`.
pub(crate) fn span_basis(ops: &[CMatrix]) -> Vec<CMatrix> {
    let mut basis: Vec<CMatrix> = Vec::new();
    for op in ops {
        if let Some(v) = orthogonalize(&basis, op.clone()) {
            basis.push(v);
        }
    }
    basis
}

/// Orthonormal (Frobenius) basis of the unital algebra generated by `gens`
/// on `C^n`: the closure of `{I}` under left multiplication by generators.
pub(crate) fn generated_algebra(gens: &[CMatrix], n: usize) -> Vec<CMatrix> {
    let gens = span_basis(gens);
    let mut basis = vec![linalg::identity(n) / c((n as f64).sqrt(), 0.0)];
    let mut next = 0;
    while next < basis.len() && basis.len() < n * n {
        let x = basis[next].clone();
        next += 1;
        for g in &gens {
            if let Some(v) = orthogonalize(&basis, g * &x) {
                basis.push(v);
                if basis.len() == n * n {
                    break;
                }
            }
        }
    }
    basis
}

/// Basis of the elements of `span(basis)` commuting with every generator.
pub(crate) fn center(basis: &[CMatrix], gens: &[CMatrix]) -> Result<Vec<CMatrix>> {
    let gens = span_basis(gens);
    let comms: Vec<Vec<CMatrix>> = basis
        .iter()
        .map(|x| gens.iter().map(|g| x * g - g * x).collect())
        .collect();
    let a = basis.len();
    let gram = CMatrix::from_fn(a, a, |p, q| {
        comms[p].iter().zip(&comms[q]).map(|(x, y)| x.dotc(y)).sum()
    });
    let spec = linalg::eig_hermitian(&linalg::hermitian_part(&gram))?;
    let mut out = Vec::new();
    for (k, &mu) in spec.eigenvalues.iter().enumerate() {
        if mu > CENTER_FLOOR {
            continue;
        }
        let mut z = CMatrix::zeros(basis[0].nrows(), basis[0].ncols());
        for (p, x) in basis.iter().enumerate() {
            z += x * spec.eigenvectors[(p, k)];
        }
        out.push(z);
    }
    Ok(out)
}

/// Random complex combination of `basis` with Gaussian coefficients.
pub(crate) fn random_element<R: Rng + ?Sized>(basis: &[CMatrix], rng: &mut R) -> CMatrix {
    let mut x = CMatrix::zeros(basis[0].nrows(), basis[0].ncols());
    for b in basis {
        let z = c(rng.sample(StandardNormal), rng.sample(StandardNormal));
        x += b * z;
    }
    x
}

/// Hermitian part of a random element, scaled to unit Frobenius norm.
/// Stays inside the span when it is closed under adjoints.
pub(crate) fn random_hermitian_element<R: Rng + ?Sized>(basis: &[CMatrix], rng: &mut R) -> CMatrix {
    let h = linalg::hermitian_part(&random_element(basis, rng));
    let n = h.norm();
    if n > 0.0 {
        h / c(n, 0.0)
    } else {
        h
    }
}

/// Eigenspaces of a Hermitian matrix, grouping eigenvalues whose gaps are at
/// most `CLUSTER_GAP` times the spectral radius. Clusters come in descending
/// eigenvalue order, each as orthonormal columns.
pub(crate) fn eigen_clusters(h: &CMatrix) -> Result<Vec<CMatrix>> {
    let spec = linalg::eig_hermitian(h)?;
    let n = spec.dim();
    let scale = spec
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=n {
        if k == n || spec.eigenvalues[k - 1] - spec.eigenvalues[k] > CLUSTER_GAP * scale {
            out.push(spec.eigenvectors.columns(start, k - start).into_owned());
            start = k;
        }
    }
    Ok(out)
}

/// Orthonormal basis of the range of the projector `proj`, `count` vectors
/// long, by pivoted Gram-Schmidt on its columns (the projected computational
/// basis). Ties go to the lowest index, so a full-rank projector yields the
/// identity.
pub(crate) fn projected_basis(proj: &CMatrix, count: usize) -> CMatrix {
    let d = proj.nrows();
    let mut chosen: Vec<DVector<Complex64>> = Vec::with_capacity(count);
    let mut used = vec![false; d];
    for _ in 0..count {
        let mut best: Option<(usize, DVector<Complex64>, f64)> = None;
        for (i, &taken) in used.iter().enumerate() {
            if taken {
                continue;
            }
            let mut v = proj.column(i).into_owned();
            for _ in 0..2 {
                for b in &chosen {
                    let overlap = b.dotc(&v);
                    v -= b * overlap;
                }
            }
            let norm = v.norm();
            if best.as_ref().is_none_or(|(_, _, n)| norm > n + 1e-12) {
                best = Some((i, v, norm));
            }
        }
        let Some((i, v, norm)) = best else { break };
        if norm <= 1e-12 {
            break;
        }
        used[i] = true;
        chosen.push(v / c(norm, 0.0));
    }
    let mut out = CMatrix::zeros(d, chosen.len());
    for (k, v) in chosen.iter().enumerate() {
        out.set_column(k, v);
    }
    out
}
