//! Seeded random states, unitaries and Hamiltonians for fixtures and fuzzing.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{self, c, CMatrix};
use crate::markov::{left_label, right_label, BlockSpec, MarkovDecomposition};
use crate::state::{MultipartiteState, SubsystemLayout};

pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Haar-random unitary via QR of a Ginibre matrix with the phase fix on `R`.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let qr = ginibre(rng, n, n).qr();
    let (mut q, r) = qr.unpack();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { linalg::ONE };
        for i in 0..n {
            q[(i, k)] *= phase;
        }
    }
    q
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let g = ginibre(rng, n, n);
    linalg::hermitian_part(&g)
}

/// Random density matrix `G G^dagger / Tr` with `G` an `n x rank` Ginibre matrix.
pub fn random_density_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize, rank: usize) -> CMatrix {
    let g = ginibre(rng, n, rank.max(1));
    let m = &g * g.adjoint();
    let tr = linalg::trace(&m).re;
    linalg::hermitian_part(&(m / c(tr, 0.0)))
}

pub fn random_state<R: Rng + ?Sized>(rng: &mut R, layout: SubsystemLayout, rank: usize) -> MultipartiteState {
    let m = random_density_matrix(rng, layout.total_dim(), rank);
    MultipartiteState::new_unchecked(m, layout)
}

pub fn random_full_rank_state<R: Rng + ?Sized>(rng: &mut R, layout: SubsystemLayout) -> MultipartiteState {
    let d = layout.total_dim();
    random_state(rng, layout, d)
}

pub fn random_pure_state<R: Rng + ?Sized>(rng: &mut R, layout: SubsystemLayout) -> MultipartiteState {
    random_state(rng, layout, 1)
}

/// Random probability vector (normalized exponentials) with every entry at
/// least `floor` before normalization.
pub fn random_weights<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| floor - (1.0 - rng.random::<f64>()).ln())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

/// A subsystem to split into `blocks`, paired with an environment.
#[derive(Debug, Clone, Copy)]
pub struct SplitSystem<'a> {
    pub label: &'a str,
    pub blocks: &'a [(usize, usize)],
    pub env_label: &'a str,
    pub env_dim: usize,
}

impl<'a> SplitSystem<'a> {
    pub fn new(label: &'a str, blocks: &'a [(usize, usize)], env_label: &'a str, env_dim: usize) -> Self {
        Self {
            label,
            blocks,
            env_label,
            env_dim,
        }
    }
}

/// Random decomposition with full-rank components and weights bounded away
/// from zero. With `rotate`, every block isometry is a Haar-random unitary;
/// otherwise blocks sit in the computational basis.
pub fn random_markov_decomposition<R: Rng + ?Sized>(
    rng: &mut R,
    free: &[(&str, usize)],
    systems: &[SplitSystem<'_>],
    rotate: bool,
) -> Result<MarkovDecomposition> {
    random_markov_decomposition_with_core_rank(rng, free, systems, rotate, None)
}

/// As [`random_markov_decomposition`], with cores of rank at most
/// `core_rank` (pure cores for `Some(1)`) so they can carry entanglement.
pub fn random_markov_decomposition_with_core_rank<R: Rng + ?Sized>(
    rng: &mut R,
    free: &[(&str, usize)],
    systems: &[SplitSystem<'_>],
    rotate: bool,
    core_rank: Option<usize>,
) -> Result<MarkovDecomposition> {
    let mut subsystems = Vec::with_capacity(systems.len());
    let mut environments = Vec::with_capacity(systems.len());
    for sys in systems {
        let spec = BlockSpec::with_identity(sys.blocks.to_vec())?;
        let spec = if rotate {
            spec.rotated(&haar_unitary(rng, spec.dim()))?
        } else {
            spec
        };
        let envs = sys
            .blocks
            .iter()
            .map(|&(_, d_r)| {
                let l = SubsystemLayout::new([(right_label(sys.label), d_r), (sys.env_label.to_string(), sys.env_dim)])?;
                Ok(random_full_rank_state(rng, l))
            })
            .collect::<Result<Vec<_>>>()?;
        subsystems.push((sys.label.to_string(), spec));
        environments.push(envs);
    }
    let counts: Vec<usize> = systems.iter().map(|s| s.blocks.len()).collect();
    let total: usize = counts.iter().product();
    let weights = random_weights(rng, total, 0.05);
    let mut idx = vec![0; counts.len()];
    let mut cores = Vec::with_capacity(total);
    for m in 0..total {
        linalg::digits(m, &counts, &mut idx);
        let mut parts: Vec<(String, usize)> = free.iter().map(|&(l, d)| (l.to_string(), d)).collect();
        for (sys, &j) in systems.iter().zip(&idx) {
            parts.push((left_label(sys.label), sys.blocks[j].0));
        }
        let layout = SubsystemLayout::new(parts)?;
        cores.push(match core_rank {
            Some(r) => random_state(rng, layout, r),
            None => random_full_rank_state(rng, layout),
        });
    }
    MarkovDecomposition::new(subsystems, weights, cores, environments)
}
