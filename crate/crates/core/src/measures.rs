//! Entropies, conditional mutual information and entanglement measures.
//!
//! All logarithms are base 2, so entropies are in bits.

use crate::error::{Error, Result, StateInvariant};
use crate::linalg::{self, CMatrix};
use crate::state::{partial_trace, MultipartiteState};

/// Eigenvalues in `[-ENTROPY_CLAMP, 0)` are treated as zero.
pub const ENTROPY_CLAMP: f64 = 1e-10;

/// CMI values with magnitude below this are reported as exactly zero.
pub const CMI_ZERO_CLAMP: f64 = 1e-9;

/// Shannon entropy (bits) of a spectrum, rejecting eigenvalues below `-1e-10`.
pub fn spectral_entropy(eigenvalues: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for &lambda in eigenvalues {
        if lambda < -ENTROPY_CLAMP {
            return Err(Error::invalid_state(
                StateInvariant::PositiveSemidefinite,
                format!("eigenvalue {lambda:e} below the clamp floor"),
            ));
        }
        let p = lambda.clamp(0.0, 1.0);
        if p > 0.0 {
            s -= p * p.log2();
        }
    }
    Ok(s)
}

pub fn von_neumann_entropy(s: &MultipartiteState) -> Result<f64> {
    spectral_entropy(&linalg::eigenvalues_hermitian(s.matrix())?)
}

/// Entropy of the marginal on `labels`; the empty marginal has entropy 0.
pub fn marginal_entropy<S: AsRef<str>>(s: &MultipartiteState, labels: &[S]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    if labels.len() == s.layout().len() {
        s.layout().positions(labels)?;
        return von_neumann_entropy(s);
    }
    von_neumann_entropy(&partial_trace(s, labels)?)
}

/// `I(A;E|B) = S(AB) + S(BE) - S(ABE) - S(B)` in bits.
///
/// `part_a`, `part_b`, `part_e` must partition the layout labels, with `A`
/// and `E` non-empty. An empty `B` gives the mutual information `I(A;E)`.
pub fn conditional_mutual_information<S: AsRef<str>>(
    s: &MultipartiteState,
    part_a: &[S],
    part_b: &[S],
    part_e: &[S],
) -> Result<f64> {
    let a: Vec<&str> = part_a.iter().map(|x| x.as_ref()).collect();
    let b: Vec<&str> = part_b.iter().map(|x| x.as_ref()).collect();
    let e: Vec<&str> = part_e.iter().map(|x| x.as_ref()).collect();
    if a.is_empty() || e.is_empty() {
        return Err(Error::Labeling("CMI needs non-empty A and E parts".into()));
    }
    let all: Vec<&str> = a.iter().chain(&b).chain(&e).copied().collect();
    // positions() rejects unknown and repeated labels, so this checks the partition.
    s.layout().positions(&all)?;
    if all.len() != s.layout().len() {
        return Err(Error::Labeling(format!(
            "parts cover {} of {} labels",
            all.len(),
            s.layout().len()
        )));
    }
    let ab: Vec<&str> = a.iter().chain(&b).copied().collect();
    let be: Vec<&str> = b.iter().chain(&e).copied().collect();
    let cmi = marginal_entropy(s, &ab)? + marginal_entropy(s, &be)?
        - von_neumann_entropy(s)?
        - marginal_entropy(s, &b)?;
    Ok(if cmi.abs() <= CMI_ZERO_CLAMP { 0.0 } else { cmi })
}

pub fn mutual_information<S: AsRef<str>>(s: &MultipartiteState, part_a: &[S], part_e: &[S]) -> Result<f64> {
    conditional_mutual_information::<&str>(
        s,
        &part_a.iter().map(|x| x.as_ref()).collect::<Vec<_>>(),
        &[],
        &part_e.iter().map(|x| x.as_ref()).collect::<Vec<_>>(),
    )
}

/// `(||rho^{T_side}||_1 - 1) / 2`, partial transpose over `side`.
pub fn negativity<S: AsRef<str>>(s: &MultipartiteState, side: &[S]) -> Result<f64> {
    let positions = s.layout().positions(side)?;
    if positions.is_empty() || positions.len() == s.layout().len() {
        return Err(Error::Labeling(
            "negativity needs a proper non-empty subset of labels".into(),
        ));
    }
    let pt = linalg::partial_transpose_dims(s.matrix(), &s.layout().dims(), &positions);
    let norm = linalg::trace_norm_hermitian(&pt)?;
    Ok(((norm - 1.0) / 2.0).max(0.0))
}

/// Eigenvalues of the state below this are dropped before forming the
/// Wootters matrix; rank-deficient states otherwise pick up `sqrt(eps)` noise.
const CONCURRENCE_RANK_FLOOR: f64 = 1e-14;

/// Wootters concurrence of a two-qubit state.
pub fn concurrence(s: &MultipartiteState) -> Result<f64> {
    if s.layout().dims() != [2, 2] {
        return Err(Error::Shape(format!(
            "concurrence needs exactly two qubits, layout dims are {:?}",
            s.layout().dims()
        )));
    }
    let spec = s.spectrum()?;
    let kept: Vec<usize> = (0..4).filter(|&k| spec.eigenvalues[k] > CONCURRENCE_RANK_FLOOR).collect();
    // rho = Psi Psi^dagger with subnormalized eigenvectors as columns.
    let psi = CMatrix::from_fn(4, kept.len(), |i, j| {
        let k = kept[j];
        spec.eigenvectors[(i, k)] * spec.eigenvalues[k].sqrt()
    });
    let yy = linalg::kron(&linalg::pauli_y(), &linalg::pauli_y());
    let tau = psi.transpose() * yy * &psi;
    // Singular values of tau are the square roots of the eigenvalues of rho rho~.
    let mut sv: Vec<f64> = tau.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.resize(4, 0.0);
    Ok((sv[0] - sv[1] - sv[2] - sv[3]).clamp(0.0, 1.0))
}

pub use crate::linalg::one_norm_distance;
