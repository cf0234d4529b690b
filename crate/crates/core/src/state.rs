//! Labeled multipartite layouts and validated density matrices.

use num_complex::Complex64;

use crate::error::{Error, Result, StateInvariant};
use crate::linalg::{self, CMatrix};

/// Ordered subsystem labels with their Hilbert-space dimensions.
///
/// The leftmost part is the most significant tensor index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubsystemLayout {
    parts: Vec<(String, usize)>,
}

impl SubsystemLayout {
    pub fn new<S: Into<String>>(parts: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let parts: Vec<(String, usize)> = parts.into_iter().map(|(l, d)| (l.into(), d)).collect();
        if parts.is_empty() {
            return Err(Error::Labeling("layout has no parts".into()));
        }
        for (i, (label, dim)) in parts.iter().enumerate() {
            if label.is_empty() {
                return Err(Error::Labeling("empty subsystem label".into()));
            }
            if *dim == 0 {
                return Err(Error::Labeling(format!("subsystem {label} has dimension 0")));
            }
            if parts[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::Labeling(format!("duplicate label {label}")));
            }
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &[(String, usize)] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().map(|(l, _)| l.as_str())
    }

    pub fn dims(&self) -> Vec<usize> {
        self.parts.iter().map(|&(_, d)| d).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.parts.iter().map(|&(_, d)| d).product()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.parts.iter().position(|(l, _)| l == label)
    }

    pub fn dim_of(&self, label: &str) -> Option<usize> {
        self.position(label).map(|i| self.parts[i].1)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.position(label).is_some()
    }

    /// Positions of `labels`, failing on unknown or repeated labels.
    pub fn positions<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(labels.len());
        for l in labels {
            let l = l.as_ref();
            let p = self
                .position(l)
                .ok_or_else(|| Error::Labeling(format!("unknown label {l}")))?;
            if out.contains(&p) {
                return Err(Error::Labeling(format!("label {l} listed twice")));
            }
            out.push(p);
        }
        Ok(out)
    }

    /// Sub-layout with the given positions, in the given order.
    pub fn select(&self, positions: &[usize]) -> Self {
        Self {
            parts: positions.iter().map(|&p| self.parts[p].clone()).collect(),
        }
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        Self::new(self.parts.iter().chain(other.parts.iter()).cloned())
    }
}

/// Validation thresholds for [`MultipartiteState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub hermiticity: f64,
    pub trace: f64,
    /// Most negative eigenvalue still accepted (a small negative number).
    pub psd_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermiticity: 1e-10,
            trace: 1e-10,
            psd_floor: -1e-10,
        }
    }
}

/// A density matrix together with its subsystem layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipartiteState {
    matrix: CMatrix,
    layout: SubsystemLayout,
}

impl MultipartiteState {
    pub fn new(matrix: CMatrix, layout: SubsystemLayout) -> Result<Self> {
        Self::with_tolerances(matrix, layout, Tolerances::default())
    }

    pub fn with_tolerances(matrix: CMatrix, layout: SubsystemLayout, tol: Tolerances) -> Result<Self> {
        validate(&matrix, &layout, tol)?;
        Ok(Self { matrix, layout })
    }

    /// Skips validation; callers guarantee the invariants by construction.
    pub(crate) fn new_unchecked(matrix: CMatrix, layout: SubsystemLayout) -> Self {
        debug_assert_eq!(matrix.nrows(), layout.total_dim());
        Self { matrix, layout }
    }

    /// Normalizes `v` and returns `|v><v|`.
    pub fn pure(v: &[Complex64], layout: SubsystemLayout) -> Result<Self> {
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::invalid_state(StateInvariant::UnitTrace, "zero or non-finite state vector"));
        }
        let normed: Vec<Complex64> = v.iter().map(|z| z / norm).collect();
        Self::new(linalg::projector(&normed), layout)
    }

    pub fn maximally_mixed(layout: SubsystemLayout) -> Self {
        let d = layout.total_dim();
        Self::new_unchecked(linalg::identity(d) * linalg::c(1.0 / d as f64, 0.0), layout)
    }

    /// Computational basis state `|index><index|`.
    pub fn basis(index: usize, layout: SubsystemLayout) -> Result<Self> {
        let d = layout.total_dim();
        if index >= d {
            return Err(Error::Shape(format!("basis index {index} out of range {d}")));
        }
        let mut m = CMatrix::zeros(d, d);
        m[(index, index)] = linalg::ONE;
        Ok(Self::new_unchecked(m, layout))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn into_parts(self) -> (CMatrix, SubsystemLayout) {
        (self.matrix, self.layout)
    }

    /// `self ⊗ other`; labels must stay unique.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let layout = self.layout.concat(&other.layout)?;
        Ok(Self::new_unchecked(tensor_product(&self.matrix, &other.matrix), layout))
    }

    /// Same matrix under new labels (dims must match).
    pub fn relabel(&self, layout: SubsystemLayout) -> Result<Self> {
        if layout.dims() != self.layout.dims() {
            return Err(Error::Labeling("relabel must keep subsystem dimensions".into()));
        }
        Ok(Self::new_unchecked(self.matrix.clone(), layout))
    }

    /// Reorder subsystems to the given label order (a permutation of all labels).
    pub fn reorder<S: AsRef<str>>(&self, order: &[S]) -> Result<Self> {
        if order.len() != self.layout.len() {
            return Err(Error::Labeling("reorder must list every label exactly once".into()));
        }
        let perm = self.layout.positions(order)?;
        let matrix = linalg::permute_subsystems(&self.matrix, &self.layout.dims(), &perm);
        Ok(Self::new_unchecked(matrix, self.layout.select(&perm)))
    }

    /// Conjugate by a unitary on the whole space.
    pub fn conjugate(&self, u: &CMatrix) -> Result<Self> {
        if u.shape() != self.matrix.shape() {
            return Err(Error::Shape("unitary does not match state dimension".into()));
        }
        let m = u * &self.matrix * u.adjoint();
        Ok(Self::new_unchecked(linalg::hermitian_part(&m), self.layout.clone()))
    }

    pub fn spectrum(&self) -> Result<linalg::Spectrum> {
        linalg::eig_hermitian(&self.matrix)
    }
}

/// Kronecker product of two square operators (most-significant-left).
pub fn tensor_product(a: &CMatrix, b: &CMatrix) -> CMatrix {
    linalg::kron(a, b)
}

fn validate(m: &CMatrix, layout: &SubsystemLayout, tol: Tolerances) -> Result<()> {
    if !m.is_square() {
        return Err(Error::invalid_state(
            StateInvariant::Square,
            format!("matrix is {}x{}", m.nrows(), m.ncols()),
        ));
    }
    if m.nrows() != layout.total_dim() {
        return Err(Error::invalid_state(
            StateInvariant::Dimension,
            format!("matrix dimension {} but layout dimension {}", m.nrows(), layout.total_dim()),
        ));
    }
    if !linalg::all_finite(m) {
        return Err(Error::invalid_state(StateInvariant::Finite, "matrix has NaN or infinite entries"));
    }
    let dev = linalg::hermitian_deviation(m);
    if dev > tol.hermiticity {
        return Err(Error::invalid_state(
            StateInvariant::Hermitian,
            format!("max |M - M^dagger| = {dev:e}"),
        ));
    }
    let tr = linalg::trace(m);
    if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
        return Err(Error::invalid_state(StateInvariant::UnitTrace, format!("trace = {tr}")));
    }
    let min = linalg::eigenvalues_hermitian(m)?
        .last()
        .copied()
        .unwrap_or(0.0);
    if min < tol.psd_floor {
        return Err(Error::invalid_state(
            StateInvariant::PositiveSemidefinite,
            format!("minimum eigenvalue {min:e}"),
        ));
    }
    Ok(())
}

/// Reduced state on `keep`, in the layout's relative order.
pub fn partial_trace<S: AsRef<str>>(s: &MultipartiteState, keep: &[S]) -> Result<MultipartiteState> {
    if keep.is_empty() {
        return Err(Error::Labeling("partial trace must keep at least one label".into()));
    }
    let mut positions = s.layout.positions(keep)?;
    positions.sort_unstable();
    let m = linalg::partial_trace_dims(&s.matrix, &s.layout.dims(), &positions);
    Ok(MultipartiteState::new_unchecked(m, s.layout.select(&positions)))
}

/// Trace out the listed labels.
pub fn trace_out<S: AsRef<str>>(s: &MultipartiteState, remove: &[S]) -> Result<MultipartiteState> {
    let drop = s.layout.positions(remove)?;
    let keep: Vec<&str> = s
        .layout
        .labels()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, l)| l)
        .collect();
    partial_trace(s, &keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, diag_real};

    fn layout(parts: &[(&str, usize)]) -> SubsystemLayout {
        SubsystemLayout::new(parts.iter().map(|&(l, d)| (l, d))).unwrap()
    }

    fn ghz3() -> MultipartiteState {
        let mut v = vec![c(0.0, 0.0); 8];
        v[0] = c(1.0, 0.0);
        v[7] = c(1.0, 0.0);
        MultipartiteState::pure(&v, layout(&[("A", 2), ("B", 2), ("E", 2)])).unwrap()
    }

    #[test]
    fn layout_rejects_bad_labels() {
        assert!(SubsystemLayout::new([("A", 2), ("A", 2)]).is_err());
        assert!(SubsystemLayout::new([("", 2)]).is_err());
        assert!(SubsystemLayout::new([("A", 0)]).is_err());
    }

    #[test]
    fn validation_names_failed_invariant() {
        let l = layout(&[("A", 2)]);
        let err = MultipartiteState::new(diag_real(&[0.5, 0.6]), l.clone()).unwrap_err();
        assert!(matches!(err, Error::InvalidState { invariant: StateInvariant::UnitTrace, .. }));
        let err = MultipartiteState::new(diag_real(&[1.5, -0.5]), l.clone()).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidState { invariant: StateInvariant::PositiveSemidefinite, .. }
        ));
        let m = linalg::from_real_rows(&[&[0.5, 0.1], &[0.0, 0.5]]);
        let err = MultipartiteState::new(m, l.clone()).unwrap_err();
        assert!(matches!(err, Error::InvalidState { invariant: StateInvariant::Hermitian, .. }));
        let err = MultipartiteState::new(diag_real(&[1.0]), l).unwrap_err();
        assert!(matches!(err, Error::InvalidState { invariant: StateInvariant::Dimension, .. }));
    }

    #[test]
    fn partial_trace_of_product() {
        let a = MultipartiteState::new(diag_real(&[0.3, 0.7]), layout(&[("A", 2)])).unwrap();
        let b = MultipartiteState::new(diag_real(&[0.2, 0.5, 0.3]), layout(&[("B", 3)])).unwrap();
        let ab = a.tensor(&b).unwrap();
        let ra = partial_trace(&ab, &["A"]).unwrap();
        assert!(linalg::max_abs(&(ra.matrix() - a.matrix())) < 1e-15);
        let rb = trace_out(&ab, &["A"]).unwrap();
        assert!(linalg::max_abs(&(rb.matrix() - b.matrix())) < 1e-15);
    }

    #[test]
    fn partial_trace_of_ghz() {
        let ab = partial_trace(&ghz3(), &["A", "B"]).unwrap();
        let want = diag_real(&[0.5, 0.0, 0.0, 0.5]);
        assert!(linalg::max_abs(&(ab.matrix() - want)) < 1e-15);
        assert_eq!(ab.layout().dims(), vec![2, 2]);
    }

    #[test]
    fn partial_trace_of_maximally_mixed() {
        let s = MultipartiteState::maximally_mixed(layout(&[("A", 2), ("B", 2), ("C", 2)]));
        let r = partial_trace(&s, &["B"]).unwrap();
        assert!(linalg::max_abs(&(r.matrix() - diag_real(&[0.5, 0.5]))) < 1e-15);
    }

    #[test]
    fn partial_trace_keeps_layout_order() {
        let s = MultipartiteState::maximally_mixed(layout(&[("A", 2), ("B", 3), ("C", 5)]));
        let r = partial_trace(&s, &["C", "A"]).unwrap();
        assert_eq!(r.layout().labels().collect::<Vec<_>>(), vec!["A", "C"]);
        assert!(partial_trace(&s, &["Z"]).is_err());
        assert!(partial_trace::<&str>(&s, &[]).is_err());
    }

    #[test]
    fn reorder_matches_tensor_swap() {
        let a = MultipartiteState::new(diag_real(&[0.3, 0.7]), layout(&[("A", 2)])).unwrap();
        let b = MultipartiteState::new(diag_real(&[0.2, 0.5, 0.3]), layout(&[("B", 3)])).unwrap();
        let ab = a.tensor(&b).unwrap();
        let ba = b.tensor(&a).unwrap();
        assert_eq!(ab.reorder(&["B", "A"]).unwrap(), ba);
    }
}
