//! Dense complex linear algebra shared by every other module.
//!
//! Tensor products follow the most-significant-left convention: for
//! subsystem dimensions `d_0, d_1, ..., d_{n-1}` the basis index of
//! `|k_0 k_1 ... k_{n-1}>` is `sum_i k_i * prod_{j>i} d_j`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Hermiticity tolerance accepted by [`eig_hermitian`].
pub const EIG_HERMITIAN_TOL: f64 = 1e-8;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMatrix {
    let r = rows.len();
    let cols = rows.first().map_or(0, |row| row.len());
    CMatrix::from_fn(r, cols, |i, j| c(rows[i][j], 0.0))
}

pub fn diag_real(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { c(values[i], 0.0) } else { ZERO })
}

pub fn pauli_x() -> CMatrix {
    from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
}

/// `|v><v|` for a column vector.
pub fn projector(v: &[Complex64]) -> CMatrix {
    let n = v.len();
    CMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj())
}

/// Kronecker product, most-significant-left. Works for rectangular factors.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    factors
        .into_iter()
        .fold(identity(1), |acc, f| kron(&acc, f))
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `max |M - M^dagger|` entrywise.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// `max |U^dagger U - I|` entrywise; infinite for non-square input.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(u.adjoint() * u - identity(u.nrows())))
}

/// `max |W^dagger W - I|` for an isometry with orthonormal columns.
pub fn isometry_deviation(w: &CMatrix) -> f64 {
    max_abs(&(w.adjoint() * w - identity(w.ncols())))
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Eigen-decomposition of a Hermitian matrix.
///
/// Eigenvalues are sorted descending. Each eigenvector's first entry with
/// modulus above `1e-10` is made real positive, and runs of eigenvalues equal
/// within `1e-12` are ordered by lexicographic comparison of their
/// eigenvectors, so identical input bits always give identical output.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V f(D) V^dagger`.
    pub fn map(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let v = &self.eigenvectors;
        let n = v.nrows();
        let mut scaled = v.clone();
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let fk = f(lambda);
            for i in 0..n {
                scaled[(i, k)] *= fk;
            }
        }
        scaled * v.adjoint()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map(|x| c(x, 0.0))
    }
}

pub fn eig_hermitian(m: &CMatrix) -> Result<Spectrum> {
    eig_hermitian_tol(m, EIG_HERMITIAN_TOL)
}

pub fn eig_hermitian_tol(m: &CMatrix, tol: f64) -> Result<Spectrum> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !all_finite(m) {
        return Err(Error::Contract("matrix has non-finite entries".into()));
    }
    let dev = hermitian_deviation(m);
    if dev > tol {
        return Err(Error::Contract(format!(
            "matrix is not hermitian (deviation {dev:e} > {tol:e})"
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
            eigenvectors: CMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut vectors: Vec<Vec<Complex64>> = (0..n)
        .map(|k| {
            let mut col: Vec<Complex64> = eig.eigenvectors.column(k).iter().copied().collect();
            fix_phase(&mut col);
            col
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    // Ties: order by eigenvector, lexicographically on (re, im).
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (eig.eigenvalues[order[end - 1]] - eig.eigenvalues[order[end]]).abs() <= 1e-12 {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_by(|&a, &b| lexicographic(&vectors[a], &vectors[b]));
        }
        start = end;
    }
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        let col = std::mem::take(&mut vectors[old]);
        for (i, z) in col.into_iter().enumerate() {
            eigenvectors[(i, new)] = z;
        }
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues only, descending.
pub fn eigenvalues_hermitian(m: &CMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Shape("eigenvalues need a square matrix".into()));
    }
    let dev = hermitian_deviation(m);
    if dev > EIG_HERMITIAN_TOL {
        return Err(Error::Contract(format!(
            "matrix is not hermitian (deviation {dev:e})"
        )));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut vals: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    Ok(vals)
}

fn lexicographic(a: &[Complex64], b: &[Complex64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let ord = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    std::cmp::Ordering::Equal
}

/// Rotate a vector so its first entry with modulus above `1e-10` is real positive.
pub fn fix_phase(v: &mut [Complex64]) {
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-10).copied() {
        let phase = z.conj() / z.norm();
        for x in v.iter_mut() {
            *x *= phase;
        }
    }
}

/// Trace norm of a Hermitian matrix: the sum of absolute eigenvalues.
pub fn trace_norm_hermitian(m: &CMatrix) -> Result<f64> {
    Ok(eigenvalues_hermitian(m)?.iter().map(|x| x.abs()).sum())
}

/// `sum_i |lambda_i(a - b)|` for Hermitian `a - b`.
pub fn one_norm_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "one-norm distance between {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    trace_norm_hermitian(&(a - b))
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn unitary_from_hamiltonian(spectrum: &Spectrum, t: f64) -> CMatrix {
    spectrum.map(|e| Complex64::from_polar(1.0, -e * t))
}

/// Extend orthonormal columns to a full orthonormal basis of `C^n`.
///
/// Candidate vectors are the standard basis vectors `e_0, e_1, ...` in
/// order, each orthogonalized twice (modified Gram-Schmidt) and kept when the
/// residual norm exceeds `1e-8`.
pub fn complete_orthonormal_basis(cols: &CMatrix) -> CMatrix {
    let n = cols.nrows();
    let mut basis: Vec<Vec<Complex64>> = (0..cols.ncols())
        .map(|k| cols.column(k).iter().copied().collect())
        .collect();
    let mut e = 0;
    while basis.len() < n && e < n {
        let mut v = vec![ZERO; n];
        v[e] = ONE;
        e += 1;
        for _ in 0..2 {
            for b in &basis {
                let overlap: Complex64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= overlap * bi;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            basis.push(v);
        }
    }
    CMatrix::from_fn(n, basis.len(), |i, k| basis[k][i])
}

/// Nearest isometry (polar factor) `W (W^dagger W)^{-1/2}`.
pub fn polar_isometry(w: &CMatrix) -> Result<CMatrix> {
    let gram = w.adjoint() * w;
    let spec = eig_hermitian(&gram)?;
    if spec.eigenvalues.iter().any(|&x| x <= 1e-14) {
        return Err(Error::Contract("columns are linearly dependent".into()));
    }
    Ok(w * spec.map(|x| c(1.0 / x.sqrt(), 0.0)))
}

/// Mixed-radix digits of `index`, most significant first.
pub fn digits(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = index % d;
        index /= d;
    }
}

pub fn undigits(ds: &[usize], dims: &[usize]) -> usize {
    ds.iter().zip(dims).fold(0, |acc, (&k, &d)| acc * d + k)
}

/// For each full index, the pair (index over `keep`, index over the rest).
fn split_indices(dims: &[usize], keep: &[usize]) -> Vec<(usize, usize)> {
    let total: usize = dims.iter().product();
    let rest: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let keep_dims: Vec<usize> = keep.iter().map(|&i| dims[i]).collect();
    let rest_dims: Vec<usize> = rest.iter().map(|&i| dims[i]).collect();
    let mut ds = vec![0; dims.len()];
    let mut kd = vec![0; keep.len()];
    let mut rd = vec![0; rest.len()];
    (0..total)
        .map(|idx| {
            digits(idx, dims, &mut ds);
            for (slot, &i) in kd.iter_mut().zip(keep) {
                *slot = ds[i];
            }
            for (slot, &i) in rd.iter_mut().zip(&rest) {
                *slot = ds[i];
            }
            (undigits(&kd, &keep_dims), undigits(&rd, &rest_dims))
        })
        .collect()
}

/// Partial trace of any square operator over the subsystems not in `keep`.
/// `keep` lists subsystem positions; the result keeps them in the given order.
pub fn partial_trace_dims(m: &CMatrix, dims: &[usize], keep: &[usize]) -> CMatrix {
    let kept_dim: usize = keep.iter().map(|&i| dims[i]).product();
    let split = split_indices(dims, keep);
    let mut out = CMatrix::zeros(kept_dim, kept_dim);
    for (r, &(kr, tr)) in split.iter().enumerate() {
        for (cidx, &(kc, tc)) in split.iter().enumerate() {
            if tr == tc {
                out[(kr, kc)] += m[(r, cidx)];
            }
        }
    }
    out
}

/// Reorder tensor factors: new position `i` holds old subsystem `perm[i]`.
pub fn permute_subsystems(m: &CMatrix, dims: &[usize], perm: &[usize]) -> CMatrix {
    let map = permutation_map(dims, perm);
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for r in 0..n {
        for cidx in 0..n {
            out[(map[r], map[cidx])] = m[(r, cidx)];
        }
    }
    out
}

/// `map[old_index] = new_index` for the factor permutation `perm`.
pub fn permutation_map(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    let total: usize = dims.iter().product();
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let mut ds = vec![0; dims.len()];
    let mut nd = vec![0; dims.len()];
    (0..total)
        .map(|idx| {
            digits(idx, dims, &mut ds);
            for (slot, &p) in nd.iter_mut().zip(perm) {
                *slot = ds[p];
            }
            undigits(&nd, &new_dims)
        })
        .collect()
}

/// Partial transpose over the subsystems listed in `side`.
pub fn partial_transpose_dims(m: &CMatrix, dims: &[usize], side: &[usize]) -> CMatrix {
    let n = m.nrows();
    let mut rd = vec![0; dims.len()];
    let mut cd = vec![0; dims.len()];
    let mut out = CMatrix::zeros(n, n);
    for r in 0..n {
        for col in 0..n {
            digits(r, dims, &mut rd);
            digits(col, dims, &mut cd);
            for &s in side {
                std::mem::swap(&mut rd[s], &mut cd[s]);
            }
            out[(undigits(&rd, dims), undigits(&cd, dims))] = m[(r, col)];
        }
    }
    out
}
