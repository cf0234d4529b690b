//! Unitary dilation of a channel `S -> S E` on `S ⊗ E ⊗ C`.

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ONE};
use crate::state::SubsystemLayout;

use super::KrausChannel;

/// `Λ(x) = Tr_C[V (x ⊗ |0><0|_E ⊗ |0><0|_C) V^dagger]`.
///
/// `V` acts on `in ⊗ E ⊗ C` with `C` one-dimensional per Kraus operator; the
/// fixed ancilla states are the computational basis vectors with index 0.
#[derive(Debug, Clone)]
pub struct StinespringDilation {
    v: CMatrix,
    anc_env_dim: usize,
    anc_c_dim: usize,
    in_layout: SubsystemLayout,
    out_layout: SubsystemLayout,
}

impl StinespringDilation {
    pub fn unitary(&self) -> &CMatrix {
        &self.v
    }

    pub fn anc_env_dim(&self) -> usize {
        self.anc_env_dim
    }

    pub fn anc_c_dim(&self) -> usize {
        self.anc_c_dim
    }

    /// Basis indices of the fixed ancilla states `|0_E>`, `|0_C>`.
    pub fn fixed_states(&self) -> (usize, usize) {
        (0, 0)
    }

    pub fn in_layout(&self) -> &SubsystemLayout {
        &self.in_layout
    }

    pub fn out_layout(&self) -> &SubsystemLayout {
        &self.out_layout
    }

    /// Evaluate the dilation formula on an operator of the input space.
    pub fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        let mut anc = CMatrix::zeros(self.anc_env_dim * self.anc_c_dim, self.anc_env_dim * self.anc_c_dim);
        anc[(0, 0)] = ONE;
        let full = &self.v * linalg::kron(x, &anc) * self.v.adjoint();
        let d_out = self.out_layout.total_dim();
        linalg::partial_trace_dims(&full, &[d_out, self.anc_c_dim], &[0])
    }

    /// Kraus operators `(I ⊗ <i|_C) V (I ⊗ |0_E 0_C>)` read back from `V`.
    pub fn to_channel(&self) -> Result<KrausChannel> {
        let d_in = self.in_layout.total_dim();
        let d_out = self.out_layout.total_dim();
        let stride = self.anc_env_dim * self.anc_c_dim;
        let kraus = (0..self.anc_c_dim)
            .map(|i| CMatrix::from_fn(d_out, d_in, |o, b| self.v[(o * self.anc_c_dim + i, b * stride)]))
            .collect();
        KrausChannel::new(kraus, self.in_layout.clone(), self.out_layout.clone())
    }
}

/// Dilate a channel whose output dimension is a multiple of its input
/// dimension (`out = in ⊗ E`).
pub fn stinespring(ch: &KrausChannel) -> Result<StinespringDilation> {
    let d_in = ch.in_dim();
    let d_out = ch.out_dim();
    if !d_out.is_multiple_of(d_in) {
        return Err(Error::InvalidChannel(format!(
            "output dimension {d_out} is not a multiple of input dimension {d_in}"
        )));
    }
    let d_e = d_out / d_in;
    let d_c = ch.kraus().len();
    let n = d_out * d_c;
    let stride = d_e * d_c;
    let iso = CMatrix::from_fn(n, d_in, |row, b| ch.kraus()[row % d_c][(row / d_c, b)]);
    let completed = linalg::complete_orthonormal_basis(&iso);
    if completed.ncols() != n {
        return Err(Error::InvalidChannel("Kraus operators do not form an isometry".into()));
    }
    let mut v = CMatrix::zeros(n, n);
    let mut extra = d_in;
    for col in 0..n {
        let src = if col % stride == 0 {
            col / stride
        } else {
            extra += 1;
            extra - 1
        };
        v.set_column(col, &completed.column(src));
    }
    Ok(StinespringDilation {
        v,
        anc_env_dim: d_e,
        anc_c_dim: d_c,
        in_layout: ch.in_layout().clone(),
        out_layout: ch.out_layout().clone(),
    })
}
