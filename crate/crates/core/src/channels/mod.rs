//! Completely positive trace-preserving maps in Kraus form on labeled
//! subsystems.
//!
//! Kraus operators may be rectangular (`out_dim x in_dim`), so maps that
//! enlarge the space, such as `S -> S E`, are ordinary channels here.

mod stinespring;

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, ZERO};
use crate::markov::BlockSpec;
use crate::state::{MultipartiteState, SubsystemLayout};

pub use stinespring::{stinespring, StinespringDilation};

/// Tolerance on `sum_i K_i^dagger K_i = I`.
pub const TRACE_PRESERVING_TOL: f64 = 1e-9;
/// Eigenvalue floor for the Choi-matrix positivity check.
pub const CHOI_PSD_FLOOR: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    kraus: Vec<CMatrix>,
    in_layout: SubsystemLayout,
    out_layout: SubsystemLayout,
}

impl KrausChannel {
    pub fn new(kraus: Vec<CMatrix>, in_layout: SubsystemLayout, out_layout: SubsystemLayout) -> Result<Self> {
        let ch = Self::new_unchecked(kraus, in_layout, out_layout)?;
        let dev = ch.trace_preservation_deviation();
        if dev > TRACE_PRESERVING_TOL {
            return Err(Error::InvalidChannel(format!(
                "not trace preserving: max |sum K^dagger K - I| = {dev:e}"
            )));
        }
        Ok(ch)
    }

    /// Checks shapes only.
    fn new_unchecked(kraus: Vec<CMatrix>, in_layout: SubsystemLayout, out_layout: SubsystemLayout) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::InvalidChannel("no Kraus operators".into()));
        }
        let shape = (out_layout.total_dim(), in_layout.total_dim());
        if let Some(k) = kraus.iter().find(|k| k.shape() != shape) {
            return Err(Error::InvalidChannel(format!(
                "Kraus operator has shape {:?}, layouts require {:?}",
                k.shape(),
                shape
            )));
        }
        if kraus.iter().any(|k| !linalg::all_finite(k)) {
            return Err(Error::InvalidChannel("non-finite Kraus entries".into()));
        }
        Ok(Self {
            kraus,
            in_layout,
            out_layout,
        })
    }

    pub fn identity(layout: SubsystemLayout) -> Self {
        let d = layout.total_dim();
        Self {
            kraus: vec![linalg::identity(d)],
            in_layout: layout.clone(),
            out_layout: layout,
        }
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn in_layout(&self) -> &SubsystemLayout {
        &self.in_layout
    }

    pub fn out_layout(&self) -> &SubsystemLayout {
        &self.out_layout
    }

    pub fn in_dim(&self) -> usize {
        self.in_layout.total_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.out_layout.total_dim()
    }

    /// `sum_i K_i x K_i^dagger` on a raw operator.
    pub fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.out_dim(), self.out_dim());
        for k in &self.kraus {
            out += k * x * k.adjoint();
        }
        out
    }

    pub fn trace_preservation_deviation(&self) -> f64 {
        let mut sum = CMatrix::zeros(self.in_dim(), self.in_dim());
        for k in &self.kraus {
            sum += k.adjoint() * k;
        }
        linalg::max_abs(&(sum - linalg::identity(self.in_dim())))
    }

    /// Choi matrix `sum_{ij} |i><j| ⊗ Λ(|i><j|)`, ordered input ⊗ output.
    pub fn choi(&self) -> CMatrix {
        let (din, dout) = (self.in_dim(), self.out_dim());
        let mut choi = CMatrix::zeros(din * dout, din * dout);
        for k in &self.kraus {
            // vec(K) with input index most significant.
            let v: Vec<Complex64> = (0..din * dout).map(|idx| k[(idx % dout, idx / dout)]).collect();
            for r in 0..v.len() {
                if v[r] == ZERO {
                    continue;
                }
                for col in 0..v.len() {
                    choi[(r, col)] += v[r] * v[col].conj();
                }
            }
        }
        choi
    }

    /// Smallest Choi eigenvalue; at least [`CHOI_PSD_FLOOR`] for a CP map.
    pub fn choi_min_eigenvalue(&self) -> Result<f64> {
        Ok(linalg::eigenvalues_hermitian(&self.choi())?
            .last()
            .copied()
            .unwrap_or(0.0))
    }

    pub fn is_completely_positive(&self) -> Result<bool> {
        Ok(self.choi_min_eigenvalue()? >= CHOI_PSD_FLOOR)
    }

    /// Equivalent channel with a minimal Kraus set from the Choi spectrum.
    pub fn simplified(&self) -> Result<Self> {
        let (din, dout) = (self.in_dim(), self.out_dim());
        if self.kraus.len() <= 1 {
            return Ok(self.clone());
        }
        let spec = linalg::eig_hermitian(&self.choi())?;
        let top = spec.eigenvalues.first().copied().unwrap_or(0.0);
        let mut kraus = Vec::new();
        for (idx, &mu) in spec.eigenvalues.iter().enumerate() {
            if mu <= 1e-14 * top.max(1.0) {
                break;
            }
            let s = mu.sqrt();
            kraus.push(CMatrix::from_fn(dout, din, |o, i| {
                spec.eigenvectors[(i * dout + o, idx)] * s
            }));
        }
        Self::new(kraus, self.in_layout.clone(), self.out_layout.clone())
    }

    /// Same Kraus operators under renamed layouts (dimensions must match).
    pub fn relabeled(&self, in_layout: SubsystemLayout, out_layout: SubsystemLayout) -> Result<Self> {
        if in_layout.dims() != self.in_layout.dims() || out_layout.dims() != self.out_layout.dims() {
            return Err(Error::Labeling("relabeling must keep dimensions".into()));
        }
        Ok(Self {
            kraus: self.kraus.clone(),
            in_layout,
            out_layout,
        })
    }
}

/// Apply `ch` to the subsystems `target` of `s`, splicing the output layout
/// in at the position of the first target label.
pub fn apply<S: AsRef<str>>(ch: &KrausChannel, s: &MultipartiteState, target: &[S]) -> Result<MultipartiteState> {
    let layout = s.layout();
    let tpos = layout.positions(target)?;
    let tdims: Vec<usize> = tpos.iter().map(|&p| layout.parts()[p].1).collect();
    if tdims != ch.in_layout.dims() {
        return Err(Error::Labeling(format!(
            "target dims {:?} do not match channel input dims {:?}",
            tdims,
            ch.in_layout.dims()
        )));
    }
    let rest: Vec<usize> = (0..layout.len()).filter(|p| !tpos.contains(p)).collect();
    let perm: Vec<usize> = tpos.iter().chain(&rest).copied().collect();
    let permuted = linalg::permute_subsystems(s.matrix(), &layout.dims(), &perm);
    let rest_dim: usize = rest.iter().map(|&p| layout.parts()[p].1).product();
    let id_rest = linalg::identity(rest_dim);
    let mut out = CMatrix::zeros(ch.out_dim() * rest_dim, ch.out_dim() * rest_dim);
    for k in &ch.kraus {
        let big = linalg::kron(k, &id_rest);
        out += &big * &permuted * big.adjoint();
    }
    let rest_layout = layout.select(&rest);
    let mid_layout = ch.out_layout.concat(&rest_layout)?;
    let first = *tpos.iter().min().expect("non-empty target");
    let mut order: Vec<String> = Vec::with_capacity(mid_layout.len());
    for p in 0..layout.len() {
        if p == first {
            order.extend(ch.out_layout.labels().map(String::from));
        }
        if !tpos.contains(&p) {
            order.push(layout.parts()[p].0.clone());
        }
    }
    let mid = MultipartiteState::new_unchecked(linalg::hermitian_part(&out), mid_layout);
    mid.reorder(&order)
}

/// Unitary conjugation `x -> U x U^dagger`.
pub fn ad_unitary(u: &CMatrix, layout: SubsystemLayout) -> Result<KrausChannel> {
    let dev = linalg::unitarity_deviation(u);
    if dev > 1e-9 {
        return Err(Error::InvalidChannel(format!("operator is not unitary (deviation {dev:e})")));
    }
    KrausChannel::new_unchecked(vec![u.clone()], layout.clone(), layout)
}

/// `f ∘ g` (apply `g` first). Kraus set `{F_i G_j}`.
pub fn compose(f: &KrausChannel, g: &KrausChannel) -> Result<KrausChannel> {
    if g.out_layout != f.in_layout {
        return Err(Error::Labeling(format!(
            "cannot compose: inner output {:?} vs outer input {:?}",
            g.out_layout.parts(),
            f.in_layout.parts()
        )));
    }
    let kraus = f
        .kraus
        .iter()
        .flat_map(|fk| g.kraus.iter().map(move |gk| fk * gk))
        .collect();
    KrausChannel::new_unchecked(kraus, g.in_layout.clone(), f.out_layout.clone())
}

/// `K ⊗ L` for channels on disjoint subsystems.
pub fn tensor_channels(a: &KrausChannel, b: &KrausChannel) -> Result<KrausChannel> {
    let in_layout = a.in_layout.concat(&b.in_layout)?;
    let out_layout = a.out_layout.concat(&b.out_layout)?;
    let kraus = a
        .kraus
        .iter()
        .flat_map(|ka| b.kraus.iter().map(move |kb| linalg::kron(ka, kb)))
        .collect();
    KrausChannel::new_unchecked(kraus, in_layout, out_layout)
}

/// Partial trace over `labels` as a channel with Kraus operators `I ⊗ <k|`.
pub fn trace_out_channel<S: AsRef<str>>(layout: &SubsystemLayout, labels: &[S]) -> Result<KrausChannel> {
    let drop = layout.positions(labels)?;
    let keep: Vec<usize> = (0..layout.len()).filter(|p| !drop.contains(p)).collect();
    if keep.is_empty() {
        return Err(Error::Labeling("cannot trace out every subsystem".into()));
    }
    let dims = layout.dims();
    let keep_dims: Vec<usize> = keep.iter().map(|&p| dims[p]).collect();
    let drop_dims: Vec<usize> = drop.iter().map(|&p| dims[p]).collect();
    let kept: usize = keep_dims.iter().product();
    let dropped: usize = drop_dims.iter().product();
    let mut kraus = vec![CMatrix::zeros(kept, layout.total_dim()); dropped];
    let mut ds = vec![0; dims.len()];
    let mut kd = vec![0; keep.len()];
    let mut dd = vec![0; drop.len()];
    for idx in 0..layout.total_dim() {
        linalg::digits(idx, &dims, &mut ds);
        for (slot, &p) in kd.iter_mut().zip(&keep) {
            *slot = ds[p];
        }
        for (slot, &p) in dd.iter_mut().zip(&drop) {
            *slot = ds[p];
        }
        kraus[linalg::undigits(&dd, &drop_dims)][(linalg::undigits(&kd, &keep_dims), idx)] = linalg::ONE;
    }
    KrausChannel::new_unchecked(kraus, layout.clone(), layout.select(&keep))
}

fn sqrt_decomposition(state: &MultipartiteState) -> Result<Vec<CMatrix>> {
    let spec = state.spectrum()?;
    let d = state.dim();
    Ok(spec
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &mu)| mu > 1e-15)
        .map(|(k, &mu)| CMatrix::from_fn(d, 1, |i, _| spec.eigenvectors[(i, k)] * mu.sqrt()))
        .collect())
}

/// `x -> x ⊗ env`.
pub fn append_state_channel(in_layout: SubsystemLayout, env: &MultipartiteState) -> Result<KrausChannel> {
    let out_layout = in_layout.concat(env.layout())?;
    let id = linalg::identity(in_layout.total_dim());
    let kraus = sqrt_decomposition(env)?
        .iter()
        .map(|col| linalg::kron(&id, col))
        .collect();
    KrausChannel::new(kraus, in_layout, out_layout)
}

/// Trace-and-replace: `x -> Tr(x) out`.
pub fn replace_channel(in_layout: SubsystemLayout, out: &MultipartiteState) -> Result<KrausChannel> {
    let din = in_layout.total_dim();
    let mut kraus = Vec::new();
    for col in sqrt_decomposition(out)? {
        for r in 0..din {
            let mut k = CMatrix::zeros(out.dim(), din);
            k.set_column(r, &col.column(0));
            kraus.push(k);
        }
    }
    KrausChannel::new(kraus, in_layout, out.layout().clone())
}

/// `x -> Tr(x) I/d` on the given layout.
pub fn completely_depolarizing(layout: SubsystemLayout) -> Result<KrausChannel> {
    replace_channel(layout.clone(), &MultipartiteState::maximally_mixed(layout))
}

/// The adapter `Λ(x ⊗ |0><0|) = Λ(x)`: a channel on `S E` that discards `E`
/// and then applies `Λ: S -> out`.
pub fn extend_input(ch: &KrausChannel, env_label: &str, env_dim: usize) -> Result<KrausChannel> {
    let big = ch.in_layout.concat(&SubsystemLayout::new([(env_label, env_dim)])?)?;
    let tr = trace_out_channel(&big, &[env_label])?;
    compose(ch, &tr)
}

/// `Λ = ⊕_k id_{L_k} ⊗ Λ_k` conjugated by the block isometry of `spec`.
///
/// `block_channels[k]` maps the right factor `R_k` to `R_k ⊗ E`; all blocks
/// must share the same environment part. The result maps `label` to
/// `label ⊗ E`.
pub fn direct_sum_channel(spec: &BlockSpec, label: &str, block_channels: &[KrausChannel]) -> Result<KrausChannel> {
    if block_channels.len() != spec.blocks().len() {
        return Err(Error::InvalidChannel(format!(
            "{} block channels for {} blocks",
            block_channels.len(),
            spec.blocks().len()
        )));
    }
    let env_part = block_channels[0]
        .out_layout
        .parts()
        .get(1)
        .cloned()
        .ok_or_else(|| Error::InvalidChannel("block channel must output (R, E)".into()))?;
    let d_e = env_part.1;
    let mut kraus = Vec::new();
    for (k, (&(d_l, d_r), ch)) in spec.blocks().iter().zip(block_channels).enumerate() {
        if ch.in_layout.dims() != [d_r] || ch.out_layout.dims() != [d_r, d_e] {
            return Err(Error::InvalidChannel(format!(
                "block {k} channel dims {:?} -> {:?}, expected [{d_r}] -> [{d_r}, {d_e}]",
                ch.in_layout.dims(),
                ch.out_layout.dims()
            )));
        }
        if ch.out_layout.parts()[1] != env_part {
            return Err(Error::InvalidChannel("block channels disagree on the environment".into()));
        }
        let w = spec.block_isometry(k);
        let w_e = linalg::kron(&w, &linalg::identity(d_e));
        let id_l = linalg::identity(d_l);
        for bk in &ch.kraus {
            kraus.push(&w_e * linalg::kron(&id_l, bk) * w.adjoint());
        }
    }
    let in_layout = SubsystemLayout::new([(label, spec.dim())])?;
    let out_layout = SubsystemLayout::new([(label.to_string(), spec.dim()), env_part])?;
    KrausChannel::new(kraus, in_layout, out_layout)
}

/// Localized subdynamics `E_i = Tr_{E_i} ∘ F_i ∘ Λ_i` for every label.
///
/// `lambdas[i]` maps `S_i -> S_i E_i` and `dynamics[i]` acts on `S_i E_i`.
/// Labels with a lambda but no dynamics use `F_i = id`.
pub fn reduce_localized_dynamics(
    lambdas: &BTreeMap<String, KrausChannel>,
    dynamics: &BTreeMap<String, KrausChannel>,
) -> Result<BTreeMap<String, KrausChannel>> {
    if let Some(extra) = dynamics.keys().find(|k| !lambdas.contains_key(*k)) {
        return Err(Error::Labeling(format!("dynamics for {extra} without a matching lambda")));
    }
    let mut out = BTreeMap::new();
    for (label, lambda) in lambdas {
        if lambda.in_layout.len() != 1 || lambda.in_layout.parts()[0].0 != *label {
            return Err(Error::Labeling(format!(
                "lambda for {label} must act on exactly [{label}]"
            )));
        }
        let evolved = match dynamics.get(label) {
            Some(f) => compose(f, lambda)?,
            None => lambda.clone(),
        };
        let envs: Vec<&str> = evolved.out_layout.labels().filter(|l| *l != label).collect();
        if envs.len() + 1 != evolved.out_layout.len() {
            return Err(Error::Labeling(format!("dynamics for {label} drop the system label")));
        }
        let reduced = if envs.is_empty() {
            evolved
        } else {
            compose(&trace_out_channel(&evolved.out_layout, &envs)?, &evolved)?
        };
        let reduced = if reduced.kraus.len() > reduced.in_dim() * reduced.out_dim() {
            reduced.simplified()?
        } else {
            reduced
        };
        out.insert(label.clone(), reduced);
    }
    Ok(out)
}

/// Apply one channel per label (each acting on `[label]` or the labels of its
/// input layout) to a state.
pub fn apply_each(state: &MultipartiteState, channels: &BTreeMap<String, KrausChannel>) -> Result<MultipartiteState> {
    let mut s = state.clone();
    for ch in channels.values() {
        let targets: Vec<String> = ch.in_layout.labels().map(String::from).collect();
        s = apply(ch, &s, &targets)?;
    }
    Ok(s)
}

/// Scale every Kraus operator; used by tests that need non-TP perturbations.
#[doc(hidden)]
pub fn scaled_unchecked(ch: &KrausChannel, factor: f64) -> KrausChannel {
    KrausChannel {
        kraus: ch.kraus.iter().map(|k| k * c(factor, 0.0)).collect(),
        in_layout: ch.in_layout.clone(),
        out_layout: ch.out_layout.clone(),
    }
}
