//! Tripartite and multipartite Markov states: block structures, constructors,
//! certificates, recovery channels and the decomposition finder.
//!
//! A [`MarkovDecomposition`] describes states of the form
//!
//! ```text
//! sum_m  lambda_m  W (core_m ⊗ env_{1,m_1} ⊗ ... ⊗ env_{N,m_N}) W^dagger
//! ```
//!
//! where each system `S_i` splits as `⊕_j L_{i,j} ⊗ R_{i,j}` through its
//! [`BlockSpec`]. The core state lives on the free labels plus every left
//! factor (`"<S>.L"`), and each environment factor on `"<S>.R"` plus `E_i`.
//! The reconstructed layout is the free labels followed by `(S_i, E_i)`
//! pairs, so one free label and one system give `(A, B, E)`, no free label
//! gives `(S_1, E_1, ..., S_N, E_N)`, and a single free `S_1` gives
//! `(S_1, S_2, E_2, ...)`.

mod algebra;
mod finder;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::channels::{self, KrausChannel};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};
use crate::measures::conditional_mutual_information;
use crate::state::{partial_trace, trace_out, MultipartiteState, SubsystemLayout};

pub use finder::{find_markov_decomposition, FindError};

/// Default tolerance for CMI certificates and equality residuals.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Weights below this are dropped by the constructors.
pub const WEIGHT_DROP: f64 = 1e-12;
const WEIGHT_SUM_TOL: f64 = 1e-10;
const ISOMETRY_TOL: f64 = 1e-9;

pub fn left_label(system: &str) -> String {
    format!("{system}.L")
}

pub fn right_label(system: &str) -> String {
    format!("{system}.R")
}

/// `H = ⊕_k L_k ⊗ R_k` realized by a unitary whose columns, block by block,
/// are the product basis vectors `|l>|r>` at index `l * d_R + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    blocks: Vec<(usize, usize)>,
    isometry: CMatrix,
}

impl BlockSpec {
    pub fn new(blocks: Vec<(usize, usize)>, isometry: CMatrix) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidDecomposition("block list is empty".into()));
        }
        if blocks.iter().any(|&(l, r)| l == 0 || r == 0) {
            return Err(Error::InvalidDecomposition("block dimensions must be positive".into()));
        }
        let d: usize = blocks.iter().map(|&(l, r)| l * r).sum();
        if isometry.shape() != (d, d) {
            return Err(Error::InvalidDecomposition(format!(
                "blocks span dimension {d} but the isometry is {}x{}",
                isometry.nrows(),
                isometry.ncols()
            )));
        }
        if !linalg::all_finite(&isometry) {
            return Err(Error::InvalidDecomposition("isometry has non-finite entries".into()));
        }
        let dev = linalg::unitarity_deviation(&isometry);
        if dev > ISOMETRY_TOL {
            return Err(Error::InvalidDecomposition(format!("isometry is not unitary (deviation {dev:e})")));
        }
        Ok(Self { blocks, isometry })
    }

    /// Block structure in the computational basis.
    pub fn with_identity(blocks: Vec<(usize, usize)>) -> Result<Self> {
        let d = blocks.iter().map(|&(l, r)| l * r).sum();
        Self::new(blocks, linalg::identity(d))
    }

    /// One block `(d, 1)`: no splitting at all.
    pub fn trivial(d: usize) -> Self {
        Self {
            blocks: vec![(d, 1)],
            isometry: linalg::identity(d),
        }
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    pub fn isometry(&self) -> &CMatrix {
        &self.isometry
    }

    pub fn dim(&self) -> usize {
        self.isometry.nrows()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn offset(&self, k: usize) -> usize {
        self.blocks[..k].iter().map(|&(l, r)| l * r).sum()
    }

    /// Columns of block `k`: a `d x (d_L d_R)` isometry.
    pub fn block_isometry(&self, k: usize) -> CMatrix {
        let (l, r) = self.blocks[k];
        self.isometry.columns(self.offset(k), l * r).into_owned()
    }

    /// The same blocks under a basis change `u` of the subsystem.
    pub fn rotated(&self, u: &CMatrix) -> Result<Self> {
        if u.shape() != self.isometry.shape() {
            return Err(Error::Shape("rotation does not match subsystem dimension".into()));
        }
        Self::new(self.blocks.clone(), u * &self.isometry)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovDecomposition {
    subsystems: Vec<(String, BlockSpec)>,
    weights: Vec<f64>,
    cores: Vec<MultipartiteState>,
    environments: Vec<Vec<MultipartiteState>>,
}

impl MarkovDecomposition {
    /// `weights` and `cores` are indexed row-major by the multi-index
    /// `(j_1, ..., j_N)` of blocks; `environments[i][j]` is the factor on
    /// `("<S_i>.R", E_i)` for block `j` of system `i`.
    pub fn new(
        subsystems: Vec<(String, BlockSpec)>,
        weights: Vec<f64>,
        cores: Vec<MultipartiteState>,
        environments: Vec<Vec<MultipartiteState>>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidDecomposition(msg));
        if subsystems.is_empty() {
            return bad("no subsystems".into());
        }
        let counts: Vec<usize> = subsystems.iter().map(|(_, s)| s.len()).collect();
        let total: usize = counts.iter().product();
        if weights.len() != total || cores.len() != total {
            return bad(format!(
                "{} weights and {} cores for {total} block multi-indices",
                weights.len(),
                cores.len()
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("weights must be finite and non-negative".into());
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return bad(format!("weights sum to {sum}"));
        }
        if environments.len() != subsystems.len() {
            return bad("one environment list per subsystem is required".into());
        }
        let n = subsystems.len();
        let mut env_parts = Vec::with_capacity(n);
        for ((label, spec), envs) in subsystems.iter().zip(&environments) {
            if envs.len() != spec.len() {
                return bad(format!("{label}: {} environment factors for {} blocks", envs.len(), spec.len()));
            }
            let mut part: Option<(String, usize)> = None;
            for (j, (env, &(_, d_r))) in envs.iter().zip(spec.blocks()).enumerate() {
                let parts = env.layout().parts();
                if parts.len() != 2 || parts[0] != (right_label(label), d_r) {
                    return bad(format!(
                        "{label} block {j}: environment factor layout must be [[\"{}\",{d_r}],[E,dE]]",
                        right_label(label)
                    ));
                }
                match &part {
                    None => part = Some(parts[1].clone()),
                    Some(p) if *p != parts[1] => {
                        return bad(format!("{label}: blocks disagree on the environment part"));
                    }
                    _ => {}
                }
            }
            env_parts.push(part.expect("at least one block"));
        }
        let core_len = cores[0].layout().len();
        if core_len < n {
            return bad("core layout is missing left factors".into());
        }
        let n_free = core_len - n;
        let free = cores[0].layout().select(&(0..n_free).collect::<Vec<_>>());
        let mut idx = vec![0; n];
        for (m, core) in cores.iter().enumerate() {
            linalg::digits(m, &counts, &mut idx);
            let parts = core.layout().parts();
            let expected_left = subsystems
                .iter()
                .zip(&idx)
                .map(|((label, spec), &j)| (left_label(label), spec.blocks()[j].0));
            let ok = parts.len() == core_len
                && parts[..n_free] == *free.parts()
                && parts[n_free..].iter().cloned().eq(expected_left);
            if !ok {
                return bad(format!("core {m} layout {:?} does not match the block structure", parts));
            }
        }
        let decomp = Self {
            subsystems,
            weights,
            cores,
            environments,
        };
        decomp.output_layout()?;
        Ok(decomp)
    }

    /// Tripartite `(A, B, E)` decomposition. Core states are relabeled to
    /// `(A, B.L)` and environment factors to `(B.R, E)`; only their dims matter.
    pub fn tripartite(
        labels: [&str; 3],
        spec: BlockSpec,
        weights: Vec<f64>,
        cores: Vec<MultipartiteState>,
        envs: Vec<MultipartiteState>,
    ) -> Result<Self> {
        let [a, b, e] = labels;
        let cores = cores
            .into_iter()
            .map(|s| relabel_pair(s, a, &left_label(b)))
            .collect::<Result<Vec<_>>>()?;
        let envs = envs
            .into_iter()
            .map(|s| relabel_pair(s, &right_label(b), e))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vec![(b.to_string(), spec)], weights, cores, vec![envs])
    }

    pub fn subsystems(&self) -> &[(String, BlockSpec)] {
        &self.subsystems
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cores(&self) -> &[MultipartiteState] {
        &self.cores
    }

    pub fn environments(&self) -> &[Vec<MultipartiteState>] {
        &self.environments
    }

    pub fn block_counts(&self) -> Vec<usize> {
        self.subsystems.iter().map(|(_, s)| s.len()).collect()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let counts = self.block_counts();
        let mut idx = vec![0; counts.len()];
        linalg::digits(flat, &counts, &mut idx);
        idx
    }

    /// Labels that belong to the core but are not split.
    pub fn free_layout(&self) -> SubsystemLayout {
        let n_free = self.cores[0].layout().len() - self.subsystems.len();
        self.cores[0].layout().select(&(0..n_free).collect::<Vec<_>>())
    }

    /// `(E_i label, E_i dim)` of subsystem `i`.
    pub fn environment_part(&self, i: usize) -> (String, usize) {
        self.environments[i][0].layout().parts()[1].clone()
    }

    pub fn output_layout(&self) -> Result<SubsystemLayout> {
        let mut parts: Vec<(String, usize)> = self.free_layout().parts().to_vec();
        for (i, (label, spec)) in self.subsystems.iter().enumerate() {
            parts.push((label.clone(), spec.dim()));
            parts.push(self.environment_part(i));
        }
        SubsystemLayout::new(parts)
    }

    /// The state on the free labels and systems, without environments.
    pub fn system_state(&self) -> Result<MultipartiteState> {
        let full = construct_markov_state(self)?;
        let envs: Vec<String> = (0..self.subsystems.len()).map(|i| self.environment_part(i).0).collect();
        trace_out(&full, &envs)
    }
}

fn relabel_pair(s: MultipartiteState, first: &str, second: &str) -> Result<MultipartiteState> {
    let dims = s.layout().dims();
    if dims.len() != 2 {
        return Err(Error::InvalidDecomposition(format!(
            "component must have two parts, got {}",
            dims.len()
        )));
    }
    s.relabel(SubsystemLayout::new([(first, dims[0]), (second, dims[1])])?)
}

/// Reconstruct the state described by `decomp` (weights below
/// [`WEIGHT_DROP`] are dropped and the rest renormalized).
pub fn construct_markov_state(decomp: &MarkovDecomposition) -> Result<MultipartiteState> {
    let out_layout = decomp.output_layout()?;
    let n = decomp.subsystems.len();
    let free = decomp.free_layout();
    let n_free = free.len();
    let kept: Vec<usize> = (0..decomp.weights.len())
        .filter(|&m| decomp.weights[m] >= WEIGHT_DROP)
        .collect();
    let total: f64 = kept.iter().map(|&m| decomp.weights[m]).sum();
    if total <= 0.0 {
        return Err(Error::InvalidDecomposition("every weight is negligible".into()));
    }
    let d = out_layout.total_dim();
    let mut acc = CMatrix::zeros(d, d);
    let id_free = linalg::identity(free.total_dim());
    for m in kept {
        let idx = decomp.multi_index(m);
        let mut term = decomp.cores[m].matrix().clone();
        let mut dims = decomp.cores[m].layout().dims();
        for (i, &j) in idx.iter().enumerate() {
            let env = &decomp.environments[i][j];
            term = linalg::kron(&term, env.matrix());
            dims.extend(env.layout().dims());
        }
        let mut perm: Vec<usize> = (0..n_free).collect();
        for i in 0..n {
            perm.extend([n_free + i, n_free + n + 2 * i, n_free + n + 2 * i + 1]);
        }
        let permuted = linalg::permute_subsystems(&term, &dims, &perm);
        let mut w = id_free.clone();
        for (i, &j) in idx.iter().enumerate() {
            let (_, spec) = &decomp.subsystems[i];
            let d_e = decomp.environment_part(i).1;
            w = linalg::kron(&w, &linalg::kron(&spec.block_isometry(j), &linalg::identity(d_e)));
        }
        acc += (&w * permuted * w.adjoint()) * c(decomp.weights[m] / total, 0.0);
    }
    MultipartiteState::new(linalg::hermitian_part(&acc), out_layout)
}

/// `⊕_k lambda_k W(rho_{A L_k} ⊗ rho_{R_k E})W^dagger` on the given `(A, B, E)`
/// layout.
pub fn construct_tripartite_markov(decomp: &MarkovDecomposition, layout: &SubsystemLayout) -> Result<MultipartiteState> {
    if decomp.subsystems.len() != 1 || decomp.free_layout().len() != 1 {
        return Err(Error::InvalidDecomposition(
            "tripartite construction needs one free label and one split subsystem".into(),
        ));
    }
    let s = construct_markov_state(decomp)?;
    if s.layout().dims() != layout.dims() {
        return Err(Error::Shape(format!(
            "decomposition produces dims {:?}, layout has {:?}",
            s.layout().dims(),
            layout.dims()
        )));
    }
    s.relabel(layout.clone())
}

/// Layout pattern of a strong Markov state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmPattern {
    /// `(S_1, E_1, ..., S_N, E_N)`.
    Full,
    /// `(S_1, S_2, E_2, ..., S_N, E_N)`: `S_1` has no environment.
    Odd,
}

impl FromStr for SmPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2N" | "full" => Ok(Self::Full),
            "2N-1" | "odd" => Ok(Self::Odd),
            other => Err(Error::InvalidDecomposition(format!("unknown pattern {other:?}"))),
        }
    }
}

impl fmt::Display for SmPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "2N",
            Self::Odd => "2N-1",
        })
    }
}

/// Direct-sum tensor state on the `2N` or `2N-1` layout.
pub fn construct_sm_state(pattern: SmPattern, decomp: &MarkovDecomposition) -> Result<MultipartiteState> {
    let n_free = decomp.free_layout().len();
    let expected = match pattern {
        SmPattern::Full => 0,
        SmPattern::Odd => 1,
    };
    if n_free != expected {
        return Err(Error::InvalidDecomposition(format!(
            "pattern {pattern} needs {expected} unsplit core labels, found {n_free}"
        )));
    }
    construct_markov_state(decomp)
}

/// One CMI term: `I(a ; e | b)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub a: Vec<String>,
    pub b: Vec<String>,
    pub e: Vec<String>,
}

impl Partition {
    pub fn new<S: Into<String>>(
        a: impl IntoIterator<Item = S>,
        b: impl IntoIterator<Item = S>,
        e: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            a: a.into_iter().map(Into::into).collect(),
            b: b.into_iter().map(Into::into).collect(),
            e: e.into_iter().map(Into::into).collect(),
        }
    }
}

impl FromStr for Partition {
    type Err = Error;

    /// `"A;B;E"`, labels within a part separated by commas; `B` may be empty.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(';').collect();
        if parts.len() != 3 {
            return Err(Error::Labeling(format!("partition {s:?} must have the form A;B;E")));
        }
        let split = |p: &str| -> Vec<String> {
            p.split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(String::from)
                .collect()
        };
        Ok(Self {
            a: split(parts[0]),
            b: split(parts[1]),
            e: split(parts[2]),
        })
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};{};{}", self.a.join(","), self.b.join(","), self.e.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovReport {
    /// Partition (`"A;B;E"`) to CMI in bits.
    pub cmi_values: IndexMap<String, f64>,
    pub certified: bool,
    pub tolerance: f64,
    pub residual: f64,
}

impl MarkovReport {
    /// Certified iff every value is at most `tolerance`; the residual is the
    /// largest value (0 when empty).
    pub fn from_values(cmi_values: IndexMap<String, f64>, tolerance: f64) -> Self {
        let residual = cmi_values.values().copied().fold(0.0, f64::max);
        Self {
            certified: cmi_values.values().all(|&v| v <= tolerance),
            cmi_values,
            tolerance,
            residual,
        }
    }
}

/// CMI for each partition, certified when all are within `tol`.
pub fn cmi_report(s: &MultipartiteState, partitions: &[Partition], tol: f64) -> Result<MarkovReport> {
    let mut values = IndexMap::new();
    for p in partitions {
        values.insert(p.to_string(), conditional_mutual_information(s, &p.a, &p.b, &p.e)?);
    }
    Ok(MarkovReport::from_values(values, tol))
}

/// Sufficient weak-Markov certificate: `I(E_i ; rest | S_i) <= tol` for every
/// pair with an environment. Systems without one (`None`) only appear in the
/// `rest` of other terms. A failed certificate does not prove the state is
/// not weakly Markov.
pub fn wm_certificate(s: &MultipartiteState, pairing: &[(String, Option<String>)], tol: f64) -> Result<MarkovReport> {
    let mut listed: Vec<&str> = Vec::new();
    for (sys, env) in pairing {
        listed.push(sys);
        if let Some(e) = env {
            listed.push(e);
        }
    }
    s.layout().positions(&listed)?;
    if listed.len() != s.layout().len() {
        return Err(Error::Labeling(format!(
            "pairing covers {} of {} labels",
            listed.len(),
            s.layout().len()
        )));
    }
    let mut values = IndexMap::new();
    for (sys, env) in pairing {
        let Some(env) = env else { continue };
        let rest: Vec<String> = s
            .layout()
            .labels()
            .filter(|l| l != sys && l != env)
            .map(String::from)
            .collect();
        let p = Partition::new([env.clone()], [sys.clone()], rest.clone());
        let v = if rest.is_empty() {
            0.0
        } else {
            conditional_mutual_information(s, &p.a, &p.b, &p.e)?
        };
        values.insert(p.to_string(), v);
    }
    Ok(MarkovReport::from_values(values, tol))
}

/// `||(⊗_i G_i)(rho_S) - rho_S||_1` with `G_i = id` for labels in `subset`
/// and `G_i = phis[i]` otherwise.
pub fn check_sm_replacement<S: AsRef<str>>(
    rho_s: &MultipartiteState,
    phis: &BTreeMap<String, KrausChannel>,
    subset: &[S],
) -> Result<f64> {
    for label in subset {
        if !phis.contains_key(label.as_ref()) {
            return Err(Error::Labeling(format!("no channel for {}", label.as_ref())));
        }
    }
    let mut out = rho_s.clone();
    for (label, phi) in phis {
        if subset.iter().any(|s| s.as_ref() == label) {
            continue;
        }
        if phi.in_layout().labels().collect::<Vec<_>>() != [label.as_str()] || phi.out_layout() != phi.in_layout() {
            return Err(Error::InvalidChannel(format!("channel for {label} must map {label} to itself")));
        }
        out = channels::apply(phi, &out, &[label])?;
    }
    linalg::one_norm_distance(out.matrix(), rho_s.matrix())
}

/// `||rho - reconstruct(decomp)||_1`. When `rho` carries the same labels as the
/// reconstruction it is reordered to match; otherwise dims must agree
/// position by position.
pub fn verify_decomposition(rho: &MultipartiteState, decomp: &MarkovDecomposition) -> Result<f64> {
    let recon = construct_markov_state(decomp)?;
    let order: Vec<&str> = recon.layout().labels().collect();
    let aligned = if rho.layout().len() == order.len() && order.iter().all(|l| rho.layout().contains(l)) {
        rho.reorder(&order)?
    } else if rho.layout().dims() == recon.layout().dims() {
        rho.clone()
    } else {
        return Err(Error::Shape(format!(
            "state dims {:?} do not match decomposition dims {:?}",
            rho.layout().dims(),
            recon.layout().dims()
        )));
    };
    linalg::one_norm_distance(aligned.matrix(), recon.matrix())
}

/// Recovery maps `Λ_i: S_i -> S_i E_i`, each the direct sum over blocks of
/// `id_L ⊗ (x_R -> Tr(x_R) rho_{R E})`. Applied to the system state they
/// rebuild the full decomposed state.
pub fn recovery_channels(decomp: &MarkovDecomposition) -> Result<BTreeMap<String, KrausChannel>> {
    let mut out = BTreeMap::new();
    for (i, (label, spec)) in decomp.subsystems.iter().enumerate() {
        let block_channels = spec
            .blocks()
            .iter()
            .zip(&decomp.environments[i])
            .map(|(&(_, d_r), env)| {
                let in_layout = SubsystemLayout::new([(right_label(label), d_r)])?;
                channels::replace_channel(in_layout, env)
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(label.clone(), channels::direct_sum_channel(spec, label, &block_channels)?);
    }
    Ok(out)
}

/// `Φ_i = Tr_{E_i} ∘ Λ_i` for every split subsystem.
pub fn phi_channels(decomp: &MarkovDecomposition) -> Result<BTreeMap<String, KrausChannel>> {
    let mut lambdas = recovery_channels(decomp)?;
    let mut out = BTreeMap::new();
    for (i, (label, _)) in decomp.subsystems.iter().enumerate() {
        let lambda = lambdas.remove(label).expect("one recovery channel per subsystem");
        let tr = channels::trace_out_channel(lambda.out_layout(), &[decomp.environment_part(i).0])?;
        out.insert(label.clone(), channels::compose(&tr, &lambda)?);
    }
    Ok(out)
}

/// Marginal of `rho` on the system labels of a decomposition (free labels and
/// split subsystems), in layout order.
pub fn system_marginal(rho: &MultipartiteState, decomp: &MarkovDecomposition) -> Result<MultipartiteState> {
    let mut keep: Vec<String> = decomp.free_layout().labels().map(String::from).collect();
    keep.extend(decomp.subsystems.iter().map(|(l, _)| l.clone()));
    partial_trace(rho, &keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag_real, ZERO};
    use crate::random::{self, SplitSystem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(parts: &[(&str, usize)]) -> SubsystemLayout {
        SubsystemLayout::new(parts.iter().map(|&(l, d)| (l, d))).unwrap()
    }

    fn ghz(labels: &[&str]) -> MultipartiteState {
        let n = labels.len();
        let mut v = vec![ZERO; 1 << n];
        v[0] = c(1.0, 0.0);
        v[(1 << n) - 1] = c(1.0, 0.0);
        MultipartiteState::pure(&v, SubsystemLayout::new(labels.iter().map(|&l| (l, 2))).unwrap()).unwrap()
    }

    fn bell(labels: [&str; 2]) -> MultipartiteState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        MultipartiteState::pure(
            &[c(h, 0.0), ZERO, ZERO, c(h, 0.0)],
            layout(&[(labels[0], 2), (labels[1], 2)]),
        )
        .unwrap()
    }

    #[test]
    fn block_spec_validation() {
        assert!(BlockSpec::with_identity(vec![(1, 2), (2, 1)]).is_ok());
        assert!(BlockSpec::new(vec![(1, 2)], linalg::identity(3)).is_err());
        assert!(BlockSpec::new(vec![(2, 1)], diag_real(&[1.0, 2.0])).is_err());
        assert!(BlockSpec::with_identity(vec![]).is_err());
        let s = BlockSpec::with_identity(vec![(1, 2), (2, 1)]).unwrap();
        assert_eq!(s.offset(1), 2);
        assert_eq!(s.block_isometry(1).shape(), (4, 2));
    }

    #[test]
    fn single_trivial_block_gives_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho_ab = random::random_full_rank_state(&mut rng, layout(&[("A", 2), ("B", 3)]));
        let rho_e = random::random_full_rank_state(&mut rng, layout(&[("E", 2)]));
        let env_factor = MultipartiteState::new(rho_e.matrix().clone(), layout(&[("x", 1), ("E", 2)])).unwrap();
        let decomp = MarkovDecomposition::tripartite(
            ["A", "B", "E"],
            BlockSpec::trivial(3),
            vec![1.0],
            vec![rho_ab.clone()],
            vec![env_factor],
        )
        .unwrap();
        let s = construct_tripartite_markov(&decomp, &layout(&[("A", 2), ("B", 3), ("E", 2)])).unwrap();
        let want = rho_ab.tensor(&rho_e).unwrap();
        assert!(linalg::max_abs(&(s.matrix() - want.matrix())) < 1e-14);
    }

    #[test]
    fn random_tripartite_constructions_have_zero_cmi() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for blocks in [vec![(1, 2), (2, 1)], vec![(1, 1), (1, 2)], vec![(2, 2)], vec![(1, 3), (1, 3)]] {
            let decomp = random::random_markov_decomposition(
                &mut rng,
                &[("A", 2)],
                &[SplitSystem::new("B", &blocks, "E", 2)],
                true,
            )
            .unwrap();
            let s = construct_markov_state(&decomp).unwrap();
            let cmi = conditional_mutual_information(&s, &["A"], &["B"], &["E"]).unwrap();
            assert!(cmi <= 1e-9, "cmi {cmi} for {blocks:?}");
            assert!(verify_decomposition(&s, &decomp).unwrap() < 1e-10);
        }
    }

    #[test]
    fn degenerate_weights_select_one_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random::random_markov_decomposition(
            &mut rng,
            &[("A", 2)],
            &[SplitSystem::new("B", &[(1, 2), (2, 1)], "E", 2)],
            false,
        )
        .unwrap();
        let only_first = MarkovDecomposition::new(
            d.subsystems().to_vec(),
            vec![1.0, 0.0],
            d.cores().to_vec(),
            d.environments().to_vec(),
        )
        .unwrap();
        let s = construct_markov_state(&only_first).unwrap();
        let w = d.subsystems()[0].1.block_isometry(0);
        let block = linalg::kron(
            &linalg::kron(&linalg::identity(2), &w),
            &linalg::identity(2),
        );
        let local = linalg::kron(d.cores()[0].matrix(), d.environments()[0][0].matrix());
        let want = &block * local * block.adjoint();
        assert!(linalg::max_abs(&(s.matrix() - want)) < 1e-14);
    }

    #[test]
    fn decomposition_rejects_bad_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random::random_markov_decomposition(
            &mut rng,
            &[("A", 2)],
            &[SplitSystem::new("B", &[(1, 2), (2, 1)], "E", 2)],
            false,
        )
        .unwrap();
        let with = |w: Vec<f64>| {
            MarkovDecomposition::new(d.subsystems().to_vec(), w, d.cores().to_vec(), d.environments().to_vec())
        };
        assert!(with(vec![0.5, 0.6]).is_err());
        assert!(with(vec![1.5, -0.5]).is_err());
        assert!(with(vec![1.0]).is_err());
    }

    #[test]
    fn verify_detects_perturbed_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random::random_markov_decomposition(
            &mut rng,
            &[("A", 2)],
            &[SplitSystem::new("B", &[(1, 2), (2, 1)], "E", 2)],
            true,
        )
        .unwrap();
        let s = construct_markov_state(&d).unwrap();
        let eps = 0.01;
        let w = d.weights();
        let shifted = MarkovDecomposition::new(
            d.subsystems().to_vec(),
            vec![w[0] + eps, w[1] - eps],
            d.cores().to_vec(),
            d.environments().to_vec(),
        )
        .unwrap();
        let r = verify_decomposition(&s, &shifted).unwrap();
        // The blocks are orthogonal, so the residual is exactly 2 eps.
        assert!((r - 2.0 * eps).abs() < 1e-9, "residual {r}");
    }

    #[test]
    fn wm_certificate_cases() {
        let rho = bell(["S1", "S2"]);
        let e1 = MultipartiteState::new(diag_real(&[0.3, 0.7]), layout(&[("E1", 2)])).unwrap();
        let e2 = MultipartiteState::new(diag_real(&[0.6, 0.4]), layout(&[("E2", 2)])).unwrap();
        let s = rho.tensor(&e1).unwrap().tensor(&e2).unwrap();
        let pairing = vec![
            ("S1".to_string(), Some("E1".to_string())),
            ("S2".to_string(), Some("E2".to_string())),
        ];
        let rep = wm_certificate(&s, &pairing, 1e-9).unwrap();
        assert!(rep.certified);
        assert!(rep.cmi_values.values().all(|&v| v == 0.0));

        let g = ghz(&["S1", "E1", "S2", "E2"]);
        let rep = wm_certificate(&g, &pairing, 1e-9).unwrap();
        assert!(!rep.certified);
        assert!(rep.cmi_values.values().all(|&v| v > 0.9));

        let missing = vec![("S1".to_string(), Some("E1".to_string()))];
        assert!(wm_certificate(&g, &missing, 1e-9).is_err());
    }

    #[test]
    fn sm_replacement_identity_and_depolarizing() {
        let rho = bell(["A", "B"]);
        let mut phis = BTreeMap::new();
        phis.insert("A".to_string(), KrausChannel::identity(layout(&[("A", 2)])));
        phis.insert("B".to_string(), KrausChannel::identity(layout(&[("B", 2)])));
        for subset in [vec![], vec!["A"], vec!["A", "B"]] {
            assert!(check_sm_replacement(&rho, &phis, &subset).unwrap() < 1e-15);
        }
        phis.insert("B".to_string(), channels::completely_depolarizing(layout(&[("B", 2)])).unwrap());
        let r = check_sm_replacement(&rho, &phis, &["A"]).unwrap();
        // |Phi+><Phi+| against I/4: eigenvalues 3/4, -1/4 x3.
        assert!((r - 1.5).abs() < 1e-12);
        assert!(check_sm_replacement(&rho, &phis, &["C"]).is_err());
    }

    #[test]
    fn recovery_channels_rebuild_the_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = random::random_markov_decomposition(
            &mut rng,
            &[("A", 2)],
            &[SplitSystem::new("B", &[(1, 2), (2, 1)], "E", 2)],
            true,
        )
        .unwrap();
        let full = construct_markov_state(&d).unwrap();
        let rho_ab = trace_out(&full, &["E"]).unwrap();
        let lambdas = recovery_channels(&d).unwrap();
        let rebuilt = channels::apply(&lambdas["B"], &rho_ab, &["B"]).unwrap();
        assert!(linalg::one_norm_distance(rebuilt.matrix(), full.matrix()).unwrap() < 1e-10);
        let phis = phi_channels(&d).unwrap();
        let fixed = channels::apply(&phis["B"], &rho_ab, &["B"]).unwrap();
        assert!(linalg::one_norm_distance(fixed.matrix(), rho_ab.matrix()).unwrap() < 1e-10);
        for ch in lambdas.values().chain(phis.values()) {
            assert!(ch.is_completely_positive().unwrap());
        }
    }

    #[test]
    fn sm_full_pattern_certificates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = random::random_markov_decomposition(
            &mut rng,
            &[],
            &[
                SplitSystem::new("S1", &[(1, 2), (2, 1)], "E1", 2),
                SplitSystem::new("S2", &[(2, 1), (1, 1)], "E2", 2),
            ],
            true,
        )
        .unwrap();
        let s = construct_sm_state(SmPattern::Full, &d).unwrap();
        assert_eq!(s.layout().labels().collect::<Vec<_>>(), ["S1", "E1", "S2", "E2"]);
        let pairing = vec![
            ("S1".to_string(), Some("E1".to_string())),
            ("S2".to_string(), Some("E2".to_string())),
        ];
        assert!(wm_certificate(&s, &pairing, 1e-9).unwrap().certified);
        let rho_s = system_marginal(&s, &d).unwrap();
        let phis = phi_channels(&d).unwrap();
        for subset in [vec![], vec!["S1"], vec!["S2"], vec!["S1", "S2"]] {
            assert!(check_sm_replacement(&rho_s, &phis, &subset).unwrap() < 1e-9);
        }
        assert!(construct_sm_state(SmPattern::Odd, &d).is_err());
    }

    #[test]
    fn partition_parsing() {
        let p: Partition = "A,C;B;E".parse().unwrap();
        assert_eq!(p.a, ["A", "C"]);
        assert_eq!(p.to_string(), "A,C;B;E");
        let q: Partition = "A;;E".parse().unwrap();
        assert!(q.b.is_empty());
        assert!("A;B".parse::<Partition>().is_err());
    }
}
