//! Random-unitary dynamics with a classical environment: a bipartite system
//! `AB` whose `B` evolves under `exp(-i H_j t)` with probability `p_j`.
//!
//! The environment `E` records the branch index `j` in its computational
//! basis. Joint evolution is block diagonal in `E`, so system-environment
//! correlations stay classical while the system's entanglement can die and
//! revive.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, Spectrum};
use crate::measures::{concurrence, conditional_mutual_information, negativity};
use crate::state::{MultipartiteState, SubsystemLayout};

/// Minimum step between consecutive samples that counts as an increase.
pub const REVIVAL_THRESHOLD: f64 = 1e-9;
const PROBABILITY_SUM_TOL: f64 = 1e-12;
const HAMILTONIAN_TOL: f64 = 1e-10;
const MAX_GRID_POINTS: usize = 1_000_000;

/// Strictly increasing, non-negative sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidScenario("time grid is empty".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidScenario("times must be finite and non-negative".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidScenario("times must be strictly increasing".into()));
        }
        Ok(Self { times })
    }

    /// `start, start + step, ...` up to `stop` (inclusive when it lands on
    /// the grid up to rounding).
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidScenario(format!("step must be positive, got {step}")));
        }
        if !(start.is_finite() && stop.is_finite()) || stop < start {
            return Err(Error::InvalidScenario(format!("bad range [{start}, {stop}]")));
        }
        let count = ((stop - start) / step + 1e-9).floor() + 1.0;
        if count > MAX_GRID_POINTS as f64 {
            return Err(Error::InvalidScenario(format!("grid would have {count} points")));
        }
        Self::new((0..count as usize).map(|k| start + k as f64 * step).collect())
    }

    /// `n` evenly spaced points including both ends.
    pub fn linspace(start: f64, stop: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Self::new(vec![start]);
        }
        let step = (stop - start) / (n - 1) as f64;
        Self::new((0..n).map(|k| if k == n - 1 { stop } else { start + k as f64 * step }).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RandomUnitaryScenario {
    rho_ab0: MultipartiteState,
    probabilities: Vec<f64>,
    hamiltonians: Vec<CMatrix>,
    spectra: Vec<Spectrum>,
    grid: TimeGrid,
    env_label: String,
}

impl RandomUnitaryScenario {
    /// `ensemble` holds `(p_j, H_j)` with `H_j` acting on the second subsystem.
    pub fn new(rho_ab0: MultipartiteState, ensemble: Vec<(f64, CMatrix)>, grid: TimeGrid) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if rho_ab0.layout().len() != 2 {
            return bad(format!(
                "initial state must have two subsystems, got {}",
                rho_ab0.layout().len()
            ));
        }
        if ensemble.is_empty() {
            return bad("ensemble is empty".into());
        }
        let db = rho_ab0.layout().dims()[1];
        let mut probabilities = Vec::with_capacity(ensemble.len());
        let mut hamiltonians = Vec::with_capacity(ensemble.len());
        let mut spectra = Vec::with_capacity(ensemble.len());
        for (j, (p, h)) in ensemble.into_iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return bad(format!("member {j}: probability {p} is not a non-negative number"));
            }
            if h.shape() != (db, db) {
                return bad(format!("member {j}: Hamiltonian is {}x{}, expected {db}x{db}", h.nrows(), h.ncols()));
            }
            if !linalg::all_finite(&h) {
                return bad(format!("member {j}: Hamiltonian has non-finite entries"));
            }
            let dev = linalg::hermitian_deviation(&h);
            if dev > HAMILTONIAN_TOL {
                return bad(format!("member {j}: Hamiltonian is not hermitian (deviation {dev:e})"));
            }
            let h = linalg::hermitian_part(&h);
            spectra.push(linalg::eig_hermitian(&h)?);
            probabilities.push(p);
            hamiltonians.push(h);
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
            return bad(format!("probabilities sum to {sum}"));
        }
        let env_label = ["E", "Env", "Environment"]
            .into_iter()
            .find(|l| !rho_ab0.layout().contains(l))
            .unwrap_or("E_env")
            .to_string();
        Ok(Self {
            rho_ab0,
            probabilities,
            hamiltonians,
            spectra,
            grid,
            env_label,
        })
    }

    /// `p = (1/2, 1/2)`, `H = ±omega |1><1|` on a Bell pair `|Phi+>`.
    pub fn dephasing(omega: f64, grid: TimeGrid) -> Result<Self> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let layout = SubsystemLayout::new([("A", 2), ("B", 2)])?;
        let bell = MultipartiteState::pure(&[c(h, 0.0), linalg::ZERO, linalg::ZERO, c(h, 0.0)], layout)?;
        let up = linalg::diag_real(&[0.0, omega]);
        let down = linalg::diag_real(&[0.0, -omega]);
        Self::new(bell, vec![(0.5, up), (0.5, down)], grid)
    }

    /// The bundled `dephasing-bell` scenario: `omega = 1` on `0..2 pi`, step `pi/100`.
    pub fn dephasing_bell() -> Self {
        let grid = TimeGrid::range(0.0, 2.0 * PI, PI / 100.0).expect("valid bundled grid");
        Self::dephasing(1.0, grid).expect("valid bundled scenario")
    }

    pub fn initial_state(&self) -> &MultipartiteState {
        &self.rho_ab0
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn hamiltonians(&self) -> &[CMatrix] {
        &self.hamiltonians
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn with_grid(&self, grid: TimeGrid) -> Self {
        Self {
            grid,
            ..self.clone()
        }
    }

    pub fn labels(&self) -> (&str, &str) {
        let parts = self.rho_ab0.layout().parts();
        (&parts[0].0, &parts[1].0)
    }

    pub fn env_label(&self) -> &str {
        &self.env_label
    }

    fn dims(&self) -> (usize, usize) {
        let d = self.rho_ab0.layout().dims();
        (d[0], d[1])
    }

    /// `U_j(t) = exp(-i H_j t)`.
    pub fn branch_unitary(&self, j: usize, t: f64) -> CMatrix {
        linalg::unitary_from_hamiltonian(&self.spectra[j], t)
    }

    /// `U_j(t2, t1) = exp(-i H_j (t2 - t1))`.
    pub fn branch_unitary_between(&self, j: usize, t1: f64, t2: f64) -> CMatrix {
        linalg::unitary_from_hamiltonian(&self.spectra[j], t2 - t1)
    }

    fn check_time(t: f64) -> Result<()> {
        if t.is_finite() && t >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidScenario(format!("time must be finite and non-negative, got {t}")))
        }
    }

    /// Branch state `(I ⊗ U_j(t)) rho_AB(0) (I ⊗ U_j(t))^dagger`.
    pub fn branch_state(&self, j: usize, t: f64) -> Result<MultipartiteState> {
        Self::check_time(t)?;
        let (da, _) = self.dims();
        let u = linalg::kron(&linalg::identity(da), &self.branch_unitary(j, t));
        self.rho_ab0.conjugate(&u)
    }

    /// `rho_AB(t) = sum_j p_j rho^{(j)}(t)`.
    pub fn evolve_system(&self, t: f64) -> Result<MultipartiteState> {
        Self::check_time(t)?;
        let d = self.rho_ab0.dim();
        let mut acc = CMatrix::zeros(d, d);
        for j in 0..self.probabilities.len() {
            acc += self.branch_state(j, t)?.matrix() * c(self.probabilities[j], 0.0);
        }
        Ok(MultipartiteState::new_unchecked(
            linalg::hermitian_part(&acc),
            self.rho_ab0.layout().clone(),
        ))
    }

    /// Joint initial state and unitary family on `(A, B, E)`.
    pub fn build_joint(&self) -> Result<JointModel<'_>> {
        let env = self.environment_state()?;
        Ok(JointModel {
            scenario: self,
            initial: self.rho_ab0.tensor(&env)?,
        })
    }

    /// `rho_E = sum_j p_j |j><j|`.
    pub fn environment_state(&self) -> Result<MultipartiteState> {
        let n = self.probabilities.len();
        let layout = SubsystemLayout::new([(self.env_label.clone(), n)])?;
        MultipartiteState::new(linalg::diag_real(&self.probabilities), layout)
    }

    /// `rho_ABE(t) = sum_j p_j rho^{(j)}(t) ⊗ |j><j|`.
    pub fn evolve_joint(&self, t: f64) -> Result<MultipartiteState> {
        Self::check_time(t)?;
        let n = self.probabilities.len();
        let d = self.rho_ab0.dim();
        let mut acc = CMatrix::zeros(d * n, d * n);
        for j in 0..n {
            let mut proj = CMatrix::zeros(n, n);
            proj[(j, j)] = c(self.probabilities[j], 0.0);
            acc += linalg::kron(self.branch_state(j, t)?.matrix(), &proj);
        }
        let layout = self
            .rho_ab0
            .layout()
            .concat(&SubsystemLayout::new([(self.env_label.clone(), n)])?)?;
        Ok(MultipartiteState::new_unchecked(linalg::hermitian_part(&acc), layout))
    }

    /// `I(A;E|B)` of the joint state at `t`, in bits.
    pub fn joint_cmi(&self, t: f64) -> Result<f64> {
        let joint = self.evolve_joint(t)?;
        let (a, b) = self.labels();
        conditional_mutual_information(&joint, &[a], &[b], &[self.env_label.as_str()])
    }

    /// Monotone of each branch state at `t`.
    pub fn branch_entanglements(&self, t: f64, measure: Measure) -> Result<Vec<f64>> {
        (0..self.probabilities.len())
            .map(|j| measure.evaluate(&self.branch_state(j, t)?))
            .collect()
    }

    /// `M_H(t) = sum_j p_j M(rho^{(j)}(t)) - M(rho(t))`.
    pub fn hidden_entanglement(&self, t: f64, measure: Measure) -> Result<f64> {
        let branches = self.branch_entanglements(t, measure)?;
        let average: f64 = branches.iter().zip(&self.probabilities).map(|(m, p)| m * p).sum();
        Ok(average - measure.evaluate(&self.evolve_system(t)?)?)
    }
}

/// `rho_SE(0)` together with `U_SE(t) = sum_j I_A ⊗ U_j(t) ⊗ |j><j|`.
#[derive(Debug, Clone)]
pub struct JointModel<'a> {
    scenario: &'a RandomUnitaryScenario,
    initial: MultipartiteState,
}

impl JointModel<'_> {
    pub fn initial(&self) -> &MultipartiteState {
        &self.initial
    }

    pub fn unitary(&self, t: f64) -> CMatrix {
        self.unitary_between(0.0, t)
    }

    /// `U_SE(t2, t1)`.
    pub fn unitary_between(&self, t1: f64, t2: f64) -> CMatrix {
        let sc = self.scenario;
        let (da, _) = sc.dims();
        let n = sc.probabilities.len();
        let id_a = linalg::identity(da);
        let mut acc = CMatrix::zeros(self.initial.dim(), self.initial.dim());
        for j in 0..n {
            let mut proj = CMatrix::zeros(n, n);
            proj[(j, j)] = linalg::ONE;
            acc += linalg::kron(&linalg::kron(&id_a, &sc.branch_unitary_between(j, t1, t2)), &proj);
        }
        acc
    }

    /// `U_SE(t) rho_SE(0) U_SE(t)^dagger`.
    pub fn evolve(&self, t: f64) -> Result<MultipartiteState> {
        self.initial.conjugate(&self.unitary(t))
    }
}

/// `||rho - sum_j (I ⊗ Pi_j) rho (I ⊗ Pi_j)||_1` with `Pi_j` the computational
/// projectors of `env_label`; zero when the correlations with it are classical.
pub fn classicality_check(rho_se: &MultipartiteState, env_label: &str) -> Result<f64> {
    let layout = rho_se.layout();
    let pos = layout
        .position(env_label)
        .ok_or_else(|| Error::Labeling(format!("unknown label {env_label}")))?;
    let dims = layout.dims();
    let n = rho_se.dim();
    let mut rd = vec![0; dims.len()];
    let mut cd = vec![0; dims.len()];
    let mut dephased = CMatrix::zeros(n, n);
    for r in 0..n {
        linalg::digits(r, &dims, &mut rd);
        for col in 0..n {
            linalg::digits(col, &dims, &mut cd);
            if rd[pos] == cd[pos] {
                dephased[(r, col)] = rho_se.matrix()[(r, col)];
            }
        }
    }
    linalg::one_norm_distance(rho_se.matrix(), &dephased)
}

/// Entanglement monotone across the `A | B` cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    Concurrence,
    Negativity,
}

impl Measure {
    pub fn evaluate(self, s: &MultipartiteState) -> Result<f64> {
        match self {
            Self::Concurrence => concurrence(s),
            Self::Negativity => {
                let first = s.layout().parts()[0].0.clone();
                negativity(s, &[first])
            }
        }
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concurrence" => Ok(Self::Concurrence),
            "negativity" => Ok(Self::Negativity),
            other => Err(Error::InvalidScenario(format!("unknown measure {other:?}"))),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Concurrence => "concurrence",
            Self::Negativity => "negativity",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeRow {
    pub t: f64,
    pub concurrence: Option<f64>,
    pub negativity: Option<f64>,
    pub cmi_bits: f64,
    /// Hidden entanglement under the first requested measure.
    pub hidden_entanglement: Option<f64>,
    /// Branch values of the first requested measure.
    pub branch_entanglements: Vec<f64>,
}

impl TimeRow {
    pub fn value(&self, measure: Measure) -> Option<f64> {
        match measure {
            Measure::Concurrence => self.concurrence,
            Measure::Negativity => self.negativity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub rows: Vec<TimeRow>,
    pub hidden_measure: Option<Measure>,
}

pub const CSV_HEADER: &str = "t,concurrence,negativity,cmi_bits,hidden_entanglement";

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// [`CSV_HEADER`] followed by one `%.12g` row per sample; absent values
    /// are empty fields.
    pub fn to_csv(&self) -> String {
        let cell = |x: Option<f64>| x.map(crate::json::fmt_g12).unwrap_or_default();
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                crate::json::fmt_g12(r.t),
                cell(r.concurrence),
                cell(r.negativity),
                crate::json::fmt_g12(r.cmi_bits),
                cell(r.hidden_entanglement)
            ));
        }
        out
    }
}

/// Evaluate every grid point (in parallel; rows come back in grid order).
pub fn run_scenario(sc: &RandomUnitaryScenario, measures: &[Measure]) -> Result<TimeSeries> {
    let hidden_measure = measures.first().copied();
    let rows = sc
        .grid
        .times()
        .par_iter()
        .map(|&t| -> Result<TimeRow> {
            let rho = sc.evolve_system(t)?;
            let concurrence = if measures.contains(&Measure::Concurrence) {
                Some(Measure::Concurrence.evaluate(&rho)?)
            } else {
                None
            };
            let negativity = if measures.contains(&Measure::Negativity) {
                Some(Measure::Negativity.evaluate(&rho)?)
            } else {
                None
            };
            let (hidden_entanglement, branch_entanglements) = match hidden_measure {
                Some(m) => {
                    let branches = sc.branch_entanglements(t, m)?;
                    let average: f64 = branches.iter().zip(&sc.probabilities).map(|(x, p)| x * p).sum();
                    let mixed = match m {
                        Measure::Concurrence => concurrence,
                        Measure::Negativity => negativity,
                    }
                    .expect("first measure is evaluated");
                    (Some(average - mixed), branches)
                }
                None => (None, Vec::new()),
            };
            Ok(TimeRow {
                t,
                concurrence,
                negativity,
                cmi_bits: sc.joint_cmi(t)?,
                hidden_entanglement,
                branch_entanglements,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TimeSeries { rows, hidden_measure })
}

/// A stretch of strict increase of the monotone.
#[derive(Debug, Clone, PartialEq)]
pub struct Revival {
    /// Start of the minimum the increase leaves from.
    pub death_t: f64,
    pub revival_start_t: f64,
    pub peak_t: f64,
    /// `(t, I(A;E|B))` at the samples of `[revival_start_t, peak_t)`.
    pub certificate: Vec<(f64, f64)>,
    /// Every certificate value exceeds the tolerance.
    pub certified: bool,
}

/// Maximal runs where `measure` rises by more than [`REVIVAL_THRESHOLD`]
/// between consecutive rows. The joint-state CMI at each sample of the
/// half-open run certifies non-Markovianity when it exceeds `tol`.
pub fn detect_revivals(ts: &TimeSeries, measure: Measure, tol: f64) -> Result<Vec<Revival>> {
    if ts.rows.len() < 3 {
        return Err(Error::InvalidScenario(format!(
            "revival detection needs at least 3 rows, got {}",
            ts.rows.len()
        )));
    }
    let values: Vec<f64> = ts
        .rows
        .iter()
        .map(|r| r.value(measure))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::InvalidScenario(format!("time series has no {measure} column")))?;
    let n = values.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i + 1 < n {
        if values[i + 1] - values[i] <= REVIVAL_THRESHOLD {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i + 1;
        while end + 1 < n && values[end + 1] - values[end] > REVIVAL_THRESHOLD {
            end += 1;
        }
        let mut death = start;
        while death > 0 && (values[death - 1] - values[start]).abs() <= REVIVAL_THRESHOLD {
            death -= 1;
        }
        let certificate: Vec<(f64, f64)> = ts.rows[start..end].iter().map(|r| (r.t, r.cmi_bits)).collect();
        out.push(Revival {
            death_t: ts.rows[death].t,
            revival_start_t: ts.rows[start].t,
            peak_t: ts.rows[end].t,
            certified: certificate.iter().all(|&(_, v)| v > tol),
            certificate,
        });
        i = end;
    }
    Ok(out)
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    h(p) + h(1.0 - p)
}
