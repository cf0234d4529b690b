//! JSON interchange for states, matrices, channels, decompositions and
//! scenarios.
//!
//! Complex arrays are stored as separate row-major `re` and `im` lists; a
//! missing `im` means a real matrix. Numbers are written with 12 significant
//! digits (C's `%.12g`) by [`to_string`].

use std::io;

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::channels::KrausChannel;
use crate::error::{Error, Result, StateInvariant};
use crate::linalg::{c, CMatrix};
use crate::markov::{BlockSpec, MarkovDecomposition, MarkovReport};
use crate::revival::{RandomUnitaryScenario, TimeGrid};
use crate::state::{MultipartiteState, SubsystemLayout};

/// Layout as `[["A", 2], ["B", 2]]`.
pub type LayoutJson = Vec<(String, usize)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateJson {
    pub layout: LayoutJson,
    pub re: Vec<f64>,
    #[serde(default)]
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelJson {
    pub in_layout: LayoutJson,
    pub out_layout: LayoutJson,
    pub kraus: Vec<MatrixJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpecJson {
    pub blocks: Vec<(usize, usize)>,
    pub isometry: MatrixJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentsJson {
    pub cores: Vec<StateJson>,
    pub environments: IndexMap<String, Vec<StateJson>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionJson {
    pub subsystems: IndexMap<String, BlockSpecJson>,
    pub weights: Vec<f64>,
    pub components: ComponentsJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleMemberJson {
    pub p: f64,
    #[serde(rename = "H")]
    pub h: MatrixJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeGridJson {
    Range { start: f64, stop: f64, step: f64 },
    Explicit { times: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioJson {
    pub rho_ab0: StateJson,
    pub ensemble: Vec<EnsembleMemberJson>,
    pub time_grid: TimeGridJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportJson {
    pub cmi_values: IndexMap<String, f64>,
    pub certified: bool,
    pub tolerance: f64,
    pub residual: f64,
}

/// C's `%.12g`: 12 significant digits, trailing zeros removed, scientific
/// notation below `1e-4` and from `1e12` on. Zero (of either sign) is `"0"`.
pub fn fmt_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (11 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

struct G12Formatter;

impl serde_json::ser::Formatter for G12Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_g12(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with `%.12g` numbers.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, G12Formatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits utf-8"))
}

pub fn from_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

fn layout_from(parts: &LayoutJson) -> Result<SubsystemLayout> {
    SubsystemLayout::new(parts.iter().cloned())
}

fn split_complex(m: &CMatrix) -> (Vec<f64>, Vec<f64>) {
    let (rows, cols) = m.shape();
    let mut re = Vec::with_capacity(rows * cols);
    let mut im = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for col in 0..cols {
            re.push(m[(r, col)].re);
            im.push(m[(r, col)].im);
        }
    }
    (re, im)
}

fn join_complex(rows: usize, cols: usize, re: &[f64], im: &[f64], what: &str) -> Result<CMatrix> {
    let n = rows * cols;
    if re.len() != n || !(im.is_empty() || im.len() == n) {
        return Err(Error::Shape(format!(
            "{what}: {rows}x{cols} needs {n} entries, got re {} and im {}",
            re.len(),
            im.len()
        )));
    }
    Ok(CMatrix::from_fn(rows, cols, |r, col| {
        let k = r * cols + col;
        c(re[k], im.get(k).copied().unwrap_or(0.0))
    }))
}

pub fn matrix_to_json(m: &CMatrix) -> MatrixJson {
    let (re, im) = split_complex(m);
    MatrixJson {
        rows: m.nrows(),
        cols: m.ncols(),
        re,
        im,
    }
}

pub fn matrix_from_json(m: &MatrixJson) -> Result<CMatrix> {
    join_complex(m.rows, m.cols, &m.re, &m.im, "matrix")
}

pub fn state_to_json(s: &MultipartiteState) -> StateJson {
    let (re, im) = split_complex(s.matrix());
    StateJson {
        layout: s.layout().parts().to_vec(),
        re,
        im,
    }
}

/// Rejects the state with the name of the first invariant it violates.
pub fn state_from_json(s: &StateJson) -> Result<MultipartiteState> {
    let layout = layout_from(&s.layout)?;
    let d = layout.total_dim();
    if s.re.len() != d * d || !(s.im.is_empty() || s.im.len() == d * d) {
        return Err(Error::invalid_state(
            StateInvariant::Dimension,
            format!(
                "layout has dimension {d} ({} entries), got re {} and im {}",
                d * d,
                s.re.len(),
                s.im.len()
            ),
        ));
    }
    let m = join_complex(d, d, &s.re, &s.im, "state")?;
    MultipartiteState::new(m, layout)
}

pub fn channel_to_json(ch: &KrausChannel) -> ChannelJson {
    ChannelJson {
        in_layout: ch.in_layout().parts().to_vec(),
        out_layout: ch.out_layout().parts().to_vec(),
        kraus: ch.kraus().iter().map(matrix_to_json).collect(),
    }
}

pub fn channel_from_json(ch: &ChannelJson) -> Result<KrausChannel> {
    let kraus = ch.kraus.iter().map(matrix_from_json).collect::<Result<Vec<_>>>()?;
    KrausChannel::new(kraus, layout_from(&ch.in_layout)?, layout_from(&ch.out_layout)?)
}

pub fn decomposition_to_json(d: &MarkovDecomposition) -> DecompositionJson {
    let subsystems = d
        .subsystems()
        .iter()
        .map(|(label, spec)| {
            (
                label.clone(),
                BlockSpecJson {
                    blocks: spec.blocks().to_vec(),
                    isometry: matrix_to_json(spec.isometry()),
                },
            )
        })
        .collect();
    let environments = d
        .subsystems()
        .iter()
        .zip(d.environments())
        .map(|((label, _), envs)| (label.clone(), envs.iter().map(state_to_json).collect()))
        .collect();
    DecompositionJson {
        subsystems,
        weights: d.weights().to_vec(),
        components: ComponentsJson {
            cores: d.cores().iter().map(state_to_json).collect(),
            environments,
        },
    }
}

pub fn decomposition_from_json(d: &DecompositionJson) -> Result<MarkovDecomposition> {
    let mut subsystems = Vec::with_capacity(d.subsystems.len());
    let mut environments = Vec::with_capacity(d.subsystems.len());
    for (label, spec) in &d.subsystems {
        let iso = matrix_from_json(&spec.isometry)?;
        subsystems.push((label.clone(), BlockSpec::new(spec.blocks.clone(), iso)?));
        let envs = d.components.environments.get(label).ok_or_else(|| {
            Error::InvalidDecomposition(format!("no environment factors for subsystem {label}"))
        })?;
        environments.push(envs.iter().map(state_from_json).collect::<Result<Vec<_>>>()?);
    }
    if let Some(extra) = d.components.environments.keys().find(|k| !d.subsystems.contains_key(*k)) {
        return Err(Error::InvalidDecomposition(format!(
            "environment factors for unknown subsystem {extra}"
        )));
    }
    let cores = d.components.cores.iter().map(state_from_json).collect::<Result<Vec<_>>>()?;
    MarkovDecomposition::new(subsystems, d.weights.clone(), cores, environments)
}

pub fn scenario_from_json(s: &ScenarioJson) -> Result<RandomUnitaryScenario> {
    let rho = state_from_json(&s.rho_ab0)?;
    let ensemble = s
        .ensemble
        .iter()
        .map(|m| Ok((m.p, matrix_from_json(&m.h)?)))
        .collect::<Result<Vec<_>>>()?;
    let grid = match &s.time_grid {
        TimeGridJson::Range { start, stop, step } => TimeGrid::range(*start, *stop, *step)?,
        TimeGridJson::Explicit { times } => TimeGrid::new(times.clone())?,
    };
    RandomUnitaryScenario::new(rho, ensemble, grid)
}

pub fn scenario_to_json(s: &RandomUnitaryScenario) -> ScenarioJson {
    ScenarioJson {
        rho_ab0: state_to_json(s.initial_state()),
        ensemble: s
            .probabilities()
            .iter()
            .zip(s.hamiltonians())
            .map(|(&p, h)| EnsembleMemberJson { p, h: matrix_to_json(h) })
            .collect(),
        time_grid: TimeGridJson::Explicit {
            times: s.grid().times().to_vec(),
        },
    }
}

pub fn report_to_json(r: &MarkovReport) -> ReportJson {
    ReportJson {
        cmi_values: r.cmi_values.clone(),
        certified: r.certified,
        tolerance: r.tolerance,
        residual: r.residual,
    }
}

pub fn parse_state(text: &str) -> Result<MultipartiteState> {
    state_from_json(&from_str(text)?)
}

pub fn parse_channel(text: &str) -> Result<KrausChannel> {
    channel_from_json(&from_str(text)?)
}

pub fn parse_decomposition(text: &str) -> Result<MarkovDecomposition> {
    decomposition_from_json(&from_str(text)?)
}

pub fn parse_scenario(text: &str) -> Result<RandomUnitaryScenario> {
    scenario_from_json(&from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn g12_matches_printf() {
        let cases = [
            (1.0, "1"),
            (-2.5, "-2.5"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333333"),
            (2.0 * std::f64::consts::PI, "6.28318530718"),
            (1e-5, "1e-05"),
            (1.5e-4, "0.00015"),
            (123456789012345.0, "1.23456789012e+14"),
            (100000000000.0, "100000000000"),
            (999999999999.5, "1e+12"),
            (-0.0, "0"),
            (6.123233995736766e-17, "6.12323399574e-17"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g12(x), want, "{x:e}");
        }
    }

    #[test]
    fn compact_output_uses_g12() {
        let m = matrix_to_json(&crate::linalg::identity(2));
        assert_eq!(
            to_string(&m).unwrap(),
            r#"{"rows":2,"cols":2,"re":[1,0,0,1],"im":[0,0,0,0]}"#
        );
    }

    #[test]
    fn state_round_trip_and_invariant_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = SubsystemLayout::new([("A", 2), ("B", 3)]).unwrap();
        let s = random::random_full_rank_state(&mut rng, layout);
        let text = serde_json::to_string(&state_to_json(&s)).unwrap();
        let back = parse_state(&text).unwrap();
        assert_eq!(back, s);

        let err = parse_state(r#"{"layout":[["A",2]],"re":[1,0,0,1]}"#).unwrap_err();
        assert!(err.to_string().contains("unit trace"), "{err}");
        let err = parse_state(r#"{"layout":[["A",2]],"re":[1,0,0]}"#).unwrap_err();
        assert!(err.to_string().contains("dimension"), "{err}");
        let err = parse_state(r#"{"layout":[["A",2]],"re":[0.5,1,0,0.5]}"#).unwrap_err();
        assert!(err.to_string().contains("hermitian"), "{err}");
        let err = parse_state(r#"{"layout":[["A",2]],"re":[1.5,0,0,-0.5]}"#).unwrap_err();
        assert!(err.to_string().contains("positive"), "{err}");
        assert!(matches!(parse_state("{\"layout\":"), Err(Error::Json(_))));
    }

    #[test]
    fn channel_round_trip() {
        let layout = SubsystemLayout::new([("B", 2)]).unwrap();
        let ch = crate::channels::completely_depolarizing(layout).unwrap();
        let text = to_string(&channel_to_json(&ch)).unwrap();
        let back = parse_channel(&text).unwrap();
        assert_eq!(back.kraus().len(), ch.kraus().len());
        let x = crate::linalg::diag_real(&[1.0, 0.0]);
        assert!(crate::linalg::max_abs(&(back.apply_matrix(&x) - ch.apply_matrix(&x))) < 1e-12);
    }

    #[test]
    fn decomposition_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let systems = [random::SplitSystem::new("B", &[(1, 2), (2, 1)], "E", 2)];
        let d = random::random_markov_decomposition(&mut rng, &[("A", 2)], &systems, true).unwrap();
        let text = serde_json::to_string(&decomposition_to_json(&d)).unwrap();
        assert_eq!(parse_decomposition(&text).unwrap(), d);
    }

    #[test]
    fn scenario_parsing() {
        let text = r#"{"rho_ab0":{"layout":[["A",2],["B",2]],"re":[0.5,0,0,0.5,0,0,0,0,0,0,0,0,0.5,0,0,0.5]},
            "ensemble":[{"p":0.5,"H":{"rows":2,"cols":2,"re":[0,0,0,1]}},{"p":0.5,"H":{"rows":2,"cols":2,"re":[0,0,0,-1]}}],
            "time_grid":{"start":0,"stop":1,"step":0.25}}"#;
        let sc = parse_scenario(text).unwrap();
        assert_eq!(sc.grid().len(), 5);
        let bad = text.replace("\"p\":0.5,\"H\":{\"rows\":2,\"cols\":2,\"re\":[0,0,0,-1]", "\"p\":0.6,\"H\":{\"rows\":2,\"cols\":2,\"re\":[0,0,0,-1]");
        assert!(matches!(parse_scenario(&bad), Err(Error::InvalidScenario(_))));
        let again = to_string(&scenario_to_json(&sc)).unwrap();
        assert_eq!(parse_scenario(&again).unwrap().grid().len(), 5);
    }
}
