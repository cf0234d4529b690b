//! `markovia`: construct, check and decompose Markov states, simulate
//! classical-environment revival scenarios and verify localized-dynamics
//! reductions.
//!
//! Exit codes: 0 success, 1 I/O or unparsable JSON, 2 invalid input,
//! 3 check failed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use markovia::channels::{self, reduce_localized_dynamics, KrausChannel};
use markovia::json::{self, ChannelJson, DecompositionJson, StateJson};
use markovia::markov::{
    self, cmi_report, construct_markov_state, construct_sm_state, find_markov_decomposition, verify_decomposition,
    wm_certificate, FindError, SmPattern,
};
use markovia::revival::{detect_revivals, run_scenario, Measure, RandomUnitaryScenario, REVIVAL_THRESHOLD};
use markovia::{Error, MarkovReport, MultipartiteState, Partition};
use serde::Serialize;

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "markovia", version, about = "Quantum Markov state toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Certification tolerance (bits for CMI, trace distance for residuals).
    #[arg(long, global = true, default_value_t = markov::DEFAULT_TOLERANCE)]
    tol: f64,

    /// Output format of the primary artifact.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Write the primary artifact here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the state described by a decomposition file.
    Construct {
        decomposition: PathBuf,
        /// Expected layout: tripartite, 2N or 2N-1.
        #[arg(long)]
        pattern: Option<String>,
    },
    /// Conditional mutual information certificates for a state.
    Check {
        state: PathBuf,
        /// "A;B;E" (comma-separated labels inside a part). Repeatable.
        #[arg(long)]
        partition: Vec<String>,
        /// Weak-Markov pairing "S1:E1,S2:E2,S3" (a system without ":" has no environment).
        #[arg(long)]
        pairing: Option<String>,
    },
    /// Find and verify a block decomposition of a tripartite state.
    Decompose { state: PathBuf },
    /// Evolve a random-unitary scenario and write its time series.
    Simulate {
        #[arg(required_unless_present = "bundled", conflicts_with = "bundled")]
        scenario: Option<PathBuf>,
        /// Use a built-in scenario.
        #[arg(long, value_enum)]
        bundled: Option<Bundled>,
        /// Monotones to record; the first also drives hidden entanglement and revival detection.
        #[arg(long, value_delimiter = ',')]
        measure: Vec<String>,
    },
    /// Reduce localized dynamics on a Markov state to system channels.
    Reduce {
        /// System state `rho_S`.
        state: PathBuf,
        /// Recovery maps `S_i -> S_i E_i`.
        lambdas: PathBuf,
        /// Joint dynamics `S_i E_i -> S_i E_i`.
        dynamics: PathBuf,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Bundled {
    DephasingBell,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => EXIT_IO,
            Error::Json(j) if !j.is_data() => EXIT_IO,
            _ => EXIT_INVALID,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            diagnostic(&ErrorLine {
                error: &f.message,
                exit_code: f.code,
            });
            ExitCode::from(f.code)
        }
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    exit_code: u8,
}

fn diagnostic<T: Serialize>(line: &T) {
    if let Ok(text) = json::to_string(line) {
        eprintln!("{text}");
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    let common = cli.common;
    if !(common.tol > 0.0 && common.tol.is_finite()) {
        return Err(Failure::invalid(format!("--tol must be positive, got {}", common.tol)));
    }
    configure_threads()?;
    match cli.command {
        Command::Construct { decomposition, pattern } => cmd_construct(&common, &decomposition, pattern.as_deref()),
        Command::Check {
            state,
            partition,
            pairing,
        } => cmd_check(&common, &state, &partition, pairing.as_deref()),
        Command::Decompose { state } => cmd_decompose(&common, &state),
        Command::Simulate {
            scenario,
            bundled,
            measure,
        } => cmd_simulate(&common, scenario.as_deref(), bundled, &measure),
        Command::Reduce {
            state,
            lambdas,
            dynamics,
        } => cmd_reduce(&common, &state, &lambdas, &dynamics),
    }
}

/// `MARKOVIA_THREADS` caps the worker pool; unset or 0 means automatic.
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("MARKOVIA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::invalid(format!("MARKOVIA_THREADS must be a non-negative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::invalid(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })
}

fn read_state(path: &Path) -> CliResult<MultipartiteState> {
    let parsed: StateJson = json::from_str(&read(path)?)?;
    Ok(json::state_from_json(&parsed)?)
}

fn emit(common: &Common, text: &str) -> CliResult<()> {
    match &common.out {
        Some(path) => fs::write(path, text).map_err(|e| Failure {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(common: &Common, value: &T) -> CliResult<()> {
    let mut text = json::to_string(value)?;
    text.push('\n');
    emit(common, &text)
}

fn json_only(common: &Common, command: &str) -> CliResult<()> {
    if common.format == Format::Csv {
        return Err(Failure::invalid(format!("{command} only writes json")));
    }
    Ok(())
}

fn cmd_construct(common: &Common, path: &Path, pattern: Option<&str>) -> CliResult<u8> {
    json_only(common, "construct")?;
    let parsed: DecompositionJson = json::from_str(&read(path)?)?;
    let decomp = json::decomposition_from_json(&parsed)?;
    let state = match pattern {
        None => construct_markov_state(&decomp)?,
        Some("tripartite") => {
            if decomp.subsystems().len() != 1 || decomp.free_layout().len() != 1 {
                return Err(Failure::invalid(
                    "tripartite pattern needs one free label and one split subsystem",
                ));
            }
            construct_markov_state(&decomp)?
        }
        Some(p) => construct_sm_state(p.parse::<SmPattern>()?, &decomp)?,
    };
    emit_json(common, &json::state_to_json(&state))?;
    Ok(0)
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    partitions: &'a IndexMap<String, f64>,
    cmi: f64,
    certified: bool,
    tolerance: f64,
}

fn parse_pairing(raw: &str) -> Vec<(String, Option<String>)> {
    raw.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| match p.split_once(':') {
            Some((s, e)) => (s.trim().to_string(), Some(e.trim().to_string())),
            None => (p.to_string(), None),
        })
        .collect()
}

fn cmd_check(common: &Common, path: &Path, partitions: &[String], pairing: Option<&str>) -> CliResult<u8> {
    let state = read_state(path)?;
    let report = match pairing {
        Some(raw) => {
            if !partitions.is_empty() {
                return Err(Failure::invalid("--pairing and --partition are exclusive"));
            }
            wm_certificate(&state, &parse_pairing(raw), common.tol)?
        }
        None => {
            let parts = if partitions.is_empty() {
                let labels: Vec<&str> = state.layout().labels().collect();
                if labels.len() != 3 {
                    return Err(Failure::invalid(format!(
                        "state has {} subsystems; pass --partition or --pairing",
                        labels.len()
                    )));
                }
                vec![Partition::new([labels[0]], [labels[1]], [labels[2]])]
            } else {
                partitions
                    .iter()
                    .map(|p| p.parse::<Partition>())
                    .collect::<Result<Vec<_>, _>>()?
            };
            cmi_report(&state, &parts, common.tol)?
        }
    };
    match common.format {
        Format::Json => emit_json(
            common,
            &CheckOutput {
                partitions: &report.cmi_values,
                cmi: report.residual,
                certified: report.certified,
                tolerance: report.tolerance,
            },
        )?,
        Format::Csv => {
            let mut text = String::from("partition,cmi_bits\n");
            for (k, v) in &report.cmi_values {
                text.push_str(&format!("{k},{}\n", json::fmt_g12(*v)));
            }
            emit(common, &text)?;
        }
    }
    Ok(if report.certified { 0 } else { EXIT_CHECK_FAILED })
}

#[derive(Serialize)]
struct DecomposeSuccess {
    status: &'static str,
    blocks: Vec<(usize, usize)>,
    weights: Vec<f64>,
    residual: f64,
    tolerance: f64,
    decomposition: DecompositionJson,
}

#[derive(Serialize)]
struct DecomposeFailure<'a> {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<&'a str>,
    partitions: &'a IndexMap<String, f64>,
    cmi: f64,
    certified: bool,
    tolerance: f64,
}

fn cmd_decompose(common: &Common, path: &Path) -> CliResult<u8> {
    json_only(common, "decompose")?;
    let state = read_state(path)?;
    match find_markov_decomposition(&state, common.tol) {
        Ok(decomp) => {
            let residual = verify_decomposition(&state, &decomp)?;
            let (_, spec) = &decomp.subsystems()[0];
            emit_json(
                common,
                &DecomposeSuccess {
                    status: "markov",
                    blocks: spec.blocks().to_vec(),
                    weights: decomp.weights().to_vec(),
                    residual,
                    tolerance: common.tol,
                    decomposition: json::decomposition_to_json(&decomp),
                },
            )?;
            Ok(0)
        }
        Err(FindError::Invalid(e)) => Err(e.into()),
        Err(FindError::NotMarkov(report)) => {
            emit_failure(common, "not_markov", None, &report)?;
            Ok(EXIT_CHECK_FAILED)
        }
        Err(FindError::Inconclusive { report, reason }) => {
            emit_failure(common, "inconclusive", Some(&reason), &report)?;
            Ok(EXIT_CHECK_FAILED)
        }
    }
}

fn emit_failure(common: &Common, status: &'static str, reason: Option<&str>, report: &MarkovReport) -> CliResult<()> {
    emit_json(
        common,
        &DecomposeFailure {
            status,
            reason,
            partitions: &report.cmi_values,
            cmi: report.residual,
            certified: report.certified,
            tolerance: report.tolerance,
        },
    )
}

#[derive(Serialize)]
struct RowJson {
    t: f64,
    concurrence: Option<f64>,
    negativity: Option<f64>,
    cmi_bits: f64,
    hidden_entanglement: Option<f64>,
}

#[derive(Serialize)]
struct RevivalLine<'a> {
    event: &'static str,
    measure: String,
    death_t: f64,
    revival_start_t: f64,
    peak_t: f64,
    certified: bool,
    certificate: &'a [(f64, f64)],
}

fn cmd_simulate(common: &Common, path: Option<&Path>, bundled: Option<Bundled>, measures: &[String]) -> CliResult<u8> {
    let scenario = match (path, bundled) {
        (_, Some(Bundled::DephasingBell)) => RandomUnitaryScenario::dephasing_bell(),
        (Some(p), None) => json::parse_scenario(&read(p)?)?,
        (None, None) => return Err(Failure::invalid("a scenario file or --bundled is required")),
    };
    let measures: Vec<Measure> = if measures.is_empty() {
        if scenario.initial_state().layout().dims() == [2, 2] {
            vec![Measure::Concurrence, Measure::Negativity]
        } else {
            vec![Measure::Negativity]
        }
    } else {
        measures.iter().map(|m| m.parse()).collect::<Result<Vec<_>, _>>()?
    };
    let series = run_scenario(&scenario, &measures)?;
    match common.format {
        Format::Csv => emit(common, &series.to_csv())?,
        Format::Json => {
            let rows: Vec<RowJson> = series
                .rows
                .iter()
                .map(|r| RowJson {
                    t: r.t,
                    concurrence: r.concurrence,
                    negativity: r.negativity,
                    cmi_bits: r.cmi_bits,
                    hidden_entanglement: r.hidden_entanglement,
                })
                .collect();
            emit_json(common, &rows)?;
        }
    }
    if series.len() >= 3 {
        let m = measures[0];
        for r in detect_revivals(&series, m, common.tol.max(REVIVAL_THRESHOLD))? {
            diagnostic(&RevivalLine {
                event: "revival",
                measure: m.to_string(),
                death_t: r.death_t,
                revival_start_t: r.revival_start_t,
                peak_t: r.peak_t,
                certified: r.certified,
                certificate: &r.certificate,
            });
        }
    }
    Ok(0)
}

/// A channel file holds one channel, a list of channels, or an object keyed
/// by system label. Each channel is keyed by the first label of its input.
fn read_channels(path: &Path) -> CliResult<BTreeMap<String, KrausChannel>> {
    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum ChannelFile {
        One(ChannelJson),
        Many(Vec<ChannelJson>),
        Keyed(BTreeMap<String, ChannelJson>),
    }
    let parsed: ChannelFile = json::from_str(&read(path)?)?;
    let list: Vec<(Option<String>, ChannelJson)> = match parsed {
        ChannelFile::One(c) => vec![(None, c)],
        ChannelFile::Many(cs) => cs.into_iter().map(|c| (None, c)).collect(),
        ChannelFile::Keyed(m) => m.into_iter().map(|(k, c)| (Some(k), c)).collect(),
    };
    let mut out = BTreeMap::new();
    for (key, c) in list {
        let ch = json::channel_from_json(&c)?;
        let first = ch
            .in_layout()
            .labels()
            .next()
            .ok_or_else(|| Failure::invalid("channel with empty input layout"))?
            .to_string();
        let label = key.unwrap_or(first);
        if out.insert(label.clone(), ch).is_some() {
            return Err(Failure::invalid(format!("{}: two channels for {label}", path.display())));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ReduceOutput {
    residual: f64,
    tolerance: f64,
    certified: bool,
    channels: BTreeMap<String, ChannelJson>,
}

fn cmd_reduce(common: &Common, state: &Path, lambdas: &Path, dynamics: &Path) -> CliResult<u8> {
    json_only(common, "reduce")?;
    let rho_s = read_state(state)?;
    let lambdas = read_channels(lambdas)?;
    let dynamics = read_channels(dynamics)?;
    for (label, f) in &dynamics {
        let lambda = lambdas
            .get(label)
            .ok_or_else(|| Failure::invalid(format!("dynamics for {label} without a recovery map")))?;
        if f.in_layout() != lambda.out_layout() {
            return Err(Failure::invalid(format!(
                "dynamics for {label} act on {:?}, recovery map outputs {:?}",
                f.in_layout().parts(),
                lambda.out_layout().parts()
            )));
        }
    }
    let reduced = reduce_localized_dynamics(&lambdas, &dynamics)?;

    let joint = channels::apply_each(&channels::apply_each(&rho_s, &lambdas)?, &dynamics)?;
    let envs: Vec<String> = joint
        .layout()
        .labels()
        .filter(|l| !rho_s.layout().contains(l))
        .map(String::from)
        .collect();
    let traced = markovia::state::trace_out(&joint, &envs)?;
    let order: Vec<&str> = rho_s.layout().labels().collect();
    let traced = traced.reorder(&order)?;
    let predicted = channels::apply_each(&rho_s, &reduced)?;
    let residual = markovia::linalg::one_norm_distance(traced.matrix(), predicted.matrix())?;
    let certified = residual <= common.tol;
    emit_json(
        common,
        &ReduceOutput {
            residual,
            tolerance: common.tol,
            certified,
            channels: reduced.iter().map(|(k, c)| (k.clone(), json::channel_to_json(c))).collect(),
        },
    )?;
    Ok(if certified { 0 } else { EXIT_CHECK_FAILED })
}
