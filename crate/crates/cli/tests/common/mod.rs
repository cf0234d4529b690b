//! Fixtures and golden-file cases shared by the CLI tests and the acceptance
//! suite. Run with `MARKOVIA_BLESS=1` to regenerate fixtures and goldens.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use markovia::channels::{ad_unitary, KrausChannel};
use markovia::json;
use markovia::linalg::{self, c};
use markovia::markov::{construct_markov_state, recovery_channels, system_marginal};
use markovia::random::{self, SplitSystem};
use markovia::{MultipartiteState, SubsystemLayout};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn blessing() -> bool {
    std::env::var_os("MARKOVIA_BLESS").is_some_and(|v| v == "1")
}

/// Run the binary inside the fixtures directory.
pub fn markovia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_markovia"))
        .args(args)
        .current_dir(fixtures_dir())
        .env_remove("MARKOVIA_THREADS")
        .output()
        .expect("binary runs")
}

fn layout(parts: &[(&str, usize)]) -> SubsystemLayout {
    SubsystemLayout::new(parts.iter().map(|&(l, d)| (l, d))).unwrap()
}

fn full(value: &impl serde::Serialize) -> String {
    serde_json::to_string(value).unwrap() + "\n"
}

/// Fixture files, deterministic in their seeds.
pub fn fixture_sources() -> BTreeMap<&'static str, String> {
    let mut out = BTreeMap::new();
    let h = std::f64::consts::FRAC_1_SQRT_2;

    let mut v = vec![linalg::ZERO; 8];
    v[0] = c(h, 0.0);
    v[7] = c(h, 0.0);
    let ghz = MultipartiteState::pure(&v, layout(&[("A", 2), ("B", 2), ("E", 2)])).unwrap();
    out.insert("ghz.json", full(&json::state_to_json(&ghz)));

    let plus = MultipartiteState::pure(&[c(h, 0.0), c(h, 0.0)], layout(&[("E", 2)])).unwrap();
    let product = MultipartiteState::basis(0, layout(&[("A", 2)]))
        .unwrap()
        .tensor(&MultipartiteState::maximally_mixed(layout(&[("B", 2)])))
        .unwrap()
        .tensor(&plus)
        .unwrap();
    out.insert("product.json", full(&json::state_to_json(&product)));

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let blocks = [(1, 2), (2, 1)];
    let decomp = random::random_markov_decomposition(
        &mut rng,
        &[("A", 2)],
        &[SplitSystem::new("B", &blocks, "E", 2)],
        true,
    )
    .unwrap();
    let markov = construct_markov_state(&decomp).unwrap();
    out.insert("markov_decomposition.json", full(&json::decomposition_to_json(&decomp)));
    out.insert("markov.json", full(&json::state_to_json(&markov)));

    let rho_s = system_marginal(&markov, &decomp).unwrap();
    out.insert("reduce_state.json", full(&json::state_to_json(&rho_s)));
    let lambdas: BTreeMap<String, _> = recovery_channels(&decomp)
        .unwrap()
        .into_iter()
        .map(|(k, ch)| (k, json::channel_to_json(&ch)))
        .collect();
    out.insert("reduce_lambdas.json", full(&lambdas));
    let u = random::haar_unitary(&mut rng, 8);
    let f = ad_unitary(&u, layout(&[("B", 4), ("E", 2)])).unwrap();
    out.insert("reduce_dynamics.json", full(&vec![json::channel_to_json(&f)]));
    let wrong = ad_unitary(&random::haar_unitary(&mut rng, 6), layout(&[("B", 3), ("E", 2)])).unwrap();
    out.insert("reduce_dynamics_mismatched.json", full(&json::channel_to_json(&wrong)));

    let qubit = layout(&[("B", 2)]);
    let bell = MultipartiteState::pure(&[c(h, 0.0), linalg::ZERO, linalg::ZERO, c(h, 0.0)], layout(&[("A", 2), ("B", 2)]))
        .unwrap();
    out.insert("bell.json", full(&json::state_to_json(&bell)));
    out.insert("identity_channel.json", full(&json::channel_to_json(&KrausChannel::identity(qubit))));

    let sm_blocks_1 = [(2, 1)];
    let sm_blocks_2 = [(1, 1), (1, 2)];
    let sm = random::random_markov_decomposition_with_core_rank(
        &mut rng,
        &[],
        &[
            SplitSystem::new("S1", &sm_blocks_1, "E1", 2),
            SplitSystem::new("S2", &sm_blocks_2, "E2", 2),
        ],
        true,
        Some(1),
    )
    .unwrap();
    out.insert("sm_decomposition.json", full(&json::decomposition_to_json(&sm)));
    out.insert("sm.json", full(&json::state_to_json(&construct_markov_state(&sm).unwrap())));

    let scenario = r#"{"rho_ab0":{"layout":[["A",2],["B",2]],"re":[0.5,0,0,0.5,0,0,0,0,0,0,0,0,0.5,0,0,0.5]},"ensemble":[{"p":0.5,"H":{"rows":2,"cols":2,"re":[0,0,0,1]}},{"p":0.5,"H":{"rows":2,"cols":2,"re":[0,0,0,-1]}}],"time_grid":{"start":0,"stop":3.14159265358979,"step":0.392699081698724}}"#;
    out.insert("scenario.json", scenario.to_string() + "\n");
    out.insert(
        "scenario_empty_ensemble.json",
        r#"{"rho_ab0":{"layout":[["A",2],["B",2]],"re":[0.5,0,0,0.5,0,0,0,0,0,0,0,0,0.5,0,0,0.5]},"ensemble":[],"time_grid":{"start":0,"stop":1,"step":0.1}}"#.to_string() + "\n",
    );
    out.insert(
        "scenario_zero_step.json",
        scenario.replace("\"step\":0.392699081698724", "\"step\":0") + "\n",
    );
    out.insert("malformed.json", "{\"layout\": [[\"A\", 2]], \"re\": [1, 0,\n".to_string());
    out.insert(
        "not_unit_trace.json",
        "{\"layout\":[[\"A\",2],[\"B\",2],[\"E\",1]],\"re\":[1,0,0,0,0,1,0,0,0,0,0,0,0,0,0,0]}\n".to_string(),
    );
    out
}

/// One golden-file check: arguments, expected exit code and the files the
/// captured stdout (and optionally stderr) must equal byte for byte.
pub struct Case {
    pub name: &'static str,
    pub args: &'static [&'static str],
    pub code: i32,
    pub stdout: Option<&'static str>,
    pub stderr: Option<&'static str>,
}

pub fn cases() -> Vec<Case> {
    let case = |name, args, code, stdout, stderr| Case {
        name,
        args,
        code,
        stdout,
        stderr,
    };
    vec![
        case("construct markov", &["construct", "markov_decomposition.json"], 0, Some("construct_markov.json"), None),
        case(
            "construct tripartite",
            &["construct", "markov_decomposition.json", "--pattern", "tripartite"],
            0,
            Some("construct_markov.json"),
            None,
        ),
        case("construct 2N", &["construct", "sm_decomposition.json", "--pattern", "2N"], 0, Some("construct_sm.json"), None),
        case("construct wrong pattern", &["construct", "sm_decomposition.json", "--pattern", "2N-1"], 2, None, None),
        case("check ghz", &["check", "ghz.json", "--partition", "A;B;E"], 3, Some("check_ghz.json"), None),
        case("check product", &["check", "product.json"], 0, Some("check_product.json"), None),
        case(
            "check markov csv",
            &["check", "markov.json", "--partition", "A;B;E", "--partition", "E;B;A", "--format", "csv"],
            0,
            Some("check_markov.csv"),
            None,
        ),
        case("check sm pairing", &["check", "sm.json", "--pairing", "S1:E1,S2:E2"], 0, Some("check_sm_pairing.json"), None),
        case("check malformed", &["check", "malformed.json"], 1, None, None),
        case("check missing file", &["check", "does_not_exist.json"], 1, None, None),
        case("check invalid state", &["check", "not_unit_trace.json"], 2, None, None),
        case("check bad tolerance", &["check", "ghz.json", "--tol", "0"], 2, None, None),
        case("decompose markov", &["decompose", "markov.json"], 0, Some("decompose_markov.json"), None),
        case("decompose ghz", &["decompose", "ghz.json"], 3, Some("decompose_ghz.json"), None),
        case("decompose product", &["decompose", "product.json"], 0, Some("decompose_product.json"), None),
        case("decompose bipartite", &["decompose", "bell.json"], 2, None, None),
        case(
            "simulate bundled",
            &["simulate", "--bundled", "dephasing-bell", "--format", "csv"],
            0,
            Some("simulate_bundled.csv"),
            Some("simulate_bundled.stderr"),
        ),
        case("simulate file", &["simulate", "scenario.json", "--format", "csv"], 0, Some("simulate_scenario.csv"), None),
        case(
            "simulate file json",
            &["simulate", "scenario.json", "--measure", "negativity"],
            0,
            Some("simulate_scenario.json"),
            Some("simulate_scenario.stderr"),
        ),
        case("simulate empty ensemble", &["simulate", "scenario_empty_ensemble.json"], 2, None, None),
        case("simulate zero step", &["simulate", "scenario_zero_step.json"], 2, None, None),
        case(
            "reduce markov",
            &["reduce", "reduce_state.json", "reduce_lambdas.json", "reduce_dynamics.json"],
            0,
            Some("reduce_markov.json"),
            None,
        ),
        case(
            "reduce identity",
            &["reduce", "bell.json", "identity_channel.json", "identity_channel.json"],
            0,
            Some("reduce_identity.json"),
            None,
        ),
        case(
            "reduce mismatched",
            &["reduce", "reduce_state.json", "reduce_lambdas.json", "reduce_dynamics_mismatched.json"],
            2,
            None,
            None,
        ),
        case("unknown flag", &["check", "ghz.json", "--bogus"], 2, None, None),
    ]
}

/// Write the fixture files (bless mode only).
pub fn bless_fixtures() {
    let dir = fixtures_dir();
    fs::create_dir_all(&dir).unwrap();
    for (name, text) in fixture_sources() {
        fs::write(dir.join(name), text).unwrap();
    }
}

/// Run one case; in bless mode record its outputs instead of comparing.
pub fn run_case(case: &Case) -> Result<(), String> {
    let out = markovia(case.args);
    let code = out.status.code().unwrap_or(-1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    if code != case.code {
        return Err(format!(
            "{}: exit code {code}, expected {} (stderr: {})",
            case.name,
            case.code,
            stderr.trim()
        ));
    }
    if case.code != 0 && case.code != 3 {
        let last = stderr.lines().last().unwrap_or_default();
        if case.stderr.is_none() && !last.is_empty() && !last.starts_with('{') && case.name != "unknown flag" {
            return Err(format!("{}: diagnostic is not a JSON line: {last}", case.name));
        }
    }
    let checks = [(case.stdout, &out.stdout), (case.stderr, &out.stderr)];
    for (file, actual) in checks {
        let Some(file) = file else { continue };
        let path = golden_dir().join(file);
        if blessing() {
            fs::create_dir_all(golden_dir()).unwrap();
            fs::write(&path, actual).unwrap();
            continue;
        }
        let expected = fs::read(&path).map_err(|e| format!("{}: {}: {e}", case.name, path.display()))?;
        if &expected != actual {
            return Err(format!(
                "{}: output differs from {file}\n--- expected\n{}\n--- actual\n{}",
                case.name,
                String::from_utf8_lossy(&expected),
                String::from_utf8_lossy(actual)
            ));
        }
    }
    Ok(())
}
