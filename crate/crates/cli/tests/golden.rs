//! Default two-qutrit outputs pinned against files in `tests/golden/`.
//!
//! Set `DMSB_UPDATE_GOLDEN=1` to rewrite them. Numbers are compared with a
//! relative tolerance so that last-digit libm differences do not fail.

use std::fs;
use std::path::{Path, PathBuf};

use dms_battery_cli::{run, Experiment, ExperimentConfig};

const REL_TOL: f64 = 1e-9;
const ABS_TOL: f64 = 1e-12;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn tokens(s: &str) -> Vec<&str> {
    s.split(|c: char| c == ',' || c == ':' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect()
}

fn strip(s: &str) -> &str {
    s.trim_matches(|c: char| c == '[' || c == ']' || c == '"')
}

fn same_number(a: &str, b: &str) -> bool {
    match (strip(a).parse::<f64>(), strip(b).parse::<f64>()) {
        (Ok(x), Ok(y)) => (x - y).abs() <= ABS_TOL + REL_TOL * x.abs().max(y.abs()),
        _ => a == b,
    }
}

fn check_against_golden(exp: Experiment, suffixes: &[&str]) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        experiment: exp,
        out: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let report = run(&cfg).unwrap();
    let update = std::env::var_os("DMSB_UPDATE_GOLDEN").is_some();
    for suffix in suffixes {
        let produced = report
            .files
            .iter()
            .find(|p| p.to_string_lossy().ends_with(suffix))
            .unwrap_or_else(|| panic!("no {suffix} output"));
        let name = format!("{exp}-default{suffix}");
        let golden = golden_dir().join(&name);
        let text = fs::read_to_string(produced).unwrap();
        if update {
            fs::create_dir_all(golden_dir()).unwrap();
            fs::write(&golden, &text).unwrap();
            continue;
        }
        let want = fs::read_to_string(&golden).unwrap_or_else(|_| panic!("missing {}", golden.display()));
        let (got_lines, want_lines): (Vec<&str>, Vec<&str>) = (text.lines().collect(), want.lines().collect());
        assert_eq!(got_lines.len(), want_lines.len(), "{name}: line count");
        for (i, (g, w)) in got_lines.iter().zip(&want_lines).enumerate() {
            let (gt, wt) = (tokens(g), tokens(w));
            assert_eq!(gt.len(), wt.len(), "{name}:{}: {g} vs {w}", i + 1);
            for (a, b) in gt.iter().zip(&wt) {
                assert!(same_number(a, b), "{name}:{}: {a} vs {b}", i + 1);
            }
        }
    }
}

#[test]
fn classify_default() {
    check_against_golden(Experiment::Classify, &[".json"]);
}

#[test]
fn evolve_default() {
    check_against_golden(Experiment::Evolve, &[".csv"]);
}

#[test]
fn decay_default() {
    check_against_golden(Experiment::Decay, &[".csv"]);
}

#[test]
fn robustness_default() {
    check_against_golden(Experiment::Robustness, &[".csv"]);
}

#[test]
fn file_names_follow_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        experiment: Experiment::Robustness,
        out: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let report = run(&cfg).unwrap();
    let names: Vec<String> = report
        .files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let h = cfg.hash();
    assert_eq!(names, vec![format!("robustness-{h}.csv"), format!("robustness-{h}.py")]);
}
