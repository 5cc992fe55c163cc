//! One function per experiment; each writes its files into `out`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dms_battery::charge::{pipeline_with, ChargeOptions, ControlAnsatz, TargetReport};
use dms_battery::davies::near_coincident_frequencies;
use dms_battery::dynamics::{evolve_with, validate_drive, Severity, SimulationConfig, StateSelector, Trajectory};
use dms_battery::msclass::{spectator_eigenstate_deviation, Analysis, ClassificationReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig, SWEEP_ALPHAS};
use crate::{plot, CliError};

pub const ROBUSTNESS_SCHEMA: &str = "dms-battery robustness v1";
pub const DECAY_SCHEMA: &str = "dms-battery decay v1";

/// Near-coincident Bohr frequencies closer than this many degeneracy
/// tolerances trigger a warning.
pub const NEAR_COINCIDENCE_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub summary: String,
}

impl RunReport {
    fn write(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Classify => classify(cfg),
        Experiment::Evolve => evolve(cfg),
        Experiment::Robustness => robustness(cfg),
        Experiment::Compare => compare(cfg),
        Experiment::Decay => decay(cfg),
        Experiment::Optimize => optimize(cfg),
    }
}

/// Degenerate levels and fragile secular splittings.
pub fn spectrum_warnings(analysis: &Analysis) -> Vec<String> {
    let model = &analysis.model;
    let es = analysis.eigensystem();
    let mut out = Vec::new();
    for level in model.degenerate_levels() {
        out.push(format!(
            "degenerate level at E = {:.6} with multiplicity {}; using the canonical basis",
            level.energy,
            level.multiplicity()
        ));
    }
    let window = NEAR_COINCIDENCE_FACTOR * es.degeneracy_tol();
    for (a, b) in near_coincident_frequencies(es, &model.lowering, window, 1e-12) {
        out.push(format!(
            "Bohr frequencies {a:.9} and {b:.9} are within {window:.1e}; the secular approximation is fragile"
        ));
    }
    out
}

#[derive(Serialize)]
struct ClassifyOutput<'a> {
    config: serde_json::Value,
    warnings: &'a [String],
    classification: ClassificationReport,
}

pub fn classify(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let analysis = Analysis::new(&cfg.system()?, cfg.gamma)?;
    let mut report = RunReport {
        warnings: spectrum_warnings(&analysis),
        ..RunReport::default()
    };
    let classification = analysis.report();
    let mut s = format!(
        "{:>5} {:>3} {:>12} {:>7} {:>10} {:>10}  targets\n",
        "state", "n", "energy", "class", "Gamma_F", "E_F"
    );
    for st in &classification.states {
        let targets: Vec<String> = st
            .targets
            .iter()
            .map(|t| format!("{}({:.3})", t.index, t.branching))
            .collect();
        let n = st.excitation.map_or("-".to_string(), |n| n.to_string());
        let _ = writeln!(
            s,
            "{:>5} {:>3} {:>12.6} {:>7} {:>10.6} {:>10.6}  {}",
            st.index,
            n,
            st.energy,
            st.class.to_string(),
            st.gamma_f,
            st.e_f,
            targets.join(" ")
        );
    }
    report.summary = s;
    let out = ClassifyOutput {
        config: cfg.record(),
        warnings: &report.warnings.clone(),
        classification,
    };
    let json = serde_json::to_string_pretty(&out).expect("report serializes");
    report.write(&cfg.out, &format!("classify-{}.json", cfg.hash()), json.as_bytes())?;
    Ok(report)
}

/// Charging run for one resolved config: drive, then free dissipation.
pub fn charging_config(cfg: &ExperimentConfig) -> Result<SimulationConfig, CliError> {
    let system = cfg.system()?;
    let mut sim = SimulationConfig::charging(system.clone(), cfg.gamma);
    sim.drive = cfg.drive();
    sim.t_final = cfg.t_final;
    sim.dt = cfg.dt_for(&system);
    sim.record_stride = cfg.record_stride;
    sim.validate()?;
    Ok(sim)
}

fn drive_warnings(sim: &SimulationConfig) -> Vec<String> {
    validate_drive(sim)
        .into_iter()
        .filter(|d| d.severity == Severity::Warning)
        .map(|d| format!("{}: {}", d.code, d.message))
        .collect()
}

fn csv_bytes(traj: &Trajectory) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    Ok(buf)
}

/// Runs every config in parallel; results come back in input order.
fn charge_all(cfgs: &[ExperimentConfig]) -> Result<Vec<(SimulationConfig, Trajectory)>, CliError> {
    cfgs.par_iter()
        .map(|c| {
            let sim = charging_config(c)?;
            let analysis = Analysis::new(&sim.system, sim.gamma)?;
            let traj = evolve_with(&analysis, &sim)?;
            Ok((sim, traj))
        })
        .collect()
}

fn single_run(cfg: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        sweep_alpha: false,
        ..cfg.clone()
    }
}

pub fn evolve(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let alphas: Vec<f64> = if cfg.sweep_alpha {
        SWEEP_ALPHAS.to_vec()
    } else {
        vec![cfg.alpha]
    };
    let cfgs: Vec<ExperimentConfig> = alphas
        .iter()
        .map(|&alpha| ExperimentConfig {
            alpha,
            ..single_run(cfg)
        })
        .collect();
    let runs = charge_all(&cfgs)?;
    let mut report = RunReport {
        warnings: drive_warnings(&runs[0].0),
        ..RunReport::default()
    };
    let mut plotted = Vec::new();
    report.summary = format!("{:>8} {:>14} {:>14}\n", "alpha", "final dE", "final F");
    for (c, (_, traj)) in cfgs.iter().zip(&runs) {
        let name = format!("evolve-{}.csv", c.hash());
        report.write(&cfg.out, &name, &csv_bytes(traj)?)?;
        plotted.push((format!("alpha = {}", c.alpha), name));
        let _ = writeln!(
            report.summary,
            "{:>8} {:>14.8} {:>14.8}",
            c.alpha,
            traj.final_energy(),
            traj.final_fidelity()
        );
    }
    let stem = format!("evolve-{}", cfg.hash());
    report.write(
        &cfg.out,
        &format!("{stem}.py"),
        plot::trajectories(&stem, &plotted).as_bytes(),
    )?;
    Ok(report)
}

#[derive(Serialize)]
struct CompareOutput {
    alpha: f64,
    qubit_final_energy: f64,
    qutrit_final_energy: f64,
    ratio: f64,
    qubit_alpha_independent: bool,
}

pub fn compare(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let base = single_run(cfg);
    let qubit = ExperimentConfig { d: 2, ..base.clone() };
    let qutrit = ExperimentConfig { d: 3, ..base.clone() };
    let qubit_ref = ExperimentConfig {
        alpha: if cfg.alpha == 0.0 { 0.2 } else { 0.0 },
        ..qubit.clone()
    };
    let runs = charge_all(&[qubit.clone(), qutrit.clone(), qubit_ref])?;
    let (q2, q3, q2_ref) = (&runs[0].1, &runs[1].1, &runs[2].1);
    let out = CompareOutput {
        alpha: cfg.alpha,
        qubit_final_energy: q2.final_energy(),
        qutrit_final_energy: q3.final_energy(),
        ratio: q3.final_energy() / q2.final_energy(),
        qubit_alpha_independent: q2.energy == q2_ref.energy && q2.fidelity == q2_ref.fidelity,
    };
    let mut report = RunReport {
        warnings: drive_warnings(&runs[1].0),
        ..RunReport::default()
    };
    let hash = cfg.hash();
    let names = [
        format!("compare-qubit-{hash}.csv"),
        format!("compare-qutrit-{hash}.csv"),
    ];
    report.write(&cfg.out, &names[0], &csv_bytes(q2)?)?;
    report.write(&cfg.out, &names[1], &csv_bytes(q3)?)?;
    let json = serde_json::to_string_pretty(&out).expect("summary serializes");
    report.write(&cfg.out, &format!("compare-{hash}.json"), json.as_bytes())?;
    let stem = format!("compare-{hash}");
    let plotted = [
        ("qubit".to_string(), names[0].clone()),
        ("qutrit".to_string(), names[1].clone()),
    ];
    report.write(
        &cfg.out,
        &format!("{stem}.py"),
        plot::trajectories(&stem, &plotted).as_bytes(),
    )?;
    report.summary = format!(
        "qubit final dE {:.8}\nqutrit final dE {:.8}\nratio {:.6}\nqubit runs independent of alpha: {}\n",
        out.qubit_final_energy, out.qutrit_final_energy, out.ratio, out.qubit_alpha_independent
    );
    Ok(report)
}

/// Log-spaced grid from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

pub fn robustness(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let mut csv = format!("# {ROBUSTNESS_SCHEMA}\nJ_over_alpha,overlap,x_exact,x_approx,abs_deviation\n");
    let mut lowest: f64 = 1.0;
    for ratio in log_grid(cfg.scan_min, cfg.scan_max, cfg.scan_points) {
        let dev = spectator_eigenstate_deviation(cfg.omega, cfg.scan_alpha, ratio * cfg.scan_alpha)?;
        let approx = dev.x_approx.expect("J > 0 on the grid");
        lowest = lowest.min(dev.overlap);
        let _ = writeln!(
            csv,
            "{ratio:.10e},{:.12e},{:.12e},{approx:.12e},{:.6e}",
            dev.overlap,
            dev.x_exact,
            (dev.x_exact - approx).abs()
        );
    }
    let mut report = RunReport::default();
    let stem = format!("robustness-{}", cfg.hash());
    report.write(&cfg.out, &format!("{stem}.csv"), csv.as_bytes())?;
    report.write(
        &cfg.out,
        &format!("{stem}.py"),
        plot::robustness(&stem, &format!("{stem}.csv")).as_bytes(),
    )?;
    report.summary = format!(
        "{} points, J/alpha in [{}, {}], alpha = {}; lowest overlap {lowest:.6}\n",
        cfg.scan_points, cfg.scan_min, cfg.scan_max, cfg.scan_alpha
    );
    Ok(report)
}

pub fn decay(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    if !(cfg.gamma > 0.0) {
        return Err(CliError::Config("decay needs gamma > 0".into()));
    }
    let system = cfg.system()?;
    let analysis = Analysis::new(&system, cfg.gamma)?;
    let big_gamma = 2.0 * cfg.gamma;
    let mut report = RunReport::default();
    let mut labels = Vec::new();
    let mut sims = Vec::new();
    for (label, sel) in [
        ("dark", StateSelector::Dark),
        ("funnel", StateSelector::Funnel),
        ("bright", StateSelector::Bright),
    ] {
        if sel.resolve(&analysis).is_err() {
            report
                .warnings
                .push(format!("no {label} state in this system; column omitted"));
            continue;
        }
        let mut sim = SimulationConfig::decay(system.clone(), cfg.gamma, sel, cfg.decay_horizon / big_gamma);
        sim.dt = cfg.dt_for(&system);
        sim.record_stride = cfg.record_stride;
        sim.validate()?;
        labels.push(label);
        sims.push(sim);
    }
    let trajs: Vec<Trajectory> = sims
        .par_iter()
        .map(|sim| evolve_with(&analysis, sim))
        .collect::<Result<_, _>>()?;

    let mut csv = format!("# {DECAY_SCHEMA}\ngamma_t");
    for l in &labels {
        let _ = write!(csv, ",dE_{l}");
    }
    csv.push('\n');
    if let Some(first) = trajs.first() {
        for (i, t) in first.times.iter().enumerate() {
            let _ = write!(csv, "{:.10e}", t * big_gamma);
            for traj in &trajs {
                let _ = write!(csv, ",{:.10e}", traj.energy[i]);
            }
            csv.push('\n');
        }
    }
    let stem = format!("decay-{}", cfg.hash());
    report.write(&cfg.out, &format!("{stem}.csv"), csv.as_bytes())?;
    report.write(
        &cfg.out,
        &format!("{stem}.py"),
        plot::decay(&stem, &format!("{stem}.csv")).as_bytes(),
    )?;
    for (l, traj) in labels.iter().zip(&trajs) {
        let _ = writeln!(
            report.summary,
            "{l:>7}: dE from {:.6} to {:.6} at Gamma t = {}",
            traj.energy[0],
            traj.final_energy(),
            cfg.decay_horizon
        );
    }
    Ok(report)
}

pub fn optimize(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let system = cfg.system()?;
    let analysis = Analysis::new(&system, cfg.gamma)?;
    let mut options = ChargeOptions::for_system(&system);
    options.dt = cfg.dt_for(&system);
    options.shape = cfg.drive().shape;
    let ansatz = ControlAnsatz::default_for(&system);
    let target: TargetReport = pipeline_with(&analysis, &ansatz, &options)?;
    let mut report = RunReport {
        warnings: spectrum_warnings(&analysis),
        ..RunReport::default()
    };
    let stem = format!("optimize-{}", cfg.hash());
    let json = serde_json::to_string_pretty(&target).expect("report serializes");
    report.write(&cfg.out, &format!("{stem}.json"), json.as_bytes())?;
    if let Some(landscape) = &target.landscape {
        let mut buf = Vec::new();
        landscape.write_csv(&mut buf)?;
        report.write(&cfg.out, &format!("{stem}.csv"), &buf)?;
        report.write(
            &cfg.out,
            &format!("{stem}.py"),
            plot::landscape(&stem, &format!("{stem}.csv")).as_bytes(),
        )?;
    }
    let mut s = String::from("rank  state  E_F         Gamma_F\n");
    for (r, c) in target.ranking.iter().enumerate() {
        let _ = writeln!(s, "{:>4}  {:>5}  {:<10.6}  {:.6}", r + 1, c.index, c.e_f, c.gamma_f);
    }
    match (target.top, target.optimum) {
        (Some(k), Some(best)) => {
            let _ = writeln!(
                s,
                "target {k}: amplitude {}, relative phase {:.6}, cutoff {} omega t, fidelity {:.6e}",
                best.amplitude, best.relative_phase, best.cutoff, best.fidelity
            );
        }
        _ => s.push_str("no funnel or dark target in this system\n"),
    }
    report.summary = s;
    Ok(report)
}
