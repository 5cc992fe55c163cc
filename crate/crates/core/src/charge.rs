//! Choosing what to charge into and how.
//!
//! The recipe: diagonalize, build the jump operators, classify eigenstates,
//! rank funnel states by stored energy (ties by slower decay), then search a
//! restricted drive family for the pulse that best prepares the top target.
//! The drive family has three knobs: amplitude, relative phase between
//! neighbouring sites, and the cutoff time.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::davies::DaviesModel;
use crate::dynamics::{default_dt, pure_state, DriveEnvelope, EnvelopeShape, Evolver, DT_SAFETY};
use crate::error::{Error, Result};
use crate::linalg::StateVector;
use crate::msclass::{Analysis, StateClass, Target};
use crate::qsys::{drive_operator, staggered_phases, SystemSpec};

/// Landscape CSV schema tag.
pub const LANDSCAPE_SCHEMA: &str = "dms-battery landscape v1";

/// Grid over the restricted drive family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlAnsatz {
    /// Peak amplitudes (energy units).
    pub amplitudes: Vec<f64>,
    /// Phase step between neighbouring sites.
    pub relative_phases: Vec<f64>,
    /// Cutoff times in units of `omega t`.
    pub cutoffs: Vec<f64>,
    /// Phase added to every site.
    #[serde(default)]
    pub global_phase: f64,
}

fn steps(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start + step * k as f64).collect()
}

impl ControlAnsatz {
    /// Amplitudes `0.1 J .. 1.0 J`, relative phases `0 .. 15 pi / 8`,
    /// cutoffs `0.2 .. 6.0` in `omega t`.
    pub fn default_for(system: &SystemSpec) -> Self {
        let scale = if system.coupling_j > 0.0 {
            system.coupling_j
        } else {
            1.0
        };
        Self {
            amplitudes: steps(0.1, 0.1, 10).into_iter().map(|a| a * scale).collect(),
            relative_phases: steps(0.0, PI / 8.0, 16),
            cutoffs: steps(0.2, 0.2, 30),
            global_phase: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len() * self.relative_phases.len() * self.cutoffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [
            ("amplitude", &self.amplitudes),
            ("relative phase", &self.relative_phases),
            ("cutoff", &self.cutoffs),
        ] {
            if grid.is_empty() {
                return Err(Error::InvalidConfig(format!("{name} grid is empty")));
            }
            if grid.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} grid has non-finite entries")));
            }
        }
        if self.amplitudes.iter().any(|&a| a < 0.0) || self.cutoffs.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidConfig("amplitudes and cutoffs must be >= 0".into()));
        }
        if !self.global_phase.is_finite() {
            return Err(Error::InvalidConfig("global phase must be finite".into()));
        }
        Ok(())
    }

    /// Grid point `i` in lexicographic (amplitude, phase, cutoff) order.
    fn point(&self, i: usize) -> (f64, f64, f64) {
        let nc = self.cutoffs.len();
        let np = self.relative_phases.len();
        (
            self.amplitudes[i / (np * nc)],
            self.relative_phases[(i / nc) % np],
            self.cutoffs[i % nc],
        )
    }
}

/// Integration settings for the charging runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeOptions {
    pub dt: f64,
    #[serde(default)]
    pub shape: EnvelopeShape,
    /// Keep dissipation on during the pulse.
    #[serde(default = "default_true")]
    pub dissipative_charging: bool,
}

fn default_true() -> bool {
    true
}

impl ChargeOptions {
    pub fn for_system(system: &SystemSpec) -> Self {
        Self {
            dt: default_dt(system),
            shape: EnvelopeShape::default(),
            dissipative_charging: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub amplitude: f64,
    pub relative_phase: f64,
    pub cutoff: f64,
    pub fidelity: f64,
}

/// Fidelity at every grid point, in lexicographic grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub points: Vec<GridPoint>,
}

impl Landscape {
    /// `amplitude, phase, cutoff, fidelity` with a `#` schema line.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "# {LANDSCAPE_SCHEMA}")?;
        writeln!(w, "amplitude,phase,cutoff,fidelity")?;
        for p in &self.points {
            writeln!(
                w,
                "{:.6},{:.10},{:.6},{:.10e}",
                p.amplitude, p.relative_phase, p.cutoff, p.fidelity
            )?;
        }
        Ok(())
    }

    /// Best fidelity for each relative phase, maximized over the other knobs.
    pub fn best_by_phase(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for p in &self.points {
            match out.iter_mut().find(|(phi, _)| *phi == p.relative_phase) {
                Some(entry) => entry.1 = entry.1.max(p.fidelity),
                None => out.push((p.relative_phase, p.fidelity)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveOptimization {
    pub best: GridPoint,
    pub landscape: Landscape,
}

/// Exhaustive search of `ansatz` for the pulse maximizing
/// `<target|rho(T)|target>` from the ground state, `T` being the cutoff.
/// Ties go to the first grid point.
pub fn optimize_drive(
    model: &DaviesModel,
    target: &StateVector,
    ansatz: &ControlAnsatz,
    options: &ChargeOptions,
) -> Result<DriveOptimization> {
    ansatz.validate()?;
    if target.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: target.len(),
        });
    }
    if (target.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidConfig(format!(
            "target state is not normalized (norm {})",
            target.norm()
        )));
    }
    let spec = &model.spec;
    let omega = spec.omega_scale();
    let max_amp = ansatz.amplitudes.iter().copied().fold(0.0, f64::max);
    let max_dt = DT_SAFETY / omega.max(max_amp).max(model.rate.gamma * model.dim() as f64);
    if !(options.dt > 0.0) || options.dt > max_dt {
        return Err(Error::InvalidConfig(format!(
            "dt = {} outside (0, {max_dt:.3e}]",
            options.dt
        )));
    }

    let n = spec.n_sites();
    let phases_for = |rel: f64| -> Vec<f64> {
        staggered_phases(n, rel)
            .into_iter()
            .map(|p| p + ansatz.global_phase)
            .collect()
    };
    let evolvers = ansatz
        .relative_phases
        .par_iter()
        .map(|&rel| Evolver::new(model, &drive_operator(spec, &phases_for(rel))?))
        .collect::<Result<Vec<_>>>()?;
    let rho0 = pure_state(&spec.ground_state());
    let nc = ansatz.cutoffs.len();
    let np = ansatz.relative_phases.len();

    let points = (0..ansatz.len())
        .into_par_iter()
        .map(|i| -> Result<GridPoint> {
            let (amplitude, relative_phase, cutoff) = ansatz.point(i);
            let envelope = DriveEnvelope {
                amplitude,
                phases: phases_for(relative_phase),
                cutoff_time: cutoff,
                shape: options.shape,
            };
            let t_final = cutoff / omega;
            let fidelity = if t_final > 0.0 {
                let traj = evolvers[(i / nc) % np].run(
                    &rho0,
                    &envelope,
                    t_final,
                    options.dt,
                    usize::MAX,
                    options.dissipative_charging,
                    target,
                )?;
                traj.final_fidelity()
            } else {
                crate::dynamics::fidelity(&rho0, target)
            };
            Ok(GridPoint {
                amplitude,
                relative_phase,
                cutoff,
                fidelity,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = points[0];
    for p in &points[1..] {
        if p.fidelity > best.fidelity {
            best = *p;
        }
    }
    Ok(DriveOptimization {
        best,
        landscape: Landscape { points },
    })
}

/// A state the recipe could charge into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    pub class: StateClass,
    pub energy: f64,
    pub e_f: f64,
    pub gamma_f: f64,
    /// Where the decay cascade ends, with probabilities.
    pub terminal_dark_support: Vec<Target>,
    /// Energy left once the cascade has finished.
    pub terminal_energy: f64,
}

/// Ranked charging targets and the optimized pulse for the best one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub system: SystemSpec,
    pub gamma: f64,
    /// Ranking key: descending `E_F`, then ascending `Gamma_F`, then index.
    pub ranking_key: String,
    /// Funnel states in rank order.
    pub ranking: Vec<Candidate>,
    /// Dark states, highest energy first; the targets when no funnel exists.
    pub fallback_dark: Vec<Candidate>,
    /// Index of the optimized target, if any.
    pub top: Option<usize>,
    pub optimum: Option<GridPoint>,
    #[serde(skip)]
    pub landscape: Option<Landscape>,
}

impl TargetReport {
    pub fn candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.ranking.iter().chain(&self.fallback_dark)
    }
}

fn candidate(analysis: &Analysis, k: usize) -> Candidate {
    let cls = &analysis.classification;
    let state = &cls.states[k];
    let terminal = cls.terminal_distribution(k);
    let es = analysis.eigensystem();
    let terminal_energy = terminal
        .iter()
        .map(|(&m, &p)| p * (es.energy(m) - es.ground_energy()))
        .sum();
    Candidate {
        index: k,
        class: state.class,
        energy: state.energy,
        e_f: state.e_f,
        gamma_f: state.gamma_f,
        terminal_dark_support: terminal
            .into_iter()
            .map(|(index, branching)| Target { index, branching })
            .collect(),
        terminal_energy,
    }
}

/// Candidate ranking without any drive optimization.
pub fn rank_targets(analysis: &Analysis) -> (Vec<Candidate>, Vec<Candidate>) {
    let cls = &analysis.classification;
    let by_rank = |a: &Candidate, b: &Candidate| {
        b.e_f
            .total_cmp(&a.e_f)
            .then(a.gamma_f.total_cmp(&b.gamma_f))
            .then(a.index.cmp(&b.index))
    };
    let mut ranking: Vec<Candidate> = cls
        .of_class(StateClass::Funnel)
        .into_iter()
        .filter(|&k| cls.terminates_in_dark(k))
        .map(|k| candidate(analysis, k))
        .collect();
    ranking.sort_by(by_rank);
    let mut dark: Vec<Candidate> = cls
        .of_class(StateClass::Dark)
        .into_iter()
        .map(|k| candidate(analysis, k))
        .collect();
    dark.sort_by(by_rank);
    (ranking, dark)
}

/// The full recipe for one system.
pub fn scalable_pipeline(
    system: &SystemSpec,
    gamma: f64,
    ansatz: &ControlAnsatz,
    options: &ChargeOptions,
) -> Result<TargetReport> {
    let analysis = Analysis::new(system, gamma)?;
    pipeline_with(&analysis, ansatz, options)
}

/// [`scalable_pipeline`] on a prepared analysis.
pub fn pipeline_with(analysis: &Analysis, ansatz: &ControlAnsatz, options: &ChargeOptions) -> Result<TargetReport> {
    let (ranking, fallback_dark) = rank_targets(analysis);
    let top = ranking.first().or(fallback_dark.first()).map(|c| c.index);
    let (optimum, landscape) = match top {
        Some(k) => {
            let target = analysis.eigensystem().vector(k);
            let opt = optimize_drive(&analysis.model, &target, ansatz, options)?;
            (Some(opt.best), Some(opt.landscape))
        }
        None => (None, None),
    };
    Ok(TargetReport {
        system: analysis.model.spec.clone(),
        gamma: analysis.model.rate.gamma,
        ranking_key: "e_f desc, gamma_f asc, index asc".into(),
        ranking,
        fallback_dark,
        top,
        optimum,
        landscape,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageMerit {
    pub index: usize,
    pub class: StateClass,
    /// `Delta E(horizon)` of free decay from the pure eigenstate.
    pub retained_energy: f64,
    /// Energy left once the decay cascade has finished.
    pub terminal_energy: f64,
}

/// Energy retained after `horizon` of free decay, for every candidate of
/// the report.
pub fn storage_figure_of_merit(report: &TargetReport, horizon: f64, dt: f64) -> Result<Vec<StorageMerit>> {
    let analysis = Analysis::new(&report.system, report.gamma)?;
    let states: Vec<usize> = report.candidates().map(|c| c.index).collect();
    storage_merit_of_states(&analysis, &states, horizon, dt)
}

pub fn storage_merit_of_states(
    analysis: &Analysis,
    states: &[usize],
    horizon: f64,
    dt: f64,
) -> Result<Vec<StorageMerit>> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidConfig(format!("horizon must be > 0, got {horizon}")));
    }
    let model = &analysis.model;
    let n = model.spec.n_sites();
    let off = DriveEnvelope::off(n);
    let evolver = Evolver::new(model, &drive_operator(&model.spec, &vec![0.0; n])?)?;
    states
        .par_iter()
        .map(|&k| {
            let psi = analysis.eigensystem().vector(k);
            let traj = evolver.run(&pure_state(&psi), &off, horizon, dt, usize::MAX, true, &psi)?;
            let c = candidate(analysis, k);
            Ok(StorageMerit {
                index: k,
                class: c.class,
                retained_energy: traj.final_energy(),
                terminal_energy: c.terminal_energy,
            })
        })
        .collect()
}
