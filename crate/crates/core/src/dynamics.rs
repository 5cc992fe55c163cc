//! Driven-dissipative evolution of the battery density matrix.
//!
//! The master equation is
//! `d rho / dt = -i [H_S + H_d(t), rho] + D[rho]`, with the Davies dissipator
//! `D` built once from the undriven Hamiltonian. The drive is
//! `H_d(t) = f(t) G` for a fixed generator `G` and a scalar envelope `f`.
//!
//! Integration is fixed-step RK4 on `vec(rho)` with sparse superoperators.
//! Time is in units of `1 / energy` (hbar = 1); drive cutoff and ramp
//! durations are given as `omega t`, with `omega` the largest site frequency.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{DMatrixView, DMatrixViewMut};
use nalgebra_sparse::ops::serial::spmm_csr_dense;
use nalgebra_sparse::ops::Op;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::davies::DaviesModel;
use crate::error::{Error, Result};
use crate::linalg::{c, commutator, eigh, outer, Operator, StateVector, C64, I, ONE, ZERO};
use crate::msclass::Analysis;
use crate::qsys::{drive_operator, staggered_phases, SystemSpec};

/// Trace and positivity tolerance checked during integration.
pub const INVARIANT_TOL: f64 = 1e-6;
/// Largest stable step is `DT_SAFETY / max(omega, Omega_R, gamma * dim)`.
pub const DT_SAFETY: f64 = 0.05;
/// Trajectory CSV schema tag.
pub const CSV_SCHEMA: &str = "dms-battery trajectory v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvelopeShape {
    /// Full amplitude until the cutoff, then zero.
    HardCutoff,
    /// `sin^2` ramps of the given length (in `omega t`) at both ends.
    CosineRamp { ramp_time: f64 },
}

impl Default for EnvelopeShape {
    fn default() -> Self {
        EnvelopeShape::CosineRamp { ramp_time: 0.2 }
    }
}

/// `Omega_R(t)` together with the per-site phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveEnvelope {
    /// Peak Rabi amplitude (energy units).
    pub amplitude: f64,
    /// Phase of the local drive on each site.
    pub phases: Vec<f64>,
    /// Switch-off time in units of `omega t`.
    pub cutoff_time: f64,
    #[serde(default)]
    pub shape: EnvelopeShape,
}

impl DriveEnvelope {
    /// Out-of-phase drive `(0, pi, 2 pi, ...)` with the default ramp.
    pub fn antisymmetric(n_sites: usize, amplitude: f64, cutoff_time: f64) -> Self {
        Self {
            amplitude,
            phases: staggered_phases(n_sites, PI),
            cutoff_time,
            shape: EnvelopeShape::default(),
        }
    }

    pub fn off(n_sites: usize) -> Self {
        Self {
            amplitude: 0.0,
            phases: vec![0.0; n_sites],
            cutoff_time: 0.0,
            shape: EnvelopeShape::HardCutoff,
        }
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "drive amplitude must be finite and >= 0, got {}",
                self.amplitude
            )));
        }
        if !(self.cutoff_time >= 0.0) || !self.cutoff_time.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "cutoff time must be finite and >= 0, got {}",
                self.cutoff_time
            )));
        }
        if let EnvelopeShape::CosineRamp { ramp_time } = self.shape {
            if !(ramp_time > 0.0) || !ramp_time.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "ramp time must be finite and > 0, got {ramp_time}"
                )));
            }
        }
        if self.phases.len() != n_sites {
            return Err(Error::InvalidConfig(format!(
                "{} drive phases given for {} sites",
                self.phases.len(),
                n_sites
            )));
        }
        if self.phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("drive phases must be finite".into()));
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.amplitude > 0.0 && self.cutoff_time > 0.0
    }

    /// Cutoff in raw time units.
    pub fn cutoff(&self, omega: f64) -> f64 {
        self.cutoff_time / omega
    }

    /// Effective ramp length in raw time, shortened to half the pulse when
    /// the pulse is too short for two full ramps.
    pub fn ramp(&self, omega: f64) -> Option<f64> {
        match self.shape {
            EnvelopeShape::HardCutoff => None,
            EnvelopeShape::CosineRamp { ramp_time } => Some(ramp_time.min(0.5 * self.cutoff_time) / omega),
        }
    }

    /// `Omega_R(t)`.
    pub fn value(&self, t: f64, omega: f64) -> f64 {
        let t_off = self.cutoff(omega);
        if !self.is_active() || t < 0.0 || t >= t_off {
            return 0.0;
        }
        let shape = match self.ramp(omega) {
            None => 1.0,
            Some(r) if t < r => (0.5 * PI * t / r).sin().powi(2),
            Some(r) if t > t_off - r => (0.5 * PI * (t_off - t) / r).sin().powi(2),
            Some(_) => 1.0,
        };
        self.amplitude * shape
    }

    /// Largest `|d Omega_R / dt|`; infinite for a hard edge.
    pub fn max_slope(&self, omega: f64) -> f64 {
        if !self.is_active() {
            return 0.0;
        }
        match self.ramp(omega) {
            None => f64::INFINITY,
            Some(r) => self.amplitude * PI / (2.0 * r),
        }
    }

    /// Shortest modulation timescale `|Omega_R / dOmega_R/dt|`, taken as the
    /// ramp length (zero for a hard edge).
    pub fn modulation_time(&self, omega: f64) -> f64 {
        self.ramp(omega).unwrap_or(0.0)
    }
}

/// A state picked by role or given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSelector {
    Ground,
    /// Lowest-energy dark eigenstate.
    Dark,
    /// Highest-energy funnel that decays in one step into dark states.
    Funnel,
    /// Highest-energy bright state that decays straight to the ground.
    Bright,
    /// Eigenstate by index (ascending energy).
    Eigenstate(usize),
    /// Product-basis amplitudes `[re, im]`; normalized on use.
    Custom(Vec<[f64; 2]>),
}

impl StateSelector {
    pub fn resolve(&self, analysis: &Analysis) -> Result<StateVector> {
        let es = analysis.eigensystem();
        let missing = |what: &str| Error::InvalidConfig(format!("system has no {what} state"));
        let k = match self {
            StateSelector::Ground => 0,
            StateSelector::Dark => analysis.dark_state().ok_or_else(|| missing("dark"))?,
            StateSelector::Funnel => analysis.one_step_funnel().ok_or_else(|| missing("funnel"))?,
            StateSelector::Bright => analysis.one_step_bright().ok_or_else(|| missing("bright"))?,
            StateSelector::Eigenstate(k) => {
                if *k >= es.len() {
                    return Err(Error::InvalidConfig(format!(
                        "eigenstate {k} out of range (dimension {})",
                        es.len()
                    )));
                }
                *k
            }
            StateSelector::Custom(amps) => {
                if amps.len() != es.dim() {
                    return Err(Error::InvalidConfig(format!(
                        "custom state has {} amplitudes, expected {}",
                        amps.len(),
                        es.dim()
                    )));
                }
                let v = StateVector::from_iterator(amps.len(), amps.iter().map(|[re, im]| C64::new(*re, *im)));
                let norm = v.norm();
                if !(norm > 0.0) || !norm.is_finite() {
                    return Err(Error::InvalidConfig("custom state has zero norm".into()));
                }
                return Ok(v / c(norm));
            }
        };
        Ok(es.vector(k))
    }
}

/// Everything needed for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub system: SystemSpec,
    pub gamma: f64,
    pub drive: DriveEnvelope,
    pub t_final: f64,
    pub dt: f64,
    pub record_stride: usize,
    pub initial_state: StateSelector,
    /// State whose fidelity is tracked.
    pub target: StateSelector,
    /// Keep the dissipator on while the drive acts.
    #[serde(default = "default_true")]
    pub dissipative_charging: bool,
    /// Bath correlation time, used only for validity warnings.
    #[serde(default)]
    pub bath_correlation_time: Option<f64>,
}

fn default_true() -> bool {
    true
}

impl SimulationConfig {
    /// Antisymmetric drive of amplitude `0.5 J` switched off at
    /// `omega t = 3`, starting from the ground state, tracking the dark state.
    pub fn charging(system: SystemSpec, gamma: f64) -> Self {
        let n = system.n_sites();
        let amplitude = 0.5 * system.coupling_j;
        let dt = default_dt(&system);
        Self {
            drive: DriveEnvelope::antisymmetric(n, amplitude, 3.0),
            system,
            gamma,
            t_final: 100.0,
            dt,
            record_stride: 100,
            initial_state: StateSelector::Ground,
            target: StateSelector::Dark,
            dissipative_charging: true,
            bath_correlation_time: None,
        }
    }

    /// Drive off, free decay from `initial`.
    pub fn decay(system: SystemSpec, gamma: f64, initial: StateSelector, t_final: f64) -> Self {
        let n = system.n_sites();
        let mut cfg = Self::charging(system, gamma);
        cfg.drive = DriveEnvelope::off(n);
        cfg.initial_state = initial;
        cfg.t_final = t_final;
        cfg
    }

    pub fn max_stable_dt(&self) -> f64 {
        let scale = self
            .system
            .omega_scale()
            .max(self.drive.amplitude)
            .max(self.gamma * self.system.dim() as f64);
        DT_SAFETY / scale
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.drive.validate(self.system.n_sites())?;
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidConfig(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "t_final must be finite and > 0, got {}",
                self.t_final
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        let max_dt = self.max_stable_dt();
        if self.dt > max_dt {
            return Err(Error::InvalidConfig(format!(
                "dt = {} exceeds the stability bound {max_dt:.3e}",
                self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidConfig("record_stride must be >= 1".into()));
        }
        if let Some(tau) = self.bath_correlation_time {
            if !(tau >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "bath correlation time must be >= 0, got {tau}"
                )));
            }
        }
        Ok(())
    }
}

/// `0.01 / omega`.
pub fn default_dt(system: &SystemSpec) -> f64 {
    0.01 / system.omega_scale()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

impl Diagnostic {
    fn warning(code: &str, message: String) -> Self {
        Self {
            severity: Severity::Warning,
            code: code.into(),
            message,
        }
    }
}

/// Model-validity checks; none of them stop a run.
pub fn validate_drive(config: &SimulationConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let omega = config.system.omega_scale();
    let ratio = config.system.rwa_ratio();
    if ratio > 0.1 {
        out.push(Diagnostic::warning(
            "rwa",
            format!("J / min(omega, omega - alpha) = {ratio:.3} exceeds 0.1; exchange coupling form is marginal"),
        ));
    }
    let drive = &config.drive;
    match config.bath_correlation_time {
        None => out.push(Diagnostic {
            severity: Severity::Info,
            code: "adiabaticity".into(),
            message: "bath correlation time not given; drive adiabaticity check skipped".into(),
        }),
        Some(tau) => {
            let amp = drive.amplitude * tau;
            if amp > 0.1 {
                out.push(Diagnostic::warning(
                    "adiabaticity",
                    format!("Omega_R * tau_B = {amp:.3} exceeds 0.1"),
                ));
            }
            let slope = drive.max_slope(omega) * tau * tau;
            if slope > 0.1 {
                out.push(Diagnostic::warning(
                    "adiabaticity",
                    format!("|dOmega_R/dt| * tau_B^2 = {slope:.3e} exceeds 0.1"),
                ));
            }
        }
    }
    if drive.is_active() && config.gamma > 0.0 {
        let tau_mod = drive.modulation_time(omega);
        let bound = 10.0 / config.gamma;
        if tau_mod < bound {
            out.push(Diagnostic::warning(
                "modulation",
                format!("drive modulation time {tau_mod:.3e} is shorter than 10 / gamma = {bound:.3e}"),
            ));
        }
    }
    out
}

/// `Tr[H rho]`. The Hamiltonians here have ground energy zero, so this is
/// the stored energy.
pub fn stored_energy(rho: &Operator, h: &Operator) -> f64 {
    trace_product(h, rho).re
}

/// `Tr[A B]` without forming the product.
pub fn trace_product(a: &Operator, b: &Operator) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// `<target|rho|target>`.
pub fn fidelity(rho: &Operator, target: &StateVector) -> f64 {
    target.dotc(&(rho * target)).re
}

pub fn pure_state(v: &StateVector) -> Operator {
    outer(v, v)
}

/// Matrix-form right-hand side, used as the reference for the sparse path.
pub fn rhs(rho: &Operator, model: &DaviesModel, drive_generator: &Operator, drive_value: f64) -> Result<Operator> {
    let h = &model.hamiltonian + drive_generator * c(drive_value);
    Ok(commutator(&h, rho) * (-I) + model.dissipator().apply(rho)?)
}

/// `vec(rho) -> vec(d rho / dt)` split into a fixed part, the dissipator
/// and the drive part.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    unitary: CsrMatrix<C64>,
    dissipator: CsrMatrix<C64>,
    fixed: CsrMatrix<C64>,
    drive: CsrMatrix<C64>,
}

/// Pushes the superoperator of `rho -> coef * A rho B` (column-major vec).
fn push_sandwich(coo: &mut CooMatrix<C64>, coef: C64, a: &Operator, b: &Operator) {
    let n = a.nrows();
    let nz = |m: &Operator| -> Vec<(usize, usize, C64)> {
        let mut v = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let z = m[(i, j)];
                if z.norm() > 1e-15 {
                    v.push((i, j, z));
                }
            }
        }
        v
    };
    let (an, bn) = (nz(a), nz(b));
    for &(r, rp, za) in &an {
        for &(cp, col, zb) in &bn {
            coo.push(r + n * col, rp + n * cp, coef * za * zb);
        }
    }
}

fn commutator_superop(h: &Operator) -> CsrMatrix<C64> {
    let n = h.nrows();
    let id = Operator::identity(n, n);
    let mut coo = CooMatrix::new(n * n, n * n);
    push_sandwich(&mut coo, -I, h, &id);
    push_sandwich(&mut coo, I, &id, h);
    CsrMatrix::from(&coo)
}

impl Liouvillian {
    pub fn new(model: &DaviesModel, drive_generator: &Operator) -> Result<Self> {
        let n = model.dim();
        if drive_generator.nrows() != n || drive_generator.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: drive_generator.nrows(),
            });
        }
        let unitary = commutator_superop(&model.hamiltonian);
        let diss = model.dissipator();
        let id = Operator::identity(n, n);
        let mut coo = CooMatrix::new(n * n, n * n);
        for (g, a, adj) in diss.terms() {
            if *g != 0.0 {
                push_sandwich(&mut coo, c(*g), a, adj);
            }
        }
        push_sandwich(&mut coo, c(-0.5), diss.decay_operator(), &id);
        push_sandwich(&mut coo, c(-0.5), &id, diss.decay_operator());
        let dissipator = CsrMatrix::from(&coo);
        let fixed = &unitary + &dissipator;
        let drive = commutator_superop(drive_generator);
        Ok(Self {
            dim: n,
            unitary,
            dissipator,
            fixed,
            drive,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.fixed.nnz() + self.drive.nnz()
    }

    /// `out = L(rho)` for drive value `f`.
    pub fn apply_into(&self, rho: &Operator, drive_value: f64, dissipative: bool, out: &mut Operator) {
        let n2 = self.dim * self.dim;
        let x = DMatrixView::from_slice(rho.as_slice(), n2, 1);
        let base = if dissipative { &self.fixed } else { &self.unitary };
        {
            let y = DMatrixViewMut::from_slice(out.as_mut_slice(), n2, 1);
            spmm_csr_dense(ZERO, y, ONE, Op::NoOp(base), Op::NoOp(x));
        }
        if drive_value != 0.0 {
            let y = DMatrixViewMut::from_slice(out.as_mut_slice(), n2, 1);
            spmm_csr_dense(ONE, y, c(drive_value), Op::NoOp(&self.drive), Op::NoOp(x));
        }
    }

    pub fn apply(&self, rho: &Operator, drive_value: f64) -> Operator {
        let mut out = Operator::zeros(self.dim, self.dim);
        self.apply_into(rho, drive_value, true, &mut out);
        out
    }

    /// Dissipator alone, for checks.
    pub fn apply_dissipator(&self, rho: &Operator) -> Operator {
        let n2 = self.dim * self.dim;
        let mut out = Operator::zeros(self.dim, self.dim);
        let x = DMatrixView::from_slice(rho.as_slice(), n2, 1);
        let y = DMatrixViewMut::from_slice(out.as_mut_slice(), n2, 1);
        spmm_csr_dense(ZERO, y, ONE, Op::NoOp(&self.dissipator), Op::NoOp(x));
        out
    }
}

/// Scratch space for one RK4 step.
struct Rk4 {
    k1: Operator,
    k2: Operator,
    k3: Operator,
    k4: Operator,
    tmp: Operator,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        let z = Operator::zeros(n, n);
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    fn step(&mut self, l: &Liouvillian, rho: &mut Operator, f: [f64; 3], dt: f64, dissipative: bool) {
        let h = c(0.5 * dt);
        l.apply_into(rho, f[0], dissipative, &mut self.k1);
        self.tmp.copy_from(rho);
        axpy(&mut self.tmp, h, &self.k1);
        l.apply_into(&self.tmp, f[1], dissipative, &mut self.k2);
        self.tmp.copy_from(rho);
        axpy(&mut self.tmp, h, &self.k2);
        l.apply_into(&self.tmp, f[1], dissipative, &mut self.k3);
        self.tmp.copy_from(rho);
        axpy(&mut self.tmp, c(dt), &self.k3);
        l.apply_into(&self.tmp, f[2], dissipative, &mut self.k4);
        let w = c(dt / 6.0);
        axpy(rho, w, &self.k1);
        axpy(rho, w * 2.0, &self.k2);
        axpy(rho, w * 2.0, &self.k3);
        axpy(rho, w, &self.k4);
    }
}

/// `y <- y + a x`.
fn axpy(y: &mut Operator, a: C64, x: &Operator) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += a * xi;
    }
}

/// `rho <- (rho + rho^dagger) / 2` in place.
pub fn hermitize(rho: &mut Operator) {
    let n = rho.nrows();
    for j in 0..n {
        rho[(j, j)].im = 0.0;
        for i in (j + 1)..n {
            let avg = (rho[(i, j)] + rho[(j, i)].conj()) * 0.5;
            rho[(i, j)] = avg;
            rho[(j, i)] = avg.conj();
        }
    }
}

/// Observables along a trajectory, one entry per recorded sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `Tr[H_S rho] - E_gs`.
    pub energy: Vec<f64>,
    pub fidelity: Vec<f64>,
    /// Eigenstate populations, indexed `[sample][eigenstate]`.
    pub populations: Vec<Vec<f64>>,
    pub trace_error: Vec<f64>,
    pub min_eigenvalue: Vec<f64>,
    /// Raw time at which the drive went off (zero without a drive).
    pub drive_off_time: f64,
    #[serde(skip)]
    pub final_state: Option<Operator>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_energy(&self) -> f64 {
        *self.energy.last().expect("trajectory has samples")
    }

    pub fn final_fidelity(&self) -> f64 {
        *self.fidelity.last().expect("trajectory has samples")
    }

    /// Linear interpolation of the stored energy.
    pub fn energy_at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.energy, t)
    }

    pub fn fidelity_at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.fidelity, t)
    }

    /// Largest increase of the stored energy between consecutive samples
    /// taken at or after `t0`.
    pub fn max_energy_rise_after(&self, t0: f64) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 1..self.len() {
            if self.times[i - 1] >= t0 {
                worst = worst.max(self.energy[i] - self.energy[i - 1]);
            }
        }
        worst
    }

    pub fn max_trace_error(&self) -> f64 {
        self.trace_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with columns `t, dE, fidelity, P_state_0.., trace_err, min_eig`,
    /// preceded by a `#` schema line.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "# {CSV_SCHEMA}")?;
        let d = self.populations.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string(), "dE".into(), "fidelity".into()];
        header.extend((0..d).map(|k| format!("P_state_{k}")));
        header.push("trace_err".into());
        header.push("min_eig".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            write!(
                w,
                "{:.10e},{:.10e},{:.10e}",
                self.times[i], self.energy[i], self.fidelity[i]
            )?;
            for p in &self.populations[i] {
                write!(w, ",{p:.10e}")?;
            }
            writeln!(w, ",{:.3e},{:.3e}", self.trace_error[i], self.min_eigenvalue[i])?;
        }
        Ok(())
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.iter().position(|&t| t >= x) {
        None => *ys.last().expect("non-empty"),
        Some(0) => ys[0],
        Some(i) => {
            let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            ys[i - 1] + w * (ys[i] - ys[i - 1])
        }
    }
}

/// Prepared integrator for one system and drive generator; reusable across
/// envelopes and initial states.
#[derive(Debug, Clone)]
pub struct Evolver {
    liouvillian: Liouvillian,
    hamiltonian: Operator,
    ground_energy: f64,
    eigenvectors: Operator,
    omega: f64,
}

impl Evolver {
    /// `drive_generator` is the unit-amplitude drive operator.
    pub fn new(model: &DaviesModel, drive_generator: &Operator) -> Result<Self> {
        Ok(Self {
            liouvillian: Liouvillian::new(model, drive_generator)?,
            hamiltonian: model.hamiltonian.clone(),
            ground_energy: model.eigensystem.ground_energy(),
            eigenvectors: model.eigensystem.vectors().clone(),
            omega: model.spec.omega_scale(),
        })
    }

    pub fn liouvillian(&self) -> &Liouvillian {
        &self.liouvillian
    }

    /// Integrates from `rho0` to `t_final`. The grid is split at the drive
    /// cutoff so that no step straddles the switch-off.
    #[allow(clippy::too_many_arguments)]
    pub fn run(
        &self,
        rho0: &Operator,
        envelope: &DriveEnvelope,
        t_final: f64,
        dt: f64,
        record_stride: usize,
        dissipative_charging: bool,
        target: &StateVector,
    ) -> Result<Trajectory> {
        let n = self.liouvillian.dim;
        if rho0.nrows() != n || rho0.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rho0.nrows(),
            });
        }
        let t_off = if envelope.is_active() {
            envelope.cutoff(self.omega).min(t_final)
        } else {
            0.0
        };
        let mut traj = Trajectory {
            times: Vec::new(),
            energy: Vec::new(),
            fidelity: Vec::new(),
            populations: Vec::new(),
            trace_error: Vec::new(),
            min_eigenvalue: Vec::new(),
            drive_off_time: t_off,
            final_state: None,
        };
        let mut rho = rho0.clone();
        hermitize(&mut rho);
        self.record(&mut traj, 0.0, &rho, target)?;
        let mut rk = Rk4::new(n);
        let mut t = 0.0;
        let segments = [(t_off, true), (t_final, false)];
        for (end, driven) in segments {
            let span = end - t;
            if span <= 0.0 {
                continue;
            }
            let steps = (span / dt - 1e-9).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            let start = t;
            let dissipative = !driven || dissipative_charging;
            for s in 1..=steps {
                let t0 = start + (s - 1) as f64 * h;
                let f = if driven {
                    [
                        envelope.value(t0, self.omega),
                        envelope.value(t0 + 0.5 * h, self.omega),
                        envelope.value(t0 + h, self.omega),
                    ]
                } else {
                    [0.0; 3]
                };
                rk.step(&self.liouvillian, &mut rho, f, h, dissipative);
                hermitize(&mut rho);
                t = start + s as f64 * h;
                if s % record_stride == 0 || s == steps {
                    self.record(&mut traj, t, &rho, target)?;
                }
            }
            t = end;
        }
        traj.final_state = Some(rho);
        Ok(traj)
    }

    fn record(&self, traj: &mut Trajectory, t: f64, rho: &Operator, target: &StateVector) -> Result<()> {
        let trace = rho.trace();
        let trace_err = (trace - ONE).norm();
        let (eigs, _) = eigh(rho);
        let min_eig = eigs.first().copied().unwrap_or(0.0);
        if !trace_err.is_finite() || trace_err > INVARIANT_TOL {
            return Err(Error::Instability {
                t,
                reason: format!("trace error {trace_err:.3e}"),
            });
        }
        if !(min_eig >= -INVARIANT_TOL) {
            return Err(Error::Instability {
                t,
                reason: format!("negative eigenvalue {min_eig:.3e}"),
            });
        }
        let v = &self.eigenvectors;
        let pops = (0..v.ncols())
            .map(|k| {
                let col = v.column(k);
                col.dotc(&(rho * col)).re
            })
            .collect();
        traj.times.push(t);
        traj.energy
            .push(stored_energy(rho, &self.hamiltonian) - self.ground_energy);
        traj.fidelity.push(fidelity(rho, target));
        traj.populations.push(pops);
        traj.trace_error.push(trace_err);
        traj.min_eigenvalue.push(min_eig);
        Ok(())
    }
}

/// Runs a validated configuration end to end.
pub fn evolve(config: &SimulationConfig) -> Result<Trajectory> {
    config.validate()?;
    let analysis = Analysis::new(&config.system, config.gamma)?;
    evolve_with(&analysis, config)
}

/// Same as [`evolve`] with a precomputed analysis of `config.system`.
pub fn evolve_with(analysis: &Analysis, config: &SimulationConfig) -> Result<Trajectory> {
    config.validate()?;
    if analysis.model.spec != config.system || analysis.model.rate.gamma != config.gamma {
        return Err(Error::InvalidConfig(
            "analysis was built for a different system or gamma".into(),
        ));
    }
    let generator = drive_operator(&config.system, &config.drive.phases)?;
    let evolver = Evolver::new(&analysis.model, &generator)?;
    let psi0 = config.initial_state.resolve(analysis)?;
    let target = config.target.resolve(analysis)?;
    evolver.run(
        &pure_state(&psi0),
        &config.drive,
        config.t_final,
        config.dt,
        config.record_stride,
        config.dissipative_charging,
        &target,
    )
}
