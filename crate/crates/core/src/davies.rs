//! Spectral decomposition of the system Hamiltonian and the zero-temperature
//! Davies dissipator built from Bohr-frequency resolved jump operators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, canonical_basis, eigh, ensure_hermitian, fix_phase, max_abs, Operator, StateVector};
use crate::qsys::{collective_lowering, excitation_number, system_hamiltonian, SystemSpec};

/// Relative (to the largest bare frequency) energy clustering tolerance.
pub const DEFAULT_DEGENERACY_REL_TOL: f64 = 1e-9;

/// Jump operators with max-entry norm below this are dropped.
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

const HERMITIAN_TOL: f64 = 1e-12;

pub fn default_degeneracy_tol(spec: &SystemSpec) -> f64 {
    DEFAULT_DEGENERACY_REL_TOL * spec.omega_scale()
}

/// A cluster of eigenvalues closer than the degeneracy tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub energy: f64,
    /// Indices into the eigenstate list, ascending.
    pub states: Vec<usize>,
}

impl Level {
    pub fn multiplicity(&self) -> usize {
        self.states.len()
    }
}

/// Eigenstates of a Hermitian operator sorted by energy and grouped into
/// degenerate levels.
///
/// Within a degenerate level the basis is canonical (see
/// [`canonical_basis`]) and every vector carries the phase convention of
/// [`fix_phase`], so the same operator always yields the same eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    energies: Vec<f64>,
    vectors: Operator,
    excitation: Vec<Option<usize>>,
    levels: Vec<Level>,
    level_of: Vec<usize>,
    degeneracy_tol: f64,
}

impl EigenSystem {
    fn assemble(mut entries: Vec<(f64, Option<usize>, StateVector)>, dim: usize, degeneracy_tol: f64) -> Self {
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        // chain clustering of sorted eigenvalues
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for i in 0..entries.len() {
            match clusters.last_mut() {
                Some(cl) if entries[i].0 - entries[*cl.last().unwrap()].0 < degeneracy_tol => cl.push(i),
                _ => clusters.push(vec![i]),
            }
        }

        let mut energies = Vec::with_capacity(entries.len());
        let mut vectors = Operator::zeros(dim, entries.len());
        let mut excitation = Vec::with_capacity(entries.len());
        let mut levels = Vec::with_capacity(clusters.len());
        let mut level_of = vec![0; entries.len()];
        for (li, cluster) in clusters.iter().enumerate() {
            let energy = cluster.iter().map(|&i| entries[i].0).sum::<f64>() / cluster.len() as f64;
            // canonicalize per excitation sector so labels stay exact
            let mut sectors: Vec<Option<usize>> = cluster.iter().map(|&i| entries[i].1).collect();
            sectors.dedup();
            let mut states = Vec::with_capacity(cluster.len());
            for sector in sectors {
                let members: Vec<StateVector> = cluster
                    .iter()
                    .filter(|&&i| entries[i].1 == sector)
                    .map(|&i| entries[i].2.clone())
                    .collect();
                let basis = if members.len() > 1 {
                    canonical_basis(&members)
                } else {
                    members
                };
                for mut v in basis {
                    fix_phase(&mut v);
                    let k = energies.len();
                    vectors.set_column(k, &v);
                    energies.push(energy);
                    excitation.push(sector);
                    level_of[k] = li;
                    states.push(k);
                }
            }
            levels.push(Level { energy, states });
        }
        Self {
            energies,
            vectors,
            excitation,
            levels,
            level_of,
            degeneracy_tol,
        }
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, k: usize) -> f64 {
        self.energies[k]
    }

    /// Eigenvectors as columns, in state order.
    pub fn vectors(&self) -> &Operator {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> StateVector {
        self.vectors.column(k).into_owned()
    }

    /// Excitation number of state `k`, when labels are available.
    pub fn excitation(&self, k: usize) -> Option<usize> {
        self.excitation[k]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level_of(&self, k: usize) -> usize {
        self.level_of[k]
    }

    pub fn degeneracy_tol(&self) -> f64 {
        self.degeneracy_tol
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies.first().copied().unwrap_or(0.0)
    }

    /// Eigenvectors of level `l` as the columns of a `dim x multiplicity` matrix.
    pub fn level_basis(&self, l: usize) -> Operator {
        let states = &self.levels[l].states;
        Operator::from_fn(self.dim(), states.len(), |r, j| self.vectors[(r, states[j])])
    }

    pub fn projector(&self, l: usize) -> Operator {
        let v = self.level_basis(l);
        &v * v.adjoint()
    }

    /// States of excitation manifold `n`, ascending in energy.
    pub fn manifold(&self, n: usize) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.excitation[k] == Some(n)).collect()
    }

    /// Distinct excitation labels present, ascending.
    pub fn manifold_labels(&self) -> Vec<usize> {
        let mut labels: Vec<usize> = self.excitation.iter().flatten().copied().collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    /// `sum_eps eps Pi_eps`.
    pub fn reconstruct(&self) -> Operator {
        let d = Operator::from_diagonal(&nalgebra::DVector::from_iterator(
            self.len(),
            self.energies.iter().map(|&e| c(e)),
        ));
        &self.vectors * d * self.vectors.adjoint()
    }

    /// Attaches excitation labels from the expectation of a number operator.
    /// Fails when a state is not within `1e-8` of an integer.
    pub fn with_excitation_labels(mut self, number: &Operator) -> Result<Self> {
        for k in 0..self.len() {
            let v = self.vector(k);
            let n = v.dotc(&(number * &v)).re;
            let rounded = n.round();
            if (n - rounded).abs() > 1e-8 || rounded < 0.0 {
                return Err(Error::NonIntegerExcitation(k));
            }
            self.excitation[k] = Some(rounded as usize);
        }
        Ok(self)
    }
}

/// Diagonalizes a Hermitian operator and clusters eigenvalues closer than
/// `degeneracy_tol` into levels.
pub fn spectral_decompose(h: &Operator, degeneracy_tol: f64) -> Result<EigenSystem> {
    ensure_hermitian(h, HERMITIAN_TOL)?;
    let (values, vecs) = eigh(h);
    let entries = values
        .into_iter()
        .enumerate()
        .map(|(i, e)| (e, None, vecs.column(i).into_owned()))
        .collect();
    Ok(EigenSystem::assemble(entries, h.nrows(), degeneracy_tol))
}

/// Like [`spectral_decompose`] but diagonalizes each sector of a conserved,
/// diagonal number operator separately, so every eigenvector carries an
/// exact excitation label even inside accidental degeneracies across sectors.
pub fn spectral_decompose_conserving(h: &Operator, number: &Operator, degeneracy_tol: f64) -> Result<EigenSystem> {
    ensure_hermitian(h, HERMITIAN_TOL)?;
    let dim = h.nrows();
    if number.nrows() != dim || number.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: number.nrows(),
        });
    }
    let labels: Vec<usize> = (0..dim)
        .map(|i| {
            let n = number[(i, i)].re;
            if (n - n.round()).abs() > 1e-12 || n < -1e-12 {
                Err(Error::InvalidSpec(format!(
                    "number operator entry {n} is not a non-negative integer"
                )))
            } else {
                Ok(n.round() as usize)
            }
        })
        .collect::<Result<_>>()?;
    let scale = max_abs(h).max(1.0);
    for i in 0..dim {
        for j in 0..dim {
            if i != j && number[(i, j)].norm() > 1e-12 {
                return Err(Error::InvalidSpec("number operator must be diagonal".into()));
            }
            if labels[i] != labels[j] && h[(i, j)].norm() > 1e-12 * scale {
                return Err(Error::InvalidSpec(
                    "Hamiltonian does not conserve the excitation number".into(),
                ));
            }
        }
    }
    let mut sectors = labels.clone();
    sectors.sort_unstable();
    sectors.dedup();

    let mut entries = Vec::with_capacity(dim);
    for n in sectors {
        let idx: Vec<usize> = (0..dim).filter(|&i| labels[i] == n).collect();
        let block = Operator::from_fn(idx.len(), idx.len(), |r, s| h[(idx[r], idx[s])]);
        let (values, vecs) = eigh(&block);
        for (col, e) in values.into_iter().enumerate() {
            let mut v = StateVector::zeros(dim);
            for (r, &i) in idx.iter().enumerate() {
                v[i] = vecs[(r, col)];
            }
            entries.push((e, Some(n), v));
        }
    }
    Ok(EigenSystem::assemble(entries, dim, degeneracy_tol))
}

/// `A(Omega)`: the part of the coupling operator that lowers the energy by
/// exactly `Omega`.
#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub bohr_frequency: f64,
    pub matrix: Operator,
    /// Contributing `(upper level, lower level)` pairs.
    pub transitions: Vec<(usize, usize)>,
}

/// One projected piece `Pi_lower L Pi_upper` of the coupling operator.
#[derive(Debug, Clone)]
pub struct BohrComponent {
    pub upper: usize,
    pub lower: usize,
    pub frequency: f64,
    pub matrix: Operator,
}

/// All projected pieces `Pi_a L Pi_b` over ordered level pairs, including
/// zero and negative frequencies.
pub fn bohr_components(es: &EigenSystem, l: &Operator) -> Vec<BohrComponent> {
    let n_levels = es.levels().len();
    let bases: Vec<Operator> = (0..n_levels).map(|li| es.level_basis(li)).collect();
    let pairs: Vec<(usize, usize)> = (0..n_levels).flat_map(|b| (0..n_levels).map(move |a| (b, a))).collect();
    pairs
        .par_iter()
        .map(|&(upper, lower)| {
            let vb = &bases[upper];
            let va = &bases[lower];
            let inner = va.adjoint() * l * vb;
            BohrComponent {
                upper,
                lower,
                frequency: es.levels()[upper].energy - es.levels()[lower].energy,
                matrix: va * inner * vb.adjoint(),
            }
        })
        .collect()
}

/// Groups the positive-frequency pieces of `l` into jump operators, merging
/// Bohr frequencies that agree within the eigensystem's degeneracy tolerance.
/// Output is sorted by frequency.
pub fn jump_operators(es: &EigenSystem, l: &Operator, zero_tol: f64) -> Vec<JumpOperator> {
    let tol = es.degeneracy_tol();
    let mut positive: Vec<BohrComponent> = bohr_components(es, l)
        .into_iter()
        .filter(|comp| comp.frequency > tol)
        .collect();
    positive.sort_by(|a, b| {
        a.frequency
            .total_cmp(&b.frequency)
            .then(a.upper.cmp(&b.upper))
            .then(a.lower.cmp(&b.lower))
    });

    let mut groups: Vec<Vec<BohrComponent>> = Vec::new();
    for comp in positive {
        match groups.last_mut() {
            Some(g) if comp.frequency - g.last().unwrap().frequency < tol => g.push(comp),
            _ => groups.push(vec![comp]),
        }
    }

    groups
        .into_iter()
        .filter_map(|group| {
            let dim = es.dim();
            let mut matrix = Operator::zeros(dim, dim);
            let mut transitions = Vec::new();
            let mut weight = 0.0;
            let mut weighted_freq = 0.0;
            for comp in &group {
                let norm = max_abs(&comp.matrix);
                if norm >= zero_tol {
                    transitions.push((comp.upper, comp.lower));
                    weight += 1.0;
                    weighted_freq += comp.frequency;
                }
                matrix += &comp.matrix;
            }
            if transitions.is_empty() || max_abs(&matrix) < zero_tol {
                return None;
            }
            Some(JumpOperator {
                bohr_frequency: weighted_freq / weight,
                matrix,
                transitions,
            })
        })
        .collect()
}

/// Pairs of distinct nonzero transitions whose Bohr frequencies lie within
/// `window` of each other. Such near-coincidences make the secular
/// approximation fragile.
pub fn near_coincident_frequencies(es: &EigenSystem, l: &Operator, window: f64, zero_tol: f64) -> Vec<(f64, f64)> {
    let mut freqs: Vec<f64> = bohr_components(es, l)
        .into_iter()
        .filter(|comp| comp.frequency > es.degeneracy_tol() && max_abs(&comp.matrix) >= zero_tol)
        .map(|comp| comp.frequency)
        .collect();
    freqs.sort_by(f64::total_cmp);
    freqs
        .windows(2)
        .filter(|w| w[1] - w[0] < window)
        .map(|w| (w[0], w[1]))
        .collect()
}

/// Bath spectral function `Gamma(Omega)` evaluated at positive Bohr
/// frequencies.
pub trait SpectralDensity: Send + Sync {
    fn rate(&self, omega: f64) -> f64;
}

/// Frequency-independent rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatRate {
    pub gamma: f64,
}

impl FlatRate {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidSpec(format!("gamma = {gamma} must be >= 0")));
        }
        Ok(Self { gamma })
    }
}

impl SpectralDensity for FlatRate {
    fn rate(&self, _omega: f64) -> f64 {
        self.gamma
    }
}

/// Precomputed dissipator: the jump operators with their rates and the
/// summed decay operator `K = sum_Omega Gamma(Omega) A^dagger A`.
#[derive(Debug, Clone)]
pub struct DaviesDissipator {
    terms: Vec<(f64, Operator, Operator)>,
    decay: Operator,
    dim: usize,
}

impl DaviesDissipator {
    pub fn new(jumps: &[JumpOperator], rate: &dyn SpectralDensity, dim: usize) -> Self {
        let mut decay = Operator::zeros(dim, dim);
        let terms = jumps
            .iter()
            .map(|j| {
                let g = rate.rate(j.bohr_frequency);
                let adj = j.matrix.adjoint();
                decay += &adj * &j.matrix * c(g);
                (g, j.matrix.clone(), adj)
            })
            .collect();
        Self { terms, decay, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `sum_Omega Gamma A^dagger A`.
    pub fn decay_operator(&self) -> &Operator {
        &self.decay
    }

    /// `(rate, A, A^dagger)` per channel.
    pub fn terms(&self) -> &[(f64, Operator, Operator)] {
        &self.terms
    }

    pub fn apply(&self, rho: &Operator) -> Result<Operator> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rho.nrows(),
            });
        }
        let mut out = -(&self.decay * rho + rho * &self.decay) * c(0.5);
        for (g, a, adj) in &self.terms {
            if *g != 0.0 {
                out += a * rho * adj * c(*g);
            }
        }
        Ok(out)
    }
}

/// `D[rho] = sum_{Omega > 0} Gamma(Omega) (A rho A^dagger - {A^dagger A, rho} / 2)`.
pub fn dissipator(rho: &Operator, jumps: &[JumpOperator], rate: &dyn SpectralDensity) -> Result<Operator> {
    let dim = jumps.first().map_or(rho.nrows(), |j| j.matrix.nrows());
    DaviesDissipator::new(jumps, rate, dim).apply(rho)
}

/// Transition rates between eigenstates,
/// `flux[(k, m)] = sum_Omega Gamma(Omega) |<phi_m|A(Omega)|phi_k>|^2`.
/// Row `k` is the source state.
pub fn flux_matrix(es: &EigenSystem, jumps: &[JumpOperator], rate: &dyn SpectralDensity) -> nalgebra::DMatrix<f64> {
    let n = es.len();
    let mut flux = nalgebra::DMatrix::<f64>::zeros(n, n);
    let v = es.vectors();
    for jump in jumps {
        let g = rate.rate(jump.bohr_frequency);
        let elements = v.adjoint() * &jump.matrix * v;
        for k in 0..n {
            for m in 0..n {
                flux[(k, m)] += g * elements[(m, k)].norm_sqr();
            }
        }
    }
    flux
}

/// Every structural ingredient of the open battery model, built once.
#[derive(Debug, Clone)]
pub struct DaviesModel {
    pub spec: SystemSpec,
    pub hamiltonian: Operator,
    pub lowering: Operator,
    pub number: Operator,
    pub eigensystem: EigenSystem,
    pub jumps: Vec<JumpOperator>,
    pub rate: FlatRate,
}

impl DaviesModel {
    pub fn new(spec: &SystemSpec, gamma: f64) -> Result<Self> {
        Self::with_tolerance(spec, gamma, default_degeneracy_tol(spec))
    }

    pub fn with_tolerance(spec: &SystemSpec, gamma: f64, degeneracy_tol: f64) -> Result<Self> {
        spec.validate()?;
        let rate = FlatRate::new(gamma)?;
        let hamiltonian = system_hamiltonian(spec);
        let lowering = collective_lowering(spec);
        let number = excitation_number(spec);
        let eigensystem = spectral_decompose_conserving(&hamiltonian, &number, degeneracy_tol)?;
        let jumps = jump_operators(&eigensystem, &lowering, DEFAULT_ZERO_TOL);
        Ok(Self {
            spec: spec.clone(),
            hamiltonian,
            lowering,
            number,
            eigensystem,
            jumps,
            rate,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn dissipator(&self) -> DaviesDissipator {
        DaviesDissipator::new(&self.jumps, &self.rate, self.dim())
    }

    pub fn flux(&self) -> nalgebra::DMatrix<f64> {
        flux_matrix(&self.eigensystem, &self.jumps, &self.rate)
    }

    /// Levels with more than one state; state-level classification inside
    /// them depends on the canonical basis choice.
    pub fn degenerate_levels(&self) -> Vec<&Level> {
        self.eigensystem
            .levels()
            .iter()
            .filter(|l| l.multiplicity() > 1)
            .collect()
    }
}
