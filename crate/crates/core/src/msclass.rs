//! Morris-Shore analysis of the dissipative blocks between excitation
//! manifolds, and the dark / funnel / bright taxonomy of eigenstates.
//!
//! A dissipative block is the matrix of the jump operators between an upper
//! manifold `N` and the manifold `N - 1` below it. Its singular value
//! decomposition `M = U S V^dagger` splits the block into independent decay
//! channels (columns of `V` paired with columns of `U`) plus null vectors,
//! the spectator states, which the block cannot lower at all.
//!
//! State classes come from the eigenstate flux matrix:
//!
//! * `Ground`: the lowest level.
//! * `Dark`: no outgoing flux.
//! * `Funnel`: every significant decay branch ends on a dark or funnel state,
//!   so the whole decay cascade terminates in the protected manifold.
//! * `Bright`: anything else; the cascade reaches the ground state.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::davies::{DaviesModel, EigenSystem, JumpOperator, DEFAULT_ZERO_TOL};
use crate::error::{Error, Result};
use crate::linalg::{
    c, canonical_basis, complete_basis, fix_phase, fix_phase_pair, inner, max_abs, Operator, StateVector, C64,
};
use crate::qsys::SystemSpec;

/// Null-space cutoff relative to the largest singular value.
pub const DEFAULT_SIGMA_REL_TOL: f64 = 1e-8;
/// Minimum branching ratio a decay edge needs to influence classification.
pub const DEFAULT_BRANCH_TOL: f64 = 1e-6;
/// Dark-state outflux cutoff relative to the bath rate.
pub const DEFAULT_RATE_REL_TOL: f64 = 1e-9;

/// Matrix of the jump operators from an upper to a lower manifold; rows are
/// lower states, columns upper states.
#[derive(Debug, Clone)]
pub struct DissipativeBlock {
    pub upper_n: usize,
    pub lower_n: usize,
    /// Eigenstate indices of the bases, empty for a custom basis.
    pub upper_states: Vec<usize>,
    pub lower_states: Vec<usize>,
    pub upper_basis: Vec<StateVector>,
    pub lower_basis: Vec<StateVector>,
    pub matrix: DMatrix<C64>,
}

impl DissipativeBlock {
    /// Block in arbitrary orthonormal bases of the two manifolds:
    /// `M_ij = sum_Omega <phi_i|A(Omega)|psi_j>`.
    pub fn from_basis(
        jumps: &[JumpOperator],
        upper_n: usize,
        lower_n: usize,
        upper_basis: Vec<StateVector>,
        lower_basis: Vec<StateVector>,
    ) -> Result<Self> {
        if upper_n <= lower_n {
            return Err(Error::InvalidManifolds {
                upper: upper_n,
                lower: lower_n,
            });
        }
        if upper_basis.is_empty() {
            return Err(Error::EmptyManifold(upper_n));
        }
        if lower_basis.is_empty() {
            return Err(Error::EmptyManifold(lower_n));
        }
        let dim = upper_basis[0].len();
        let mut total = Operator::zeros(dim, dim);
        for j in jumps {
            total += &j.matrix;
        }
        let matrix = DMatrix::from_fn(lower_basis.len(), upper_basis.len(), |i, j| {
            inner(&lower_basis[i], &(&total * &upper_basis[j]))
        });
        Ok(Self {
            upper_n,
            lower_n,
            upper_states: Vec::new(),
            lower_states: Vec::new(),
            upper_basis,
            lower_basis,
            matrix,
        })
    }

    pub fn decompose(&self, sigma_rel_tol: f64) -> MsDecomposition {
        ms_decompose(&self.matrix, sigma_rel_tol)
    }

    /// Full-space vector for block coordinates over the upper basis.
    pub fn upper_vector(&self, coefficients: &StateVector) -> StateVector {
        let dim = self.upper_basis[0].len();
        self.upper_basis
            .iter()
            .zip(coefficients.iter())
            .fold(StateVector::zeros(dim), |acc, (b, z)| acc + b * *z)
    }
}

/// Block between manifolds `upper_n` and `lower_n` in the eigenbasis,
/// states ordered by energy.
pub fn build_block(
    es: &EigenSystem,
    jumps: &[JumpOperator],
    upper_n: usize,
    lower_n: usize,
) -> Result<DissipativeBlock> {
    if upper_n <= lower_n {
        return Err(Error::InvalidManifolds {
            upper: upper_n,
            lower: lower_n,
        });
    }
    let upper_states = es.manifold(upper_n);
    let lower_states = es.manifold(lower_n);
    let upper_basis = upper_states.iter().map(|&k| es.vector(k)).collect();
    let lower_basis = lower_states.iter().map(|&k| es.vector(k)).collect();
    let mut block = DissipativeBlock::from_basis(jumps, upper_n, lower_n, upper_basis, lower_basis)?;
    block.upper_states = upper_states;
    block.lower_states = lower_states;
    Ok(block)
}

/// `M = U S V^dagger` with a deterministic gauge.
#[derive(Debug, Clone)]
pub struct MsDecomposition {
    /// Target-state rotation of the lower manifold (`n_lower x n_lower`).
    pub u: Operator,
    /// Descending, `min(n_lower, n_upper)` entries.
    pub singular_values: Vec<f64>,
    /// Source-state rotation of the upper manifold (`n_upper x n_upper`).
    pub v: Operator,
    pub threshold: f64,
    /// Columns of `V` annihilated by the block.
    pub null_vectors: Vec<StateVector>,
}

impl MsDecomposition {
    pub fn rank(&self) -> usize {
        self.singular_values.iter().filter(|&&s| s > self.threshold).count()
    }

    pub fn reconstruct(&self) -> Operator {
        let (nb, na) = (self.u.nrows(), self.v.nrows());
        let mut sigma = Operator::zeros(nb, na);
        for (i, s) in self.singular_values.iter().enumerate() {
            sigma[(i, i)] = c(*s);
        }
        &self.u * sigma * self.v.adjoint()
    }
}

/// Singular value decomposition of a dissipative block.
///
/// Gauge: right singular vectors sharing a singular value (including the
/// whole null space) are replaced by the canonical basis of their span,
/// each `v_i` gets the largest-component-positive phase, and
/// `u_i = M v_i / sigma_i`. Left vectors of vanishing singular values are
/// an orthonormal completion.
pub fn ms_decompose(m: &DMatrix<C64>, sigma_rel_tol: f64) -> MsDecomposition {
    let (nb, na) = m.shape();
    let k = nb.min(na);
    if na == 0 || nb == 0 {
        return MsDecomposition {
            u: Operator::identity(nb, nb),
            singular_values: Vec::new(),
            v: Operator::identity(na, na),
            threshold: 0.0,
            null_vectors: (0..na)
                .map(|j| Operator::identity(na, na).column(j).into_owned())
                .collect(),
        };
    }

    // pad with zero rows so the SVD returns a full set of right vectors
    let rows = nb.max(na);
    let mut padded = Operator::zeros(rows, na);
    padded.view_mut((0, 0), (nb, na)).copy_from(m);
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..na).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut sigmas: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut vs: Vec<StateVector> = order.iter().map(|&i| v_t.row(i).adjoint().into_owned()).collect();
    // only the first min(nb, na) values can be nonzero
    for s in sigmas.iter_mut().skip(k) {
        *s = 0.0;
    }

    let sigma_max = sigmas[0];
    let threshold = sigma_rel_tol * sigma_max;
    let is_null = |s: f64| s <= threshold;
    let cluster_tol = 1e-10 * sigma_max.max(1.0);

    // canonical gauge inside clusters of equal singular values
    let mut start = 0;
    while start < na {
        let mut end = start + 1;
        if is_null(sigmas[start]) {
            end = na;
        } else {
            while end < na && !is_null(sigmas[end]) && sigmas[start] - sigmas[end] < cluster_tol {
                end += 1;
            }
        }
        if end - start > 1 {
            let canon = canonical_basis(&vs[start..end]);
            vs.splice(start..end, canon);
        }
        start = end;
    }

    let mut us: Vec<StateVector> = Vec::with_capacity(nb);
    for i in 0..na {
        if is_null(sigmas[i]) {
            fix_phase(&mut vs[i]);
            continue;
        }
        let mut u = (m * &vs[i]) / c(sigmas[i]);
        fix_phase_pair(&mut vs[i], &mut u);
        us.push(u);
    }
    let rank = us.len();
    let u_full = complete_basis(&us, nb);

    let null_vectors = vs[rank..].to_vec();
    let mut v = Operator::zeros(na, na);
    for (j, col) in vs.iter().enumerate() {
        v.set_column(j, col);
    }
    let mut u = Operator::zeros(nb, nb);
    for (j, col) in u_full.iter().enumerate() {
        u.set_column(j, col);
    }
    sigmas.truncate(k);
    MsDecomposition {
        u,
        singular_values: sigmas,
        v,
        threshold,
        null_vectors,
    }
}

/// A null vector of one block, expressed in the full Hilbert space.
#[derive(Debug, Clone)]
pub struct SpectatorState {
    pub upper_n: usize,
    /// Coordinates over the block's upper basis.
    pub coefficients: StateVector,
    pub vector: StateVector,
    /// `max_k |<phi_k|s>|^2` over Hamiltonian eigenstates.
    pub max_eigenstate_overlap: f64,
    pub nearest_eigenstate: usize,
}

pub fn spectator_states(block: &DissipativeBlock, dec: &MsDecomposition, es: &EigenSystem) -> Vec<SpectatorState> {
    dec.null_vectors
        .iter()
        .map(|coeffs| {
            let mut coefficients = coeffs.clone();
            let mut vector = block.upper_vector(&coefficients);
            fix_phase_pair(&mut vector, &mut coefficients);
            let (nearest, overlap) = (0..es.len())
                .map(|k| (k, es.vector(k).dotc(&vector).norm_sqr()))
                .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            SpectatorState {
                upper_n: block.upper_n,
                coefficients,
                vector,
                max_eigenstate_overlap: overlap,
                nearest_eigenstate: nearest,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateClass {
    Ground,
    Dark,
    Funnel,
    Bright,
}

impl std::fmt::Display for StateClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StateClass::Ground => "ground",
            StateClass::Dark => "dark",
            StateClass::Funnel => "funnel",
            StateClass::Bright => "bright",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyTolerances {
    /// Outflux at or below this counts as no decay.
    pub rate_tol: f64,
    /// Branches below this fraction of the outflux do not affect the class.
    pub branch_tol: f64,
    /// Energies closer than this are treated as equal.
    pub energy_tol: f64,
}

impl ClassifyTolerances {
    pub fn for_model(model: &DaviesModel) -> Self {
        Self {
            rate_tol: DEFAULT_RATE_REL_TOL * model.rate.gamma,
            branch_tol: DEFAULT_BRANCH_TOL,
            energy_tol: model.eigensystem.degeneracy_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub index: usize,
    pub branching: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub index: usize,
    pub energy: f64,
    #[serde(rename = "n")]
    pub excitation: Option<usize>,
    pub class: StateClass,
    /// Total outflux.
    pub gamma_f: f64,
    /// Energy above the ground level.
    pub e_f: f64,
    pub targets: Vec<Target>,
    /// Branches below the branching tolerance, reported but ignored.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub minor_targets: Vec<Target>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEdge {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
    pub branching: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub index: usize,
    pub energy: f64,
    pub excitation: Option<usize>,
    pub class: StateClass,
}

/// Eigenstates and energy-lowering decay edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayGraph {
    /// Sorted by ascending energy (a topological order of the edges).
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<DecayEdge>,
}

impl DecayGraph {
    pub fn outgoing(&self, k: usize) -> impl Iterator<Item = &DecayEdge> {
        self.edges.iter().filter(move |e| e.from == k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub states: Vec<StateReport>,
    pub graph: DecayGraph,
    pub tolerances: ClassifyTolerances,
}

impl Classification {
    pub fn class(&self, k: usize) -> StateClass {
        self.states[k].class
    }

    pub fn of_class(&self, class: StateClass) -> Vec<usize> {
        self.states
            .iter()
            .filter(|s| s.class == class)
            .map(|s| s.index)
            .collect()
    }

    /// Probability of ending in each non-decaying state when starting in
    /// `k`, following every edge of the decay graph.
    pub fn terminal_distribution(&self, k: usize) -> BTreeMap<usize, f64> {
        let mut mass: BTreeMap<usize, f64> = BTreeMap::new();
        let mut out = BTreeMap::new();
        mass.insert(k, 1.0);
        // highest energy first: every edge points to an already-later node
        let mut order: Vec<&GraphNode> = self.graph.nodes.iter().collect();
        order.reverse();
        for node in order {
            let Some(p) = mass.remove(&node.index) else {
                continue;
            };
            let edges: Vec<&DecayEdge> = self.graph.outgoing(node.index).collect();
            if edges.is_empty() {
                *out.entry(node.index).or_insert(0.0) += p;
            } else {
                for e in edges {
                    *mass.entry(e.to).or_insert(0.0) += p * e.branching;
                }
            }
        }
        out
    }

    /// True when every decay path from `k` ends on a dark state.
    pub fn terminates_in_dark(&self, k: usize) -> bool {
        let mut stack = vec![k];
        while let Some(i) = stack.pop() {
            let mut any = false;
            for e in self.graph.outgoing(i) {
                any = true;
                stack.push(e.to);
            }
            if !any && self.class(i) != StateClass::Dark {
                return false;
            }
        }
        true
    }
}

/// Classifies eigenstates from their energies and flux matrix (rows are
/// sources). Output is indexed like the input.
pub fn classify(
    energies: &[f64],
    excitation: &[Option<usize>],
    flux: &DMatrix<f64>,
    tol: &ClassifyTolerances,
) -> Result<Classification> {
    let n = energies.len();
    if flux.nrows() != n || flux.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: flux.nrows(),
        });
    }
    if excitation.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: excitation.len(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]).then(a.cmp(&b)));
    let e_min = order.first().map(|&k| energies[k]).unwrap_or(0.0);

    let mut edges = Vec::new();
    let mut outflux = vec![0.0; n];
    for k in 0..n {
        outflux[k] = flux.row(k).sum();
        for m in 0..n {
            let rate = flux[(k, m)];
            if rate > tol.rate_tol {
                if energies[m] >= energies[k] - tol.energy_tol {
                    return Err(Error::CyclicFlux { from: k, to: m });
                }
                edges.push(DecayEdge {
                    from: k,
                    to: m,
                    rate,
                    branching: rate / outflux[k],
                });
            }
        }
    }
    // rows were summed lazily above; recompute branching with final totals
    for e in &mut edges {
        e.branching = e.rate / outflux[e.from];
    }
    edges.sort_by(|a, b| {
        energies[a.from]
            .total_cmp(&energies[b.from])
            .then(a.from.cmp(&b.from))
            .then(energies[a.to].total_cmp(&energies[b.to]))
            .then(a.to.cmp(&b.to))
    });

    let mut class: Vec<Option<StateClass>> = vec![None; n];
    for &k in &order {
        let cls = if energies[k] - e_min <= tol.energy_tol {
            StateClass::Ground
        } else if outflux[k] <= tol.rate_tol {
            StateClass::Dark
        } else {
            let protected = edges
                .iter()
                .filter(|e| e.from == k && e.branching >= tol.branch_tol)
                .all(|e| matches!(class[e.to], Some(StateClass::Dark | StateClass::Funnel)));
            if protected {
                StateClass::Funnel
            } else {
                StateClass::Bright
            }
        };
        class[k] = Some(cls);
    }
    let class: Vec<StateClass> = class.into_iter().map(|c| c.expect("all states visited")).collect();

    let states = (0..n)
        .map(|k| {
            let (targets, minor): (Vec<_>, Vec<_>) = edges
                .iter()
                .filter(|e| e.from == k)
                .map(|e| Target {
                    index: e.to,
                    branching: e.branching,
                })
                .partition(|t| t.branching >= tol.branch_tol);
            StateReport {
                index: k,
                energy: energies[k],
                excitation: excitation[k],
                class: class[k],
                gamma_f: outflux[k],
                e_f: energies[k] - e_min,
                targets,
                minor_targets: minor,
            }
        })
        .collect();
    let nodes = order
        .iter()
        .map(|&k| GraphNode {
            index: k,
            energy: energies[k],
            excitation: excitation[k],
            class: class[k],
        })
        .collect();
    Ok(Classification {
        states,
        graph: DecayGraph { nodes, edges },
        tolerances: *tol,
    })
}

/// Total outflux `Gamma_F` of state `k`.
pub fn effective_decay_rate(k: usize, flux: &DMatrix<f64>) -> f64 {
    flux.row(k).sum()
}

/// `E_F = <phi_k|H_S|phi_k> - E_gs`.
pub fn stored_energy_of_state(k: usize, es: &EigenSystem) -> f64 {
    es.energy(k) - es.ground_energy()
}

/// Closed-form two-qutrit eigenstates in the product basis (index `3 n_A + n_B`).
#[derive(Debug, Clone)]
pub struct TwoQutritReference {
    pub ground: StateVector,
    /// `(|10> - |01>)/sqrt 2`, energy `omega - J`.
    pub d1: StateVector,
    /// `(|10> + |01>)/sqrt 2`, energy `omega + J`.
    pub b1: StateVector,
    /// `(|20> - |02>)/sqrt 2`, energy `2 omega - alpha`.
    pub a2: StateVector,
    /// `(|20> + |02>)/sqrt 2`; hybridizes with `|11>`.
    pub s2: StateVector,
    pub e_plus: StateVector,
    pub e_minus: StateVector,
    /// Mixing angle with `tan 2 theta = 4 J / alpha`.
    pub theta: f64,
    pub energy_d1: f64,
    pub energy_b1: f64,
    pub energy_a2: f64,
    pub energy_plus: f64,
    pub energy_minus: f64,
}

/// Analytic eigenstates of two identical exchange-coupled qutrits.
///
/// The `{S2, |11>}` sector has eigenvectors
/// `E+ = sin(theta) S2 + cos(theta) |11>` and
/// `E- = cos(theta) S2 - sin(theta) |11>` with `tan 2 theta = 4 J / alpha`
/// and energies `2 omega - alpha / 2 +- sqrt(alpha^2 + 16 J^2) / 2`.
pub fn analytic_two_qutrit(omega: f64, alpha: f64, coupling_j: f64) -> TwoQutritReference {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let basis = |na: usize, nb: usize| {
        let mut v = StateVector::zeros(9);
        v[3 * na + nb] = c(1.0);
        v
    };
    let d1 = (basis(1, 0) - basis(0, 1)) * c(s);
    let b1 = (basis(1, 0) + basis(0, 1)) * c(s);
    let a2 = (basis(2, 0) - basis(0, 2)) * c(s);
    let s2 = (basis(2, 0) + basis(0, 2)) * c(s);
    let one_one = basis(1, 1);
    let theta = 0.5 * (4.0 * coupling_j).atan2(alpha);
    let e_plus = &s2 * c(theta.sin()) + &one_one * c(theta.cos());
    let e_minus = &s2 * c(theta.cos()) - &one_one * c(theta.sin());
    let root = (alpha * alpha + 16.0 * coupling_j * coupling_j).sqrt();
    TwoQutritReference {
        ground: basis(0, 0),
        d1,
        b1,
        a2,
        s2,
        e_plus,
        e_minus,
        theta,
        energy_d1: omega - coupling_j,
        energy_b1: omega + coupling_j,
        energy_a2: 2.0 * omega - alpha,
        energy_plus: 2.0 * omega - alpha / 2.0 + root / 2.0,
        energy_minus: 2.0 * omega - alpha / 2.0 - root / 2.0,
    }
}

/// How far the symmetric `N = 2` eigenstate `(1, x, 1)` sits from the
/// spectator `(1, -sqrt 2, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectatorDeviation {
    /// Negative root of `sqrt2 J x^2 - alpha x - 2 sqrt2 J = 0`.
    pub x_exact: f64,
    /// `-sqrt2 + (sqrt2 / 4)(alpha / J)`; `None` at `J = 0`.
    pub x_approx: Option<f64>,
    /// `|<spectator|psi(x_exact)>|^2`.
    pub overlap: f64,
    /// Set when `J = 0`: the eigenstates are the bare `S2` and `|11>`.
    pub uncoupled: bool,
}

pub fn spectator_eigenstate_deviation(omega: f64, alpha: f64, coupling_j: f64) -> Result<SpectatorDeviation> {
    if !(omega > 0.0) || !(alpha >= 0.0) || !(coupling_j >= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "need omega > 0, alpha >= 0, J >= 0 (got {omega}, {alpha}, {coupling_j})"
        )));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let uncoupled = coupling_j == 0.0;
    // the roots multiply to -2; this form avoids cancellation for small J
    let x_exact = if uncoupled && alpha == 0.0 {
        0.0
    } else {
        -4.0 * sqrt2 * coupling_j / (alpha + (alpha * alpha + 16.0 * coupling_j * coupling_j).sqrt())
    };
    let x_approx = (!uncoupled).then(|| -sqrt2 + sqrt2 / 4.0 * alpha / coupling_j);
    let overlap = (2.0 - sqrt2 * x_exact).powi(2) / (4.0 * (2.0 + x_exact * x_exact));
    Ok(SpectatorDeviation {
        x_exact,
        x_approx,
        overlap,
        uncoupled,
    })
}

/// One `(N, N - 1)` block with its decomposition and spectators.
#[derive(Debug, Clone)]
pub struct BlockAnalysis {
    pub block: DissipativeBlock,
    pub decomposition: MsDecomposition,
    pub spectators: Vec<SpectatorState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisTolerances {
    pub classify: ClassifyTolerances,
    pub sigma_rel_tol: f64,
}

impl AnalysisTolerances {
    pub fn for_model(model: &DaviesModel) -> Self {
        Self {
            classify: ClassifyTolerances::for_model(model),
            sigma_rel_tol: DEFAULT_SIGMA_REL_TOL,
        }
    }
}

/// Full dissipative analysis of a system: flux, taxonomy and per-block
/// Morris-Shore decompositions.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub model: DaviesModel,
    pub flux: DMatrix<f64>,
    pub classification: Classification,
    pub blocks: Vec<BlockAnalysis>,
    pub tolerances: AnalysisTolerances,
}

impl Analysis {
    pub fn new(spec: &SystemSpec, gamma: f64) -> Result<Self> {
        let model = DaviesModel::new(spec, gamma)?;
        let tol = AnalysisTolerances::for_model(&model);
        Self::from_model(model, tol)
    }

    pub fn from_model(model: DaviesModel, tolerances: AnalysisTolerances) -> Result<Self> {
        let es = &model.eigensystem;
        let flux = model.flux();
        let excitation: Vec<Option<usize>> = (0..es.len()).map(|k| es.excitation(k)).collect();
        let classification = classify(es.energies(), &excitation, &flux, &tolerances.classify)?;
        let labels = es.manifold_labels();
        let pairs: Vec<usize> = labels
            .iter()
            .copied()
            .filter(|&n| n > 0 && labels.contains(&(n - 1)))
            .collect();
        let blocks = pairs
            .par_iter()
            .map(|&n| -> Result<Option<BlockAnalysis>> {
                let block = build_block(es, &model.jumps, n, n - 1)?;
                if max_abs(&block.matrix) < DEFAULT_ZERO_TOL {
                    return Ok(None);
                }
                let decomposition = block.decompose(tolerances.sigma_rel_tol);
                let spectators = spectator_states(&block, &decomposition, es);
                Ok(Some(BlockAnalysis {
                    block,
                    decomposition,
                    spectators,
                }))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        Ok(Self {
            model,
            flux,
            classification,
            blocks,
            tolerances,
        })
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        &self.model.eigensystem
    }

    /// Lowest-energy dark state, if any; the single-excitation dark state
    /// whenever one exists.
    pub fn dark_state(&self) -> Option<usize> {
        self.classification
            .of_class(StateClass::Dark)
            .into_iter()
            .min_by(|&a, &b| self.eigensystem().energy(a).total_cmp(&self.eigensystem().energy(b)))
    }

    /// Highest-energy funnel state that decays in a single step into dark
    /// states only.
    pub fn one_step_funnel(&self) -> Option<usize> {
        self.classification
            .of_class(StateClass::Funnel)
            .into_iter()
            .filter(|&k| {
                self.classification.states[k]
                    .targets
                    .iter()
                    .all(|t| self.classification.class(t.index) == StateClass::Dark)
            })
            .max_by(|&a, &b| self.eigensystem().energy(a).total_cmp(&self.eigensystem().energy(b)))
    }

    /// Highest-energy bright state that decays straight to the ground level.
    pub fn one_step_bright(&self) -> Option<usize> {
        self.classification
            .of_class(StateClass::Bright)
            .into_iter()
            .filter(|&k| {
                self.classification.states[k]
                    .targets
                    .iter()
                    .all(|t| self.classification.class(t.index) == StateClass::Ground)
            })
            .max_by(|&a, &b| self.eigensystem().energy(a).total_cmp(&self.eigensystem().energy(b)))
    }

    pub fn report(&self) -> ClassificationReport {
        ClassificationReport {
            system: self.model.spec.clone(),
            gamma: self.model.rate.gamma,
            states: self.classification.states.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockReport {
                    n_upper: b.block.upper_n,
                    n_lower: b.block.lower_n,
                    sigma: b.decomposition.singular_values.clone(),
                    spectators: b
                        .spectators
                        .iter()
                        .map(|s| SpectatorReport {
                            vector: s.vector.iter().map(|z| [z.re, z.im]).collect(),
                            max_overlap: s.max_eigenstate_overlap,
                            nearest_eigenstate: s.nearest_eigenstate,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectatorReport {
    /// Product-basis amplitudes as `[re, im]`.
    pub vector: Vec<[f64; 2]>,
    pub max_overlap: f64,
    pub nearest_eigenstate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub n_upper: usize,
    pub n_lower: usize,
    pub sigma: Vec<f64>,
    pub spectators: Vec<SpectatorReport>,
}

/// Serializable classification output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub system: SystemSpec,
    pub gamma: f64,
    pub states: Vec<StateReport>,
    pub blocks: Vec<BlockReport>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_error;
    use std::f64::consts::SQRT_2;

    fn analysis() -> Analysis {
        Analysis::new(&SystemSpec::two_qutrits(10.0, 0.2, 1.0).unwrap(), 0.1).unwrap()
    }

    fn find(es: &EigenSystem, v: &StateVector) -> usize {
        (0..es.len())
            .find(|&k| es.vector(k).dotc(v).norm() > 0.999)
            .expect("state present in eigenbasis")
    }

    fn paper_m21() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 3, &[c(SQRT_2), c(0.0), c(0.0), c(0.0), c(SQRT_2), c(SQRT_2)])
    }

    #[test]
    fn block_in_symmetry_basis() {
        let a = analysis();
        let r = analytic_two_qutrit(10.0, 0.2, 1.0);
        let one_one = a.model.spec.basis_state(&[1, 1]).unwrap();
        let block = DissipativeBlock::from_basis(
            &a.model.jumps,
            2,
            1,
            vec![r.a2.clone(), r.s2.clone(), one_one],
            vec![r.d1.clone(), r.b1.clone()],
        )
        .unwrap();
        assert!(max_abs(&(block.matrix - paper_m21())) < 1e-10);

        let low = DissipativeBlock::from_basis(&a.model.jumps, 1, 0, vec![r.d1, r.b1], vec![r.ground]).unwrap();
        assert!(max_abs(&(low.matrix - DMatrix::from_row_slice(1, 2, &[c(0.0), c(SQRT_2)]))) < 1e-10);
    }

    #[test]
    fn block_rejects_bad_manifolds() {
        let a = analysis();
        assert!(matches!(
            build_block(a.eigensystem(), &a.model.jumps, 1, 1),
            Err(Error::InvalidManifolds { .. })
        ));
        assert!(matches!(
            build_block(a.eigensystem(), &a.model.jumps, 7, 6),
            Err(Error::EmptyManifold(7))
        ));
    }

    #[test]
    fn decomposition_of_two_to_one_block() {
        let dec = ms_decompose(&paper_m21(), DEFAULT_SIGMA_REL_TOL);
        assert!((dec.singular_values[0] - 2.0).abs() < 1e-12);
        assert!((dec.singular_values[1] - SQRT_2).abs() < 1e-12);
        assert_eq!(dec.null_vectors.len(), 1);
        let null = &dec.null_vectors[0];
        let expected = StateVector::from_vec(vec![c(0.0), c(1.0), c(-1.0)]) / c(SQRT_2);
        assert!((expected.dotc(null).norm() - 1.0).abs() < 1e-12);
        assert!(max_abs(&(dec.reconstruct() - paper_m21())) < 1e-12);
        assert!(unitarity_error(&dec.u) < 1e-12);
        assert!(unitarity_error(&dec.v) < 1e-12);
    }

    #[test]
    fn degenerate_decompositions() {
        let zero = DMatrix::<C64>::zeros(2, 3);
        let dec = ms_decompose(&zero, DEFAULT_SIGMA_REL_TOL);
        assert!(dec.singular_values.iter().all(|&s| s == 0.0));
        assert_eq!(dec.null_vectors.len(), 3);

        let scalar = DMatrix::from_element(1, 1, c(SQRT_2));
        let dec = ms_decompose(&scalar, DEFAULT_SIGMA_REL_TOL);
        assert_eq!(dec.singular_values, vec![SQRT_2]);
        assert!(dec.null_vectors.is_empty());

        // tall block: more lower states than upper ones
        let tall = DMatrix::from_row_slice(3, 1, &[c(1.0), c(0.0), c(1.0)]);
        let dec = ms_decompose(&tall, DEFAULT_SIGMA_REL_TOL);
        assert!((dec.singular_values[0] - SQRT_2).abs() < 1e-12);
        assert!(max_abs(&(dec.reconstruct() - tall)) < 1e-12);
        assert!(unitarity_error(&dec.u) < 1e-12);
    }

    #[test]
    fn spectator_of_eigenbasis_block() {
        let a = analysis();
        let block = a.blocks.iter().find(|b| b.block.upper_n == 2).unwrap();
        assert_eq!(block.spectators.len(), 1);
        let spec = &block.spectators[0];
        let expected = (a.model.spec.basis_state(&[2, 0]).unwrap()
            - a.model.spec.basis_state(&[1, 1]).unwrap() * c(SQRT_2)
            + a.model.spec.basis_state(&[0, 2]).unwrap())
            / c(2.0);
        assert!((expected.dotc(&spec.vector).norm() - 1.0).abs() < 1e-9);
        assert!((&a.model.lowering * &spec.vector).norm() < 1e-8);
        let dev = spectator_eigenstate_deviation(10.0, 0.2, 1.0).unwrap();
        assert!((spec.max_eigenstate_overlap - dev.overlap).abs() < 1e-10);
        let r = analytic_two_qutrit(10.0, 0.2, 1.0);
        assert_eq!(spec.nearest_eigenstate, find(a.eigensystem(), &r.e_minus));
    }

    #[test]
    fn two_qutrit_taxonomy() {
        let a = analysis();
        let es = a.eigensystem();
        let r = analytic_two_qutrit(10.0, 0.2, 1.0);
        let cls = &a.classification;
        assert_eq!(cls.class(find(es, &r.ground)), StateClass::Ground);
        assert_eq!(cls.class(find(es, &r.d1)), StateClass::Dark);
        assert_eq!(cls.class(find(es, &r.a2)), StateClass::Funnel);
        assert_eq!(cls.class(find(es, &r.b1)), StateClass::Bright);
        assert_eq!(cls.class(find(es, &r.e_plus)), StateClass::Bright);
        assert_eq!(cls.class(find(es, &r.e_minus)), StateClass::Bright);
        let ka = find(es, &r.a2);
        assert!((effective_decay_rate(ka, &a.flux) - 0.2).abs() < 1e-10);
        assert!((stored_energy_of_state(ka, es) - 19.8).abs() < 1e-10);
        assert!((stored_energy_of_state(find(es, &r.d1), es) - 9.0).abs() < 1e-10);
        assert_eq!(stored_energy_of_state(0, es), 0.0);
        assert_eq!(effective_decay_rate(find(es, &r.d1), &a.flux), 0.0);
        assert!((effective_decay_rate(find(es, &r.b1), &a.flux) - 0.2).abs() < 1e-10);
        assert!(cls.terminates_in_dark(ka));
    }

    #[test]
    fn antisymmetric_triple_excitation_is_a_chained_funnel() {
        let a = analysis();
        let spec = &a.model.spec;
        let a3 = (spec.basis_state(&[2, 1]).unwrap() - spec.basis_state(&[1, 2]).unwrap()) / c(SQRT_2);
        let k = find(a.eigensystem(), &a3);
        assert!((a.eigensystem().energy(k) - 27.8).abs() < 1e-10);
        assert_eq!(a.classification.class(k), StateClass::Funnel);
        assert!((a.classification.states[k].gamma_f - 0.1).abs() < 1e-10);
        let terminal = a.classification.terminal_distribution(k);
        assert_eq!(terminal.len(), 1);
        let (&end, &p) = terminal.iter().next().unwrap();
        assert_eq!(a.classification.class(end), StateClass::Dark);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cyclic_flux_is_rejected() {
        let flux = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.0, 0.0]);
        let tol = ClassifyTolerances {
            rate_tol: 1e-12,
            branch_tol: 1e-6,
            energy_tol: 1e-9,
        };
        assert!(matches!(
            classify(&[0.0, 1.0], &[None, None], &flux, &tol),
            Err(Error::CyclicFlux { from: 0, to: 1 })
        ));
    }

    #[test]
    fn qubit_pair_taxonomy() {
        let spec = SystemSpec::uniform(2, crate::qsys::QuditSpec::new(2, 10.0, 0.0).unwrap(), 1.0).unwrap();
        let a = Analysis::new(&spec, 0.1).unwrap();
        let classes: Vec<StateClass> = (0..4).map(|k| a.classification.class(k)).collect();
        assert_eq!(
            classes,
            vec![
                StateClass::Ground,
                StateClass::Dark,
                StateClass::Bright,
                StateClass::Bright
            ]
        );
        let dark = a.eigensystem().vector(1);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((dark[1].re.abs() - s).abs() < 1e-12 && (dark[2].re.abs() - s).abs() < 1e-12);
        assert!((dark[1] + dark[2]).norm() < 1e-12);
        assert!(a.one_step_funnel().is_none());
    }

    #[test]
    fn deviation_values() {
        let d = spectator_eigenstate_deviation(10.0, 0.2, 1.0).unwrap();
        // bisection on the quadratic over the negative half-line
        let f = |x: f64| SQRT_2 * x * x - 0.2 * x - 2.0 * SQRT_2;
        let (mut lo, mut hi) = (-3.0, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((d.x_exact - lo).abs() < 1e-12);
        assert!((d.x_exact - (-1.34527)).abs() < 5e-6);
        assert!((d.x_approx.unwrap() - (-1.34350)).abs() < 5e-6);
        let sqrt2 = SQRT_2;
        let residual = sqrt2 * d.x_exact.powi(2) - 0.2 * d.x_exact - 2.0 * sqrt2;
        assert!(residual.abs() < 1e-12);

        let harmonic = spectator_eigenstate_deviation(10.0, 0.0, 1.0).unwrap();
        assert!((harmonic.x_exact + SQRT_2).abs() < 1e-15);
        assert!((harmonic.overlap - 1.0).abs() < 1e-15);

        let uncoupled = spectator_eigenstate_deviation(10.0, 0.5, 0.0).unwrap();
        assert!(uncoupled.uncoupled);
        assert_eq!(uncoupled.x_exact, 0.0);
        assert!(uncoupled.x_approx.is_none());
        assert!((uncoupled.overlap - 0.5).abs() < 1e-15);
    }

    #[test]
    fn analytic_reference_set() {
        let r = analytic_two_qutrit(10.0, 0.2, 1.0);
        assert!((r.theta - 0.5 * 20f64.atan()).abs() < 1e-15);
        assert!((r.theta - 0.760419).abs() < 1e-6);
        assert!(r.e_plus.dotc(&r.e_minus).norm() < 1e-15);
        let harmonic = analytic_two_qutrit(10.0, 0.0, 1.0);
        assert!((harmonic.energy_plus - 22.0).abs() < 1e-12);
        assert!((harmonic.energy_minus - 18.0).abs() < 1e-12);
        // reference vectors are eigenvectors of the numeric Hamiltonian
        let h = crate::qsys::system_hamiltonian(&SystemSpec::two_qutrits(10.0, 0.2, 1.0).unwrap());
        for (v, e) in [
            (&r.d1, r.energy_d1),
            (&r.b1, r.energy_b1),
            (&r.a2, r.energy_a2),
            (&r.e_plus, r.energy_plus),
            (&r.e_minus, r.energy_minus),
        ] {
            assert!((&h * v - v * c(e)).norm() < 1e-10);
        }
    }
}
