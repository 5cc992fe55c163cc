//! Hilbert spaces, ladder operators and the Hamiltonian terms of the battery.
//!
//! Composite operators use a fixed tensor ordering: site 0 is the leftmost
//! Kronecker factor, so the product state `|n_0 n_1 ... n_{k-1}>` sits at
//! index `sum_j n_j * prod_{l > j} d_l`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, kron, Operator, StateVector, C64, I, ONE};

/// Local level structure of one anharmonic ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuditSpec {
    pub d: usize,
    pub omega: f64,
    pub alpha: f64,
}

impl QuditSpec {
    pub fn new(d: usize, omega: f64, alpha: f64) -> Result<Self> {
        let spec = Self { d, omega, alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidSpec(format!("level count d = {} < 2", self.d)));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidSpec(format!("omega = {} must be positive", self.omega)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidSpec(format!("alpha = {} must be >= 0", self.alpha)));
        }
        if self.alpha >= self.omega {
            return Err(Error::InvalidSpec(format!(
                "alpha = {} must be smaller than omega = {}",
                self.alpha, self.omega
            )));
        }
        Ok(())
    }

    /// Lowest local transition frequency, `min(omega, omega - alpha)`.
    pub fn min_gap(&self) -> f64 {
        self.omega.min(self.omega - self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Nearest-neighbour exchange along an open chain.
    #[default]
    Chain,
}

/// Array of ladders with uniform exchange coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub sites: Vec<QuditSpec>,
    pub coupling_j: f64,
    #[serde(default)]
    pub topology: Topology,
}

impl SystemSpec {
    pub fn new(sites: Vec<QuditSpec>, coupling_j: f64) -> Result<Self> {
        let spec = Self {
            sites,
            coupling_j,
            topology: Topology::Chain,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `n` identical sites.
    pub fn uniform(n: usize, site: QuditSpec, coupling_j: f64) -> Result<Self> {
        Self::new(vec![site; n], coupling_j)
    }

    /// The two-qutrit battery used throughout the examples.
    pub fn two_qutrits(omega: f64, alpha: f64, coupling_j: f64) -> Result<Self> {
        Self::uniform(2, QuditSpec::new(3, omega, alpha)?, coupling_j)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites.is_empty() {
            return Err(Error::InvalidSpec("at least one site is required".into()));
        }
        for site in &self.sites {
            site.validate()?;
        }
        if !(self.coupling_j.is_finite() && self.coupling_j >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "coupling J = {} must be >= 0",
                self.coupling_j
            )));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.d).collect()
    }

    pub fn dim(&self) -> usize {
        self.sites.iter().map(|s| s.d).product()
    }

    pub fn max_excitation(&self) -> usize {
        self.sites.iter().map(|s| s.d - 1).sum()
    }

    /// Largest bare frequency, used to scale tolerances.
    pub fn omega_scale(&self) -> f64 {
        self.sites.iter().map(|s| s.omega).fold(0.0, f64::max)
    }

    /// `J / min_j min(omega_j, omega_j - alpha_j)`; the exchange form of the
    /// coupling needs this to be small.
    pub fn rwa_ratio(&self) -> f64 {
        let gap = self.sites.iter().map(QuditSpec::min_gap).fold(f64::INFINITY, f64::min);
        self.coupling_j / gap
    }

    /// Nearest-neighbour bonds `(j, j + 1)`.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        match self.topology {
            Topology::Chain => (1..self.n_sites()).map(|j| (j - 1, j)).collect(),
        }
    }

    /// Product-basis index of `|n_0 n_1 ...>`.
    pub fn basis_index(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.n_sites() {
            return Err(Error::DimensionMismatch {
                expected: self.n_sites(),
                found: levels.len(),
            });
        }
        let mut index = 0;
        for (n, site) in levels.iter().zip(&self.sites) {
            if *n >= site.d {
                return Err(Error::InvalidSpec(format!(
                    "level {} out of range for d = {}",
                    n, site.d
                )));
            }
            index = index * site.d + n;
        }
        Ok(index)
    }

    /// Inverse of [`SystemSpec::basis_index`].
    pub fn basis_levels(&self, mut index: usize) -> Vec<usize> {
        let mut levels = vec![0; self.n_sites()];
        for (slot, site) in levels.iter_mut().zip(&self.sites).rev() {
            *slot = index % site.d;
            index /= site.d;
        }
        levels
    }

    pub fn basis_state(&self, levels: &[usize]) -> Result<StateVector> {
        let mut v = StateVector::zeros(self.dim());
        v[self.basis_index(levels)?] = ONE;
        Ok(v)
    }

    pub fn ground_state(&self) -> StateVector {
        let mut v = StateVector::zeros(self.dim());
        v[0] = ONE;
        v
    }
}

/// Truncated bosonic lowering operator `sum_{n=1}^{d-1} sqrt(n) |n-1><n|`.
pub fn lowering_op(d: usize) -> Result<Operator> {
    if d < 2 {
        return Err(Error::InvalidSpec(format!("level count d = {d} < 2")));
    }
    let mut a = Operator::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = c((n as f64).sqrt());
    }
    Ok(a)
}

/// Ladder energies `E_n = n omega - (alpha / 2) n (n - 1)`, `E_0 = 0`.
pub fn local_energies(spec: &QuditSpec) -> Vec<f64> {
    (0..spec.d)
        .map(|n| {
            let n = n as f64;
            n * spec.omega - 0.5 * spec.alpha * n * (n - 1.0)
        })
        .collect()
}

/// Embeds a single-site operator at `site`, identities elsewhere.
pub fn embed(op: &Operator, site: usize, spec: &SystemSpec) -> Result<Operator> {
    if site >= spec.n_sites() {
        return Err(Error::InvalidSpec(format!(
            "site {} out of range for {} sites",
            site,
            spec.n_sites()
        )));
    }
    let d = spec.sites[site].d;
    if op.nrows() != d || op.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: op.nrows(),
        });
    }
    let mut out = Operator::identity(1, 1);
    for (j, s) in spec.sites.iter().enumerate() {
        let factor = if j == site {
            op.clone()
        } else {
            Operator::identity(s.d, s.d)
        };
        out = kron(&out, &factor);
    }
    Ok(out)
}

fn site_lowering(spec: &SystemSpec, site: usize) -> Operator {
    let a = lowering_op(spec.sites[site].d).expect("validated spec has d >= 2");
    embed(&a, site, spec).expect("site index and dimension are consistent")
}

/// Bare ladder energies plus nearest-neighbour exchange
/// `J sum_<jk> (a_j^dagger a_k + a_j a_k^dagger)`.
pub fn system_hamiltonian(spec: &SystemSpec) -> Operator {
    let dim = spec.dim();
    let mut h = Operator::zeros(dim, dim);
    let energies: Vec<Vec<f64>> = spec.sites.iter().map(local_energies).collect();
    for index in 0..dim {
        let levels = spec.basis_levels(index);
        let e: f64 = levels.iter().zip(&energies).map(|(n, es)| es[*n]).sum();
        h[(index, index)] = c(e);
    }
    if spec.coupling_j != 0.0 {
        let lowering: Vec<Operator> = (0..spec.n_sites()).map(|j| site_lowering(spec, j)).collect();
        for (j, k) in spec.bonds() {
            let hop = lowering[j].adjoint() * &lowering[k];
            h += (&hop + hop.adjoint()) * c(spec.coupling_j);
        }
    }
    h
}

/// Collective lowering operator `L = sum_j a_j` through which the common
/// bath couples.
pub fn collective_lowering(spec: &SystemSpec) -> Operator {
    let dim = spec.dim();
    (0..spec.n_sites()).fold(Operator::zeros(dim, dim), |acc, j| acc + site_lowering(spec, j))
}

/// Total excitation number `N = sum_j n_j` (diagonal).
pub fn excitation_number(spec: &SystemSpec) -> Operator {
    let diag: Vec<C64> = (0..spec.dim())
        .map(|i| c(spec.basis_levels(i).iter().sum::<usize>() as f64))
        .collect();
    Operator::from_diagonal(&DVector::from_vec(diag))
}

/// Unit-amplitude drive generator `i sum_j e^{i phi_j} a_j^dagger + h.c.`.
pub fn drive_operator(spec: &SystemSpec, phases: &[f64]) -> Result<Operator> {
    if phases.len() != spec.n_sites() {
        return Err(Error::DimensionMismatch {
            expected: spec.n_sites(),
            found: phases.len(),
        });
    }
    let dim = spec.dim();
    let mut raising = Operator::zeros(dim, dim);
    for (j, phi) in phases.iter().enumerate() {
        raising += site_lowering(spec, j).adjoint() * C64::from_polar(1.0, *phi);
    }
    raising *= I;
    Ok(&raising + raising.adjoint())
}

/// Drive Hamiltonian at one instant, `amplitude` being the envelope value
/// `Omega_R(t)`. Phases `(0, pi)` give the antisymmetric drive.
pub fn drive_hamiltonian(spec: &SystemSpec, amplitude: f64, phases: &[f64]) -> Result<Operator> {
    Ok(drive_operator(spec, phases)? * c(amplitude))
}

/// Phases `(0, phi, 2 phi, ...)` along the chain; `phi = pi` alternates sign.
pub fn staggered_phases(n_sites: usize, relative_phase: f64) -> Vec<f64> {
    (0..n_sites).map(|j| j as f64 * relative_phase).collect()
}
