//! Dense complex linear algebra helpers shared by the physics modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Dense square complex matrix acting on the composite Hilbert space.
pub type Operator = DMatrix<C64>;

/// Pure state in the product basis (site 0 is the leftmost tensor factor).
pub type StateVector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Largest entry modulus.
pub fn max_abs(m: &Operator) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_error(m: &Operator) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn ensure_hermitian(m: &Operator, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let err = hermiticity_error(m);
    if err > tol * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian(err));
    }
    Ok(())
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a * b - b * a
}

pub fn anticommutator(a: &Operator, b: &Operator) -> Operator {
    a * b + b * a
}

pub fn kron(a: &Operator, b: &Operator) -> Operator {
    a.kronecker(b)
}

pub fn outer(ket: &StateVector, bra: &StateVector) -> Operator {
    ket * bra.adjoint()
}

/// `<a|b>`
pub fn inner(a: &StateVector, b: &StateVector) -> C64 {
    a.dotc(b)
}

/// `<v|M|v>`
pub fn expectation(m: &Operator, v: &StateVector) -> C64 {
    v.dotc(&(m * v))
}

/// Hermitian eigendecomposition, eigenvalues ascending, eigenvectors as columns.
pub fn eigh(m: &Operator) -> (Vec<f64>, Operator) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), Operator::zeros(0, 0));
    }
    let sym = (m + m.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Operator::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &Operator) -> f64 {
    eigh(m).0.first().copied().unwrap_or(0.0)
}

/// Rotates the global phase so that the largest-magnitude component is real
/// and positive. Near-ties go to the lowest index.
pub fn fix_phase(v: &mut StateVector) {
    let max = v.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-9)).unwrap_or(0);
    let phase = v[pivot].conj() / v[pivot].norm();
    v.iter_mut().for_each(|z| *z *= phase);
}

/// Phase convention applied to a pair `(v, u)` linked by `M v = sigma u`:
/// `v` is fixed by [`fix_phase`] and `u` receives the same rotation.
pub fn fix_phase_pair(v: &mut StateVector, u: &mut StateVector) {
    let max = v.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-9)).unwrap_or(0);
    let phase = v[pivot].conj() / v[pivot].norm();
    v.iter_mut().for_each(|z| *z *= phase);
    u.iter_mut().for_each(|z| *z *= phase);
}

/// Canonical orthonormal basis for the span of `vectors`.
///
/// The result depends only on the subspace, not on the particular spanning
/// set: standard basis vectors are projected onto the subspace and
/// Gram-Schmidt orthogonalized, taking at each step the first candidate
/// whose residual is at least half of the largest residual.
pub fn canonical_basis(vectors: &[StateVector]) -> Vec<StateVector> {
    let k = vectors.len();
    if k == 0 {
        return Vec::new();
    }
    let n = vectors[0].len();
    let mut projector = Operator::zeros(n, n);
    for v in vectors {
        projector += outer(v, v);
    }
    let mut basis: Vec<StateVector> = Vec::with_capacity(k);
    let mut used = vec![false; n];
    while basis.len() < k {
        let residuals: Vec<Option<StateVector>> = (0..n)
            .map(|j| {
                if used[j] {
                    return None;
                }
                let mut r: StateVector = projector.column(j).into_owned();
                for b in &basis {
                    let overlap = inner(b, &r);
                    r -= b * overlap;
                }
                Some(r)
            })
            .collect();
        let best = residuals.iter().flatten().map(|r| r.norm()).fold(0.0_f64, f64::max);
        if best < 1e-12 {
            break;
        }
        let pick = residuals
            .iter()
            .position(|r| r.as_ref().is_some_and(|r| r.norm() >= 0.5 * best))
            .expect("a residual attains the maximum");
        used[pick] = true;
        let mut r = residuals[pick].clone().expect("picked residual exists");
        // second pass against round-off
        for b in &basis {
            let overlap = inner(b, &r);
            r -= b * overlap;
        }
        let norm = r.norm();
        basis.push(r / c(norm));
    }
    basis
}

/// Orthonormal completion: extends `basis` to a full basis of `C^n`.
pub fn complete_basis(basis: &[StateVector], n: usize) -> Vec<StateVector> {
    let mut out: Vec<StateVector> = basis.to_vec();
    for j in 0..n {
        if out.len() == n {
            break;
        }
        let mut r = StateVector::zeros(n);
        r[j] = ONE;
        for _ in 0..2 {
            for b in &out {
                let overlap = inner(b, &r);
                r -= b * overlap;
            }
        }
        let norm = r.norm();
        if norm > 1e-6 {
            out.push(r / c(norm));
        }
    }
    out
}

pub fn columns_to_matrix(cols: &[StateVector], nrows: usize) -> Operator {
    let mut m = Operator::zeros(nrows, cols.len());
    for (j, v) in cols.iter().enumerate() {
        m.set_column(j, v);
    }
    m
}

/// Max-entry deviation of `m^dagger m` from the identity.
pub fn unitarity_error(m: &Operator) -> f64 {
    let n = m.ncols();
    max_abs(&(m.adjoint() * m - Operator::identity(n, n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_convention_picks_first_of_ties() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = StateVector::from_vec(vec![c(-s), c(s)]);
        fix_phase(&mut v);
        assert!((v[0] - c(s)).norm() < 1e-15);
        assert!((v[1] - c(-s)).norm() < 1e-15);
    }

    #[test]
    fn canonical_basis_is_independent_of_spanning_set() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = vec![
            StateVector::from_vec(vec![c(s), c(s), ZERO]),
            StateVector::from_vec(vec![c(s), c(-s), ZERO]),
        ];
        let b = vec![
            StateVector::from_vec(vec![ONE, ZERO, ZERO]),
            StateVector::from_vec(vec![ZERO, I, ZERO]),
        ];
        let ca = canonical_basis(&a);
        let cb = canonical_basis(&b);
        for (x, y) in ca.iter().zip(&cb) {
            assert!((x - y).norm() < 1e-12);
        }
        assert!((ca[0][0] - ONE).norm() < 1e-12);
    }

    #[test]
    fn eigh_sorts_ascending() {
        let m = Operator::from_diagonal(&DVector::from_vec(vec![c(3.0), c(-1.0), c(2.0)]));
        let (vals, vecs) = eigh(&m);
        assert_eq!(vals, vec![-1.0, 2.0, 3.0]);
        assert!(unitarity_error(&vecs) < 1e-12);
    }

    #[test]
    fn completion_spans_space() {
        let v = StateVector::from_vec(vec![c(0.6), c(0.8), ZERO]);
        let full = complete_basis(&[v], 3);
        assert_eq!(full.len(), 3);
        assert!(unitarity_error(&columns_to_matrix(&full, 3)) < 1e-12);
    }
}
