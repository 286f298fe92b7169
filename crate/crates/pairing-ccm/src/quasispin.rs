//! Exact finite-dimensional representation of the pairing quasispin algebra.
//!
//! The seniority-zero sector of the single-shell pairing model is spanned by
//! the unnormalized states |m⟩ = (Δ†)^m |0⟩, m = 0..Ω. In that basis the
//! pair raising operator has unit subdiagonal entries and all combinatorics
//! sit in the lowering operator,
//!
//! ```text
//!   Δ† |m⟩ = |m+1⟩,        Δ |m⟩ = m (Ω − m + 1) |m−1⟩,
//! ```
//!
//! so that [Δ, Δ†] = Ω − N with N = 2·(pair count). Everything evaluated on
//! top of these matrices (cluster exponentials, expectation values,
//! derivatives) is a finite polynomial and hence exact in double precision
//! at desk scale. The same matrices serve as the representation of the
//! quasiparticle pair algebra, which obeys identical commutation relations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::Ring;

#[derive(Debug, Error, PartialEq)]
pub enum QuasispinError {
    #[error("omega must be a positive integer, got {0}")]
    InvalidOmega(u32),
    #[error("coupling g must be > 0, got {0}")]
    InvalidCoupling(f64),
    #[error("target particle number n0 = {n0} outside [0, {max}]")]
    InvalidTargetNumber { n0: f64, max: f64 },
    #[error("matrix is not strictly triangular; exponential series would not terminate")]
    NotNilpotent,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Single-shell pairing model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Pair degeneracy Ω (number of k/k̄ pairs).
    pub omega: u32,
    /// Pairing strength G > 0.
    pub g: f64,
    /// Target mean particle number, 0 ≤ n0 ≤ 2Ω.
    pub n0: f64,
}

impl ModelParams {
    pub fn new(omega: u32, g: f64, n0: f64) -> Result<Self, QuasispinError> {
        if omega == 0 {
            return Err(QuasispinError::InvalidOmega(omega));
        }
        // also rejects NaN
        if !(g > 0.0) {
            return Err(QuasispinError::InvalidCoupling(g));
        }
        let max = 2.0 * omega as f64;
        if !(0.0..=max).contains(&n0) {
            return Err(QuasispinError::InvalidTargetNumber { n0, max });
        }
        Ok(ModelParams { omega, g, n0 })
    }

    /// Basis dimension Ω + 1.
    pub fn dim(&self) -> usize {
        self.omega as usize + 1
    }

    pub fn with_n0(&self, n0: f64) -> Self {
        ModelParams { n0, ..*self }
    }
}

/// Dense square matrix over any [`Ring`] scalar; dimension Ω + 1 stays small
/// enough that everything is kept dense.
#[derive(Debug, Clone, PartialEq)]
pub struct OpMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Ring> OpMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        OpMatrix {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, c: usize) -> &T {
        &self.data[r * self.dim + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.dim + c] = v;
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let b = rhs.get(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    let v = out.get(i, j).add(&a.mul(b));
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim);
        OpMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim);
        OpMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    /// Scale every entry by a ring element.
    pub fn scale_by(&self, f: &T) -> Self {
        OpMatrix {
            dim: self.dim,
            data: self.data.iter().map(|a| a.mul(f)).collect(),
        }
    }

    pub fn scale(&self, f: f64) -> Self {
        OpMatrix {
            dim: self.dim,
            data: self.data.iter().map(|a| a.scale(f)).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        OpMatrix {
            dim: self.dim,
            data: self.data.iter().map(|a| a.neg()).collect(),
        }
    }

    /// Matrix power by repeated multiplication.
    pub fn pow(&self, e: usize) -> Self {
        let mut out = Self::identity(self.dim);
        for _ in 0..e {
            out = out.matmul(self);
        }
        out
    }

    /// `A v` for a column vector.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                let mut acc = T::zero();
                for j in 0..self.dim {
                    let a = self.get(i, j);
                    if !a.is_zero() {
                        acc = acc.add(&a.mul(&v[j]));
                    }
                }
                acc
            })
            .collect()
    }

    /// `r A` for a row vector.
    pub fn apply_left(&self, r: &[T]) -> Vec<T> {
        assert_eq!(r.len(), self.dim);
        (0..self.dim)
            .map(|j| {
                let mut acc = T::zero();
                for i in 0..self.dim {
                    let a = self.get(i, j);
                    if !a.is_zero() {
                        acc = acc.add(&r[i].mul(a));
                    }
                }
                acc
            })
            .collect()
    }

    /// Lift an f64 matrix into any ring (entries become constants).
    pub fn lift(src: &OpMatrix<f64>) -> Self {
        OpMatrix {
            dim: src.dim,
            data: src.data.iter().map(|&v| T::from_f64(v)).collect(),
        }
    }

    fn is_strictly_triangular(&self) -> bool {
        let mut lower_ok = true;
        let mut upper_ok = true;
        for i in 0..self.dim {
            if !self.get(i, i).is_zero() {
                return false;
            }
            for j in 0..self.dim {
                if i < j && !self.get(i, j).is_zero() {
                    lower_ok = false;
                }
                if i > j && !self.get(i, j).is_zero() {
                    upper_ok = false;
                }
            }
        }
        lower_ok || upper_ok
    }

    /// Exponential of a strictly triangular matrix: the series terminates
    /// after `dim` terms because such matrices are nilpotent, so the result
    /// is exact (also for jet-valued entries).
    pub fn expm_nilpotent(&self) -> Result<Self, QuasispinError> {
        if !self.is_strictly_triangular() {
            return Err(QuasispinError::NotNilpotent);
        }
        Ok(self.expm_terminating())
    }

    /// Terminating exponential series Σ_{k<dim} A^k / k!.
    ///
    /// Exact whenever A is nilpotent (index ≤ dim), which covers not only
    /// strictly triangular matrices but also polynomials in a similarity
    /// transform of the raising operator, as produced by the quasiparticle
    /// pair operator expressed in the particle basis. The caller guarantees
    /// nilpotency.
    pub fn expm_terminating(&self) -> Self {
        let mut acc = Self::identity(self.dim);
        let mut term = Self::identity(self.dim);
        for k in 1..self.dim {
            term = term.matmul(self).scale(1.0 / k as f64);
            acc = acc.add(&term);
        }
        acc
    }

    /// Basis column e_m.
    pub fn basis_vec(dim: usize, m: usize) -> Vec<T> {
        let mut v = vec![T::zero(); dim];
        v[m] = T::one();
        v
    }
}

impl OpMatrix<f64> {
    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| *self.get(i, j))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Exact matrices of the pair operators in the basis |m⟩ = (Δ†)^m |0⟩.
#[derive(Debug, Clone)]
pub struct PairOperatorSet {
    /// Basis dimension Ω + 1.
    pub dim: usize,
    /// Δ†: single nonzero band raise[m+1, m] = 1.
    pub raise: OpMatrix<f64>,
    /// Δ: lower[m−1, m] = m (Ω − m + 1).
    pub lower: OpMatrix<f64>,
    /// Diagonal pair-count matrix, npairs[m, m] = m.
    pub npairs: OpMatrix<f64>,
}

/// Build the pair operator matrices for a shell of degeneracy Ω.
pub fn build_pair_operators(params: &ModelParams) -> PairOperatorSet {
    let omega = params.omega as usize;
    let dim = omega + 1;
    let mut raise = OpMatrix::<f64>::zeros(dim);
    let mut lower = OpMatrix::<f64>::zeros(dim);
    let mut npairs = OpMatrix::<f64>::zeros(dim);
    for m in 0..dim {
        npairs.set(m, m, m as f64);
        if m + 1 < dim {
            raise.set(m + 1, m, 1.0);
        }
        if m >= 1 {
            lower.set(m - 1, m, (m * (omega - m + 1)) as f64);
        }
    }
    PairOperatorSet {
        dim,
        raise,
        lower,
        npairs,
    }
}

/// ⟨0| Δ^m (Δ†)^m |0⟩ computed by repeated application of the lowering
/// action, so it can validate the closed form m!·Ω!/(Ω−m)!. Returns 0 for
/// m > Ω (nilpotency), not an error.
pub fn moment(params: &ModelParams, m: u32) -> f64 {
    let omega = params.omega;
    if m > omega {
        return 0.0;
    }
    let ops = build_pair_operators(params);
    // Start from (Δ†)^m |0⟩ = e_m and lower m times; the surviving |0⟩
    // coefficient is the moment.
    let mut v = OpMatrix::<f64>::basis_vec(ops.dim, m as usize);
    for _ in 0..m {
        v = ops.lower.apply(&v);
    }
    v[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::Dual;

    fn params(omega: u32) -> ModelParams {
        ModelParams::new(omega, 1.0, 0.0).unwrap()
    }

    #[test]
    fn rejects_invalid_model_params() {
        assert_eq!(
            ModelParams::new(0, 1.0, 0.0).unwrap_err(),
            QuasispinError::InvalidOmega(0)
        );
        assert!(ModelParams::new(4, 0.0, 0.0).is_err());
        assert!(ModelParams::new(4, 1.0, 9.0).is_err());
        assert!(ModelParams::new(4, 1.0, -0.5).is_err());
    }

    #[test]
    fn single_pair_lowering_entry() {
        // Ω=1: Δ (Δ†) |0⟩ = |0⟩.
        let ops = build_pair_operators(&params(1));
        assert_eq!(*ops.lower.get(0, 1), 1.0);
    }

    #[test]
    fn lowering_entry_from_repeated_commutators() {
        // Ω=4: Δ (Δ†)² |0⟩ = 2(Ω−1) (Δ†) |0⟩ = 6 |1⟩, derived by applying
        // [Δ, Δ†] = Ω − N twice (independent of the matrix construction).
        let omega = 4u32;
        let expected = {
            // Δ(Δ†)^2|0⟩ = ([Δ,Δ†]Δ† + Δ†[Δ,Δ†])|0⟩ with [Δ,Δ†]|m⟩ = (Ω−2m)|m⟩.
            let c1 = (omega as f64) - 2.0; // [Δ,Δ†] acting after one raise
            let c0 = omega as f64; // acting on the vacuum
            c1 + c0
        };
        let ops = build_pair_operators(&params(omega));
        assert_eq!(*ops.lower.get(1, 2), expected);
        assert_eq!(*ops.lower.get(1, 2), 6.0);
    }

    #[test]
    fn commutator_closure_all_small_omega() {
        // [Δ, Δ†] = Ω·I − 2·npairs exactly, entrywise, for Ω ≤ 12.
        for omega in 1..=12u32 {
            let ops = build_pair_operators(&params(omega));
            let comm = ops.lower.matmul(&ops.raise).sub(&ops.raise.matmul(&ops.lower));
            let expected = OpMatrix::<f64>::identity(ops.dim)
                .scale(omega as f64)
                .sub(&ops.npairs.scale(2.0));
            assert_eq!(comm, expected, "omega={omega}");
        }
    }

    #[test]
    fn vacuum_commutator_entry_is_omega() {
        let ops = build_pair_operators(&params(4));
        let comm = ops.lower.matmul(&ops.raise).sub(&ops.raise.matmul(&ops.lower));
        assert_eq!(*comm.get(0, 0), 4.0);
    }

    #[test]
    fn nilpotency_of_ladder_operators() {
        for omega in 1..=12u32 {
            let ops = build_pair_operators(&params(omega));
            let zero = OpMatrix::<f64>::zeros(ops.dim);
            assert_eq!(ops.raise.pow(ops.dim), zero);
            assert_eq!(ops.lower.pow(ops.dim), zero);
        }
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = OpMatrix::<f64>::zeros(5);
        assert_eq!(z.expm_nilpotent().unwrap(), OpMatrix::<f64>::identity(5));
    }

    #[test]
    fn expm_single_band() {
        // Ω=2, A = s·raise with s=1: entries 1 on the diagonal and first
        // subdiagonal, 1/2 at [2,0].
        let ops = build_pair_operators(&params(2));
        let e = ops.raise.expm_nilpotent().unwrap();
        assert_eq!(*e.get(0, 0), 1.0);
        assert_eq!(*e.get(1, 1), 1.0);
        assert_eq!(*e.get(1, 0), 1.0);
        assert_eq!(*e.get(2, 1), 1.0);
        assert_eq!(*e.get(2, 0), 0.5);
        assert_eq!(*e.get(0, 1), 0.0);
    }

    #[test]
    fn expm_rejects_non_terminating_input() {
        let ops = build_pair_operators(&params(3));
        // Nonzero diagonal.
        assert_eq!(
            ops.npairs.expm_nilpotent().unwrap_err(),
            QuasispinError::NotNilpotent
        );
        // Mixed raise + lower is not triangular either.
        let mixed = ops.raise.add(&ops.lower);
        assert!(mixed.expm_nilpotent().is_err());
    }

    #[test]
    fn expm_matches_multinomial_expansion_of_mixed_powers() {
        // Ω=4, A = raise + raise²: column 0 must carry the coefficients of
        // e^{Δ† + Δ†²}|0⟩. Oracle: expand the scalar exponential of the
        // commuting polynomial by multinomial convolution.
        let ops = build_pair_operators(&params(4));
        let a = ops.raise.add(&ops.raise.pow(2));
        let e = a.expm_terminating();

        // coefficients c_m of e^{x + x²} as a power series up to x^4
        let mut coeff = vec![0.0_f64; 5];
        // sum over k1 raises and k2 double-raises: x^(k1+2k2)/(k1! k2!)
        let fact = |n: usize| (1..=n).product::<usize>() as f64;
        for k1 in 0..=4 {
            for k2 in 0..=2 {
                let pow = k1 + 2 * k2;
                if pow <= 4 {
                    coeff[pow] += 1.0 / (fact(k1) * fact(k2));
                }
            }
        }
        for m in 0..=4 {
            assert!(
                (*e.get(m, 0) - coeff[m]).abs() < 1e-14,
                "m={m}: {} vs {}",
                e.get(m, 0),
                coeff[m]
            );
        }
    }

    #[test]
    fn expm_exact_for_dual_entries() {
        // d/ds e^{s·raise} at s=0.7 equals raise·e^{s·raise}.
        let ops = build_pair_operators(&params(3));
        let s = Dual::variable(0.7, 0, 1);
        let a = OpMatrix::<Dual>::lift(&ops.raise).scale_by(&s);
        let e = a.expm_nilpotent().unwrap();
        let e_f = ops.raise.scale(0.7).expm_nilpotent().unwrap();
        let de = ops.raise.matmul(&e_f);
        for i in 0..4 {
            for j in 0..4 {
                assert!((e.get(i, j).val - e_f.get(i, j)).abs() < 1e-15);
                assert!((e.get(i, j).deriv(0) - de.get(i, j)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn moment_closed_form() {
        // moment(Ω, m) = m!·Ω!/(Ω−m)! for all 0 ≤ m ≤ Ω ≤ 10.
        let fact = |n: u32| (1..=n as u64).product::<u64>() as f64;
        for omega in 1..=10u32 {
            let p = params(omega);
            for m in 0..=omega {
                let closed = fact(m) * fact(omega) / fact(omega - m);
                assert_eq!(moment(&p, m), closed, "omega={omega} m={m}");
            }
        }
    }

    #[test]
    fn moment_edge_cases() {
        assert_eq!(moment(&params(4), 0), 1.0);
        assert_eq!(moment(&params(4), 2), 24.0);
        assert_eq!(moment(&params(4), 5), 0.0);
    }
}
