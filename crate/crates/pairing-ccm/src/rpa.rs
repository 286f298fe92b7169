//! Harmonic (RPA) dynamics linearized about a stationary point.
//!
//! The time-dependent variational action contributes a kinetic one-form
//! θ_i(x) = ⟨bra(x)| ∂ket(x)/∂x_i⟩ over the amplitude unknowns. Its
//! exterior derivative Ω_ij = ∂θ_j/∂x_i − ∂θ_i/∂x_j is the symplectic
//! form of the linearized equations, and the mode problem is the pencil
//!
//! ```text
//!   Hess a = ω Ω a,
//! ```
//!
//! with Hess the exact second derivatives of E − λ(⟨N⟩−N₀) at fixed λ.
//! For the quasiparticle schemes the frame operators δ†, δ move with the
//! SUB(1) amplitudes, so θ is evaluated in the fixed particle frame where
//! the time derivative of the state is unambiguous; the frame-motion terms
//! of the one-form then come out automatically instead of being assembled
//! commutator by commutator.
//!
//! Both Hess (symmetric) and Ω (antisymmetric) are real, so finite
//! frequencies come in ±ω pairs, or conjugate quartets once modes collide
//! and turn complex.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::dual::{Dual2, Ring};
use crate::functional::{self, FunctionalError, Scheme};
use crate::quasispin::ModelParams;
use crate::solver::SolutionPoint;

#[derive(Debug, Error)]
pub enum RpaError {
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error("no dynamics: the symplectic form vanishes at this point")]
    NoDynamics,
    #[error("eigenvalue computation failed")]
    EigenFailure,
    #[error("dimension mismatch between Hessian ({0}) and kinetic form ({1})")]
    DimensionMismatch(usize, usize),
}

/// Kinetic one-form coefficients and their exterior derivative at a point.
#[derive(Debug, Clone)]
pub struct KineticForm {
    /// θ_i, one per amplitude unknown (λ carries no kinetic term).
    pub theta: Vec<f64>,
    /// Antisymmetric Ω_ij, exact by construction.
    pub omega_matrix: DMatrix<f64>,
    /// Orthonormal basis of ker(Ω): gauge directions with no dynamics.
    pub kernel: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeClass {
    Zero,
    Real,
    Complex,
}

/// Relative tolerances for mode classification, scaled by the spectral
/// radius so they survive a rescaling of G.
#[derive(Debug, Clone, Copy)]
pub struct RpaTolerances {
    pub zero_rel: f64,
    pub imag_rel: f64,
}

impl Default for RpaTolerances {
    fn default() -> Self {
        RpaTolerances {
            zero_rel: 1e-6,
            imag_rel: 1e-8,
        }
    }
}

/// RPA mode spectrum with zero-mode / real-pair / complex classification.
#[derive(Debug, Clone)]
pub struct RpaSpectrum {
    pub frequencies: Vec<Complex64>,
    pub classes: Vec<ModeClass>,
    /// Count of dynamical frequencies below the zero tolerance.
    pub zero_modes: usize,
    /// True if any frequency has an imaginary part above tolerance.
    pub unstable: bool,
    /// Indices of matched (+ω, −ω) partners.
    pub pairing: Vec<(usize, usize)>,
    /// Kernel directions of Ω projected out before diagonalization
    /// (gauge zero modes, kept separate from Goldstone modes).
    pub structural_zero_modes: usize,
    /// Characteristic frequency scale of the pencil (matrix norm of the
    /// reduced problem). Classification tolerances are relative to the
    /// larger of this and the spectral radius, so an all-zero-mode spectrum
    /// is not misread as structure at its own noise level.
    pub freq_scale: f64,
}

/// Hessian of the constrained energy over the amplitude unknowns at the
/// point's λ.
pub fn build_hessian(
    params: &ModelParams,
    point: &SolutionPoint,
) -> Result<DMatrix<f64>, RpaError> {
    Ok(functional::energy_hessian(params, &point.amps)?)
}

/// Kinetic one-form and symplectic matrix at the point.
///
/// Evaluated as one second-order jet over two independent copies of the
/// amplitude variables (bra copy x, ket copy y):
/// θ_j = ∂F/∂y_j and Ω_ij = ∂²F/∂x_i∂y_j − ∂²F/∂x_j∂y_i at y = x,
/// where F(x, y) = ⟨bra(x)|ket(y)⟩ in the fixed particle basis. The
/// symmetric ∂y∂y parts cancel in the antisymmetrization.
pub fn build_kinetic_form(
    params: &ModelParams,
    point: &SolutionPoint,
) -> Result<KineticForm, RpaError> {
    let cfg = &point.amps.config;
    cfg.validate(params).map_err(RpaError::Functional)?;
    let na = cfg.n_unknowns() - 1;
    let nslots = 2 * na;
    let amp = &point.amps.x[..na];

    let x_bra: Vec<Dual2> = amp
        .iter()
        .enumerate()
        .map(|(i, &v)| Dual2::variable(v, i, nslots))
        .collect();
    let x_ket: Vec<Dual2> = amp
        .iter()
        .enumerate()
        .map(|(i, &v)| Dual2::variable(v, na + i, nslots))
        .collect();

    let (bra, ket) = functional::bra_ket_particle_basis(params, cfg, &x_bra, &x_ket);
    let mut f = Dual2::constant(0.0);
    for (b, k) in bra.iter().zip(&ket) {
        f = f.add(&b.mul(k));
    }

    let theta: Vec<f64> = (0..na)
        .map(|j| f.grad.get(na + j).copied().unwrap_or(0.0))
        .collect();
    let mut omega = DMatrix::zeros(na, na);
    for i in 0..na {
        for j in 0..na {
            omega[(i, j)] = f.hess_at(i, na + j) - f.hess_at(j, na + i);
        }
    }

    let kernel = omega_kernel(&omega);
    Ok(KineticForm {
        theta,
        omega_matrix: omega,
        kernel,
    })
}

fn omega_kernel(omega: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = omega.nrows();
    let svd = omega.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, s| m.max(*s));
    let thresh = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let v_t = svd.v_t.expect("requested");
    (0..n)
        .filter(|&i| svd.singular_values.get(i).copied().unwrap_or(0.0) <= thresh)
        .map(|i| v_t.row(i).transpose())
        .collect()
}

/// Solve the generalized eigenproblem Hess a = ω Ω a by projecting out the
/// kernel of Ω (reported as structural zero modes) and reducing the rest to
/// a standard eigenproblem via a Schur complement.
pub fn solve_rpa(
    hessian: &DMatrix<f64>,
    kinetic: &KineticForm,
    tols: RpaTolerances,
) -> Result<RpaSpectrum, RpaError> {
    let omega = &kinetic.omega_matrix;
    let n = hessian.nrows();
    if omega.nrows() != n {
        return Err(RpaError::DimensionMismatch(n, omega.nrows()));
    }

    let svd = omega.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, s| m.max(*s));
    if smax == 0.0 {
        return Err(RpaError::NoDynamics);
    }
    let thresh = 1e-10 * smax;
    let v_t = svd.v_t.as_ref().ok_or(RpaError::EigenFailure)?;
    let mut img_cols = Vec::new();
    let mut ker_cols = Vec::new();
    for i in 0..n {
        let s = svd.singular_values.get(i).copied().unwrap_or(0.0);
        if s > thresh {
            img_cols.push(v_t.row(i).transpose());
        } else {
            ker_cols.push(v_t.row(i).transpose());
        }
    }
    let r = img_cols.len();
    if r == 0 {
        return Err(RpaError::NoDynamics);
    }
    let u = DMatrix::from_columns(&img_cols);
    let omega_uu = u.transpose() * omega * &u;
    let h_uu = u.transpose() * hessian * &u;

    let h_eff = if ker_cols.is_empty() {
        h_uu
    } else {
        let k = DMatrix::from_columns(&ker_cols);
        let h_uk = u.transpose() * hessian * &k;
        let h_kk = k.transpose() * hessian * &k;
        // Eliminate the kernel block. Pseudo-inverse handles fully
        // decoupled gauge directions (zero rows/columns) transparently.
        let h_kk_svd = h_kk.svd(true, true);
        let kmax = h_kk_svd
            .singular_values
            .iter()
            .fold(0.0_f64, |m, s| m.max(*s));
        if kmax == 0.0 {
            h_uu
        } else {
            let sol = h_kk_svd
                .solve(&h_uk.transpose(), 1e-12 * kmax)
                .map_err(|_| RpaError::EigenFailure)?;
            &h_uu - h_uk * sol
        }
    };

    let m = omega_uu
        .lu()
        .solve(&h_eff)
        .ok_or(RpaError::EigenFailure)?;
    let freq_scale = m.norm() / (r as f64);
    let eig = m.complex_eigenvalues();
    let frequencies: Vec<Complex64> = eig.iter().copied().collect();

    let mut spec = RpaSpectrum {
        frequencies,
        classes: Vec::new(),
        zero_modes: 0,
        unstable: false,
        pairing: Vec::new(),
        structural_zero_modes: n - r,
        freq_scale,
    };
    classify_modes(&mut spec, tols);
    Ok(spec)
}

/// Label each frequency zero / real / complex, set the instability flag and
/// match ±ω partners. Tolerances are relative to the spectral radius.
pub fn classify_modes(spec: &mut RpaSpectrum, tols: RpaTolerances) {
    let rho = spec
        .frequencies
        .iter()
        .fold(spec.freq_scale, |m, w| m.max(w.norm()));
    let zero_tol = tols.zero_rel * rho.max(f64::MIN_POSITIVE);
    let imag_tol = tols.imag_rel * rho.max(f64::MIN_POSITIVE);

    spec.classes = spec
        .frequencies
        .iter()
        .map(|w| {
            if w.norm() < zero_tol {
                ModeClass::Zero
            } else if w.im.abs() > imag_tol {
                ModeClass::Complex
            } else {
                ModeClass::Real
            }
        })
        .collect();
    spec.zero_modes = spec
        .classes
        .iter()
        .filter(|c| **c == ModeClass::Zero)
        .count();
    spec.unstable = spec.classes.iter().any(|c| *c == ModeClass::Complex);

    // Greedy ±ω matching among nonzero modes.
    spec.pairing.clear();
    let n = spec.frequencies.len();
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] || spec.classes[i] == ModeClass::Zero {
            continue;
        }
        let target = -spec.frequencies[i];
        let mut best: Option<(usize, f64)> = None;
        for j in i + 1..n {
            if used[j] || spec.classes[j] == ModeClass::Zero {
                continue;
            }
            let d = (spec.frequencies[j] - target).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, d)) = best {
            if d <= 1e-8 * rho.max(1.0) {
                used[i] = true;
                used[j] = true;
                spec.pairing.push((i, j));
            }
        }
    }
}

/// NCCM shortcut. With the reference fixed and a bra linear in the
/// s̃-amplitudes, the harmonic pencil has a zero s̃s̃-block and a constant
/// symplectic pairing, so its spectrum is ±eig(D⁻¹B) with B = ∂²E_c/∂s̃∂s
/// and D the constant Ω-block. In the Brueckner scheme the SUB(1) pair
/// moves the reference, so the fixed-reference statement applies to the
/// pencil restricted to the SUB(2..M) sector; this returns that restricted
/// pencil together with its block eigenvalues as a consistency pair.
pub fn nccm_block_frequencies(
    params: &ModelParams,
    point: &SolutionPoint,
) -> Result<(DMatrix<f64>, KineticForm, Vec<Complex64>), RpaError> {
    let cfg = &point.amps.config;
    if !matches!(cfg.scheme, Scheme::QpNccm) {
        return Err(RpaError::Functional(FunctionalError::WrongScheme {
            want: "qp-nccm",
            got: cfg.scheme.name().into(),
        }));
    }
    let k = cfg.s_block_len();
    let hess = build_hessian(params, point)?;
    let kin = build_kinetic_form(params, point)?;

    // restrict to rows/cols of s⁽²⁾..s⁽ᴹ⁾, s̃⁽²⁾..s̃⁽ᴹ⁾
    let keep: Vec<usize> = (1..k).chain(k + 1..2 * k).collect();
    let nr = keep.len();
    let mut h_r = DMatrix::zeros(nr, nr);
    let mut o_r = DMatrix::zeros(nr, nr);
    for (i, &ki) in keep.iter().enumerate() {
        for (j, &kj) in keep.iter().enumerate() {
            h_r[(i, j)] = hess[(ki, kj)];
            o_r[(i, j)] = kin.omega_matrix[(ki, kj)];
        }
    }
    // D = Ω[s̃-rows, s-cols], B = Hess[s̃-rows, s-cols] of the restriction
    let half = nr / 2;
    let d = o_r.view((half, 0), (half, half)).into_owned();
    let b = h_r.view((half, 0), (half, half)).into_owned();
    let m = d.lu().solve(&b).ok_or(RpaError::EigenFailure)?;
    let block: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    let theta_r: Vec<f64> = keep.iter().map(|&i| kin.theta[i]).collect();
    let kernel = omega_kernel(&o_r);
    Ok((
        h_r,
        KineticForm {
            theta: theta_r,
            omega_matrix: o_r,
            kernel,
        },
        block,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{self, AmplitudeVector, Gauge, Scheme, SchemeConfig};
    use crate::quasispin::{build_pair_operators, OpMatrix};
    use crate::solver::{newton_solve, SolutionPoint, SolverSettings};

    fn params(omega: u32, g: f64, n0: f64) -> ModelParams {
        ModelParams::new(omega, g, n0).unwrap()
    }

    fn point_at(params: &ModelParams, cfg: SchemeConfig, x: Vec<f64>) -> SolutionPoint {
        let amps = AmplitudeVector::new(cfg, x).unwrap();
        let obs = functional::evaluate(params, &amps).unwrap();
        SolutionPoint {
            amps,
            obs,
            residual_norm: 0.0,
            converged: true,
            branch_id: None,
            iterations: 0,
        }
    }

    #[test]
    fn hessian_matches_analytic_sub1() {
        // E_c(s, s̃) = c·ss̃(1 − ss̃) − λ(2Ωss̃ − N₀) with c = −GΩ(Ω−1):
        // ∂²/∂s² = −2cs̃², ∂²/∂s∂s̃ = c(1−4ss̃) − 2Ωλ, ∂²/∂s̃² = −2cs².
        let p = params(10, 1.0, 10.0);
        let cfg = SchemeConfig::new(Scheme::ParticleEccm, 1, Gauge::None);
        for (s, st, lam) in [(1.0, 0.5, 0.0), (0.7, 0.3, -1.2)] {
            let pt = point_at(&p, cfg, vec![s, st, lam]);
            let h = build_hessian(&p, &pt).unwrap();
            let c = -90.0;
            assert!((h[(0, 0)] - (-2.0 * c * st * st)).abs() < 1e-10);
            assert!((h[(0, 1)] - (c * (1.0 - 4.0 * s * st) - 20.0 * lam)).abs() < 1e-10);
            assert!((h[(1, 1)] - (-2.0 * c * s * s)).abs() < 1e-10);
            assert_eq!(h[(0, 1)], h[(1, 0)]);
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradient() {
        let p = params(6, 1.1, 4.0);
        for cfg in [
            SchemeConfig::new(Scheme::ParticleEccm, 2, Gauge::None),
            SchemeConfig::new(Scheme::QpEccm, 2, Gauge::None),
            SchemeConfig::new(Scheme::QpNccm, 3, Gauge::None),
        ] {
            let n = cfg.n_unknowns();
            let x: Vec<f64> = (0..n).map(|i| 0.3 - 0.07 * i as f64).collect();
            let pt = point_at(&p, cfg, x.clone());
            let h = build_hessian(&p, &pt).unwrap();
            let step = 1e-6;
            let na = n - 1;
            let scale = h.amax().max(1.0);
            for j in 0..na {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += step;
                xm[j] -= step;
                let rp = functional::residuals(&p, &AmplitudeVector::new(cfg, xp).unwrap()).unwrap();
                let rm = functional::residuals(&p, &AmplitudeVector::new(cfg, xm).unwrap()).unwrap();
                for i in 0..na {
                    let fd = (rp[i] - rm[i]) / (2.0 * step);
                    assert!(
                        (h[(i, j)] - fd).abs() <= 1e-6 * scale,
                        "{:?} [{i},{j}] {} vs {}",
                        cfg.scheme,
                        h[(i, j)],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_reduces_to_constraint_block_at_zero_coupling_limit() {
        // As g → 0 with λ fixed, Hess(E − λ(⟨N⟩−N₀)) → −λ·Hess(⟨N⟩): the
        // energy block scales out linearly with the coupling.
        let g = 1e-12;
        let p_small = params(6, g, 4.0);
        let cfg = SchemeConfig::new(Scheme::ParticleEccm, 2, Gauge::None);
        let lam = 0.7;
        let x = vec![0.3, -0.2, 0.15, 0.1, lam];
        let pt = point_at(&p_small, cfg, x.clone());
        let h = build_hessian(&p_small, &pt).unwrap();
        let pt0 = point_at(&p_small, cfg, vec![0.3, -0.2, 0.15, 0.1, 0.0]);
        let h0 = build_hessian(&p_small, &pt0).unwrap();
        // h = h_E − λ h_N ; h0 = h_E
        let diff = &h - &h0;
        assert!(h0.amax() <= g * 1e4, "energy block must scale with g");
        assert!(diff.amax() > 1e-2, "constraint block must remain");
    }

    #[test]
    fn kinetic_form_sub1_closed_form() {
        let p = params(10, 1.0, 10.0);
        let cfg = SchemeConfig::new(Scheme::ParticleEccm, 1, Gauge::None);
        let pt = point_at(&p, cfg, vec![1.0, 0.5, 0.0]);
        let kin = build_kinetic_form(&p, &pt).unwrap();
        // θ_s = ⟨0|e^{S̃}Δ†|0⟩ = Ω s̃, θ_s̃ = 0
        assert!((kin.theta[0] - 5.0).abs() < 1e-12);
        assert!(kin.theta[1].abs() < 1e-14);
        // Ω_{s̃,s} = ∂θ_s/∂s̃ = Ω
        assert!((kin.omega_matrix[(1, 0)] - 10.0).abs() < 1e-11);
        assert!((kin.omega_matrix[(0, 1)] + 10.0).abs() < 1e-11);
        assert_eq!(kin.omega_matrix[(0, 0)], 0.0);
        assert!(kin.kernel.is_empty());
    }

    #[test]
    fn kinetic_form_particle_theta_is_bra_moment() {
        // θ_{s_n} = ⟨0|e^{S̃}(Δ†)^n|0⟩ for the particle scheme; the s-block
        // and s̃-block diagonal blocks of Ω vanish identically.
        let p = params(6, 1.0, 4.0);
        let cfg = SchemeConfig::new(Scheme::ParticleEccm, 3, Gauge::None);
        let x = vec![0.21, -0.13, 0.08, 0.31, 0.12, -0.05, 0.4];
        let pt = point_at(&p, cfg, x.clone());
        let kin = build_kinetic_form(&p, &pt).unwrap();

        let ops = build_pair_operators(&p);
        let st_mat = ops
            .lower
            .scale(x[3])
            .add(&ops.lower.pow(2).scale(x[4]))
            .add(&ops.lower.pow(3).scale(x[5]));
        let e_st = st_mat.expm_nilpotent().unwrap();
        let e0 = OpMatrix::<f64>::basis_vec(ops.dim, 0);
        let row = e_st.apply_left(&e0);
        for n in 1..=3usize {
            let mut v = OpMatrix::<f64>::basis_vec(ops.dim, 0);
            for _ in 0..n {
                v = ops.raise.apply(&v);
            }
            let want: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            assert!(
                (kin.theta[n - 1] - want).abs() < 1e-11,
                "theta_{n}: {} vs {}",
                kin.theta[n - 1],
                want
            );
            // θ over the s̃-block vanishes (ket has no s̃ dependence)
            assert!(kin.theta[3 + n - 1].abs() < 1e-13);
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!(kin.omega_matrix[(i, j)].abs() < 1e-12);
                assert!(kin.omega_matrix[(3 + i, 3 + j)].abs() < 1e-12);
            }
        }
        // exact antisymmetry by construction
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(
                    kin.omega_matrix[(i, j)],
                    -kin.omega_matrix[(j, i)],
                );
            }
        }
    }

    #[test]
    fn qp_kinetic_form_matches_assembled_commutator_series() {
        // The fixed-frame jet construction must reproduce the term-by-term
        // assembly: θ_{s⁽ᵐ⁾} = (1/m!)M_m, the Ωs̃ṡ reference term, and the
        // operator-motion corrections with M_l = ⟨bra|(δ†)^l|ket⟩ moments.
        let omega = 6u32;
        let p = params(omega, 1.0, 4.0);
        let m_ord = 3usize;
        for scheme in [Scheme::QpEccm, Scheme::QpNccm] {
            let cfg = SchemeConfig::new(scheme, m_ord as u32, Gauge::None);
            let x = vec![0.37, 0.21, -0.13, 0.29, 0.17, 0.11, 0.0];
            let pt = point_at(&p, cfg, x.clone());
            let kin = build_kinetic_form(&p, &pt).unwrap();

            // moments M_l in the quasiparticle pair basis
            let ops = build_pair_operators(&p);
            let dim = ops.dim;
            let mut stm = OpMatrix::<f64>::zeros(dim);
            for (i, n) in (2..=m_ord).enumerate() {
                let f: f64 = (2..=n).map(|q| q as f64).product();
                stm = stm.add(&ops.lower.pow(n).scale(x[m_ord + 1 + i] / f));
            }
            let b = if matches!(scheme, Scheme::QpNccm) {
                OpMatrix::<f64>::identity(dim).add(&stm)
            } else {
                stm.expm_nilpotent().unwrap()
            };
            let e0 = OpMatrix::<f64>::basis_vec(dim, 0);
            let row = b.apply_left(&e0);
            let mm: Vec<f64> = (0..dim)
                .map(|l| {
                    let mut v = OpMatrix::<f64>::basis_vec(dim, 0);
                    for _ in 0..l {
                        v = ops.raise.apply(&v);
                    }
                    row.iter().zip(&v).map(|(a, b)| a * b).sum()
                })
                .collect();

            let fact = |n: usize| -> f64 { (1..=n).map(|q| q as f64).product() };
            let st1 = x[m_ord];
            let hs = &x[1..m_ord];
            let mut theta_s = omega as f64 * st1;
            let mut k_term = 0.0;
            for (i, m) in (2..=m_ord).enumerate() {
                theta_s -= 1.0 / fact(m - 1) * hs[i] * 2.0 * st1 * mm[m];
                k_term -= 1.0 / fact(m - 1) * hs[i] * (omega as f64 - m as f64 + 1.0) * mm[m - 1];
            }
            for (i, m) in (2..=m_ord).enumerate() {
                for (j, q) in (2..=m_ord).enumerate() {
                    if m + q - 1 < mm.len() {
                        k_term += hs[i] * hs[j] / (fact(m - 1) * fact(q - 1)) * mm[m + q - 1];
                    }
                }
            }
            theta_s += st1 * st1 * k_term;

            assert!((kin.theta[0] - theta_s).abs() < 1e-10, "{:?} θ_s", scheme);
            assert!((kin.theta[m_ord] - k_term).abs() < 1e-10, "{:?} θ_s̃", scheme);
            for (i, m) in (2..=m_ord).enumerate() {
                assert!(
                    (kin.theta[1 + i] - mm[m] / fact(m)).abs() < 1e-10,
                    "{:?} θ_s{m}",
                    scheme
                );
                assert!(kin.theta[m_ord + 1 + i].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sub1_breaking_point_has_exactly_two_zero_modes() {
        let p = params(10, 1.0, 10.0);
        let cfg = SchemeConfig::new(Scheme::ParticleEccm, 1, Gauge::DeltaSymmetric);
        let pt = newton_solve(&p, &cfg, &[0.9, 0.45, 0.1], &SolverSettings::default()).unwrap();
        assert!(pt.converged);
        let h = build_hessian(&p, &pt).unwrap();
        let kin = build_kinetic_form(&p, &pt).unwrap();
        let spec = solve_rpa(&h, &kin, RpaTolerances::default()).unwrap();
        assert_eq!(spec.frequencies.len(), 2);
        assert_eq!(spec.zero_modes, 2, "freqs {:?}", spec.frequencies);
        assert!(!spec.unstable);
        assert_eq!(spec.structural_zero_modes, 0);
    }

    #[test]
    fn vacuum_spectrum_matches_lambda_shifted_exact_gaps() {
        // N₀ = 0: the only excitations change particle number; RPA
        // frequencies equal |E_{2n} − E_0 − 2nλ| from the exact spectrum.
        let p = params(10, 1.0, 0.0);
        let cfg = SchemeConfig::new(Scheme::ParticleEccm, 2, Gauge::None);
        let lam = -1.3;
        let pt = newton_solve(&p, &cfg, &[0.0, 0.0, 0.0, 0.0, lam], &SolverSettings::default())
            .unwrap();
        assert!(pt.converged);
        let lam_star = pt.amps.lambda();
        let h = build_hessian(&p, &pt).unwrap();
        let kin = build_kinetic_form(&p, &pt).unwrap();
        let spec = solve_rpa(&h, &kin, RpaTolerances::default()).unwrap();
        let exact = crate::oracle::exact_spectrum(&p);
        let e0 = exact.energies_by_pairnumber[0];
        for w in &spec.frequencies {
            assert!(w.im.abs() < 1e-9);
            let wv = w.re.abs();
            if wv < 1e-9 {
                continue;
            }
            let ok = (1..=2).any(|n| {
                let gap = (exact.energies_by_pairnumber[n] - e0 - 2.0 * n as f64 * lam_star).abs();
                (wv - gap).abs() <= 1e-7 * (1.0 + gap)
            });
            assert!(ok, "frequency {wv} matches no λ-shifted gap");
        }
    }

    #[test]
    fn nccm_block_shortcut_matches_generalized_spectrum() {
        let p = params(10, 1.0, 6.0);
        let cfg = SchemeConfig::new(Scheme::QpNccm, 2, Gauge::ScalingFix);
        let q = (6.0_f64 / 20.0).sqrt();
        let pt = newton_solve(&p, &cfg, &[q, 0.0, q, 0.0, -1.8], &SolverSettings::default())
            .unwrap();
        assert!(pt.converged);
        let (h_r, kin_r, block) = nccm_block_frequencies(&p, &pt).unwrap();
        let spec = solve_rpa(&h_r, &kin_r, RpaTolerances::default()).unwrap();
        // The restricted (fixed-reference) pencil spectrum is exactly the
        // ± extension of the block eigenvalues.
        assert_eq!(spec.frequencies.len(), 2 * block.len());
        for b in &block {
            for sign in [1.0, -1.0] {
                let target = b * sign;
                let hit = spec
                    .frequencies
                    .iter()
                    .any(|w| (w - target).norm() <= 1e-9 * (1.0 + target.norm()));
                assert!(hit, "missing {target} in {:?}", spec.frequencies);
            }
        }
    }

    #[test]
    fn plus_minus_pairing_small_cases() {
        let mut spec = RpaSpectrum {
            frequencies: vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(3.0, 0.0),
                Complex64::new(-3.0, 0.0),
            ],
            classes: vec![],
            zero_modes: 0,
            unstable: false,
            pairing: vec![],
            structural_zero_modes: 0,
            freq_scale: 0.0,
        };
        classify_modes(&mut spec, RpaTolerances { zero_rel: 1e-6, imag_rel: 1e-8 });
        assert_eq!(spec.zero_modes, 2);
        assert!(!spec.unstable);
        assert_eq!(spec.pairing.len(), 1);
        assert_eq!(spec.classes[2], ModeClass::Real);
    }

    #[test]
    fn zero_symplectic_form_reports_no_dynamics() {
        let h = DMatrix::identity(2, 2);
        let kin = KineticForm {
            theta: vec![0.0, 0.0],
            omega_matrix: DMatrix::zeros(2, 2),
            kernel: vec![],
        };
        assert!(matches!(
            solve_rpa(&h, &kin, RpaTolerances::default()),
            Err(RpaError::NoDynamics)
        ));
    }
}
