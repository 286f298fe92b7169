//! Independent ground truth for the functional machinery.
//!
//! Exact per-sector energies of H = −G(Δ†Δ − N/2) follow from the quasispin
//! algebra: the seniority-zero states (Δ†)^m|0⟩ are eigenstates with
//! E = −G(Ω−m)m. Beyond the closed forms, `expectation_bruteforce`
//! re-evaluates every CCM functional with nothing but the recursive action
//! rules
//!
//! ```text
//!   Δ† (Δ†)^m|0⟩ = (Δ†)^{m+1}|0⟩,
//!   Δ  (Δ†)^m|0⟩ = m(Ω−m+1)(Δ†)^{m−1}|0⟩,
//!   N  (Δ†)^m|0⟩ = 2m (Δ†)^m|0⟩,
//! ```
//!
//! applied term by term to coefficient vectors — deliberately sharing no
//! code with the matrix representation, so agreement between the two is
//! meaningful evidence.

use thiserror::Error;

use crate::functional::{Scheme, SchemeConfig};
use crate::quasispin::ModelParams;

/// Largest Ω accepted by the combinatorial expansion.
const BRUTEFORCE_OMEGA_MAX: u32 = 8;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("particle number {0} is odd; only the seniority-zero sector is modeled")]
    OddParticleNumber(u32),
    #[error("particle number {n} outside [0, {max}]")]
    ParticleNumberOutOfRange { n: u32, max: u32 },
    #[error("combinatorial budget exceeded: omega = {0} > {BRUTEFORCE_OMEGA_MAX}")]
    BudgetExceeded(u32),
    #[error("amplitude vector has length {got}, scheme needs {want}")]
    BadAmplitudeCount { got: usize, want: usize },
}

/// Exact seniority-zero spectrum, indexed by pair number m = N/2.
#[derive(Debug, Clone)]
pub struct ExactSpectrum {
    /// E(m) for m = 0..Ω.
    pub energies_by_pairnumber: Vec<f64>,
    /// Eigenvectors in the normalized pair basis; H is diagonal there, so
    /// these are the coordinate vectors.
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Ground-state energy −G(Ω − N/2)(N/2) for an even particle number.
pub fn exact_ground_energy(params: &ModelParams, n_particles: u32) -> Result<f64, OracleError> {
    if n_particles % 2 != 0 {
        return Err(OracleError::OddParticleNumber(n_particles));
    }
    let max = 2 * params.omega;
    if n_particles > max {
        return Err(OracleError::ParticleNumberOutOfRange {
            n: n_particles,
            max,
        });
    }
    let m = n_particles as f64 / 2.0;
    Ok(-params.g * (params.omega as f64 - m) * m + 0.0)
}

/// The closed form evaluated at a real-valued particle number; the unique
/// quadratic through every even-N ground-state energy, used as the exact
/// reference curve when sweeping a continuous ⟨N⟩.
pub fn exact_energy_continuous(params: &ModelParams, n: f64) -> f64 {
    let m = n / 2.0;
    -params.g * (params.omega as f64 - m) * m + 0.0
}

/// Exact per-sector energies. H commutes with N, so the seniority-zero
/// sector is diagonal in pair number; the diagonal entries are computed by
/// the action rules and checked against the closed form.
pub fn exact_spectrum(params: &ModelParams) -> ExactSpectrum {
    let omega = params.omega as usize;
    let dim = omega + 1;
    let mut energies = Vec::with_capacity(dim);
    for m in 0..dim {
        // ⟨m|H|m⟩ via Δ†Δ-action: Δ(Δ†)^m|0⟩ = m(Ω−m+1)(Δ†)^{m−1}|0⟩,
        // then raising restores (Δ†)^m with the same coefficient.
        let pair_term = (m * (omega - m + 1)) as f64;
        let e = -params.g * (pair_term - m as f64) + 0.0;
        let closed = -params.g * (omega as f64 - m as f64) * m as f64 + 0.0;
        let scale = closed.abs().max(1.0);
        assert!(
            (e - closed).abs() <= 1e-12 * scale,
            "diagonal energy disagrees with closed form at m={m}"
        );
        energies.push(e);
    }
    let eigenvectors = (0..dim)
        .map(|m| {
            let mut v = vec![0.0; dim];
            v[m] = 1.0;
            v
        })
        .collect();
    ExactSpectrum {
        energies_by_pairnumber: energies,
        eigenvectors,
    }
}

/// Which operator to take the expectation of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableKind {
    Hamiltonian,
    Number,
    NumberSquared,
    PairAnnihilator,
    PairCreator,
}

/// Coefficient vector over (Δ†)^m|0⟩ together with the elementary actions.
struct Action {
    omega: usize,
}

impl Action {
    fn raise(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for m in 0..v.len() - 1 {
            out[m + 1] = v[m];
        }
        out
    }

    fn lower(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for m in 1..v.len() {
            out[m - 1] = (m * (self.omega - m + 1)) as f64 * v[m];
        }
        out
    }

    fn number(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(m, c)| 2.0 * m as f64 * c)
            .collect()
    }

    // Right-composition rules for functionals (row vectors): (r∘A)(|m⟩) = r(A|m⟩).
    fn row_raise(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        for m in 0..r.len() - 1 {
            out[m] = r[m + 1];
        }
        out
    }

    fn row_lower(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        for m in 1..r.len() {
            out[m] = (m * (self.omega - m + 1)) as f64 * r[m - 1];
        }
        out
    }

    fn row_number(&self, r: &[f64]) -> Vec<f64> {
        r.iter()
            .enumerate()
            .map(|(m, c)| 2.0 * m as f64 * c)
            .collect()
    }
}

fn axpy(acc: &mut [f64], a: f64, v: &[f64]) {
    for (o, x) in acc.iter_mut().zip(v) {
        *o += a * x;
    }
}

/// Terminating exponential series applied to a vector; every operator used
/// here is nilpotent on the finite pair space, so `dim` terms are exact.
fn exp_apply(op: &dyn Fn(&[f64]) -> Vec<f64>, v: &[f64]) -> Vec<f64> {
    let mut acc = v.to_vec();
    let mut term = v.to_vec();
    for k in 1..v.len() {
        term = op(&term);
        let f = 1.0 / k as f64;
        for t in term.iter_mut() {
            *t *= f;
        }
        axpy(&mut acc, 1.0, &term);
    }
    acc
}

/// Exact expectation value of `observable` in the state described by the
/// scheme and amplitudes, evaluated purely through the action rules.
pub fn expectation_bruteforce(
    params: &ModelParams,
    cfg: &SchemeConfig,
    x: &[f64],
    observable: ObservableKind,
) -> Result<f64, OracleError> {
    if params.omega > BRUTEFORCE_OMEGA_MAX {
        return Err(OracleError::BudgetExceeded(params.omega));
    }
    if x.len() != cfg.n_unknowns() {
        return Err(OracleError::BadAmplitudeCount {
            got: x.len(),
            want: cfg.n_unknowns(),
        });
    }
    let omega = params.omega as usize;
    let dim = omega + 1;
    let act = Action { omega };
    let m_ord = cfg.order as usize;
    let k = cfg.s_block_len();

    let mut e0 = vec![0.0; dim];
    e0[0] = 1.0;

    let (ket, bra) = match cfg.scheme {
        Scheme::ParticleEccm => {
            let s_amps = &x[..k];
            let st_amps = &x[k..2 * k];
            let s_op = |v: &[f64]| -> Vec<f64> {
                let mut out = vec![0.0; v.len()];
                let mut pw = v.to_vec();
                for s in s_amps.iter().take(m_ord) {
                    pw = act.raise(&pw);
                    axpy(&mut out, *s, &pw);
                }
                out
            };
            let ket = exp_apply(&s_op, &e0);

            let row_st = |r: &[f64]| -> Vec<f64> {
                let mut out = vec![0.0; r.len()];
                let mut pw = r.to_vec();
                for st in st_amps.iter().take(m_ord) {
                    pw = act.row_lower(&pw);
                    axpy(&mut out, *st, &pw);
                }
                out
            };
            let row_ms = |r: &[f64]| -> Vec<f64> {
                let mut out = vec![0.0; r.len()];
                let mut pw = r.to_vec();
                for s in s_amps.iter().take(m_ord) {
                    pw = act.row_raise(&pw);
                    axpy(&mut out, -*s, &pw);
                }
                out
            };
            let bra = exp_apply(&row_ms, &exp_apply(&row_st, &e0));
            (ket, bra)
        }
        Scheme::QpEccm | Scheme::QpNccm | Scheme::MaxOverlap { .. } => {
            let (s1, s1t, hs, hst): (f64, f64, &[f64], &[f64]) = match cfg.scheme {
                Scheme::MaxOverlap { s1, s1t } => (s1, s1t, &x[..k], &x[k..2 * k]),
                _ => (x[0], x[k], &x[1..k], &x[k + 1..2 * k]),
            };
            let xx = s1 * s1t;

            // δ† = (1−ss̃)²Δ† − s̃²Δ + s̃(1−ss̃)(N−Ω), δ = Δ − s²Δ† + s(N−Ω),
            // from inverting the bi-canonical quasiparticle map.
            let ddag = |v: &[f64]| -> Vec<f64> {
                let mut out = vec![0.0; v.len()];
                axpy(&mut out, (1.0 - xx) * (1.0 - xx), &act.raise(v));
                axpy(&mut out, -s1t * s1t, &act.lower(v));
                axpy(&mut out, s1t * (1.0 - xx), &act.number(v));
                axpy(&mut out, -s1t * (1.0 - xx) * omega as f64, v);
                out
            };
            let row_ddag = |r: &[f64]| -> Vec<f64> {
                let mut out = vec![0.0; r.len()];
                axpy(&mut out, (1.0 - xx) * (1.0 - xx), &act.row_raise(r));
                axpy(&mut out, -s1t * s1t, &act.row_lower(r));
                axpy(&mut out, s1t * (1.0 - xx), &act.row_number(r));
                axpy(&mut out, -s1t * (1.0 - xx) * omega as f64, r);
                out
            };
            let row_d = |r: &[f64]| -> Vec<f64> {
                let mut out = vec![0.0; r.len()];
                axpy(&mut out, 1.0, &act.row_lower(r));
                axpy(&mut out, -s1 * s1, &act.row_raise(r));
                axpy(&mut out, s1, &act.row_number(r));
                axpy(&mut out, -s1 * omega as f64, r);
                out
            };

            // SUB(M) cluster built from quasiparticle pairs, 1/n! weights.
            let sm_op = |v: &[f64]| -> Vec<f64> {
                let mut out = vec![0.0; v.len()];
                let mut pw = ddag(&ddag(v));
                for (i, n) in (2..=m_ord).enumerate() {
                    let f: f64 = (2..=n).map(|q| q as f64).product();
                    axpy(&mut out, hs[i] / f, &pw);
                    if n < m_ord {
                        pw = ddag(&pw);
                    }
                }
                out
            };
            let row_msm = |r: &[f64]| -> Vec<f64> {
                let mut out = vec![0.0; r.len()];
                let mut pw = row_ddag(&row_ddag(r));
                for (i, n) in (2..=m_ord).enumerate() {
                    let f: f64 = (2..=n).map(|q| q as f64).product();
                    axpy(&mut out, -hs[i] / f, &pw);
                    if n < m_ord {
                        pw = row_ddag(&pw);
                    }
                }
                out
            };
            let row_stm = |r: &[f64]| -> Vec<f64> {
                let mut out = vec![0.0; r.len()];
                let mut pw = row_d(&row_d(r));
                for (i, n) in (2..=m_ord).enumerate() {
                    let f: f64 = (2..=n).map(|q| q as f64).product();
                    axpy(&mut out, hst[i] / f, &pw);
                    if n < m_ord {
                        pw = row_d(&pw);
                    }
                }
                out
            };

            let sub1_ket = {
                let s_op = |v: &[f64]| {
                    let mut out = act.raise(v);
                    for o in out.iter_mut() {
                        *o *= s1;
                    }
                    out
                };
                exp_apply(&s_op, &e0)
            };
            let ket = exp_apply(&sm_op, &sub1_ket);

            let bra = {
                let row_st1 = |r: &[f64]| {
                    let mut out = act.row_lower(r);
                    for o in out.iter_mut() {
                        *o *= s1t;
                    }
                    out
                };
                let row_ms1 = |r: &[f64]| {
                    let mut out = act.row_raise(r);
                    for o in out.iter_mut() {
                        *o *= -s1;
                    }
                    out
                };
                let mut r = exp_apply(&row_st1, &e0);
                r = exp_apply(&row_ms1, &r);
                r = match cfg.scheme {
                    Scheme::QpNccm => {
                        let mut with_lin = r.clone();
                        axpy(&mut with_lin, 1.0, &row_stm(&r));
                        with_lin
                    }
                    _ => exp_apply(&row_stm, &r),
                };
                exp_apply(&row_msm, &r)
            };
            (ket, bra)
        }
    };

    // (bra ∘ O) · ket with O applied through row composition.
    let row_obs = match observable {
        ObservableKind::Hamiltonian => {
            // H = −G(Δ†Δ − N/2)
            let mut r = act.row_raise(&bra);
            r = act.row_lower(&r);
            let mut out = r;
            for (o, n) in out.iter_mut().zip(act.row_number(&bra)) {
                *o = -params.g * (*o - 0.5 * n);
            }
            out
        }
        ObservableKind::Number => act.row_number(&bra),
        ObservableKind::NumberSquared => act.row_number(&act.row_number(&bra)),
        ObservableKind::PairAnnihilator => act.row_lower(&bra),
        ObservableKind::PairCreator => act.row_raise(&bra),
    };
    Ok(row_obs.iter().zip(&ket).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{Gauge, Scheme, SchemeConfig};

    fn params(omega: u32, g: f64) -> ModelParams {
        ModelParams::new(omega, g, 0.0).unwrap()
    }

    #[test]
    fn ground_energy_closed_form() {
        let p = params(10, 1.0);
        assert_eq!(exact_ground_energy(&p, 10).unwrap(), -25.0);
        assert_eq!(exact_ground_energy(&p, 0).unwrap(), 0.0);
        assert_eq!(exact_ground_energy(&p, 20).unwrap(), 0.0);
        assert_eq!(
            exact_ground_energy(&p, 3).unwrap_err(),
            OracleError::OddParticleNumber(3)
        );
        assert!(exact_ground_energy(&p, 22).is_err());
    }

    #[test]
    fn spectrum_small_shells() {
        let s = exact_spectrum(&params(4, 1.0));
        assert_eq!(s.energies_by_pairnumber, vec![0.0, -3.0, -4.0, -3.0, 0.0]);
        let s1 = exact_spectrum(&params(1, 1.0));
        assert_eq!(s1.energies_by_pairnumber, vec![0.0, 0.0]);
    }

    #[test]
    fn particle_hole_symmetry() {
        for omega in 1..=20u32 {
            let s = exact_spectrum(&params(omega, 0.7));
            let e = &s.energies_by_pairnumber;
            for m in 0..=omega as usize {
                assert_eq!(e[m], e[omega as usize - m]);
            }
        }
    }

    #[test]
    fn closed_form_vs_diagonal_exact() {
        for omega in 1..=20u32 {
            let p = params(omega, 1.0);
            let s = exact_spectrum(&p);
            for m in 0..=omega {
                assert_eq!(
                    s.energies_by_pairnumber[m as usize],
                    exact_ground_energy(&p, 2 * m).unwrap()
                );
            }
        }
    }

    #[test]
    fn bruteforce_reproduces_moment_norms() {
        // ⟨0|Δ^m (Δ†)^m|0⟩ = m!Ω!/(Ω−m)! through raw action composition.
        let fact = |n: u32| (1..=n as u64).product::<u64>() as f64;
        for omega in 1..=8u32 {
            let act = Action {
                omega: omega as usize,
            };
            for m in 0..=omega {
                let mut v = vec![0.0; omega as usize + 1];
                v[0] = 1.0;
                for _ in 0..m {
                    v = act.raise(&v);
                }
                for _ in 0..m {
                    v = act.lower(&v);
                }
                let closed = fact(m) * fact(omega) / fact(omega - m);
                assert_eq!(v[0], closed, "omega={omega}, m={m}");
            }
        }
    }

    #[test]
    fn vacuum_expectations_vanish() {
        let p = params(4, 1.0);
        let cfg = SchemeConfig::new(Scheme::ParticleEccm, 2, Gauge::None);
        let x = vec![0.0; cfg.n_unknowns()];
        for obs in [
            ObservableKind::Hamiltonian,
            ObservableKind::Number,
            ObservableKind::NumberSquared,
            ObservableKind::PairAnnihilator,
        ] {
            assert_eq!(expectation_bruteforce(&p, &cfg, &x, obs).unwrap(), 0.0);
        }
    }

    #[test]
    fn sub1_number_expectation() {
        // ⟨N⟩ = 2Ω s s̃ exactly at SUB(1).
        let p = params(4, 1.0);
        let cfg = SchemeConfig::new(Scheme::ParticleEccm, 1, Gauge::None);
        let (s, st) = (0.63, -0.21);
        let n = expectation_bruteforce(&p, &cfg, &[s, st, 0.0], ObservableKind::Number).unwrap();
        assert!((n - 2.0 * 4.0 * s * st).abs() < 1e-13);
    }

    #[test]
    fn budget_rejected() {
        let p = params(9, 1.0);
        let cfg = SchemeConfig::new(Scheme::ParticleEccm, 1, Gauge::None);
        assert_eq!(
            expectation_bruteforce(&p, &cfg, &[0.0; 3], ObservableKind::Number).unwrap_err(),
            OracleError::BudgetExceeded(9)
        );
    }
}
