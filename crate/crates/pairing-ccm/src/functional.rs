//! Constrained CCM energy functionals and their exact derivatives.
//!
//! Each scheme evaluates bi-variational expectation values
//!
//! ```text
//!   ⟨O⟩ = ⟨bra| O |ket⟩,   |ket⟩ = e^S |ref⟩,   ⟨bra| = ⟨ref| B e^{-S},
//! ```
//!
//! with `B = e^{S̃}` (extended CCM) or `B = 1 + S̃` (normal CCM), as finite
//! polynomial matrix products in the seniority-zero pair basis. The particle
//! scheme uses the bare pair operators; the quasiparticle (Brueckner)
//! schemes rotate to the SUB(1) quasiparticle frame, where the pair algebra
//! has the same matrix representation and the physical operators become
//! polynomials in the ladder matrices with amplitude-dependent coefficients.
//!
//! Conventions: the particle-scheme cluster operator is Σ s_n (Δ†)^n with no
//! factorial weights, while the quasiparticle schemes use Σ (1/n!) s⁽ⁿ⁾(δ†)ⁿ.
//! Both are scheme-local choices and tested against the independent
//! combinatorial oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::{Dual, Dual2, Ring};
use crate::quasispin::{build_pair_operators, ModelParams, OpMatrix, QuasispinError};

#[derive(Debug, Error)]
pub enum FunctionalError {
    #[error(transparent)]
    Model(#[from] QuasispinError),
    #[error("truncation order {order} out of range [{min}, {max}] for this scheme at omega={omega}")]
    OrderOutOfRange { order: u32, min: u32, max: u32, omega: u32 },
    #[error("amplitude vector has length {got}, scheme needs {want}")]
    BadAmplitudeCount { got: usize, want: usize },
    #[error("operation requires scheme {want}, got {got}")]
    WrongScheme { want: &'static str, got: String },
    #[error("max-overlap scheme has no gauge freedom; use Gauge::None")]
    MaxOverlapGauge,
}

/// Which CCM variant parameterizes the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    /// e^{Σ sₙ Δ†ⁿ}|0⟩ with the double-exponential bra.
    ParticleEccm,
    /// Quasiparticle (Brueckner) extended CCM: SUB(1) pair co-optimized
    /// with Σ (1/n!) s⁽ⁿ⁾ (δ†)ⁿ, bra e^{S̃}.
    QpEccm,
    /// Same ket, normal-CCM bra (1 + S̃).
    QpNccm,
    /// SUB(1) pair frozen at externally supplied mean-field values; only
    /// the higher-order quasiparticle amplitudes and λ vary.
    MaxOverlap { s1: f64, s1t: f64 },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ParticleEccm => "particle-eccm",
            Scheme::QpEccm => "qp-eccm",
            Scheme::QpNccm => "qp-nccm",
            Scheme::MaxOverlap { .. } => "max-overlap",
        }
    }

    fn is_qp(&self) -> bool {
        !matches!(self, Scheme::ParticleEccm)
    }
}

/// Gauge condition breaking the bi-variational scaling redundancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gauge {
    /// Σ n (sₙ² − s̃ₙ²) = 0.
    ScalingFix,
    /// ⟨Δ⟩ = ⟨Δ†⟩ (the standard mean-field convention; reproduces the
    /// SUB(1) closed forms).
    DeltaSymmetric,
    /// Keep the raw stationarity system; rank-deficient steps are handled
    /// by the solver's minimum-norm factorization.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// SUB(M) truncation order.
    pub order: u32,
    pub gauge: Gauge,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, order: u32, gauge: Gauge) -> Self {
        SchemeConfig { scheme, order, gauge }
    }

    /// Default gauge per truncation: ⟨Δ⟩=⟨Δ†⟩ at SUB(1), where it is
    /// always satisfiable and pins the textbook mean-field representative;
    /// the scaling fix at higher order.
    pub fn with_default_gauge(scheme: Scheme, order: u32) -> Self {
        let gauge = match scheme {
            Scheme::MaxOverlap { .. } => Gauge::None,
            Scheme::ParticleEccm if order == 1 => Gauge::DeltaSymmetric,
            _ => Gauge::ScalingFix,
        };
        SchemeConfig { scheme, order, gauge }
    }

    /// Number of s-type unknowns (same for s̃-type).
    pub fn s_block_len(&self) -> usize {
        match self.scheme {
            Scheme::ParticleEccm | Scheme::QpEccm | Scheme::QpNccm => self.order as usize,
            Scheme::MaxOverlap { .. } => self.order as usize - 1,
        }
    }

    /// Total unknown count: s-block, s̃-block, λ.
    pub fn n_unknowns(&self) -> usize {
        2 * self.s_block_len() + 1
    }

    /// Scaling-orbit weight of the i-th entry of the s-block (the pair
    /// excitation order it multiplies).
    pub fn block_weight(&self, i: usize) -> u32 {
        match self.scheme {
            Scheme::ParticleEccm => i as u32 + 1,
            Scheme::QpEccm | Scheme::QpNccm => {
                if i == 0 {
                    1
                } else {
                    i as u32 + 1
                }
            }
            Scheme::MaxOverlap { .. } => i as u32 + 2,
        }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<(), FunctionalError> {
        let omega = params.omega;
        let (min, max) = match self.scheme {
            Scheme::ParticleEccm => (1, omega),
            Scheme::QpEccm | Scheme::QpNccm | Scheme::MaxOverlap { .. } => (2, omega),
        };
        if self.order < min || self.order > max {
            return Err(FunctionalError::OrderOutOfRange {
                order: self.order,
                min,
                max,
                omega,
            });
        }
        if matches!(self.scheme, Scheme::MaxOverlap { .. }) && self.gauge != Gauge::None {
            return Err(FunctionalError::MaxOverlapGauge);
        }
        Ok(())
    }
}

/// Flattened unknowns (s-block, s̃-block, λ) tagged with their scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeVector {
    pub x: Vec<f64>,
    pub config: SchemeConfig,
}

impl AmplitudeVector {
    pub fn new(config: SchemeConfig, x: Vec<f64>) -> Result<Self, FunctionalError> {
        if x.len() != config.n_unknowns() {
            return Err(FunctionalError::BadAmplitudeCount {
                got: x.len(),
                want: config.n_unknowns(),
            });
        }
        Ok(AmplitudeVector { x, config })
    }

    pub fn zeros(config: SchemeConfig) -> Self {
        AmplitudeVector {
            x: vec![0.0; config.n_unknowns()],
            config,
        }
    }

    pub fn lambda(&self) -> f64 {
        *self.x.last().unwrap()
    }

    pub fn s_block(&self) -> &[f64] {
        &self.x[..self.config.s_block_len()]
    }

    pub fn st_block(&self) -> &[f64] {
        let k = self.config.s_block_len();
        &self.x[k..2 * k]
    }

    /// Apply the scaling gauge orbit sₙ → αⁿ sₙ, s̃ₙ → α⁻ⁿ s̃ₙ (λ fixed).
    pub fn orbit_rescaled(&self, alpha: f64) -> Self {
        let k = self.config.s_block_len();
        let mut x = self.x.clone();
        for i in 0..k {
            let w = self.config.block_weight(i) as i32;
            x[i] *= alpha.powi(w);
            x[k + i] *= alpha.powi(-w);
        }
        AmplitudeVector {
            x,
            config: self.config,
        }
    }
}

/// Expectation values at a point. `energy` excludes the λ(N−N₀) term; the
/// constraint lives in the residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub energy: f64,
    pub n_mean: f64,
    pub n2_mean: f64,
    /// ⟨N²⟩ − ⟨N⟩²; may legitimately be negative for unphysical
    /// bi-variational states (a diagnostic, not an error).
    pub dn2: f64,
    pub delta_expect: f64,
    pub delta_dag_expect: f64,
}

pub(crate) struct EvalSet<T> {
    pub energy: T,
    pub n_mean: T,
    pub n2_mean: T,
    pub delta: T,
    pub delta_dag: T,
}

/// Shared f64 operator matrices for one shell.
struct Workspace {
    dim: usize,
    omega: f64,
    g: f64,
    ident: OpMatrix<f64>,
    raise_pows: Vec<OpMatrix<f64>>, // raise^1 .. raise^M
    lower_pows: Vec<OpMatrix<f64>>,
    // diagonals and composites used by the qp polynomials
    nmat: OpMatrix<f64>,      // 2·npairs
    omn: OpMatrix<f64>,       // Ω·I − n
    omn2: OpMatrix<f64>,      // (Ω·I − n)²
    rl: OpMatrix<f64>,        // δ†δ
    r_omn_m1: OpMatrix<f64>,  // δ†(Ω−n−1)
    omn_m1_l: OpMatrix<f64>,  // (Ω−n−1)δ
    h_diag: OpMatrix<f64>,    // particle H = −G·m(Ω−m) on the diagonal
    n_diag: OpMatrix<f64>,    // particle N
    n2_diag: OpMatrix<f64>,   // particle N²
}

impl Workspace {
    fn new(params: &ModelParams, max_pow: usize) -> Self {
        let max_pow = max_pow.max(2); // qp polynomials use δ†² and δ²
        let ops = build_pair_operators(params);
        let dim = ops.dim;
        let omega = params.omega as f64;
        let ident = OpMatrix::<f64>::identity(dim);
        let mut raise_pows = Vec::with_capacity(max_pow);
        let mut lower_pows = Vec::with_capacity(max_pow);
        let mut rp = ops.raise.clone();
        let mut lp = ops.lower.clone();
        for _ in 0..max_pow {
            raise_pows.push(rp.clone());
            lower_pows.push(lp.clone());
            rp = rp.matmul(&ops.raise);
            lp = lp.matmul(&ops.lower);
        }
        let nmat = ops.npairs.scale(2.0);
        let omn = ident.scale(omega).sub(&nmat);
        let omn2 = omn.matmul(&omn);
        let rl = ops.raise.matmul(&ops.lower);
        let omn_m1 = ident.scale(omega - 1.0).sub(&nmat);
        let r_omn_m1 = ops.raise.matmul(&omn_m1);
        let omn_m1_l = omn_m1.matmul(&ops.lower);
        let mut h_diag = OpMatrix::<f64>::zeros(dim);
        let mut n_diag = OpMatrix::<f64>::zeros(dim);
        let mut n2_diag = OpMatrix::<f64>::zeros(dim);
        for m in 0..dim {
            let mf = m as f64;
            h_diag.set(m, m, -params.g * mf * (omega - mf));
            n_diag.set(m, m, 2.0 * mf);
            n2_diag.set(m, m, 4.0 * mf * mf);
        }
        Workspace {
            dim,
            omega,
            g: params.g,
            ident,
            raise_pows,
            lower_pows,
            nmat,
            omn,
            omn2,
            rl,
            r_omn_m1,
            omn_m1_l,
            h_diag,
            n_diag,
            n2_diag,
        }
    }

    fn raise(&self) -> &OpMatrix<f64> {
        &self.raise_pows[0]
    }

    fn lower(&self) -> &OpMatrix<f64> {
        &self.lower_pows[0]
    }
}

/// Σ coeffᵢ · Mᵢ with jet coefficients over f64 matrices.
fn combine<T: Ring>(dim: usize, terms: &[(T, &OpMatrix<f64>)]) -> OpMatrix<T> {
    let mut out = OpMatrix::<T>::zeros(dim);
    for (coeff, mat) in terms {
        if coeff.is_zero() {
            continue;
        }
        for i in 0..dim {
            for j in 0..dim {
                let e = *mat.get(i, j);
                if e != 0.0 {
                    let v = out.get(i, j).add(&coeff.scale(e));
                    out.set(i, j, v);
                }
            }
        }
    }
    out
}

fn dot<T: Ring>(row: &[T], col: &[T]) -> T {
    let mut acc = T::zero();
    for (a, b) in row.iter().zip(col) {
        if !a.is_zero() && !b.is_zero() {
            acc = acc.add(&a.mul(b));
        }
    }
    acc
}

/// row · X(f64) · col without lifting X.
fn sandwich_f64<T: Ring>(row: &[T], x: &OpMatrix<f64>, col: &[T]) -> T {
    let dim = x.dim();
    let mut acc = T::zero();
    for i in 0..dim {
        if row[i].is_zero() {
            continue;
        }
        for j in 0..dim {
            let e = *x.get(i, j);
            if e != 0.0 && !col[j].is_zero() {
                acc = acc.add(&row[i].mul(&col[j]).scale(e));
            }
        }
    }
    acc
}

/// The quasiparticle operator polynomials. `s`, `st` are the SUB(1)
/// amplitudes as ring elements; the returned matrices act in the
/// quasiparticle pair basis.
struct QpOperators<T> {
    h: OpMatrix<T>,
    n: OpMatrix<T>,
    n2: OpMatrix<T>,
    delta: OpMatrix<T>,
    delta_dag: OpMatrix<T>,
}

fn qp_operators<T: Ring>(ws: &Workspace, s: &T, st: &T) -> QpOperators<T> {
    let dim = ws.dim;
    let omega = ws.omega;
    let one = T::one();
    let x = s.mul(st);
    let omx = one.sub(&x); // 1 − ss̃
    let om2x = one.sub(&x.scale(2.0)); // 1 − 2ss̃
    let x_omx = x.mul(&omx);
    let kin = omx.mul(&omx).add(&x.mul(&x)); // (1−ss̃)² + (ss̃)²
    let st_omx = st.mul(&omx);

    // H/G = Ω/2 − ss̃(1−ss̃)(Ω−n)² − [(1−ss̃)²+(ss̃)²][δ†δ + (Ω−n)/2]
    //       + s²δ†δ† + [s̃(1−ss̃)]²δδ
    //       − s(1−2ss̃)δ†(Ω−n−1) − s̃(1−ss̃)(1−2ss̃)(Ω−n−1)δ
    // (δ†δ enters with a minus sign; only then does the polynomial agree
    // with −(Δ†Δ − N/2) pushed through the quasiparticle transformation,
    // reproduce the SUB(1) energy, and satisfy H = G(N²/4 − ΩN/2).)
    let h = combine(
        dim,
        &[
            (T::from_f64(omega / 2.0), &ws.ident),
            (x_omx.neg(), &ws.omn2),
            (kin.neg(), &ws.rl),
            (kin.scale(-0.5), &ws.omn),
            (s.mul(s), &ws.raise_pows[1]),
            (st_omx.mul(&st_omx), &ws.lower_pows[1]),
            (s.mul(&om2x).neg(), &ws.r_omn_m1),
            (st_omx.mul(&om2x).neg(), &ws.omn_m1_l),
        ],
    )
    .scale(ws.g);

    // N = 2Ωss̃ + (1−2ss̃)n + 2sδ† + 2s̃(1−ss̃)δ
    let n = combine(
        dim,
        &[
            (x.scale(2.0 * omega), &ws.ident),
            (om2x.clone(), &ws.nmat),
            (s.scale(2.0), ws.raise()),
            (st_omx.scale(2.0), ws.lower()),
        ],
    );

    // N² expansion; equals the square of the N matrix (tested).
    let n2 = combine(
        dim,
        &[
            (T::from_f64(omega * omega), &ws.ident),
            (s.scale(4.0 * omega), ws.raise()),
            (st_omx.scale(4.0 * omega), ws.lower()),
            (x_omx.scale(8.0), &ws.rl),
            (om2x.mul(&om2x), &ws.omn2),
            (
                x_omx.scale(2.0).sub(&om2x.scale(omega)).scale(2.0),
                &ws.omn,
            ),
            (s.mul(s).scale(4.0), &ws.raise_pows[1]),
            (st_omx.mul(&st_omx).scale(4.0), &ws.lower_pows[1]),
            (s.mul(&om2x).scale(-4.0), &ws.r_omn_m1),
            (st_omx.mul(&om2x).scale(-4.0), &ws.omn_m1_l),
        ],
    );

    // Δ = (1−ss̃)²δ − s²δ† + s(1−ss̃)(Ω−n)
    let delta = combine(
        dim,
        &[
            (omx.mul(&omx), ws.lower()),
            (s.mul(s).neg(), ws.raise()),
            (s.mul(&omx), &ws.omn),
        ],
    );

    // Δ† = δ† − s̃²δ + s̃(Ω−n)
    let delta_dag = combine(
        dim,
        &[
            (one, ws.raise()),
            (st.mul(st).neg(), ws.lower()),
            (st.clone(), &ws.omn),
        ],
    );

    QpOperators {
        h,
        n,
        n2,
        delta,
        delta_dag,
    }
}

/// Split a scheme's unknown vector into jets.
fn jet_vars<T: Ring>(x: &[f64], mk: impl Fn(f64, usize) -> T) -> Vec<T> {
    x.iter().enumerate().map(|(i, &v)| mk(v, i)).collect()
}

/// Core evaluation shared by all derivative orders; `x` has the scheme's
/// unknown layout (λ last, unused here).
pub(crate) fn eval_all<T: Ring>(
    params: &ModelParams,
    cfg: &SchemeConfig,
    x: &[T],
) -> EvalSet<T> {
    let m = cfg.order as usize;
    let k = cfg.s_block_len();
    let ws = Workspace::new(params, m.max(1));
    let dim = ws.dim;

    match cfg.scheme {
        Scheme::ParticleEccm => {
            // S = Σ sₙ (Δ†)ⁿ, S̃ = Σ s̃ₙ Δⁿ (no factorials).
            let s_terms: Vec<(T, &OpMatrix<f64>)> = (0..m)
                .map(|i| (x[i].clone(), &ws.raise_pows[i]))
                .collect();
            let st_terms: Vec<(T, &OpMatrix<f64>)> = (0..m)
                .map(|i| (x[k + i].clone(), &ws.lower_pows[i]))
                .collect();
            let s_mat = combine(dim, &s_terms);
            let st_mat = combine(dim, &st_terms);

            let e_s = s_mat.expm_nilpotent().expect("strictly lower triangular");
            let e_ms = s_mat.neg().expm_nilpotent().expect("strictly lower triangular");
            let e_st = st_mat.expm_nilpotent().expect("strictly upper triangular");

            let ket = {
                let e0 = OpMatrix::<T>::basis_vec(dim, 0);
                e_s.apply(&e0)
            };
            let bra = {
                let e0 = OpMatrix::<T>::basis_vec(dim, 0);
                let r = e_st.apply_left(&e0);
                e_ms.apply_left(&r)
            };

            EvalSet {
                energy: sandwich_f64(&bra, &ws.h_diag, &ket),
                n_mean: sandwich_f64(&bra, &ws.n_diag, &ket),
                n2_mean: sandwich_f64(&bra, &ws.n2_diag, &ket),
                delta: sandwich_f64(&bra, ws.lower(), &ket),
                delta_dag: sandwich_f64(&bra, ws.raise(), &ket),
            }
        }
        Scheme::QpEccm | Scheme::QpNccm | Scheme::MaxOverlap { .. } => {
            let (s1, s1t, higher_s, higher_st): (T, T, &[T], &[T]) = match cfg.scheme {
                Scheme::MaxOverlap { s1, s1t } => {
                    (T::from_f64(s1), T::from_f64(s1t), &x[..k], &x[k..2 * k])
                }
                _ => (
                    x[0].clone(),
                    x[k].clone(),
                    &x[1..k],
                    &x[k + 1..2 * k],
                ),
            };
            let ops = qp_operators(&ws, &s1, &s1t);

            // S = Σ_{n≥2} (1/n!) s⁽ⁿ⁾ (δ†)ⁿ in the quasiparticle basis.
            let mut s_terms: Vec<(T, &OpMatrix<f64>)> = Vec::new();
            let mut st_terms: Vec<(T, &OpMatrix<f64>)> = Vec::new();
            for (i, n) in (2..=m).enumerate() {
                let f = (2..=n).map(|q| q as f64).product::<f64>();
                s_terms.push((higher_s[i].scale(1.0 / f), &ws.raise_pows[n - 1]));
                st_terms.push((higher_st[i].scale(1.0 / f), &ws.lower_pows[n - 1]));
            }
            let s_mat = combine(dim, &s_terms);
            let st_mat = combine(dim, &st_terms);

            let e_s = s_mat.expm_nilpotent().expect("strictly lower triangular");
            let e_ms = s_mat.neg().expm_nilpotent().expect("strictly lower triangular");

            let ket = {
                let e0 = OpMatrix::<T>::basis_vec(dim, 0);
                e_s.apply(&e0)
            };
            let bra = {
                let e0 = OpMatrix::<T>::basis_vec(dim, 0);
                let after_bra_factor = match cfg.scheme {
                    Scheme::QpNccm => {
                        let b = OpMatrix::<T>::identity(dim).add(&st_mat);
                        b.apply_left(&e0)
                    }
                    _ => st_mat
                        .expm_nilpotent()
                        .expect("strictly upper triangular")
                        .apply_left(&e0),
                };
                e_ms.apply_left(&after_bra_factor)
            };

            EvalSet {
                energy: dot(&ops.h.apply_left(&bra), &ket),
                n_mean: dot(&ops.n.apply_left(&bra), &ket),
                n2_mean: dot(&ops.n2.apply_left(&bra), &ket),
                delta: dot(&ops.delta.apply_left(&bra), &ket),
                delta_dag: dot(&ops.delta_dag.apply_left(&bra), &ket),
            }
        }
    }
}

fn observables_from(set: EvalSet<f64>) -> Observables {
    Observables {
        energy: set.energy,
        n_mean: set.n_mean,
        n2_mean: set.n2_mean,
        dn2: set.n2_mean - set.n_mean * set.n_mean,
        delta_expect: set.delta,
        delta_dag_expect: set.delta_dag,
    }
}

/// Evaluate the observables of any scheme at the given amplitudes.
pub fn evaluate(params: &ModelParams, amps: &AmplitudeVector) -> Result<Observables, FunctionalError> {
    amps.config.validate(params)?;
    if amps.x.len() != amps.config.n_unknowns() {
        return Err(FunctionalError::BadAmplitudeCount {
            got: amps.x.len(),
            want: amps.config.n_unknowns(),
        });
    }
    Ok(observables_from(eval_all(params, &amps.config, &amps.x)))
}

/// Particle-scheme expectation values ⟨0|e^{S̃}e^{−S} O e^{S}|0⟩.
pub fn eval_particle_eccm(
    params: &ModelParams,
    amps: &AmplitudeVector,
) -> Result<Observables, FunctionalError> {
    if amps.config.scheme != Scheme::ParticleEccm {
        return Err(FunctionalError::WrongScheme {
            want: "particle-eccm",
            got: amps.config.scheme.name().into(),
        });
    }
    evaluate(params, amps)
}

/// Quasiparticle-scheme expectation values (extended or normal bra).
pub fn eval_qp_functional(
    params: &ModelParams,
    amps: &AmplitudeVector,
) -> Result<Observables, FunctionalError> {
    if !amps.config.scheme.is_qp() {
        return Err(FunctionalError::WrongScheme {
            want: "qp-eccm | qp-nccm | max-overlap",
            got: amps.config.scheme.name().into(),
        });
    }
    evaluate(params, amps)
}

/// Matrix of H in the quasiparticle pair basis for given SUB(1) amplitudes.
pub fn build_qp_hamiltonian(params: &ModelParams, s1: f64, s1t: f64) -> OpMatrix<f64> {
    let ws = Workspace::new(params, 1);
    qp_operators(&ws, &s1, &s1t).h
}

/// Matrices of N and N² in the quasiparticle pair basis.
pub fn build_qp_number(
    params: &ModelParams,
    s1: f64,
    s1t: f64,
) -> (OpMatrix<f64>, OpMatrix<f64>) {
    let ws = Workspace::new(params, 1);
    let ops = qp_operators(&ws, &s1, &s1t);
    (ops.n, ops.n2)
}

/// Matrices of Δ and Δ† in the quasiparticle pair basis.
pub fn build_qp_delta(
    params: &ModelParams,
    s1: f64,
    s1t: f64,
) -> (OpMatrix<f64>, OpMatrix<f64>) {
    let ws = Workspace::new(params, 1);
    let ops = qp_operators(&ws, &s1, &s1t);
    (ops.delta, ops.delta_dag)
}

/// SUB(1) one-body densities in the reduced k/k̄ form, and the per-mode
/// generalized density block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedDensity {
    /// Per-mode occupation ρ = s s̃.
    pub rho: f64,
    /// Pair density κ = s (1 − s s̃).
    pub kappa: f64,
    /// Conjugate pair density κ* = s̃.
    pub kappa_conj: f64,
    /// 2×2 generalized density block per mode; an exact projector R² = R
    /// for every (s, s̃).
    pub block: [[f64; 2]; 2],
}

/// Assemble the SUB(1) generalized density for one k/k̄ mode. In this
/// bi-variational (non-Hermitian) mapping κ and κ* are independent; the
/// pair antisymmetry of κ in (k, k̄) absorbs the explicit minus sign of the
/// textbook Nambu block, leaving R = [[ρ, κ], [κ*, 1−ρ]].
pub fn build_generalized_density(s1: f64, s1t: f64) -> GeneralizedDensity {
    let rho = s1 * s1t;
    let kappa = s1 * (1.0 - s1 * s1t);
    let kappa_conj = s1t;
    GeneralizedDensity {
        rho,
        kappa,
        kappa_conj,
        block: [[rho, kappa], [kappa_conj, 1.0 - rho]],
    }
}

/// The gauge residual g(x) and its gradient.
fn gauge_residual(
    cfg: &SchemeConfig,
    x: &[f64],
    set2: &EvalSet<Dual2>,
) -> (f64, Vec<f64>) {
    let n = cfg.n_unknowns();
    let k = cfg.s_block_len();
    match cfg.gauge {
        Gauge::DeltaSymmetric => {
            let d = set2.delta.sub(&set2.delta_dag);
            let mut grad = vec![0.0; n];
            for (j, gj) in grad.iter_mut().enumerate() {
                *gj = d.grad.get(j).copied().unwrap_or(0.0);
            }
            (d.val, grad)
        }
        Gauge::ScalingFix => {
            let mut g = 0.0;
            let mut grad = vec![0.0; n];
            for i in 0..k {
                let w = cfg.block_weight(i) as f64;
                g += w * (x[i] * x[i] - x[k + i] * x[k + i]);
                grad[i] = 2.0 * w * x[i];
                grad[k + i] = -2.0 * w * x[k + i];
            }
            (g, grad)
        }
        Gauge::None => unreachable!(),
    }
}

/// Stationarity residuals of the constrained functional
/// E_c = E − λ(⟨N⟩ − N₀): the gradient over the amplitude blocks followed
/// by the constraint ⟨N⟩ − N₀. Under a gauge condition the first s̃-block
/// equation is replaced by the gauge residual.
pub fn residuals(params: &ModelParams, amps: &AmplitudeVector) -> Result<Vec<f64>, FunctionalError> {
    amps.config.validate(params)?;
    let cfg = &amps.config;
    let x = &amps.x;
    let n = cfg.n_unknowns();
    if x.len() != n {
        return Err(FunctionalError::BadAmplitudeCount { got: x.len(), want: n });
    }
    let xd: Vec<Dual> = jet_vars(x, |v, i| Dual::variable(v, i, n));
    let set = eval_all(params, cfg, &xd);
    let lambda = &xd[n - 1];
    let n0 = Dual::constant(params.n0);
    let e_c = set.energy.sub(&lambda.mul(&set.n_mean.sub(&n0)));

    let mut r = vec![0.0; n];
    for (i, ri) in r.iter_mut().enumerate().take(n - 1) {
        *ri = e_c.deriv(i);
    }
    r[n - 1] = set.n_mean.val - params.n0;

    if cfg.gauge != Gauge::None {
        let gi = cfg.s_block_len();
        r[gi] = match cfg.gauge {
            Gauge::DeltaSymmetric => set.delta.val - set.delta_dag.val,
            Gauge::ScalingFix => {
                let k = cfg.s_block_len();
                (0..k)
                    .map(|i| {
                        cfg.block_weight(i) as f64 * (x[i] * x[i] - x[k + i] * x[k + i])
                    })
                    .sum()
            }
            Gauge::None => unreachable!(),
        };
    }
    Ok(r)
}

/// Residual vector together with its exact Jacobian.
pub fn residuals_and_jacobian(
    params: &ModelParams,
    amps: &AmplitudeVector,
) -> Result<(DVector<f64>, DMatrix<f64>), FunctionalError> {
    amps.config.validate(params)?;
    let cfg = &amps.config;
    let x = &amps.x;
    let n = cfg.n_unknowns();
    if x.len() != n {
        return Err(FunctionalError::BadAmplitudeCount { got: x.len(), want: n });
    }
    let xd: Vec<Dual2> = jet_vars(x, |v, i| Dual2::variable(v, i, n));
    let set = eval_all(params, cfg, &xd);
    let lambda = &xd[n - 1];
    let n0 = Dual2::constant(params.n0);
    let e_c = set.energy.sub(&lambda.mul(&set.n_mean.sub(&n0)));

    let mut r = DVector::zeros(n);
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        r[i] = e_c.grad.get(i).copied().unwrap_or(0.0);
        for j in 0..n {
            jac[(i, j)] = e_c.hess_at(i, j);
        }
    }
    r[n - 1] = set.n_mean.val - params.n0;
    for j in 0..n {
        jac[(n - 1, j)] = set.n_mean.grad.get(j).copied().unwrap_or(0.0);
    }

    if cfg.gauge != Gauge::None {
        let gi = cfg.s_block_len();
        let (g, grad) = gauge_residual(cfg, x, &set);
        r[gi] = g;
        for j in 0..n {
            jac[(gi, j)] = grad[j];
        }
    }
    Ok((r, jac))
}

/// Residual ∞-norm of the raw (ungauged) stationarity system; a converged
/// point of the gauged system must also drive this to zero.
pub fn ungauged_residual_norm(
    params: &ModelParams,
    amps: &AmplitudeVector,
) -> Result<f64, FunctionalError> {
    let mut raw = amps.clone();
    raw.config.gauge = Gauge::None;
    // Max-overlap forbids any other gauge, so `raw` always validates.
    let r = residuals(params, &raw)?;
    Ok(r.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Hessian of E − λ(⟨N⟩ − N₀) over the amplitude unknowns, λ held fixed.
pub fn energy_hessian(
    params: &ModelParams,
    amps: &AmplitudeVector,
) -> Result<DMatrix<f64>, FunctionalError> {
    amps.config.validate(params)?;
    let cfg = &amps.config;
    let n = cfg.n_unknowns();
    let na = n - 1;
    let xd: Vec<Dual2> = jet_vars(&amps.x, |v, i| Dual2::variable(v, i, n));
    let set = eval_all(params, cfg, &xd);
    let lambda = &xd[n - 1];
    let n0 = Dual2::constant(params.n0);
    let e_c = set.energy.sub(&lambda.mul(&set.n_mean.sub(&n0)));
    let mut h = DMatrix::zeros(na, na);
    for i in 0..na {
        for j in 0..na {
            h[(i, j)] = e_c.hess_at(i, j);
        }
    }
    Ok(h)
}

/// Fixed-frame (particle pair basis) bra row and ket column of a scheme's
/// state, with independent jets for bra and ket variables. This is the
/// construction behind the kinetic one-form: the quasiparticle frame itself
/// moves with the SUB(1) amplitudes, so time derivatives must be taken in a
/// frame that does not.
pub(crate) fn bra_ket_particle_basis<T: Ring>(
    params: &ModelParams,
    cfg: &SchemeConfig,
    x_bra: &[T],
    x_ket: &[T],
) -> (Vec<T>, Vec<T>) {
    let m = cfg.order as usize;
    let k = cfg.s_block_len();
    let ws = Workspace::new(params, m.max(1));
    let dim = ws.dim;

    match cfg.scheme {
        Scheme::ParticleEccm => {
            let ket = {
                let terms: Vec<(T, &OpMatrix<f64>)> = (0..m)
                    .map(|i| (x_ket[i].clone(), &ws.raise_pows[i]))
                    .collect();
                let s_mat = combine(dim, &terms);
                s_mat
                    .expm_nilpotent()
                    .expect("triangular")
                    .apply(&OpMatrix::<T>::basis_vec(dim, 0))
            };
            let bra = {
                let s_terms: Vec<(T, &OpMatrix<f64>)> = (0..m)
                    .map(|i| (x_bra[i].clone(), &ws.raise_pows[i]))
                    .collect();
                let st_terms: Vec<(T, &OpMatrix<f64>)> = (0..m)
                    .map(|i| (x_bra[k + i].clone(), &ws.lower_pows[i]))
                    .collect();
                let s_mat = combine(dim, &s_terms);
                let st_mat = combine(dim, &st_terms);
                let e0 = OpMatrix::<T>::basis_vec(dim, 0);
                let r = st_mat.expm_nilpotent().expect("triangular").apply_left(&e0);
                s_mat.neg().expm_nilpotent().expect("triangular").apply_left(&r)
            };
            (bra, ket)
        }
        Scheme::QpEccm | Scheme::QpNccm | Scheme::MaxOverlap { .. } => {
            let split = |x: &[T]| -> (T, T, Vec<T>, Vec<T>) {
                match cfg.scheme {
                    Scheme::MaxOverlap { s1, s1t } => (
                        T::from_f64(s1),
                        T::from_f64(s1t),
                        x[..k].to_vec(),
                        x[k..2 * k].to_vec(),
                    ),
                    _ => (
                        x[0].clone(),
                        x[k].clone(),
                        x[1..k].to_vec(),
                        x[k + 1..2 * k].to_vec(),
                    ),
                }
            };

            // δ† and δ expressed through the particle operators.
            let frame_ops = |s1: &T, s1t: &T| -> (OpMatrix<T>, OpMatrix<T>) {
                let one = T::one();
                let x = s1.mul(s1t);
                let omx = one.sub(&x);
                let n_m_om = ws.omn.neg(); // n − Ω (diagonal)
                let ddag = combine(
                    dim,
                    &[
                        (omx.mul(&omx), ws.raise()),
                        (s1t.mul(s1t).neg(), ws.lower()),
                        (s1t.mul(&omx), &n_m_om),
                    ],
                );
                let d = combine(
                    dim,
                    &[
                        (one, ws.lower()),
                        (s1.mul(s1).neg(), ws.raise()),
                        (s1.clone(), &n_m_om),
                    ],
                );
                (ddag, d)
            };

            let qp_cluster = |amps: &[T], base: &OpMatrix<T>| -> OpMatrix<T> {
                let mut acc = OpMatrix::<T>::zeros(dim);
                let mut pw = base.matmul(base); // (δ†)² or δ²
                for (i, n) in (2..=m).enumerate() {
                    let f = (2..=n).map(|q| q as f64).product::<f64>();
                    acc = acc.add(&pw.scale_by(&amps[i].scale(1.0 / f)));
                    if n < m {
                        pw = pw.matmul(base);
                    }
                }
                acc
            };

            let ket = {
                // the ket's quasiparticle frame depends on s̃ through δ†
                let (s1, s1t, hs, _hst) = split(x_ket);
                let (ddag, _) = frame_ops(&s1, &s1t);
                let sm = qp_cluster(&hs, &ddag);
                let sub1 = combine(dim, &[(s1.clone(), ws.raise())]);
                let e0 = OpMatrix::<T>::basis_vec(dim, 0);
                let v = sub1.expm_nilpotent().expect("triangular").apply(&e0);
                sm.expm_terminating().apply(&v)
            };

            let bra = {
                let (s1, s1t, hs, hst) = split(x_bra);
                let (ddag, d) = frame_ops(&s1, &s1t);
                let sm = qp_cluster(&hs, &ddag);
                let stm = qp_cluster(&hst, &d);
                let e0 = OpMatrix::<T>::basis_vec(dim, 0);
                let sub1t = combine(dim, &[(s1t.clone(), ws.lower())]);
                let sub1 = combine(dim, &[(s1.clone(), ws.raise())]);
                let mut row = sub1t.expm_nilpotent().expect("triangular").apply_left(&e0);
                row = sub1.neg().expm_nilpotent().expect("triangular").apply_left(&row);
                row = match cfg.scheme {
                    Scheme::QpNccm => OpMatrix::<T>::identity(dim).add(&stm).apply_left(&row),
                    _ => stm.expm_terminating().apply_left(&row),
                };
                sm.neg().expm_terminating().apply_left(&row)
            };
            (bra, ket)
        }
    }
}
