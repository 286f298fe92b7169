//! Stationary-point solving and branch tracing.
//!
//! The stationarity systems are polynomial and carry an exact scaling
//! redundancy (the bi-variational gauge orbit), so the Newton step is taken
//! through a rank-revealing SVD: singular directions below a relative
//! threshold are truncated and the minimum-norm least-squares step is used.
//! Branches fold back in N₀ (the energy surface is multivalued), which is
//! why tracing uses pseudo-arclength continuation in the extended space
//! (unknowns, N₀) rather than natural-parameter stepping.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functional::{
    self, AmplitudeVector, FunctionalError, Observables, SchemeConfig,
};
use crate::quasispin::ModelParams;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error("evaluation-domain error: residuals are not finite at the current point")]
    EvaluationDomain,
    #[error("continuation requires a converged start point (residual {0:.3e})")]
    UnconvergedStart(f64),
    #[error("invalid solver settings: {0}")]
    BadSettings(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Residual ∞-norm target.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial step scale for the backtracking line search.
    pub damping: f64,
    /// Initial pseudo-arclength step.
    pub arclength_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub multistart_count: usize,
    pub seed: u64,
    /// Fingerprint tolerance for solution deduplication.
    pub dedup_tol: f64,
    /// Half-width of the multistart amplitude box.
    pub amp_box: f64,
    /// Point budget for continuation traces.
    pub max_points: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-11,
            max_iter: 100,
            damping: 1.0,
            arclength_step: 0.05,
            max_step: 0.5,
            min_step: 1e-10,
            multistart_count: 64,
            seed: 0,
            dedup_tol: 1e-7,
            amp_box: 2.0,
            max_points: 2000,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tol > 0.0) {
            return Err(SolverError::BadSettings("tol must be > 0".into()));
        }
        if !(self.min_step < self.arclength_step && self.arclength_step <= self.max_step) {
            return Err(SolverError::BadSettings(
                "need min_step < arclength_step <= max_step".into(),
            ));
        }
        if !(0.0 < self.damping && self.damping <= 1.0) {
            return Err(SolverError::BadSettings("damping must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// A (possibly unconverged) stationary-point candidate with its
/// observables. `residual_norm` is the ∞-norm over the gauged system and
/// the raw stationarity gradient, whichever is larger, so `converged`
/// always certifies genuine stationarity plus the constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPoint {
    pub amps: AmplitudeVector,
    pub obs: Observables,
    pub residual_norm: f64,
    pub converged: bool,
    pub branch_id: Option<u32>,
    pub iterations: usize,
}

/// Continuation parameter of a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchParameter {
    N0,
    Arclength,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchTermination {
    RangeEnd,
    StepUnderflow,
    PointBudget,
}

/// An ordered run of converged points along a solution curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<SolutionPoint>,
    pub parameter: BranchParameter,
    /// Indices into `points` where dN₀/ds changes sign.
    pub turning_points: Vec<usize>,
    pub termination: BranchTermination,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Minimum-norm least-squares solve of `J dx = -r` with singular values
/// below `1e-10 * sigma_max` truncated (handles gauge-orbit rank
/// deficiency).
fn min_norm_step(j: &DMatrix<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = j.clone().svd(true, true);
    let smax = svd
        .singular_values
        .iter()
        .fold(0.0_f64, |m, s| m.max(*s));
    if smax == 0.0 {
        return None;
    }
    let eps = 1e-10 * smax;
    svd.solve(&(-r), eps).ok().map(|m| m.column(0).into_owned())
}

fn make_point(
    params: &ModelParams,
    cfg: &SchemeConfig,
    x: Vec<f64>,
    residual_norm: f64,
    converged: bool,
    iterations: usize,
) -> Result<SolutionPoint, SolverError> {
    let amps = AmplitudeVector::new(*cfg, x)?;
    let obs = functional::evaluate(params, &amps)?;
    Ok(SolutionPoint {
        amps,
        obs,
        residual_norm,
        converged,
        branch_id: None,
        iterations,
    })
}

/// Damped Newton iteration with backtracking on the residual norm.
/// Non-convergence is a reported state; only non-finite residuals at an
/// accepted point are an error.
pub fn newton_solve(
    params: &ModelParams,
    cfg: &SchemeConfig,
    x0: &[f64],
    settings: &SolverSettings,
) -> Result<SolutionPoint, SolverError> {
    settings.validate()?;
    cfg.validate(params)?;
    let mut x = x0.to_vec();
    let mut best: (Vec<f64>, f64) = (x.clone(), f64::INFINITY);
    // Near the floating-point floor the residual norm wanders instead of
    // decreasing monotonically; allow a few non-improving full steps so the
    // iterate can still land below tolerance.
    let mut non_improving = 0usize;

    for it in 0..=settings.max_iter {
        let amps = AmplitudeVector::new(*cfg, x.clone())?;
        let (r, jac) = functional::residuals_and_jacobian(params, &amps)?;
        if !all_finite(r.as_slice()) {
            return Err(SolverError::EvaluationDomain);
        }
        let norm = inf_norm(&r);
        if norm < best.1 {
            best = (x.clone(), norm);
        }
        if norm <= settings.tol {
            // The gauge row replaced one gradient equation; certify the
            // full ungauged gradient before declaring stationarity.
            let raw = functional::ungauged_residual_norm(params, &amps)?;
            let ok = raw <= (100.0 * settings.tol).max(settings.tol);
            return make_point(params, cfg, x, norm.max(raw), ok, it);
        }
        if it == settings.max_iter {
            break;
        }

        let Some(dx) = min_norm_step(&jac, &r) else {
            break;
        };

        fn try_step(
            params: &ModelParams,
            cfg: &SchemeConfig,
            x: &[f64],
            dx: &DVector<f64>,
            alpha: f64,
        ) -> Option<(Vec<f64>, f64)> {
            let x_try: Vec<f64> =
                x.iter().zip(dx.iter()).map(|(a, d)| a + alpha * d).collect();
            let amps_try = AmplitudeVector::new(*cfg, x_try.clone()).ok()?;
            let r_try = functional::residuals(params, &amps_try).ok()?;
            if !all_finite(&r_try) {
                return None;
            }
            let n_try = r_try.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            Some((x_try, n_try))
        }

        let mut alpha = settings.damping;
        let mut accepted = false;
        while alpha >= 1e-12 {
            if let Some((x_try, n_try)) = try_step(params, cfg, &x, &dx, alpha) {
                if n_try <= (1.0 - 1e-4 * alpha) * norm || n_try <= settings.tol {
                    x = x_try;
                    accepted = true;
                    non_improving = 0;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No descent at any scale: either a genuine stall or norm
            // wandering at the noise floor. Take the damped step anyway a
            // few times before giving up.
            match try_step(params, cfg, &x, &dx, settings.damping) {
                Some((x_try, n_try)) if n_try <= 2.0 * norm && non_improving < 8 => {
                    x = x_try;
                    non_improving += 1;
                }
                _ => break,
            }
        }
    }
    let (xb, nb) = best;
    make_point(params, cfg, xb, nb, false, settings.max_iter)
}

/// Gauge-invariant fingerprint used to merge solutions that differ only
/// along the scaling orbit: raw amplitudes are meaningless for identity,
/// observables are not.
#[derive(Debug, Clone, Copy)]
pub struct Fingerprint {
    pub energy: f64,
    pub n_mean: f64,
    pub n2_mean: f64,
    pub delta_product: f64,
}

impl Fingerprint {
    pub fn of(obs: &Observables) -> Self {
        Fingerprint {
            energy: obs.energy,
            n_mean: obs.n_mean,
            n2_mean: obs.n2_mean,
            delta_product: obs.delta_expect * obs.delta_dag_expect,
        }
    }

    pub fn matches(&self, other: &Fingerprint, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()));
        close(self.energy, other.energy)
            && close(self.n_mean, other.n_mean)
            && close(self.n2_mean, other.n2_mean)
            && close(self.delta_product, other.delta_product)
    }
}

/// Launch Newton from `multistart_count` starts at fixed N₀ and return the
/// deduplicated converged points in seed-deterministic order. Explicit
/// starts are used first and count toward the total. Random starts
/// alternate between dense box samples and sparse ones (a random subset of
/// amplitudes zeroed): solution families with vanishing lower-order
/// amplitudes — the exact states live there — have very thin basins for
/// dense starts.
pub fn multistart_scan(
    params: &ModelParams,
    cfg: &SchemeConfig,
    n0: f64,
    settings: &SolverSettings,
    explicit_starts: &[Vec<f64>],
) -> Result<Vec<SolutionPoint>, SolverError> {
    settings.validate()?;
    let p = params.with_n0(n0);
    cfg.validate(&p)?;
    let n = cfg.n_unknowns();
    let lambda_box = p.g * p.omega as f64;

    let mut starts: Vec<Vec<f64>> = explicit_starts
        .iter()
        .take(settings.multistart_count)
        .cloned()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut k = 0usize;
    while starts.len() < settings.multistart_count {
        let mut x: Vec<f64> = (0..n - 1)
            .map(|_| rng.gen_range(-settings.amp_box..settings.amp_box))
            .collect();
        x.push(rng.gen_range(-lambda_box..lambda_box));
        if k % 2 == 1 {
            for xi in x.iter_mut().take(n - 1) {
                if rng.gen_bool(0.5) {
                    *xi = 0.0;
                }
            }
        }
        k += 1;
        starts.push(x);
    }

    let runs: Vec<Option<SolutionPoint>> = starts
        .par_iter()
        .map(|x0| newton_solve(&p, cfg, x0, settings).ok())
        .collect();

    let mut kept: Vec<(Fingerprint, SolutionPoint)> = Vec::new();
    for pt in runs.into_iter().flatten() {
        if !pt.converged {
            continue;
        }
        let fp = Fingerprint::of(&pt.obs);
        if !kept.iter().any(|(f, _)| f.matches(&fp, settings.dedup_tol)) {
            kept.push((fp, pt));
        }
    }
    Ok(kept.into_iter().map(|(_, p)| p).collect())
}

/// Extended residual over z = (x, n0): the scheme residuals with N₀ free.
/// Only the constraint row depends on n0, with derivative −1.
fn extended_system(
    params: &ModelParams,
    cfg: &SchemeConfig,
    z: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>), SolverError> {
    let n = cfg.n_unknowns();
    let x: Vec<f64> = z.as_slice()[..n].to_vec();
    let p = params.with_n0(z[n]);
    let amps = AmplitudeVector::new(*cfg, x)?;
    let (r, j) = functional::residuals_and_jacobian(&p, &amps)?;
    let mut j_ext = DMatrix::zeros(n, n + 1);
    j_ext.view_mut((0, 0), (n, n)).copy_from(&j);
    j_ext[(n - 1, n)] = -1.0;
    Ok((r, j_ext))
}

/// Unit null vector of the extended Jacobian (the branch tangent).
fn branch_tangent(j_ext: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = j_ext.nrows();
    let mut sq = DMatrix::zeros(n + 1, n + 1);
    sq.view_mut((0, 0), (n, n + 1)).copy_from(j_ext);
    let svd = sq.svd(true, true);
    let v_t = svd.v_t.as_ref()?;
    // smallest singular value's right vector spans the nullspace
    let mut idx = 0;
    let mut smin = f64::INFINITY;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < smin {
            smin = *s;
            idx = i;
        }
    }
    let t = v_t.row(idx).transpose();
    let norm = t.norm();
    if norm == 0.0 {
        None
    } else {
        Some(t / norm)
    }
}

/// Corrector: Newton on [residuals; tangent-orthogonality] in the extended
/// space. Returns the corrected point and iteration count.
fn arclength_corrector(
    params: &ModelParams,
    cfg: &SchemeConfig,
    pred: &DVector<f64>,
    tangent: &DVector<f64>,
    settings: &SolverSettings,
) -> Option<(DVector<f64>, usize)> {
    let n = cfg.n_unknowns();
    let mut z = pred.clone();
    for it in 0..25 {
        let (r, j_ext) = extended_system(params, cfg, &z).ok()?;
        if !all_finite(r.as_slice()) {
            return None;
        }
        let plane = tangent.dot(&(&z - pred));
        let norm = inf_norm(&r).max(plane.abs());
        if norm <= settings.tol.max(1e-12) {
            return Some((z, it));
        }
        let mut f = DVector::zeros(n + 1);
        f.rows_mut(0, n).copy_from(&r);
        f[n] = plane;
        let mut jac = DMatrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n + 1)).copy_from(&j_ext);
        jac.row_mut(n).copy_from(&tangent.transpose());
        let dz = min_norm_step(&jac, &f)?;
        z += dz;
    }
    None
}

/// Trace the solution branch through `start` by pseudo-arclength
/// predictor-corrector steps until N₀ leaves `n0_range`, the step
/// underflows, or the point budget is exhausted. Fold points (sign changes
/// of dN₀/ds) are recorded. `direction` picks the initial tangent
/// orientation via the sign of its N₀ component (or of its first nonzero
/// component when starting exactly at a fold).
pub fn continuation_trace(
    params: &ModelParams,
    cfg: &SchemeConfig,
    start: &SolutionPoint,
    n0_range: (f64, f64),
    direction: f64,
    settings: &SolverSettings,
) -> Result<Branch, SolverError> {
    settings.validate()?;
    if !start.converged {
        return Err(SolverError::UnconvergedStart(start.residual_norm));
    }
    let n = cfg.n_unknowns();
    let start_n0 = params.n0;

    let mut z = DVector::zeros(n + 1);
    for (i, v) in start.amps.x.iter().enumerate() {
        z[i] = *v;
    }
    z[n] = start_n0;

    let (_, j_ext) = extended_system(params, cfg, &z)?;
    let mut tangent = branch_tangent(&j_ext).ok_or(SolverError::EvaluationDomain)?;
    // orient by requested direction
    let comp = if tangent[n].abs() > 1e-12 {
        tangent[n]
    } else {
        *tangent
            .iter()
            .find(|v| v.abs() > 1e-12)
            .unwrap_or(&1.0)
    };
    if comp * direction < 0.0 {
        tangent = -tangent;
    }

    let mut points = vec![SolutionPoint {
        branch_id: Some(0),
        ..start.clone()
    }];
    let mut turning_points = Vec::new();
    let mut ds = settings.arclength_step;
    let termination;

    loop {
        if points.len() >= settings.max_points {
            termination = BranchTermination::PointBudget;
            break;
        }
        let pred = &z + &tangent * ds;
        match arclength_corrector(params, cfg, &pred, &tangent, settings) {
            Some((z_new, iters)) => {
                let (_, j_new) = extended_system(params, cfg, &z_new)?;
                let Some(mut t_new) = branch_tangent(&j_new) else {
                    termination = BranchTermination::StepUnderflow;
                    break;
                };
                if t_new.dot(&tangent) < 0.0 {
                    t_new = -t_new;
                }

                let p_new = params.with_n0(z_new[n]);
                let amps = AmplitudeVector::new(*cfg, z_new.as_slice()[..n].to_vec())?;
                let r = functional::residuals(&p_new, &amps)?;
                let raw = functional::ungauged_residual_norm(&p_new, &amps)?;
                let rn = r.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(raw);
                let obs = functional::evaluate(&p_new, &amps)?;
                let pt = SolutionPoint {
                    amps,
                    obs,
                    residual_norm: rn,
                    converged: true,
                    branch_id: Some(0),
                    iterations: iters,
                };

                if t_new[n].signum() != tangent[n].signum()
                    && tangent[n].abs() > 1e-12
                    && t_new[n].abs() > 1e-12
                {
                    turning_points.push(points.len());
                }
                points.push(pt);
                let left_range = z_new[n] < n0_range.0 || z_new[n] > n0_range.1;
                z = z_new;
                tangent = t_new;
                if left_range {
                    termination = BranchTermination::RangeEnd;
                    break;
                }
                if iters <= 3 {
                    ds = (ds * 2.0).min(settings.max_step);
                }
            }
            None => {
                ds *= 0.5;
                if ds < settings.min_step {
                    termination = BranchTermination::StepUnderflow;
                    break;
                }
            }
        }
    }

    Ok(Branch {
        points,
        parameter: BranchParameter::Arclength,
        turning_points,
        termination,
    })
}


/// Re-run Newton from a converged point with a tighter target and keep
/// whichever iterate has the smaller residual. Points feeding the harmonic
/// analysis benefit: the broken-symmetry zero modes sit in a Jordan block,
/// so their numerical splitting scales like the square root of the
/// stationarity residual.
pub fn polish(
    params: &ModelParams,
    cfg: &SchemeConfig,
    point: &SolutionPoint,
    target_tol: f64,
) -> SolutionPoint {
    let settings = SolverSettings {
        tol: target_tol,
        max_iter: 8,
        ..Default::default()
    };
    match newton_solve(params, cfg, &point.amps.x, &settings) {
        Ok(better) if better.residual_norm < point.residual_norm => SolutionPoint {
            converged: point.converged || better.converged,
            ..better
        },
        _ => point.clone(),
    }
}
