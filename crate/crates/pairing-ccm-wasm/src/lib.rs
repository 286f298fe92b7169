//! wasm-bindgen surface for the browser demo. Three interactive
//! operations, each returning a JSON string the page plots directly:
//! a warm-started energy/fluctuation sweep, a multistart branch scan at
//! fixed N₀, and the RPA spectrum along the swept branch.
//!
//! Inputs are clamped to desk scale (Ω ≤ 12, ≤ 61 grid points, ≤ 400
//! starts) so a single-threaded browser tab stays responsive.

use wasm_bindgen::prelude::*;

use pairing_ccm::functional::{Gauge, Scheme, SchemeConfig};
use pairing_ccm::oracle;
use pairing_ccm::quasispin::ModelParams;
use pairing_ccm::rpa::{build_hessian, build_kinetic_form, solve_rpa, RpaTolerances};
use pairing_ccm::solver::{multistart_scan, newton_solve, polish, SolutionPoint, SolverSettings};

fn parse_scheme(name: &str) -> Result<Scheme, String> {
    match name {
        "particle-eccm" => Ok(Scheme::ParticleEccm),
        "qp-eccm" => Ok(Scheme::QpEccm),
        "qp-nccm" => Ok(Scheme::QpNccm),
        "max-overlap" => Ok(Scheme::MaxOverlap { s1: 0.0, s1t: 0.0 }),
        other => Err(format!("unknown scheme '{other}'")),
    }
}

fn sub1_mean_field(omega: u32, g: f64, n0: f64) -> (f64, f64, f64) {
    let om = omega as f64;
    let s = (n0 / (2.0 * om - n0).max(f64::MIN_POSITIVE)).sqrt();
    let st = (n0 * (2.0 * om - n0)).max(0.0).sqrt() / (2.0 * om);
    let lam = -g * (om - 1.0) * (1.0 - n0 / om) / 2.0;
    (s, st, lam)
}

fn scheme_config(scheme: Scheme, order: u32, omega: u32, g: f64, n0: f64) -> SchemeConfig {
    match scheme {
        Scheme::MaxOverlap { .. } => {
            let (s1, s1t, _) = sub1_mean_field(omega, g, n0);
            SchemeConfig::new(Scheme::MaxOverlap { s1, s1t }, order, Gauge::None)
        }
        s => SchemeConfig::with_default_gauge(s, order),
    }
}

fn seed_vector(cfg: &SchemeConfig, omega: u32, g: f64, n0: f64) -> Vec<f64> {
    let q = (n0 / (2.0 * omega as f64)).sqrt();
    let (_, _, lam) = sub1_mean_field(omega, g, n0);
    let mut x = vec![0.0; cfg.n_unknowns()];
    if !matches!(cfg.scheme, Scheme::MaxOverlap { .. }) {
        x[0] = q;
        x[cfg.s_block_len()] = q;
    }
    *x.last_mut().unwrap() = lam;
    x
}

fn err_json(msg: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": msg.to_string() }).to_string()
}

struct SweptPoint {
    n0: f64,
    point: SolutionPoint,
}

fn run_sweep(
    omega: u32,
    g: f64,
    scheme: Scheme,
    order: u32,
    n0_min: f64,
    n0_max: f64,
    steps: usize,
) -> Result<Vec<SweptPoint>, String> {
    let steps = steps.clamp(2, 61);
    let settings = SolverSettings {
        tol: 1e-10,
        ..Default::default()
    };
    let mut out = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    for i in 0..steps {
        let n0 = n0_min + (n0_max - n0_min) * i as f64 / (steps - 1) as f64;
        let model = ModelParams::new(omega, g, n0).map_err(|e| e.to_string())?;
        let cfg = scheme_config(scheme, order, omega, g, n0);
        cfg.validate(&model).map_err(|e| e.to_string())?;
        let x0 = match &warm {
            Some(x) if x.len() == cfg.n_unknowns() => x.clone(),
            _ => seed_vector(&cfg, omega, g, n0),
        };
        match newton_solve(&model, &cfg, &x0, &settings) {
            Ok(pt) if pt.converged => {
                let pt = polish(&model, &cfg, &pt, 1e-13);
                warm = Some(pt.amps.x.clone());
                out.push(SweptPoint { n0, point: pt });
            }
            _ => {
                warm = None;
            }
        }
    }
    Ok(out)
}

/// Energy, fluctuation and stability along a warm-started N₀ sweep,
/// together with the exact reference curve.
#[wasm_bindgen]
pub fn sweep_curve(
    omega: u32,
    g: f64,
    scheme: &str,
    order: u32,
    n0_min: f64,
    n0_max: f64,
    steps: usize,
) -> String {
    let scheme = match parse_scheme(scheme) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    if omega == 0 || omega > 12 {
        return err_json("omega must be in 1..=12");
    }
    let swept = match run_sweep(omega, g, scheme, order, n0_min, n0_max, steps) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let model0 = match ModelParams::new(omega, g, 0.0) {
        Ok(m) => m,
        Err(e) => return err_json(e),
    };
    let points: Vec<serde_json::Value> = swept
        .iter()
        .map(|sp| {
            let model = model0.with_n0(sp.n0);
            let (zeros, unstable) = match (
                build_hessian(&model, &sp.point),
                build_kinetic_form(&model, &sp.point),
            ) {
                (Ok(h), Ok(k)) => match solve_rpa(&h, &k, RpaTolerances::default()) {
                    Ok(s) => (s.zero_modes as i64, s.unstable),
                    Err(_) => (-1, false),
                },
                _ => (-1, false),
            };
            serde_json::json!({
                "n0": sp.n0,
                "energy": sp.point.obs.energy,
                "n_mean": sp.point.obs.n_mean,
                "dn2": sp.point.obs.dn2,
                "e_exact": oracle::exact_energy_continuous(&model, sp.n0),
                "zero_modes": zeros,
                "unstable": unstable,
            })
        })
        .collect();
    serde_json::json!({ "points": points }).to_string()
}

/// Deduplicated stationary points from a seeded multistart at fixed N₀.
#[wasm_bindgen]
pub fn branch_scan(
    omega: u32,
    g: f64,
    scheme: &str,
    order: u32,
    n0: f64,
    starts: usize,
    seed: u64,
) -> String {
    let scheme = match parse_scheme(scheme) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    if omega == 0 || omega > 12 {
        return err_json("omega must be in 1..=12");
    }
    let model = match ModelParams::new(omega, g, n0) {
        Ok(m) => m,
        Err(e) => return err_json(e),
    };
    let cfg = match scheme {
        Scheme::MaxOverlap { .. } => scheme_config(scheme, order, omega, g, n0),
        s => SchemeConfig::new(s, order, Gauge::None),
    };
    if let Err(e) = cfg.validate(&model) {
        return err_json(e);
    }
    let settings = SolverSettings {
        multistart_count: starts.clamp(1, 400),
        seed,
        tol: 1e-10,
        ..Default::default()
    };
    let mut pts = match multistart_scan(&model, &cfg, n0, &settings, &[]) {
        Ok(p) => p,
        Err(e) => return err_json(e),
    };
    pts.sort_by(|a, b| a.obs.energy.total_cmp(&b.obs.energy));
    let e_exact = oracle::exact_energy_continuous(&model, n0);
    let rows: Vec<serde_json::Value> = pts
        .iter()
        .map(|p| {
            serde_json::json!({
                "energy": p.obs.energy,
                "n_mean": p.obs.n_mean,
                "dn2": p.obs.dn2,
                "delta_product": p.obs.delta_expect * p.obs.delta_dag_expect,
                "residual": p.residual_norm,
                "exact": (p.obs.energy - e_exact).abs() < 1e-6 && p.obs.dn2.abs() < 1e-6,
            })
        })
        .collect();
    serde_json::json!({ "e_exact": e_exact, "solutions": rows }).to_string()
}

/// RPA frequencies at every converged point of a warm-started sweep.
#[wasm_bindgen]
pub fn rpa_spectrum(
    omega: u32,
    g: f64,
    scheme: &str,
    order: u32,
    n0_min: f64,
    n0_max: f64,
    steps: usize,
) -> String {
    let scheme = match parse_scheme(scheme) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    if omega == 0 || omega > 12 {
        return err_json("omega must be in 1..=12");
    }
    let swept = match run_sweep(omega, g, scheme, order, n0_min, n0_max, steps) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let model0 = match ModelParams::new(omega, g, 0.0) {
        Ok(m) => m,
        Err(e) => return err_json(e),
    };
    let mut rows = Vec::new();
    for sp in &swept {
        let model = model0.with_n0(sp.n0);
        let Ok(h) = build_hessian(&model, &sp.point) else { continue };
        let Ok(kin) = build_kinetic_form(&model, &sp.point) else { continue };
        let Ok(spec) = solve_rpa(&h, &kin, RpaTolerances::default()) else { continue };
        for w in &spec.frequencies {
            rows.push(serde_json::json!({
                "n0": sp.n0,
                "re": w.re,
                "im": w.im,
            }));
        }
    }
    serde_json::json!({ "modes": rows }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_curve_returns_valid_json_with_exact_reference() {
        let out = sweep_curve(10, 1.0, "particle-eccm", 1, 2.0, 18.0, 9);
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        let points = doc["points"].as_array().unwrap();
        assert_eq!(points.len(), 9);
        let mid = points.iter().find(|p| p["n0"] == 10.0).unwrap();
        assert!((mid["energy"].as_f64().unwrap() + 22.5).abs() < 1e-8);
        assert!((mid["e_exact"].as_f64().unwrap() + 25.0).abs() < 1e-12);
        assert_eq!(mid["zero_modes"], 2);
    }

    #[test]
    fn branch_scan_flags_exact_solutions() {
        let out = branch_scan(4, 1.0, "particle-eccm", 4, 4.0, 220, 1);
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        let sols = doc["solutions"].as_array().unwrap();
        assert!(!sols.is_empty());
        assert!(
            sols.iter().any(|s| s["exact"] == true),
            "no exact solution flagged in {out}"
        );
    }

    #[test]
    fn rpa_spectrum_contains_goldstone_rows() {
        let out = rpa_spectrum(6, 1.0, "qp-nccm", 2, 2.0, 10.0, 5);
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        let modes = doc["modes"].as_array().unwrap();
        assert!(!modes.is_empty());
        let zeros = modes
            .iter()
            .filter(|m| m["re"].as_f64().unwrap().abs() < 1e-4)
            .count();
        assert!(zeros >= 2);
    }

    #[test]
    fn invalid_inputs_report_errors() {
        let out = sweep_curve(0, 1.0, "particle-eccm", 1, 0.0, 8.0, 5);
        assert!(out.contains("error"));
        let out = branch_scan(4, 1.0, "no-such-scheme", 2, 4.0, 10, 1);
        assert!(out.contains("error"));
    }
}
