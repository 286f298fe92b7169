//! Cross-cutting physics properties: truncation-parity behavior of the RPA
//! instabilities, variational improvement of the Brueckner schemes over
//! the mean field, and exact-state detection through the fluctuation.

use pairing_ccm::functional::{evaluate, AmplitudeVector, Gauge, Scheme, SchemeConfig};
use pairing_ccm::quasispin::ModelParams;
use pairing_ccm::rpa::{build_hessian, build_kinetic_form, solve_rpa, RpaTolerances};
use pairing_ccm::solver::{continuation_trace, newton_solve, SolverSettings};

fn sub1_seed(cfg: &SchemeConfig, omega: u32, g: f64, n0: f64) -> Vec<f64> {
    let q = (n0 / (2.0 * omega as f64)).sqrt();
    let lam = -g * (omega as f64 - 1.0) * (1.0 - n0 / omega as f64) / 2.0;
    let mut x = vec![0.0; cfg.n_unknowns()];
    x[0] = q;
    x[cfg.s_block_len()] = q;
    *x.last_mut().unwrap() = lam;
    x
}

/// Count genuinely off-axis complex quartets (both Re and Im bounded away
/// from zero) in a spectrum.
fn quartets(freqs: &[num_complex::Complex64]) -> usize {
    freqs
        .iter()
        .filter(|w| w.im.abs() > 1e-3 && w.re.abs() > 1e-3)
        .count()
        / 4
}

#[test]
fn qp_eccm_instability_parity_differs_between_even_and_odd_truncation() {
    // Tracing the quasiparticle ECCM physical branch across the shell:
    // at even truncation (SUB(2): one ± pair plus the Goldstone pair)
    // modes can only turn complex through zero, so no off-axis quartet
    // forms; at odd truncation (SUB(3): two ± pairs) the nonzero modes
    // collide in pairs and leave the real axis as a full quartet.
    let omega = 10u32;
    let g = 1.0;
    let settings = SolverSettings {
        arclength_step: 0.05,
        max_step: 0.2,
        tol: 1e-10,
        max_points: 120,
        ..Default::default()
    };
    let mut quartet_counts = Vec::new();
    for order in [2u32, 3] {
        let cfg = SchemeConfig::new(Scheme::QpEccm, order, Gauge::ScalingFix);
        let n0s = 2.0;
        let p = ModelParams::new(omega, g, n0s).unwrap();
        let start = newton_solve(&p, &cfg, &sub1_seed(&cfg, omega, g, n0s), &settings).unwrap();
        assert!(start.converged);
        let br = continuation_trace(&p, &cfg, &start, (0.2, 19.8), 1.0, &settings).unwrap();
        let mut max_quartets = 0usize;
        for pt in &br.points {
            let h = build_hessian(&p, pt).unwrap();
            let kin = build_kinetic_form(&p, pt).unwrap();
            if let Ok(spec) = solve_rpa(&h, &kin, RpaTolerances::default()) {
                max_quartets = max_quartets.max(quartets(&spec.frequencies));
            }
        }
        quartet_counts.push(max_quartets);
    }
    assert_eq!(
        quartet_counts[0] % 2,
        0,
        "even truncation should have an even quartet count, got {quartet_counts:?}"
    );
    assert_eq!(
        quartet_counts[1] % 2,
        1,
        "odd truncation should collide all nonzero pairs, got {quartet_counts:?}"
    );
}

#[test]
fn qp_nccm_sub2_improves_on_mean_field_below_half_filling() {
    let omega = 10u32;
    let g = 1.0;
    for n0 in [4.0, 6.0, 8.0] {
        let p = ModelParams::new(omega, g, n0).unwrap();
        let e_sub1 = -g * (n0 / 2.0) * ((omega as f64 - 1.0) / omega as f64)
            * (omega as f64 - n0 / 2.0);
        let cfg = SchemeConfig::new(Scheme::QpNccm, 2, Gauge::ScalingFix);
        let pt = newton_solve(
            &p,
            &cfg,
            &sub1_seed(&cfg, omega, g, n0),
            &SolverSettings::default(),
        )
        .unwrap();
        assert!(pt.converged);
        assert!(
            pt.obs.energy < e_sub1 - 1e-6,
            "n0={n0}: SUB(2) energy {} not below mean field {e_sub1}",
            pt.obs.energy
        );
    }
}

#[test]
fn zero_fluctuation_at_integer_number_implies_exact_energy() {
    // A state with ΔN² = 0 and ⟨N⟩ = N even sits at the exact energy
    // −G(Ω−N/2)(N/2); realized here by the analytic SUB(4) family
    // s̃⁽⁴⁾ = −(s̃⁽²⁾)²/2 with s⁽²⁾s̃⁽²⁾ = 1/24 at Ω = 4.
    let p = ModelParams::new(4, 1.0, 4.0).unwrap();
    let cfg = SchemeConfig::new(Scheme::ParticleEccm, 4, Gauge::None);
    for s2 in [0.5, 1.0, -0.8] {
        for s4 in [0.0, 0.3, -0.2] {
            let st2 = 1.0 / (24.0 * s2);
            let x = vec![0.0, s2, 0.0, s4, 0.0, st2, 0.0, -st2 * st2 / 2.0, 0.0];
            let obs = evaluate(&p, &AmplitudeVector::new(cfg, x).unwrap()).unwrap();
            assert!(obs.dn2.abs() < 1e-12, "dn2 = {}", obs.dn2);
            assert!((obs.n_mean - 4.0).abs() < 1e-12);
            assert!(
                (obs.energy + 4.0).abs() < 1e-7,
                "energy {} for s2={s2}, s4={s4}",
                obs.energy
            );
        }
    }
}
