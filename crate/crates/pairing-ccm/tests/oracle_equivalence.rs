//! Cross-validation of the matrix-representation functionals against the
//! combinatorial oracle, which evaluates the same states purely through
//! recursive pair-action rules in the particle basis.

use pairing_ccm::functional::{evaluate, AmplitudeVector, Gauge, Scheme, SchemeConfig};
use pairing_ccm::oracle::{expectation_bruteforce, ObservableKind};
use pairing_ccm::quasispin::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn configs_for(omega: u32) -> Vec<SchemeConfig> {
    let mut cfgs = vec![
        SchemeConfig::new(Scheme::ParticleEccm, 1, Gauge::None),
        SchemeConfig::new(Scheme::ParticleEccm, 2, Gauge::None),
        SchemeConfig::new(Scheme::QpEccm, 2, Gauge::None),
        SchemeConfig::new(Scheme::QpNccm, 2, Gauge::None),
        SchemeConfig::new(Scheme::MaxOverlap { s1: 0.55, s1t: 0.35 }, 2, Gauge::None),
    ];
    if omega >= 4 {
        cfgs.push(SchemeConfig::new(Scheme::ParticleEccm, 4, Gauge::None));
        cfgs.push(SchemeConfig::new(Scheme::QpEccm, 3, Gauge::None));
        cfgs.push(SchemeConfig::new(Scheme::QpNccm, 3, Gauge::None));
    }
    cfgs
}

fn check_point(p: &ModelParams, amps: &AmplitudeVector, tol: f64) {
    let obs = evaluate(p, amps).unwrap();
    let pairs = [
        (obs.energy, ObservableKind::Hamiltonian),
        (obs.n_mean, ObservableKind::Number),
        (obs.n2_mean, ObservableKind::NumberSquared),
        (obs.delta_expect, ObservableKind::PairAnnihilator),
        (obs.delta_dag_expect, ObservableKind::PairCreator),
    ];
    for (got, kind) in pairs {
        let want = expectation_bruteforce(p, &amps.config, &amps.x, kind).unwrap();
        let scale = 1.0 + got.abs().max(want.abs());
        assert!(
            (got - want).abs() <= tol * scale,
            "omega={} scheme={:?} order={} {:?}: functional {} vs oracle {}",
            p.omega,
            amps.config.scheme,
            amps.config.order,
            kind,
            got,
            want
        );
    }
}

#[test]
fn functionals_match_bruteforce_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for omega in [2u32, 4, 6] {
        let p = ModelParams::new(omega, 1.3, omega as f64).unwrap();
        for cfg in configs_for(omega) {
            if cfg.validate(&p).is_err() {
                continue;
            }
            for _ in 0..50 {
                let k = cfg.s_block_len();
                let x: Vec<f64> = (0..cfg.n_unknowns())
                    .map(|i| {
                        let w = if i < 2 * k {
                            1.0 / ((i % k) + 1) as f64
                        } else {
                            1.0
                        };
                        rng.gen_range(-0.8..0.8) * w
                    })
                    .collect();
                let amps = AmplitudeVector::new(cfg, x).unwrap();
                check_point(&p, &amps, 1e-11);
            }
        }
    }
}

#[test]
fn particle_eccm_matches_oracle_exactly_on_spec_example() {
    // Ω=4, SUB(2), random amplitudes: agreement to 1e-12 scale.
    let p = ModelParams::new(4, 1.0, 4.0).unwrap();
    let cfg = SchemeConfig::new(Scheme::ParticleEccm, 2, Gauge::None);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.6..0.6)).collect();
        let amps = AmplitudeVector::new(cfg, x).unwrap();
        let got = evaluate(&p, &amps).unwrap().energy;
        let want =
            expectation_bruteforce(&p, &cfg, &amps.x, ObservableKind::Hamiltonian).unwrap();
        assert!((got - want).abs() <= 1e-12 * (1.0 + got.abs().max(want.abs())));
    }
}
