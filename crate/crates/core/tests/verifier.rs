mod common;

use common::{random_point, reference_net, rng};
use sigcert_core::oracle::{true_robust_radius, OracleConfig};
use sigcert_core::verifier::{certified_lower_bound, robustness_ratio, verify_robust};
use sigcert_core::zoo::{self, Architecture};
use sigcert_core::{Activation, Baseline, Network, PropagationConfig, Sample, Status, Strategy, UnderMethod};

const GRID: OracleConfig = OracleConfig::DenseGrid { points_per_dim: 101 };

/// The reference net labels every input 0, so radius checks use a 2-input
/// net whose decision boundaries cross the unit box.
fn boundary_net() -> Network {
    zoo::synthesize_with_gain(Architecture::Fnn { layers: 2, width: 8 }, 42, Activation::Sigmoid, &[2], 3, 3.0)
        .unwrap()
}

fn configs() -> [PropagationConfig; 3] {
    [
        PropagationConfig::new(Strategy::Dual, UnderMethod::MonteCarlo { samples: 1000, seed: 0 }),
        PropagationConfig::new(Strategy::Dual, UnderMethod::Gradient { step_fraction: 0.45 }),
        PropagationConfig::new(Strategy::Baseline(Baseline::ParallelLine), UnderMethod::None),
    ]
}

/// Inputs of [`boundary_net`] with their oracle radii, skipping those whose
/// nearest counterexample is beyond the search cap.
fn oracle_cases() -> Vec<(Vec<f64>, f64)> {
    let net = boundary_net();
    let mut r = rng(2);
    (0..8)
        .map(|_| random_point(&mut r, 2, 1.0))
        .map(|x| {
            let rho = true_robust_radius(&net, &x, None, &GRID, 1e-4, 1.0).unwrap();
            (x, rho)
        })
        .filter(|&(_, rho)| rho < 1.0)
        .collect()
}

#[test]
fn certified_bound_never_exceeds_oracle_radius() {
    let net = boundary_net();
    let cases = oracle_cases();
    assert!(cases.len() >= 4);
    for (x, rho) in &cases {
        for cfg in configs() {
            let bound = certified_lower_bound(&net, x, &cfg).unwrap().epsilon;
            assert!(bound <= *rho, "{}: {bound} > {rho}", cfg.strategy);
        }
    }
}

/// No counterexample exists for the reference net, so its oracle radius is
/// the search cap.
#[test]
fn reference_net_verifies_at_half_its_oracle_radius() {
    let net = reference_net();
    let mut r = rng(3);
    for _ in 0..5 {
        let x = random_point(&mut r, 2, 1.0);
        let rho = true_robust_radius(&net, &x, None, &GRID, 1e-4, 1.0).unwrap();
        assert_eq!(rho, 1.0);
        for cfg in configs() {
            assert_eq!(verify_robust(&net, &x, 0.5 * rho, &cfg).unwrap().status, Status::Robust, "{}", cfg.strategy);
        }
    }
}

#[test]
fn robust_at_larger_radius_implies_robust_at_smaller() {
    let net = reference_net();
    let mut r = rng(5);
    for _ in 0..20 {
        let x = random_point(&mut r, 2, 1.0);
        for cfg in configs() {
            let radii = [0.4, 0.2, 0.1, 0.05, 0.01];
            let robust: Vec<bool> = radii
                .iter()
                .map(|&e| verify_robust(&net, &x, e, &cfg).unwrap().status == Status::Robust)
                .collect();
            assert!(robust.windows(2).all(|w| !w[0] || w[1]), "{}: {robust:?}", cfg.strategy);
        }
    }
}

#[test]
fn ratio_is_nonincreasing_over_a_sweep() {
    let net = reference_net();
    let mut r = rng(6);
    let data: Vec<Sample> = (0..20)
        .map(|_| {
            let input = random_point(&mut r, 2, 1.0);
            let label = net.predicted_label(&input).unwrap();
            Sample { input, label }
        })
        .collect();
    for cfg in configs() {
        let ratios: Vec<f64> = (0..=10)
            .map(|k| robustness_ratio(&net, &data, 0.05 * k as f64, &cfg).unwrap())
            .collect();
        assert_eq!(ratios[0], 1.0);
        assert!(ratios.windows(2).all(|w| w[1] <= w[0]), "{}: {ratios:?}", cfg.strategy);
    }
}
