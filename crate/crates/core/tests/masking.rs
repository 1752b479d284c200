mod common;

use metacog::masking::{
    budget_residual, epsilon_max, mask_deterministic, project_budget, spsa_gradient, DetMaskConfig,
};
use metacog::revealed::anchored_margin;
use metacog::{SeedStream, UtilityModel};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn projection_matches_grid_oracle(
        v in prop::collection::vec(-2.0f64..4.0, 2),
        alpha in prop::collection::vec(0.2f64..3.0, 2),
    ) {
        let p = project_budget(&v, &alpha);
        let g = common::grid_projection(&v, &alpha, 1e-3);
        prop_assert!((p[0] - g[0]).abs() <= 2e-3 && (p[1] - g[1]).abs() <= 2e-3, "{:?} vs {:?}", p, g);
        let again = project_budget(&p, &alpha);
        prop_assert!((again[0] - p[0]).abs() <= 1e-10 && (again[1] - p[1]).abs() <= 1e-10);
    }

    #[test]
    fn projection_is_nearest(
        seed in any::<u64>(),
        v in prop::collection::vec(-3.0f64..3.0, 1..7),
    ) {
        let mut rng = common::rng(seed);
        let alpha: Vec<f64> = v.iter().map(|_| rng.gen_range(0.1..4.0)).collect();
        let p = project_budget(&v, &alpha);
        prop_assert!(budget_residual(&p, &alpha) <= 1e-10);
        let dist = |b: &[f64]| b.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        for _ in 0..50 {
            // a random point of the budget set
            let w: Vec<f64> = alpha.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
            let spend: f64 = w.iter().zip(&alpha).map(|(x, a)| x * a).sum();
            let q: Vec<f64> = w.iter().map(|x| x / spend).collect();
            prop_assert!(dist(&p) <= dist(&q) + 1e-12);
        }
    }

    #[test]
    fn linear_cost_gradient_is_exact(
        seed in any::<u64>(),
        k in 1usize..6,
        m in 1usize..4,
        omega in 1e-3f64..1.0,
    ) {
        let mut rng = common::rng(seed);
        let g = common::uniform_vecs(&mut rng, k, m, -2.0, 2.0);
        let beta = common::uniform_vecs(&mut rng, k, m, 0.0, 1.0);
        let lin = |b: &[Vec<f64>]| -> f64 {
            b.iter().flatten().zip(g.iter().flatten()).map(|(x, y)| x * y).sum()
        };
        let mut draw = SeedStream::new(seed).rng("delta", 0);
        let (dir, delta) = spsa_gradient(lin, &beta, omega, &mut draw);
        let gd: f64 = g.iter().flatten().zip(delta.iter().flatten()).map(|(a, b)| a * b).sum();
        let n = (k * m) as f64;
        for (x, d) in dir.iter().flatten().zip(delta.iter().flatten()) {
            prop_assert!(*d == 1.0 || *d == -1.0);
            prop_assert!((x - d * gd / n).abs() <= 1e-9 * (1.0 + gd.abs()) / omega);
        }
    }
}

fn ex1_probes(seed: u64, k: usize) -> Vec<Vec<f64>> {
    common::uniform_vecs(&mut common::rng(seed), k, 2, 0.2, 2.5)
}

#[test]
fn perturbation_shrinks_as_the_bound_loosens() {
    let u = UtilityModel::SqrtSum;
    for seed in 0..3 {
        let probes = ex1_probes(seed, 10);
        let eps_max = epsilon_max(&probes, &u).unwrap();
        let mut last = 0.0;
        for j in (0..=5).rev() {
            let eps = eps_max * j as f64 / 5.0;
            let cfg = DetMaskConfig { epsilon: eps, seed, ..Default::default() };
            let r = mask_deterministic(&probes, &u, &cfg).unwrap();
            assert!(r.feasible, "seed {seed} eps {eps}");
            assert!(r.achieved_margin <= eps + 1e-6);
            let direct = anchored_margin(&r.masked, &r.naive.iter().map(|b| u.gradient(b).unwrap()).collect::<Vec<_>>(), &u).unwrap();
            assert!((direct - r.achieved_margin).abs() <= 1e-12);
            for (b, a) in r.masked.iter().zip(&probes) {
                assert!(budget_residual(b, a) <= 1e-8);
            }
            assert!(r.diagnostics.iter().all(|d| r.perturbation <= d + 1e-15));
            if j == 5 {
                assert_eq!(r.perturbation, 0.0);
            }
            assert!(r.perturbation >= last - 1e-6, "seed {seed}: {} after {last} at j = {j}", r.perturbation);
            last = r.perturbation;
        }
        assert!(last > 0.0);
    }
}

#[test]
fn masking_is_reproducible() {
    let probes = ex1_probes(7, 8);
    let u = UtilityModel::SqrtSum;
    let cfg = DetMaskConfig { epsilon: 0.3 * epsilon_max(&probes, &u).unwrap(), seed: 42, ..Default::default() };
    assert_eq!(mask_deterministic(&probes, &u, &cfg).unwrap(), mask_deterministic(&probes, &u, &cfg).unwrap());
}

#[test]
fn no_perturbation_above_the_naive_margin() {
    let probes = ex1_probes(3, 12);
    for u in [UtilityModel::SqrtSum, UtilityModel::QuadSum] {
        let eps_max = epsilon_max(&probes, &u).unwrap();
        for eps in [eps_max, eps_max + 1.0] {
            let r = mask_deterministic(&probes, &u, &DetMaskConfig { epsilon: eps, ..Default::default() }).unwrap();
            assert_eq!(r.perturbation, 0.0);
            assert_eq!(r.masked, r.naive);
        }
    }
}
