//! Statistical trends of the stochastic masking, averaged over seeds.

use metacog::harness::{run_example2, ExperimentConfig};

const SEEDS: u64 = 5;

fn averaged(lambdas: &[f64], alphas: &[f64], iters: usize, sigma2: f64) -> (Vec<f64>, Vec<f64>) {
    let cells = lambdas.len() * alphas.len();
    let (mut conf, mut loss) = (vec![0.0; cells], vec![0.0; cells]);
    for seed in 1..=SEEDS {
        let mut cfg = ExperimentConfig::example2();
        cfg.lambdas = lambdas.to_vec();
        cfg.alphas = alphas.to_vec();
        cfg.spsa.iters = iters;
        cfg.noise_variance = sigma2;
        cfg.seed = seed;
        let table = run_example2(&cfg).unwrap();
        for (acc, col) in [(&mut conf, "type1_prob"), (&mut loss, "utility_loss")] {
            for (a, x) in acc.iter_mut().zip(table.column(col).unwrap()) {
                *a += x / SEEDS as f64;
            }
        }
    }
    (conf, loss)
}

fn nondecreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0])
}

#[test]
fn confusion_and_loss_grow_with_weight() {
    let (conf, loss) = averaged(&[1.0, 1e2, 1e4], &[0.1], 2000, 0.2);
    eprintln!("confusion {conf:?}\nutility loss {loss:?}");
    assert!(nondecreasing(&conf), "confusion {conf:?}");
    assert!(nondecreasing(&loss), "utility loss {loss:?}");
}

#[test]
fn confusion_grows_with_significance() {
    let (conf, _) = averaged(&[1e2], &[0.05, 0.1, 0.2], 2000, 0.2);
    eprintln!("confusion {conf:?}");
    assert!(nondecreasing(&conf), "confusion {conf:?}");
}

#[test]
fn confusion_is_reachable_at_low_noise() {
    // with small measurement noise the rejection threshold sits within reach
    // of budget-feasible responses, so a heavy weight buys confusion
    let (conf, loss) = averaged(&[1.0, 1e5], &[0.1], 2000, 1e-3);
    eprintln!("confusion {conf:?}\nutility loss {loss:?}");
    assert!(conf[1] > conf[0] + 0.2, "confusion {conf:?}");
    assert!(loss[1] > loss[0], "utility loss {loss:?}");
}
