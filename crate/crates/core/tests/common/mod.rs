#![allow(dead_code)]

use metacog::radar::naive_response;
use metacog::{ProbeResponseDataset, SeedStream, UtilityModel};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    SeedStream::new(seed).rng("test", 0)
}

pub fn uniform_vecs(rng: &mut impl Rng, k: usize, m: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..k).map(|_| (0..m).map(|_| rng.gen_range(lo..hi)).collect()).collect()
}

/// Probes and responses both drawn from `Unif(0.1, 3)`.
pub fn random_dataset(rng: &mut impl Rng, k: usize, m: usize) -> ProbeResponseDataset {
    let probes = uniform_vecs(rng, k, m, 0.1, 3.0);
    let responses = uniform_vecs(rng, k, m, 0.1, 3.0);
    ProbeResponseDataset::new(probes, responses).unwrap()
}

/// Probes from `Unif(lo, hi)`, responses the `SqrtSum` optimum.
pub fn sqrt_dataset(rng: &mut impl Rng, k: usize, m: usize, lo: f64, hi: f64) -> ProbeResponseDataset {
    let probes = uniform_vecs(rng, k, m, lo, hi);
    let responses = probes.iter().map(|a| naive_response(&UtilityModel::SqrtSum, a).unwrap()).collect();
    ProbeResponseDataset::new(probes, responses).unwrap()
}

/// Exact minimal relaxation: the relaxed inequalities fail exactly when a
/// cycle has every `a_ts = alpha_t'(beta_s - beta_t) <= -e` (one strictly),
/// so the infimum over feasible `e` is the largest bottleneck
/// `min_edges(-a_ts)` over cycles, or 0.
pub fn phi_oracle(d: &ProbeResponseDataset) -> f64 {
    let c = d.cost_matrix();
    let k = d.len();
    let mut w = vec![vec![f64::NEG_INFINITY; k]; k];
    for t in 0..k {
        for s in 0..k {
            if s != t {
                w[t][s] = c[t][t] - c[t][s];
            }
        }
    }
    for via in 0..k {
        for t in 0..k {
            for s in 0..k {
                let through = w[t][via].min(w[via][s]);
                if through > w[t][s] {
                    w[t][s] = through;
                }
            }
        }
    }
    (0..k).map(|t| w[t][t]).fold(0.0, f64::max)
}

/// Nearest point of the budget segment `{b >= 0, alpha'b = 1}` for `m = 2`,
/// scanning the segment in arc-length steps of `step`.
pub fn grid_projection(v: &[f64], alpha: &[f64], step: f64) -> Vec<f64> {
    let (p, q) = ([1.0 / alpha[0], 0.0], [0.0, 1.0 / alpha[1]]);
    let len = (p[0] * p[0] + q[1] * q[1]).sqrt();
    let n = (len / step).ceil() as usize;
    let mut best = (f64::INFINITY, vec![0.0, 0.0]);
    for i in 0..=n {
        let s = (i as f64 * step / len).min(1.0);
        let b = vec![p[0] * (1.0 - s), q[1] * s];
        let d = (b[0] - v[0]).powi(2) + (b[1] - v[1]).powi(2);
        if d < best.0 {
            best = (d, b);
        }
    }
    best.1
}

/// Random `n x n` matrix rescaled to spectral radius `radius`.
pub fn stable_matrix(rng: &mut impl Rng, n: usize, radius: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let rho = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if rho < 1e-9 {
        a
    } else {
        a * (radius / rho)
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}
