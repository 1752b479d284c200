//! Statistical utility-maximization detector for noisy responses.
//!
//! The adversary measures `beta_k + w_k` with iid noise `w_k`, computes the
//! minimal Afriat relaxation `phi*` of the measured data and rejects
//! "utility maximizer" when `F_L(phi*) > 1 - alpha`, where `F_L` is the
//! distribution of `L = max_{i,j} alpha_i'(w_i - w_j)`. Since `L` bounds
//! `phi*` for a true maximizer, the Type-I error is at most `alpha`.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{dot, validate_probes, ProbeResponseDataset};
use crate::error::{Error, Result};
use crate::revealed::cyclically_consistent;
use crate::rng::SeedStream;
use crate::utility::UtilityModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Independent zero-mean Gaussian components of variance `sigma2`.
    GaussianDiag { sigma2: f64 },
    /// No noise.
    Degenerate,
}

impl NoiseModel {
    pub fn gaussian(sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidConfig(format!("noise variance {sigma2} must be >= 0")));
        }
        Ok(NoiseModel::GaussianDiag { sigma2 })
    }

    pub fn is_degenerate(&self) -> bool {
        match self {
            NoiseModel::Degenerate => true,
            NoiseModel::GaussianDiag { sigma2 } => *sigma2 == 0.0,
        }
    }

    /// One noise vector of dimension `m`.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<f64> {
        let mut w = vec![0.0; m];
        self.fill(&mut w, rng);
        w
    }

    pub fn fill<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        match self {
            NoiseModel::Degenerate => out.iter_mut().for_each(|w| *w = 0.0),
            NoiseModel::GaussianDiag { sigma2 } => {
                let sd = sigma2.sqrt();
                for w in out {
                    let z: f64 = rng.sample(StandardNormal);
                    *w = sd * z;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Consistent with utility maximization.
    H0,
    /// Not a utility maximizer.
    H1,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::H0 => "H0",
            Verdict::H1 => "H1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Significance level.
    pub alpha: f64,
    pub n_cdf: usize,
    pub tol_phi: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            n_cdf: 100_000,
            tol_phi: 1e-6,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("significance {} not in (0, 1)", self.alpha)));
        }
        if self.n_cdf < 1000 {
            return Err(Error::InvalidConfig(format!("n_cdf = {} < 1000", self.n_cdf)));
        }
        if !(self.tol_phi > 0.0) {
            return Err(Error::InvalidConfig("tol_phi must be positive".into()));
        }
        Ok(())
    }
}

/// Noisy measurement of every response; probes untouched, nothing clipped.
pub fn sample_noisy_dataset(d: &ProbeResponseDataset, nm: &NoiseModel, stream: &SeedStream) -> ProbeResponseDataset {
    let mut rng = stream.rng("measurement", 0);
    let responses = d
        .responses()
        .iter()
        .map(|b| {
            let w = nm.sample(b.len(), &mut rng);
            b.iter().zip(w).map(|(x, w)| x + w).collect()
        })
        .collect();
    d.with_responses(responses).expect("adding finite noise keeps the dataset valid")
}

/// `L = max_{i,j} alpha_i'(w_i - w_j)`, the `i = j` pairs included.
pub fn l_statistic(probes: &[Vec<f64>], noise: &[Vec<f64>]) -> f64 {
    let mut l: f64 = 0.0;
    for (a, wi) in probes.iter().zip(noise) {
        let own = dot(a, wi);
        let lowest = noise.iter().map(|wj| dot(a, wj)).fold(f64::INFINITY, f64::min);
        l = l.max(own - lowest);
    }
    l
}

/// Empirical distribution of `L` for fixed probes and noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdfL {
    samples: Vec<f64>,
    probes: Vec<Vec<f64>>,
    noise: NoiseModel,
}

impl EmpiricalCdfL {
    pub fn from_samples(mut samples: Vec<f64>, probes: Vec<Vec<f64>>, noise: NoiseModel) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("empty CDF sample".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("non-finite CDF sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples, probes, noise })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn probes(&self) -> &[Vec<f64>] {
        &self.probes
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Right-continuous step CDF: fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        let below = self.samples.partition_point(|s| *s <= x);
        below as f64 / self.samples.len() as f64
    }

    /// `ceil(pN)`-th order statistic, the smallest `x` with `F(x) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.samples.len();
        let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.samples[rank - 1]
    }

    /// Single `sample` column, sorted ascending.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.samples.len() * 20);
        writeln!(out, "sample").unwrap();
        for s in &self.samples {
            writeln!(out, "{s}").unwrap();
        }
        out
    }

    pub fn read_csv(path: &Path, probes: Vec<Vec<f64>>, noise: NoiseModel) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            context: "cannot read CDF samples",
            path: path.to_path_buf(),
            source,
        })?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("sample") {
            return Err(Error::Csv { path: path.to_path_buf(), message: "expected header `sample`".into() });
        }
        let samples = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Csv { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_samples(samples, probes, noise)
    }
}

/// Monte-Carlo estimate of `F_L` from `n` independent noise sequences.
pub fn build_cdf_l(probes: &[Vec<f64>], nm: &NoiseModel, n: usize, stream: &SeedStream) -> Result<EmpiricalCdfL> {
    validate_probes(probes)?;
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one CDF sample".into()));
    }
    let m = probes[0].len();
    let samples: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.rng("cdf-l", i);
            let noise: Vec<Vec<f64>> = probes.iter().map(|_| nm.sample(m, &mut rng)).collect();
            l_statistic(probes, &noise)
        })
        .collect();
    EmpiricalCdfL::from_samples(samples, probes.to_vec(), *nm)
}

/// `phi*`: the least `e` for which the Afriat inequalities relaxed by
/// `lambda_t e` are feasible, by bisection on `e`.
///
/// Feasibility at each `e` is decided exactly by cyclical consistency of the
/// shifted costs rather than by an LP, whose multipliers blow up near the
/// least feasible shift. The infimum need not be attained; the returned
/// value is the feasible end of the final bracket, within `tol` above it.
pub fn statistic_phi(dhat: &ProbeResponseDataset, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("bisection tolerance {tol} must be positive")));
    }
    let cost = dhat.cost_matrix();
    let feasible = |e: f64| cyclically_consistent(&cost, e);
    if feasible(0.0) {
        return Ok(0.0);
    }
    let k = dhat.len();
    let mut hi = 1.0;
    for t in 0..k {
        for s in 0..k {
            hi = f64::max(hi, (cost[t][s] - cost[t][t]).abs() + 1.0);
        }
    }
    let mut lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Multipliers `lambda_t` with `grad u(beta*_t) = lambda_t alpha_t`.
pub fn utility_multipliers(u: &UtilityModel, probes: &[Vec<f64>], naive: &[Vec<f64>]) -> Result<Vec<f64>> {
    if probes.len() != naive.len() {
        return Err(Error::Dimension { expected: probes.len(), found: naive.len() });
    }
    probes
        .iter()
        .zip(naive)
        .enumerate()
        .map(|(t, (a, b))| {
            let lambda = u.kkt_multiplier(b, a)?;
            if lambda > 0.0 {
                Ok(lambda)
            } else {
                Err(Error::InvalidUtility(format!("multiplier {lambda} at epoch {} is not positive", t + 1)))
            }
        })
        .collect()
}

/// Fixed-utility statistic `max_{s != t} [u(b_s) - u(b_t) - lambda_t alpha_t'(b_s - b_t)] / lambda_t`
/// with precomputed multipliers; `0` when `K = 1`.
pub fn phi_u_with_multipliers(u: &UtilityModel, probes: &[Vec<f64>], measured: &[Vec<f64>], lambdas: &[f64]) -> f64 {
    let k = probes.len();
    if k == 1 {
        return 0.0;
    }
    let values: Vec<f64> = measured.iter().map(|b| u.eval_extended(b)).collect();
    let mut best = f64::NEG_INFINITY;
    for t in 0..k {
        let own = dot(&probes[t], &measured[t]);
        for s in 0..k {
            if s != t {
                let term = (values[s] - values[t]) / lambdas[t] - (dot(&probes[t], &measured[s]) - own);
                best = best.max(term);
            }
        }
    }
    best
}

/// Fixed-utility statistic `phi*_u`, multipliers pinned to the true utility
/// at its naive responses.
pub fn statistic_phi_u(dhat: &ProbeResponseDataset, u: &UtilityModel, naive: &[Vec<f64>]) -> Result<f64> {
    let lambdas = utility_multipliers(u, dhat.probes(), naive)?;
    Ok(phi_u_with_multipliers(u, dhat.probes(), dhat.responses(), &lambdas))
}

/// Threshold test on `phi*`.
pub fn detect(dhat: &ProbeResponseDataset, cdf: &EmpiricalCdfL, cfg: &DetectorConfig) -> Result<Verdict> {
    let phi = statistic_phi(dhat, cfg.tol_phi)?;
    Ok(verdict(cdf.eval(phi), cfg.alpha))
}

pub fn verdict(cdf_value: f64, alpha: f64) -> Verdict {
    if cdf_value <= 1.0 - alpha {
        Verdict::H0
    } else {
        Verdict::H1
    }
}

/// Evaluates the adversary's conditional Type-I error probability for
/// candidate responses, given fixed noise realizations.
///
/// `F_L(phi) >= 1 - alpha` is the same event as `phi >= F_L^{-1}(1 - alpha)`
/// for the empirical CDF, so the quantile is computed once.
#[derive(Debug, Clone)]
pub struct ConfusionEstimator {
    probes: Vec<Vec<f64>>,
    lambdas: Vec<f64>,
    threshold: f64,
    u: UtilityModel,
}

impl ConfusionEstimator {
    pub fn new(u: &UtilityModel, probes: &[Vec<f64>], naive: &[Vec<f64>], cdf: &EmpiricalCdfL, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("significance {alpha} not in (0, 1)")));
        }
        Ok(Self {
            probes: probes.to_vec(),
            lambdas: utility_multipliers(u, probes, naive)?,
            threshold: cdf.quantile(1.0 - alpha),
            u: u.clone(),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Does `phi*_u` of `responses + noise` reach the threshold? `noise` is
    /// one `K x m` realization, row-major. Stops at the first pair that does.
    pub fn rejects(&self, responses: &[Vec<f64>], noise: &[f64], scratch: &mut Scratch) -> bool {
        let k = self.probes.len();
        let m = self.probes[0].len();
        scratch.measured.resize(k * m, 0.0);
        scratch.values.resize(k, 0.0);
        for (t, b) in responses.iter().enumerate() {
            let row = &mut scratch.measured[t * m..(t + 1) * m];
            for ((r, x), e) in row.iter_mut().zip(b).zip(&noise[t * m..(t + 1) * m]) {
                *r = x + e;
            }
            scratch.values[t] = self.u.eval_extended(row);
        }
        if k == 1 {
            return 0.0 >= self.threshold;
        }
        let measured = &scratch.measured;
        for t in 0..k {
            let a = &self.probes[t];
            let own = dot(a, &measured[t * m..(t + 1) * m]);
            let inv = 1.0 / self.lambdas[t];
            for s in 0..k {
                if s != t {
                    let term = (scratch.values[s] - scratch.values[t]) * inv - (dot(a, &measured[s * m..(s + 1) * m]) - own);
                    if term >= self.threshold {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Fraction of the noise realizations that lead to rejection.
    pub fn probability(&self, responses: &[Vec<f64>], noise: &NoiseBlock) -> f64 {
        let mut scratch = Scratch::default();
        let hits = noise.realizations().filter(|w| self.rejects(responses, w, &mut scratch)).count();
        hits as f64 / noise.reps() as f64
    }
}

#[derive(Debug, Default)]
pub struct Scratch {
    measured: Vec<f64>,
    values: Vec<f64>,
}

/// `R` noise realizations of a `K x m` response sequence, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBlock {
    k: usize,
    m: usize,
    data: Vec<f64>,
}

impl NoiseBlock {
    pub fn new(k: usize, m: usize, reps: usize) -> Self {
        Self { k, m, data: vec![0.0; k * m * reps] }
    }

    /// Replication `r` comes from `stream.rng(label, r)`.
    pub fn draw(nm: &NoiseModel, k: usize, m: usize, reps: usize, stream: &SeedStream, label: &str) -> Self {
        let mut block = Self::new(k, m, reps);
        block.refill(nm, stream, label);
        block
    }

    pub fn refill(&mut self, nm: &NoiseModel, stream: &SeedStream, label: &str) {
        let width = self.k * self.m;
        for (r, chunk) in self.data.chunks_mut(width.max(1)).enumerate() {
            let mut rng = stream.rng(label, r as u64);
            nm.fill(chunk, &mut rng);
        }
    }

    pub fn reps(&self) -> usize {
        self.data.len().checked_div(self.k * self.m).unwrap_or(0)
    }

    pub fn realizations(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.k * self.m)
    }

    /// Realization `r` as `K` rows of length `m`.
    pub fn rows(&self, r: usize) -> Vec<Vec<f64>> {
        let width = self.k * self.m;
        self.data[r * width..(r + 1) * width].chunks(self.m).map(<[f64]>::to_vec).collect()
    }
}

/// Empirical conditional Type-I error probability
/// `(1/R) sum_r 1{F_L(phi*_u(responses + w_r)) >= 1 - alpha}`.
#[allow(clippy::too_many_arguments)]
pub fn conditional_type1_prob(
    probes: &[Vec<f64>],
    responses: &[Vec<f64>],
    u: &UtilityModel,
    naive: &[Vec<f64>],
    cdf: &EmpiricalCdfL,
    cfg: &DetectorConfig,
    reps: usize,
    stream: &SeedStream,
) -> Result<f64> {
    if reps == 0 {
        return Err(Error::InvalidConfig("need at least one replication".into()));
    }
    if responses.len() != probes.len() {
        return Err(Error::Dimension { expected: probes.len(), found: responses.len() });
    }
    let est = ConfusionEstimator::new(u, probes, naive, cdf, cfg.alpha)?;
    let noise = NoiseBlock::draw(cdf.noise(), probes.len(), probes[0].len(), reps, stream, "type1");
    Ok(est.probability(responses, &noise))
}
