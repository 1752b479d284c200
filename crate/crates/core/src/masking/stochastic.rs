//! Masking against the noisy detector by simultaneous perturbation
//! stochastic approximation.
//!
//! The radar minimizes `J = sum_k [u(naive_k) - u(b_k)] - lambda P(H1)` over
//! responses on their budget hyperplanes, where `P(H1)` is the detector's
//! conditional probability of rejecting "utility maximizer", estimated from
//! `R` noise realizations per evaluation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::projection::{budget_residual, project_into};
use super::{naive_sequence, perturbation, utility_loss, MaskingResult};
use crate::detector::{conditional_type1_prob, ConfusionEstimator, DetectorConfig, EmpiricalCdfL, NoiseBlock, Scratch};
use crate::error::{Error, Result};
use crate::revealed::anchored_margin_with_values;
use crate::rng::SeedStream;
use crate::utility::UtilityModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `eta` every iteration.
    Constant,
    /// `eta / (i + 1)^0.602`.
    Decaying,
    /// `eta / (i + 1)`.
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSign {
    /// `sum [u(naive) - u(b)] - lambda P`: utility loss traded against confusion.
    Loss,
    /// `sum [u(b) - u(naive)] - lambda P`, kept for comparison runs.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsaConfig {
    /// Weight of the confusion term.
    pub lambda: f64,
    /// Perturbation size; `None` means `0.01 * mean_k |naive_k|`.
    pub omega: Option<f64>,
    pub eta: f64,
    pub schedule: StepSchedule,
    pub iters: usize,
    /// Noise realizations per cost evaluation.
    pub reps: usize,
    /// Realizations for the final confusion estimate.
    pub final_reps: usize,
    /// Detector significance.
    pub alpha: f64,
    pub sign: CostSign,
    /// Record the trace every this many iterations; 0 disables it.
    pub trace_every: usize,
    pub seed: u64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            omega: None,
            eta: 0.05,
            schedule: StepSchedule::Constant,
            iters: 10_000,
            reps: 100,
            final_reps: 1000,
            alpha: 0.1,
            sign: CostSign::Loss,
            trace_every: 1,
            seed: 0,
        }
    }
}

impl SpsaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("SPSA {what}")));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be finite and >= 0");
        }
        if let Some(w) = self.omega {
            if !(w > 0.0) || !w.is_finite() {
                return bad("omega must be positive");
            }
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return bad("eta must be positive");
        }
        if self.iters == 0 || self.reps == 0 || self.final_reps == 0 {
            return bad("iters, reps and final_reps must be >= 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        Ok(())
    }

    fn step(&self, i: usize) -> f64 {
        match self.schedule {
            StepSchedule::Constant => self.eta,
            StepSchedule::Decaying => self.eta / ((i + 1) as f64).powf(0.602),
            StepSchedule::Harmonic => self.eta / (i + 1) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpsaRecord {
    pub iter: usize,
    pub cost: f64,
    pub confusion: f64,
    pub utility_loss: f64,
    /// Largest budget residual over the epochs.
    pub feasibility_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpsaTrace {
    pub records: Vec<SpsaRecord>,
    /// Confusion of the final responses on fresh noise.
    pub final_confusion: f64,
}

impl SpsaTrace {
    pub const HEADER: &'static str = "iter,cost,confusion,utility_loss,feasibility_residual";

    pub fn to_csv(&self) -> Vec<u8> {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iter, r.cost, r.confusion, r.utility_loss, r.feasibility_residual
            ));
        }
        out.into_bytes()
    }
}

/// Cost of a response sequence against fixed noise realizations.
pub struct CostModel<'a> {
    u: &'a UtilityModel,
    naive: &'a [Vec<f64>],
    lambda: f64,
    sign: CostSign,
    confusion: ConfusionEstimator,
    scratch: Scratch,
}

/// Cost together with its two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostValue {
    pub cost: f64,
    pub confusion: f64,
    pub utility_loss: f64,
}

impl<'a> CostModel<'a> {
    pub fn new(
        probes: &[Vec<f64>],
        u: &'a UtilityModel,
        naive: &'a [Vec<f64>],
        cfg: &SpsaConfig,
        cdf: &EmpiricalCdfL,
    ) -> Result<Self> {
        Ok(Self {
            u,
            naive,
            lambda: cfg.lambda,
            sign: cfg.sign,
            confusion: ConfusionEstimator::new(u, probes, naive, cdf, cfg.alpha)?,
            scratch: Scratch::default(),
        })
    }

    pub fn evaluate(&mut self, responses: &[Vec<f64>], noise: &NoiseBlock) -> CostValue {
        let loss = utility_loss(self.u, responses, self.naive);
        let confusion = if self.lambda == 0.0 {
            0.0
        } else {
            let hits = noise
                .realizations()
                .filter(|w| self.confusion.rejects(responses, w, &mut self.scratch))
                .count();
            hits as f64 / noise.reps() as f64
        };
        let signed = match self.sign {
            CostSign::Loss => loss,
            CostSign::Printed => -loss,
        };
        CostValue {
            cost: signed - self.lambda * confusion,
            confusion,
            utility_loss: loss,
        }
    }

    /// Empirical confusion alone.
    pub fn confusion(&mut self, responses: &[Vec<f64>], noise: &NoiseBlock) -> f64 {
        self.confusion.probability(responses, noise)
    }
}

/// `J = sum_k [u(naive_k) - u(b_k)] - lambda P` with `P` estimated from
/// `cfg.reps` realizations drawn from `stream`.
pub fn estimate_cost(
    responses: &[Vec<f64>],
    probes: &[Vec<f64>],
    u: &UtilityModel,
    naive: &[Vec<f64>],
    cfg: &SpsaConfig,
    cdf: &EmpiricalCdfL,
    stream: &SeedStream,
) -> Result<f64> {
    cfg.validate()?;
    if responses.len() != probes.len() {
        return Err(Error::Dimension { expected: probes.len(), found: responses.len() });
    }
    let mut model = CostModel::new(probes, u, naive, cfg, cdf)?;
    let noise = NoiseBlock::draw(cdf.noise(), probes.len(), probes[0].len(), cfg.reps, stream, "cost");
    Ok(model.evaluate(responses, &noise).cost)
}

/// Two-sided simultaneous-perturbation gradient
/// `Delta (J(b + omega Delta) - J(b - omega Delta)) / (2 omega |Delta|_F^2)`
/// with iid `+-1` entries in `Delta`. Returns the direction and `Delta`.
pub fn spsa_gradient<F, R>(mut cost: F, responses: &[Vec<f64>], omega: f64, rng: &mut R) -> (Vec<Vec<f64>>, Vec<Vec<f64>>)
where
    F: FnMut(&[Vec<f64>]) -> f64,
    R: Rng + ?Sized,
{
    let delta: Vec<Vec<f64>> = responses
        .iter()
        .map(|b| b.iter().map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect();
    let shifted = |sign: f64| -> Vec<Vec<f64>> {
        responses
            .iter()
            .zip(&delta)
            .map(|(b, d)| b.iter().zip(d).map(|(x, e)| x + sign * omega * e).collect())
            .collect()
    };
    let plus = cost(&shifted(1.0));
    let minus = cost(&shifted(-1.0));
    let norm2: f64 = delta.iter().map(|d| d.len() as f64).sum();
    let scale = (plus - minus) / (2.0 * omega * norm2);
    let direction = delta.iter().map(|d| d.iter().map(|e| e * scale).collect()).collect();
    (direction, delta)
}

fn max_residual(responses: &[Vec<f64>], probes: &[Vec<f64>]) -> f64 {
    responses
        .iter()
        .zip(probes)
        .map(|(b, a)| budget_residual(b, a))
        .fold(0.0, f64::max)
}

/// Runs the SPSA iteration from the naive responses and returns the final
/// responses with their trace. The trace's `final_confusion` is estimated on
/// `cfg.final_reps` fresh realizations.
pub fn mask_stochastic(
    probes: &[Vec<f64>],
    u: &UtilityModel,
    cfg: &SpsaConfig,
    cdf: &EmpiricalCdfL,
) -> Result<(MaskingResult, SpsaTrace)> {
    cfg.validate()?;
    let naive = naive_sequence(u, probes)?;
    if cdf.probes() != probes {
        return Err(Error::InvalidConfig("CDF of L was built for different probes".into()));
    }
    let (k, m) = (probes.len(), probes[0].len());
    let omega = cfg.omega.unwrap_or_else(|| {
        let mean: f64 = naive.iter().map(|b| b.iter().map(|x| x * x).sum::<f64>().sqrt()).sum::<f64>() / k as f64;
        0.01 * mean
    });
    let root = SeedStream::new(cfg.seed);
    let mut model = CostModel::new(probes, u, &naive, cfg, cdf)?;
    let mut noise = NoiseBlock::new(k, m, cfg.reps);
    let mut beta = naive.clone();
    let mut trace = SpsaTrace::default();
    let mut worst_residual: f64 = 0.0;
    let mut scratch = vec![0.0; m];
    let mut last_cost = f64::NAN;

    for i in 0..cfg.iters {
        let iter_stream = root.child("spsa-iter", i as u64);
        noise.refill(cdf.noise(), &iter_stream, "noise");
        let mut rng = iter_stream.rng("delta", 0);
        let (direction, _) = spsa_gradient(|b| model.evaluate(b, &noise).cost, &beta, omega, &mut rng);
        let eta = cfg.step(i);
        for ((b, g), a) in beta.iter_mut().zip(&direction).zip(probes) {
            for ((s, x), d) in scratch.iter_mut().zip(b.iter()).zip(g) {
                *s = x - eta * d;
            }
            project_into(&scratch, a, b);
        }
        let residual = max_residual(&beta, probes);
        worst_residual = worst_residual.max(residual);
        let record_now = cfg.trace_every > 0 && ((i + 1) % cfg.trace_every == 0 || i + 1 == cfg.iters);
        if record_now {
            let v = model.evaluate(&beta, &noise);
            last_cost = v.cost;
            trace.records.push(SpsaRecord {
                iter: i + 1,
                cost: v.cost,
                confusion: if cfg.lambda == 0.0 { model.confusion(&beta, &noise) } else { v.confusion },
                utility_loss: v.utility_loss,
                feasibility_residual: residual,
            });
        }
    }

    let det = DetectorConfig { alpha: cfg.alpha, ..Default::default() };
    trace.final_confusion = conditional_type1_prob(
        probes,
        &beta,
        u,
        &naive,
        cdf,
        &det,
        cfg.final_reps,
        &root.child("final-confusion", 0),
    )?;
    let values: Vec<f64> = beta.iter().map(|b| u.eval_extended(b)).collect();
    let grads: Vec<Vec<f64>> = naive.iter().map(|b| u.gradient(b)).collect::<Result<_>>()?;
    let achieved_margin = if k < 2 { f64::INFINITY } else { anchored_margin_with_values(&beta, &grads, &values) };
    let result = MaskingResult {
        perturbation: perturbation(&beta, &naive),
        utility_loss: utility_loss(u, &beta, &naive),
        achieved_margin,
        feasible: worst_residual <= 1e-8,
        diagnostics: if last_cost.is_nan() { vec![] } else { vec![last_cost] },
        masked: beta,
        naive,
    };
    Ok((result, trace))
}
