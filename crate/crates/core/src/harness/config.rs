//! Experiment configuration.
//!
//! A config file is a JSON object; any field it omits takes the value of
//! the preset named by its `experiment` field.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::NoiseModel;
use crate::error::{Error, Result};
use crate::masking::{DetMaskConfig, SpsaConfig};
use crate::rng::SeedStream;
use crate::utility::UtilityFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Ex1,
    Ex2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub k: usize,
    pub m: usize,
    /// Probe components are drawn from `Uniform(probe_low, probe_high)`.
    pub probe_low: f64,
    pub probe_high: f64,
    pub utilities: Vec<UtilityFamily>,
    /// Example 1 grid as fractions of `epsilon_max`.
    pub epsilon_fractions: Vec<f64>,
    /// Example 2 grid.
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Per-component variance of the measurement noise.
    pub noise_variance: f64,
    pub n_cdf: usize,
    pub spsa: SpsaConfig,
    pub det: DetMaskConfig,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Perturbation versus margin bound, two utilities.
    pub fn example1() -> Self {
        Self {
            experiment: ExperimentId::Ex1,
            k: 50,
            m: 2,
            probe_low: 0.2,
            probe_high: 2.5,
            utilities: vec![UtilityFamily::SqrtSum, UtilityFamily::QuadSum],
            epsilon_fractions: (0..=10).map(|j| f64::from(j) / 10.0).collect(),
            lambdas: vec![1e0, 1e1, 1e2, 1e3, 1e4, 1e5],
            alphas: vec![0.05, 0.1, 0.2],
            noise_variance: 0.2,
            n_cdf: 100_000,
            spsa: SpsaConfig { trace_every: 0, ..Default::default() },
            det: DetMaskConfig::default(),
            seed: 0,
            output: None,
        }
    }

    /// Confusion versus weight and significance.
    pub fn example2() -> Self {
        Self {
            experiment: ExperimentId::Ex2,
            k: 20,
            m: 3,
            probe_low: 1.0,
            probe_high: 4.0,
            utilities: vec![UtilityFamily::SqrtSum],
            ..Self::example1()
        }
    }

    pub fn preset(id: ExperimentId) -> Self {
        match id {
            ExperimentId::Ex1 => Self::example1(),
            ExperimentId::Ex2 => Self::example2(),
        }
    }

    /// Parses a (possibly partial) config; missing fields come from the
    /// preset of its `experiment` (default `ex1`).
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(given) = value else {
            return Err(Error::InvalidConfig("config must be a JSON object".into()));
        };
        let id = match given.get("experiment") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => ExperimentId::Ex1,
        };
        let mut merged = serde_json::to_value(Self::preset(id))?;
        let target = merged.as_object_mut().expect("config serializes to an object");
        for (key, v) in given {
            match (target.get_mut(&key), v) {
                (Some(serde_json::Value::Object(inner)), serde_json::Value::Object(over)) => inner.extend(over),
                (_, v) => {
                    target.insert(key, v);
                }
            }
        }
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            context: "cannot read config",
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 || self.m == 0 {
            return bad(format!("K = {} and m = {} must be >= 1", self.k, self.m));
        }
        if !(self.probe_low > 0.0 && self.probe_low < self.probe_high && self.probe_high.is_finite()) {
            return bad(format!("probe bounds need 0 < low < high, got [{}, {}]", self.probe_low, self.probe_high));
        }
        if self.utilities.is_empty() {
            return bad("utility list is empty".into());
        }
        if self.utilities.contains(&UtilityFamily::PiecewiseAffine) {
            return bad("piecewise_affine cannot be configured by name".into());
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return bad(format!("noise variance {}", self.noise_variance));
        }
        match self.experiment {
            ExperimentId::Ex1 => {
                if self.k < 2 {
                    return bad("example 1 needs K >= 2".into());
                }
                if self.epsilon_fractions.is_empty() || self.epsilon_fractions.iter().any(|f| !f.is_finite()) {
                    return bad("epsilon grid must be nonempty and finite".into());
                }
                self.det.validate()
            }
            ExperimentId::Ex2 => {
                if self.lambdas.is_empty() || self.alphas.is_empty() {
                    return bad("lambda and alpha grids must be nonempty".into());
                }
                if self.lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
                    return bad("lambdas must be finite and >= 0".into());
                }
                if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
                    return bad("alphas must lie in (0, 1)".into());
                }
                if self.n_cdf < 1000 {
                    return bad(format!("n_cdf = {} < 1000", self.n_cdf));
                }
                self.spsa.validate()
            }
        }
    }

    pub fn noise(&self) -> NoiseModel {
        if self.noise_variance == 0.0 {
            NoiseModel::Degenerate
        } else {
            NoiseModel::GaussianDiag { sigma2: self.noise_variance }
        }
    }

    /// `K` probes with iid uniform components.
    pub fn draw_probes(&self, stream: &SeedStream) -> Vec<Vec<f64>> {
        let mut rng = stream.rng("probes", 0);
        (0..self.k)
            .map(|_| (0..self.m).map(|_| rng.gen_range(self.probe_low..self.probe_high)).collect())
            .collect()
    }
}
