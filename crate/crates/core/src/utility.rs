//! Utility families: evaluation and (sub)gradients.

use serde::{Deserialize, Serialize};

use crate::dataset::dot;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityFamily {
    /// `u(b) = sum_i sqrt(b_i)`
    SqrtSum,
    /// `u(b) = sum_i b_i^2`
    QuadSum,
    /// `u(b) = min_t { u_t + lambda_t alpha_t'(b - b_t) }`
    PiecewiseAffine,
}

impl UtilityFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            UtilityFamily::SqrtSum => "sqrt_sum",
            UtilityFamily::QuadSum => "quad_sum",
            UtilityFamily::PiecewiseAffine => "piecewise_affine",
        }
    }
}

impl std::fmt::Display for UtilityFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One affine piece `level + multiplier * probe'(b - anchor)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub level: f64,
    pub multiplier: f64,
    pub probe: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl AffinePiece {
    fn value(&self, beta: &[f64]) -> f64 {
        self.level
            + self.multiplier
                * self
                    .probe
                    .iter()
                    .zip(beta.iter().zip(&self.anchor))
                    .map(|(a, (b, c))| a * (b - c))
                    .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffine {
    pieces: Vec<AffinePiece>,
}

impl PiecewiseAffine {
    /// Requires at least one piece, positive multipliers and strictly
    /// positive probes (which make the minimum monotone).
    pub fn new(pieces: Vec<AffinePiece>) -> Result<Self> {
        let Some(first) = pieces.first() else {
            return Err(Error::InvalidUtility("piecewise-affine utility has no pieces".into()));
        };
        let m = first.probe.len();
        for (t, p) in pieces.iter().enumerate() {
            if p.probe.len() != m || p.anchor.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    found: p.probe.len().max(p.anchor.len()),
                });
            }
            if !(p.multiplier > 0.0) {
                return Err(Error::InvalidUtility(format!("piece {t} has multiplier {}", p.multiplier)));
            }
            if p.probe.iter().any(|a| !(*a > 0.0)) {
                return Err(Error::InvalidUtility(format!("piece {t} has a nonpositive probe")));
            }
        }
        Ok(Self { pieces })
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].probe.len()
    }

    /// Index of the active piece, lowest index on ties.
    fn active(&self, beta: &[f64]) -> (usize, f64) {
        let mut best = (0, self.pieces[0].value(beta));
        for (t, p) in self.pieces.iter().enumerate().skip(1) {
            let v = p.value(beta);
            if v < best.1 {
                best = (t, v);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum UtilityModel {
    SqrtSum,
    QuadSum,
    PiecewiseAffine(PiecewiseAffine),
}

impl UtilityModel {
    pub fn from_family(family: UtilityFamily) -> Result<Self> {
        match family {
            UtilityFamily::SqrtSum => Ok(UtilityModel::SqrtSum),
            UtilityFamily::QuadSum => Ok(UtilityModel::QuadSum),
            UtilityFamily::PiecewiseAffine => Err(Error::InvalidUtility(
                "a piecewise-affine utility needs its pieces; reconstruct it from data".into(),
            )),
        }
    }

    pub fn family(&self) -> UtilityFamily {
        match self {
            UtilityModel::SqrtSum => UtilityFamily::SqrtSum,
            UtilityModel::QuadSum => UtilityFamily::QuadSum,
            UtilityModel::PiecewiseAffine(_) => UtilityFamily::PiecewiseAffine,
        }
    }

    fn check_dim(&self, beta: &[f64]) -> Result<()> {
        if beta.is_empty() {
            return Err(Error::Dimension { expected: 1, found: 0 });
        }
        if let UtilityModel::PiecewiseAffine(p) = self {
            if beta.len() != p.dim() {
                return Err(Error::Dimension {
                    expected: p.dim(),
                    found: beta.len(),
                });
            }
        }
        Ok(())
    }

    /// `u(beta)` for `beta >= 0`.
    pub fn eval(&self, beta: &[f64]) -> Result<f64> {
        self.check_dim(beta)?;
        if let Some(x) = beta.iter().find(|x| **x < 0.0 || x.is_nan()) {
            return Err(Error::Domain(format!("utility argument has component {x}")));
        }
        Ok(self.eval_extended(beta))
    }

    /// Evaluation on raw noisy measurements, which may have negative
    /// components. `SqrtSum` reads a negative component as zero (the real
    /// part of the square root); the other families use their formula as is.
    /// Dimensions are not checked.
    pub fn eval_extended(&self, beta: &[f64]) -> f64 {
        match self {
            UtilityModel::SqrtSum => beta.iter().map(|x| x.max(0.0).sqrt()).sum(),
            UtilityModel::QuadSum => beta.iter().map(|x| x * x).sum(),
            UtilityModel::PiecewiseAffine(p) => p.active(beta).1,
        }
    }

    /// Gradient, or the gradient of the active piece for `PiecewiseAffine`.
    pub fn gradient(&self, beta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(beta)?;
        match self {
            UtilityModel::SqrtSum => beta
                .iter()
                .map(|&x| {
                    if x > 0.0 {
                        Ok(0.5 / x.sqrt())
                    } else {
                        Err(Error::Domain(format!(
                            "sqrt-sum gradient is singular at component {x}"
                        )))
                    }
                })
                .collect(),
            UtilityModel::QuadSum => Ok(beta.iter().map(|x| 2.0 * x).collect()),
            UtilityModel::PiecewiseAffine(p) => {
                let piece = &p.pieces[p.active(beta).0];
                Ok(piece.probe.iter().map(|a| piece.multiplier * a).collect())
            }
        }
    }

    /// Gradient with sqrt-sum components floored at `floor`; used inside
    /// optimizers that may touch the boundary of the orthant.
    pub(crate) fn gradient_floored(&self, beta: &[f64], floor: f64, out: &mut [f64]) {
        match self {
            UtilityModel::SqrtSum => {
                for (o, &x) in out.iter_mut().zip(beta) {
                    *o = 0.5 / x.max(floor).sqrt();
                }
            }
            UtilityModel::QuadSum => {
                for (o, &x) in out.iter_mut().zip(beta) {
                    *o = 2.0 * x;
                }
            }
            UtilityModel::PiecewiseAffine(p) => {
                let piece = &p.pieces[p.active(beta).0];
                for (o, a) in out.iter_mut().zip(&piece.probe) {
                    *o = piece.multiplier * a;
                }
            }
        }
    }

    /// Multiplier `lambda` with `grad u(beta*) ~ lambda alpha`, in the
    /// least-squares sense `alpha' grad / |alpha|^2`.
    pub fn kkt_multiplier(&self, naive: &[f64], alpha: &[f64]) -> Result<f64> {
        let g = self.gradient(naive)?;
        Ok(dot(alpha, &g) / dot(alpha, alpha))
    }
}
