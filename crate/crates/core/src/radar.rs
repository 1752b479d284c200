//! Linear-Gaussian radar abstraction.
//!
//! A probe `alpha` is the spectrum of the state-noise covariance `Q` and a
//! response `beta` the spectrum of the inverse observation-noise covariance
//! `R^{-1}`, both in the standard basis. The Kalman and Riccati machinery
//! measures tracking quality; the budget `alpha'beta <= 1` drives the
//! response choice in [`naive_response`].

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::validate_probes;
use crate::error::{Error, Result};
use crate::utility::UtilityModel;

pub const ARE_TOL: f64 = 1e-10;
pub const ARE_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Prior {
    pub fn zero(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::zeros(dim, dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadarSystem {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub prior: Prior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub x_hat: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

impl KalmanState {
    pub fn from_prior(prior: &Prior) -> Self {
        Self {
            x_hat: prior.mean.clone(),
            sigma: prior.cov.clone(),
            n: 0,
        }
    }
}

/// Block-diagonal constant-velocity dynamics (`[[1, T], [0, 1]]` per
/// position/velocity pair) with a trailing random-walk state when `dim` is
/// odd.
pub fn constant_velocity(dim: usize, period: f64) -> DMatrix<f64> {
    let mut a = DMatrix::identity(dim, dim);
    for block in 0..dim / 2 {
        a[(2 * block, 2 * block + 1)] = period;
    }
    a
}

/// `Q = diag(alpha)`, `R = diag(1 / beta)`.
pub fn build_system(
    alpha: &[f64],
    beta: &[f64],
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    prior: Prior,
) -> Result<RadarSystem> {
    if let Some(x) = alpha.iter().chain(beta).find(|x| !(**x > 0.0)) {
        return Err(Error::Domain(format!("probe/response component {x} must be positive")));
    }
    let x = alpha.len();
    let y = beta.len();
    if a.shape() != (x, x) {
        return Err(Error::Dimension { expected: x, found: a.nrows() });
    }
    if c.shape() != (y, x) {
        return Err(Error::Dimension { expected: y, found: c.nrows() });
    }
    if prior.mean.len() != x || prior.cov.shape() != (x, x) {
        return Err(Error::Dimension { expected: x, found: prior.mean.len() });
    }
    Ok(RadarSystem {
        a,
        c,
        q: DMatrix::from_diagonal(&DVector::from_column_slice(alpha)),
        r: DMatrix::from_diagonal(&DVector::from_iterator(y, beta.iter().map(|b| 1.0 / b))),
        prior,
    })
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn inverse(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.try_inverse()
        .ok_or_else(|| Error::Domain(format!("{what} is singular")))
}

/// One predict/update cycle of the Kalman filter.
pub fn kalman_step(sys: &RadarSystem, st: &KalmanState, y: &DVector<f64>) -> Result<KalmanState> {
    if y.len() != sys.c.nrows() {
        return Err(Error::Dimension { expected: sys.c.nrows(), found: y.len() });
    }
    let predicted = &sys.a * &st.sigma * sys.a.transpose() + &sys.q;
    let innovation_cov = &sys.c * &predicted * sys.c.transpose() + &sys.r;
    let gain = &predicted * sys.c.transpose() * inverse(innovation_cov, "innovation covariance")?;
    let x_pred = &sys.a * &st.x_hat;
    let x_hat = &x_pred + &gain * (y - &sys.c * &x_pred);
    let eye = DMatrix::identity(predicted.nrows(), predicted.ncols());
    let sigma = symmetrize(&((eye - &gain * &sys.c) * predicted));
    Ok(KalmanState { x_hat, sigma, n: st.n + 1 })
}

/// One application of the Riccati map to a predicted covariance.
pub fn riccati_map(sys: &RadarSystem, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ct = sys.c.transpose();
    let s = &sys.c * sigma * &ct + &sys.r;
    let correction = sigma * &ct * inverse(s, "innovation covariance")? * &sys.c * sigma;
    Ok(symmetrize(&(&sys.a * (sigma - correction) * sys.a.transpose() + &sys.q)))
}

/// `-S + A(S - S C'[C S C' + R]^{-1} C S)A' + Q`.
pub fn are_residual(sys: &RadarSystem, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(riccati_map(sys, sigma)? - sigma)
}

/// Largest absolute entry; infinite if any entry is not finite.
fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter()
        .fold(0.0, |acc, x| if x.is_finite() { acc.max(x.abs()) } else { f64::INFINITY })
}

/// Steady-state predicted covariance by fixed-point iteration from `Q`.
pub fn solve_are(sys: &RadarSystem, tol: f64, max_iter: usize) -> Result<DMatrix<f64>> {
    let mut sigma = sys.q.clone();
    let mut residual = f64::INFINITY;
    for i in 1..=max_iter {
        let next = riccati_map(sys, &sigma)?;
        residual = max_abs(&(&next - &sigma));
        sigma = next;
        if !residual.is_finite() {
            return Err(Error::NonConvergence { iterations: i, residual });
        }
        if residual <= tol {
            // report the residual of the returned matrix, not of its predecessor
            let r = max_abs(&are_residual(sys, &sigma)?);
            if r <= tol {
                return Ok(sigma);
            }
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual })
}

/// Utility-maximizing response on the budget `alpha'beta <= 1`.
///
/// `SqrtSum` uses the KKT closed form, `QuadSum` (convex) the best budget
/// vertex, and `PiecewiseAffine` an exact LP over the budget hyperplane.
pub fn naive_response(u: &UtilityModel, alpha: &[f64]) -> Result<Vec<f64>> {
    validate_probes(std::slice::from_ref(&alpha.to_vec()))?;
    match u {
        UtilityModel::SqrtSum => {
            let inv_sum: f64 = alpha.iter().map(|a| 1.0 / a).sum();
            Ok(alpha.iter().map(|a| 1.0 / (a * a) / inv_sum).collect())
        }
        UtilityModel::QuadSum => {
            let mut best = 0;
            for (i, a) in alpha.iter().enumerate() {
                if *a < alpha[best] {
                    best = i;
                }
            }
            let mut beta = vec![0.0; alpha.len()];
            beta[best] = 1.0 / alpha[best];
            Ok(beta)
        }
        UtilityModel::PiecewiseAffine(p) => {
            if p.dim() != alpha.len() {
                return Err(Error::Dimension { expected: p.dim(), found: alpha.len() });
            }
            let mut lp = Problem::new(OptimizationDirection::Maximize);
            let beta: Vec<_> = alpha.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
            let z = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
            let budget: Vec<_> = beta.iter().zip(alpha).map(|(v, a)| (*v, *a)).collect();
            lp.add_constraint(&budget[..], ComparisonOp::Eq, 1.0);
            for piece in p.pieces() {
                // z - mult * probe'beta <= level - mult * probe'anchor
                let mut row = vec![(z, 1.0)];
                row.extend(beta.iter().zip(&piece.probe).map(|(v, a)| (*v, -piece.multiplier * a)));
                let offset: f64 = piece.probe.iter().zip(&piece.anchor).map(|(a, b)| a * b).sum();
                lp.add_constraint(&row[..], ComparisonOp::Le, piece.level - piece.multiplier * offset);
            }
            let sol = lp
                .solve()
                .map_err(|e| Error::Solver(e.to_string()))?
                .into_solution()
                .map_err(|_| Error::Solver("LP solve interrupted".into()))?;
            let raw: Vec<f64> = beta.iter().map(|v| sol.var_value_raw(*v).max(0.0)).collect();
            // restore exact budget tightness
            let spend: f64 = raw.iter().zip(alpha).map(|(b, a)| a * b).sum();
            Ok(raw.iter().map(|b| b / spend).collect())
        }
    }
}

/// JSON description of a radar system, matrices as row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub prior_mean: Option<Vec<f64>>,
    #[serde(default)]
    pub prior_cov: Option<Vec<Vec<f64>>>,
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig("empty matrix".into()));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::Dimension { expected: m, found: bad.len() });
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.iter().flatten().cloned()))
}

impl SystemSpec {
    pub fn build(&self) -> Result<RadarSystem> {
        let a = matrix_from_rows(&self.a)?;
        let c = matrix_from_rows(&self.c)?;
        let x = a.nrows();
        let prior = Prior {
            mean: match &self.prior_mean {
                Some(v) => DVector::from_column_slice(v),
                None => DVector::zeros(x),
            },
            cov: match &self.prior_cov {
                Some(rows) => matrix_from_rows(rows)?,
                None => DMatrix::zeros(x, x),
            },
        };
        build_system(&self.alpha, &self.beta, a, c, prior)
    }
}

/// Matrix as CSV rows, no header.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
