//! Deterministic revealed preference: GARP, the Afriat inequalities, the
//! piecewise-affine reconstruction and the gradient pass-margin of a
//! utility.

use serde::{Deserialize, Serialize};

use crate::dataset::{dot, ProbeResponseDataset};
use crate::error::{Error, Result};
use crate::lp;
use crate::utility::{AffinePiece, PiecewiseAffine, UtilityModel};

/// Slack tolerance shared by the GARP edges and the LP.
pub const TOL: f64 = 1e-9;

/// Feasible `{u_t, lambda_t}` for the Afriat inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfriatCertificate {
    pub u_vals: Vec<f64>,
    pub lambda_vals: Vec<f64>,
    /// `min_{s != t} -(u_s - u_t - lambda_t alpha_t'(beta_s - beta_t))`,
    /// zero when `K = 1`.
    pub slack: f64,
}

/// Standard GARP via Warshall's transitive closure of weak revealed
/// preference.
pub fn check_garp(d: &ProbeResponseDataset) -> bool {
    cyclically_consistent(&d.cost_matrix(), 0.0)
}

/// Whether `u_s - u_t <= lambda_t (alpha_t'(beta_s - beta_t) + shift)`,
/// `s != t`, has a solution with `lambda > 0`.
///
/// With `a_ts = cost[t][s] - cost[t][t] + shift` off the diagonal and 0 on
/// it, the system is solvable iff no cycle of edges `a_ts <= 0` contains a
/// strict `a_ts < 0`. At `shift = 0` this is GARP.
pub(crate) fn cyclically_consistent(cost: &[Vec<f64>], shift: f64) -> bool {
    let k = cost.len();
    let a = |t: usize, s: usize| if s == t { 0.0 } else { cost[t][s] - cost[t][t] + shift };
    // reach[t][s]: beta_t is (indirectly) weakly revealed preferred to beta_s
    let mut reach: Vec<Vec<bool>> = (0..k).map(|t| (0..k).map(|s| a(t, s) <= TOL).collect()).collect();
    for via in 0..k {
        for t in 0..k {
            if !reach[t][via] {
                continue;
            }
            for s in 0..k {
                if reach[via][s] {
                    reach[t][s] = true;
                }
            }
        }
    }
    for t in 0..k {
        for s in 0..k {
            if reach[t][s] && a(s, t) < -TOL {
                return false;
            }
        }
    }
    true
}

/// Solves the Afriat inequalities; `None` when they are infeasible.
pub fn afriat_feasible(d: &ProbeResponseDataset, tol: f64) -> Result<Option<AfriatCertificate>> {
    let cost = d.cost_matrix();
    let sol = lp::max_slack(&cost, 0.0)?;
    if sol.slack < -tol {
        return Ok(None);
    }
    // translate so that every u_t is positive; the inequalities only see differences
    let lowest = sol.u.iter().cloned().fold(f64::INFINITY, f64::min);
    let u_vals: Vec<f64> = sol.u.iter().map(|u| u - lowest + 1.0).collect();
    let slack = certificate_slack(&cost, &u_vals, &sol.lambda);
    Ok(Some(AfriatCertificate {
        u_vals,
        lambda_vals: sol.lambda,
        slack,
    }))
}

fn certificate_slack(cost: &[Vec<f64>], u: &[f64], lambda: &[f64]) -> f64 {
    let k = u.len();
    let mut slack = if k == 1 { 0.0 } else { f64::INFINITY };
    for t in 0..k {
        for s in 0..k {
            if s != t {
                let v = u[s] - u[t] - lambda[t] * (cost[t][s] - cost[t][t]);
                slack = slack.min(-v);
            }
        }
    }
    slack
}

/// `u(beta) = min_t { u_t + lambda_t alpha_t'(beta - beta_t) }`.
pub fn reconstruct_utility(cert: &AfriatCertificate, d: &ProbeResponseDataset) -> Result<UtilityModel> {
    let k = d.len();
    if cert.u_vals.len() != k || cert.lambda_vals.len() != k {
        return Err(Error::Dimension {
            expected: k,
            found: cert.u_vals.len().min(cert.lambda_vals.len()),
        });
    }
    let pieces = (0..k)
        .map(|t| AffinePiece {
            level: cert.u_vals[t],
            multiplier: cert.lambda_vals[t],
            probe: d.probes()[t].clone(),
            anchor: d.responses()[t].clone(),
        })
        .collect();
    Ok(UtilityModel::PiecewiseAffine(PiecewiseAffine::new(pieces)?))
}

/// Pass-margin `min_{s != t} [u(b_t) + g_t'(b_s - b_t) - u(b_s)]` where the
/// gradients `g_t` are supplied by the caller.
pub fn anchored_margin(responses: &[Vec<f64>], anchors: &[Vec<f64>], u: &UtilityModel) -> Result<f64> {
    let values: Vec<f64> = responses.iter().map(|b| u.eval(b)).collect::<Result<_>>()?;
    Ok(anchored_margin_with_values(responses, anchors, &values))
}

pub(crate) fn anchored_margin_with_values(responses: &[Vec<f64>], anchors: &[Vec<f64>], values: &[f64]) -> f64 {
    let k = responses.len();
    let mut margin = f64::INFINITY;
    for t in 0..k {
        let gt_bt = dot(&anchors[t], &responses[t]);
        for s in 0..k {
            if s != t {
                let term = values[t] + dot(&anchors[t], &responses[s]) - gt_bt - values[s];
                margin = margin.min(term);
            }
        }
    }
    margin
}

/// Margin by which `u` passes the gradient-form Afriat inequalities on `d`.
///
/// `K = 1` has no pairs and yields `+inf`.
pub fn afriat_margin(d: &ProbeResponseDataset, u: &UtilityModel) -> Result<f64> {
    let grads: Vec<Vec<f64>> = d.responses().iter().map(|b| u.gradient(b)).collect::<Result<_>>()?;
    anchored_margin(d.responses(), &grads, u)
}
