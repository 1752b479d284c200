//! Linear program behind the Afriat inequalities.
//!
//! For a shift `e >= 0` the system
//!
//! ```text
//! u_s - u_t - lambda_t (alpha_t'(beta_s - beta_t) + e) <= 0    for all s != t
//! ```
//!
//! is invariant under scaling `(u, lambda)` and shifting `u`, so `u_1 = 0`
//! and `lambda_t >= 1` lose nothing. A box on `u` would: close to the least
//! feasible shift some multipliers must grow like the inverse of the gap.
//! We add a common slack `z <= 1` to every row and maximize it; the system
//! is feasible iff the optimal slack is nonnegative.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

const SLACK_CAP: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct AfriatSolution {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Optimal common slack; the system is feasible iff this is `>= -tol`.
    pub slack: f64,
}

/// Maximal common slack of the shifted Afriat inequalities.
///
/// `cost[t][s]` is `alpha_t' beta_s`.
pub fn max_slack(cost: &[Vec<f64>], shift: f64) -> Result<AfriatSolution> {
    let k = cost.len();
    if k == 1 {
        return Ok(AfriatSolution {
            u: vec![1.0],
            lambda: vec![1.0],
            slack: SLACK_CAP,
        });
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let u: Vec<_> = (0..k)
        .map(|i| {
            let bounds = if i == 0 { (0.0, 0.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
            lp.add_var(0.0, bounds)
        })
        .collect();
    let lambda: Vec<_> = (0..k).map(|_| lp.add_var(0.0, (1.0, f64::INFINITY))).collect();
    let z = lp.add_var(1.0, (f64::NEG_INFINITY, SLACK_CAP));
    for t in 0..k {
        for s in 0..k {
            if s == t {
                continue;
            }
            let a_ts = cost[t][s] - cost[t][t] + shift;
            lp.add_constraint(
                [(u[s], 1.0), (u[t], -1.0), (lambda[t], -a_ts), (z, 1.0)],
                ComparisonOp::Le,
                0.0,
            );
        }
    }
    let outcome = lp.solve().map_err(|e| Error::Solver(e.to_string()))?;
    let sol = outcome
        .into_solution()
        .map_err(|_| Error::Solver("LP solve interrupted".into()))?;
    Ok(AfriatSolution {
        u: u.iter().map(|v| sol.var_value_raw(*v)).collect(),
        lambda: lambda.iter().map(|v| sol.var_value_raw(*v)).collect(),
        slack: sol.var_value_raw(z),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consistent_pair_has_positive_slack() {
        // alpha_1 = (1, 1), beta_1 = (1, 0); alpha_2 = (1, 1), beta_2 = (0, 0.5)
        let cost = vec![vec![1.0, 0.5], vec![1.0, 0.5]];
        let sol = max_slack(&cost, 0.0).unwrap();
        assert!(sol.slack > 0.0);
    }

    #[test]
    fn shift_restores_feasibility() {
        // alpha_1'beta_1 = 1 = alpha_1'beta_2, alpha_2'beta_1 = 0.25 < 1 = alpha_2'beta_2
        let cost = vec![vec![1.0, 1.0], vec![0.25, 1.0]];
        assert!(max_slack(&cost, 0.0).unwrap().slack < 0.0);
        assert!(max_slack(&cost, 1.0).unwrap().slack >= 0.0);
    }
}
