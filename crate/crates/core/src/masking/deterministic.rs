//! Minimum-perturbation masking against a deterministic Afriat test.
//!
//! The radar keeps every response on its budget hyperplane and moves it as
//! little as possible (in squared distance) until the pass-margin
//!
//! ```text
//! min_{s != t} u(b_t) + g_t'(b_s - b_t) - u(b_s),    g_t = grad u(naive_t)
//! ```
//!
//! drops to `epsilon`. Each pair term involves only `b_t` and `b_s`, so the
//! constraint is a union over ordered pairs and the optimum moves exactly
//! one pair. Every pair subproblem is solved by penalized projected
//! gradient; random restarts are spent on the most promising pairs.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::projection::{budget_residual, project_into};
use super::{naive_sequence, perturbation, utility_loss, MaskingResult};
use crate::dataset::dot;
use crate::error::{Error, Result};
use crate::revealed::anchored_margin_with_values;
use crate::rng::SeedStream;
use crate::utility::UtilityModel;

const RHO_START: f64 = 1.0;
const RHO_TARGET: f64 = 1e6;
const RHO_LIMIT: f64 = 1e10;
const GRAD_FLOOR: f64 = 1e-10;
/// The pair optimizer aims this far below `epsilon`.
const TARGET_GAP: f64 = 1e-7;
const STATIONARY: f64 = 1e-10;
/// Pairs solved between bound updates.
const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetMaskConfig {
    pub epsilon: f64,
    /// Naive start plus `starts - 1` random budget points.
    pub starts: usize,
    /// Initial projected-gradient step.
    pub step: f64,
    /// Inner iteration budget per start.
    pub iters: usize,
    /// Feasibility tolerance on the achieved margin.
    pub tol: f64,
    /// Pairs that receive the random restarts.
    pub screen: usize,
    pub seed: u64,
}

impl Default for DetMaskConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            starts: 5,
            step: 1.0,
            iters: 10_000,
            tol: 1e-6,
            screen: 16,
            seed: 0,
        }
    }
}

impl DetMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!("epsilon = {}", self.epsilon)));
        }
        if self.starts == 0 || self.iters == 0 || self.screen == 0 {
            return Err(Error::InvalidConfig("starts, iters and screen must be >= 1".into()));
        }
        if !(self.step > 0.0) || !(self.tol >= 0.0) {
            return Err(Error::InvalidConfig("step must be positive and tol nonnegative".into()));
        }
        Ok(())
    }
}

/// Pass-margin of the naive responses: the smallest `epsilon` that needs no
/// perturbation.
pub fn epsilon_max(probes: &[Vec<f64>], u: &UtilityModel) -> Result<f64> {
    if probes.len() < 2 {
        return Err(Error::InvalidDataset("pass-margin needs at least two epochs".into()));
    }
    let naive = naive_sequence(u, probes)?;
    let anchors = anchors(u, &naive)?;
    let values: Vec<f64> = naive.iter().map(|b| u.eval(b)).collect::<Result<_>>()?;
    Ok(anchored_margin_with_values(&naive, &anchors, &values))
}

fn anchors(u: &UtilityModel, naive: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    naive.iter().map(|b| u.gradient(b)).collect()
}

pub fn mask_deterministic(probes: &[Vec<f64>], u: &UtilityModel, cfg: &DetMaskConfig) -> Result<MaskingResult> {
    mask_deterministic_from(probes, u, cfg, None)
}

/// As [`mask_deterministic`], with an extra candidate sequence (typically
/// the solution for a smaller `epsilon`) that competes with the search.
pub fn mask_deterministic_from(
    probes: &[Vec<f64>],
    u: &UtilityModel,
    cfg: &DetMaskConfig,
    incumbent: Option<&[Vec<f64>]>,
) -> Result<MaskingResult> {
    cfg.validate()?;
    let naive = naive_sequence(u, probes)?;
    let k = probes.len();
    if k < 2 {
        return Err(Error::InvalidDataset("masking needs at least two epochs".into()));
    }
    let grads = anchors(u, &naive)?;
    let values: Vec<f64> = naive.iter().map(|b| u.eval_extended(b)).collect();
    let eps_max = anchored_margin_with_values(&naive, &grads, &values);

    if cfg.epsilon >= eps_max {
        return Ok(MaskingResult {
            masked: naive.clone(),
            naive,
            perturbation: 0.0,
            utility_loss: 0.0,
            achieved_margin: eps_max,
            feasible: true,
            diagnostics: vec![0.0; cfg.starts],
        });
    }

    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|t| (0..k).filter(move |&s| s != t).map(move |s| (t, s)))
        .collect();
    let problem = |t: usize, s: usize| PairProblem {
        u,
        alpha_t: &probes[t],
        alpha_s: &probes[s],
        naive_t: &naive[t],
        naive_s: &naive[s],
        g: &grads[t],
        target: cfg.epsilon - TARGET_GAP,
    };

    let accept = cfg.epsilon + cfg.tol;
    // An admissible incumbent bounds the search from the start.
    let mut bound = match incumbent.and_then(|inc| admissible(inc, probes, &grads, u).map(|mg| (inc, mg))) {
        Some((inc, mg)) if mg <= accept => perturbation(inc, &naive),
        _ => f64::INFINITY,
    };

    // most promising pairs (smallest naive term) first, so the bound tightens early
    let naive_term = |t: usize, s: usize| values[t] + dot(&grads[t], &naive[s]) - dot(&grads[t], &naive[t]) - values[s];
    let mut by_term: Vec<usize> = (0..pairs.len()).collect();
    by_term.sort_by(|&a, &b| {
        let (ta, tb) = (naive_term(pairs[a].0, pairs[a].1), naive_term(pairs[b].0, pairs[b].1));
        ta.total_cmp(&tb).then(a.cmp(&b))
    });

    let mut first: Vec<Option<PairOutcome>> = vec![None; pairs.len()];
    for chunk in by_term.chunks(CHUNK) {
        let outs: Vec<PairOutcome> = chunk
            .par_iter()
            .map(|&pi| {
                let (t, s) = pairs[pi];
                problem(t, s).solve(naive[t].clone(), naive[s].clone(), cfg, bound)
            })
            .collect();
        for (&pi, o) in chunk.iter().zip(outs) {
            if o.term <= accept {
                bound = bound.min(o.objective);
            }
            first[pi] = Some(o);
        }
    }
    let first: Vec<PairOutcome> = first.into_iter().map(|o| o.expect("every pair visited")).collect();

    let key = |o: &PairOutcome| if o.term <= accept { (0, o.objective) } else { (1, o.term) };
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| {
        let (ka, kb) = (key(&first[a]), key(&first[b]));
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.cmp(&b))
    });
    let screened: Vec<usize> = order.iter().take(cfg.screen).cloned().collect();

    let root = SeedStream::new(cfg.seed);
    let mut restarts: Vec<Vec<PairOutcome>> = Vec::with_capacity(cfg.starts.saturating_sub(1));
    for start in 1..cfg.starts {
        let stream = root.child("det-start", start as u64);
        let outs: Vec<PairOutcome> = screened
            .par_iter()
            .map(|&pi| {
                let (t, s) = pairs[pi];
                let mut rng = stream.rng("pair", pi as u64);
                let x = random_budget_point(&probes[t], &mut rng);
                let y = random_budget_point(&probes[s], &mut rng);
                problem(t, s).solve(x, y, cfg, bound)
            })
            .collect();
        for o in &outs {
            if o.term <= accept {
                bound = bound.min(o.objective);
            }
        }
        restarts.push(outs);
    }

    // candidates in a fixed order: start, then pair
    let mut candidates: Vec<(usize, (usize, usize), &PairOutcome)> =
        first.iter().enumerate().map(|(pi, o)| (0, pairs[pi], o)).collect();
    for (j, outs) in restarts.iter().enumerate() {
        candidates.extend(outs.iter().zip(&screened).map(|(o, &pi)| (j + 1, pairs[pi], o)));
    }

    let mut diagnostics = vec![f64::INFINITY; cfg.starts];
    for (start, _, o) in &candidates {
        if o.term <= accept {
            diagnostics[*start] = diagnostics[*start].min(o.objective);
        }
    }

    let sequence_for = |(t, s): (usize, usize), o: &PairOutcome| {
        let mut seq = naive.clone();
        seq[t] = o.x.clone();
        seq[s] = o.y.clone();
        seq
    };

    let best_feasible = candidates
        .iter()
        .filter(|(_, _, o)| o.term <= accept)
        .min_by(|a, b| a.2.objective.total_cmp(&b.2.objective));
    let mut masked = match best_feasible {
        Some((_, pair, o)) => sequence_for(*pair, o),
        None => {
            let (_, pair, o) = candidates
                .iter()
                .min_by(|a, b| a.2.term.total_cmp(&b.2.term))
                .expect("at least one pair");
            sequence_for(*pair, o)
        }
    };

    if let Some(inc) = incumbent {
        if let Some(margin) = admissible(inc, probes, &grads, u) {
            let better = perturbation(inc, &naive) < perturbation(&masked, &naive);
            let current = margin_of(&masked, &grads, u);
            if margin <= accept && (better || current > accept) {
                masked = inc.to_vec();
            }
        }
    }

    let achieved_margin = margin_of(&masked, &grads, u);
    Ok(MaskingResult {
        perturbation: perturbation(&masked, &naive),
        utility_loss: utility_loss(u, &masked, &naive),
        achieved_margin,
        feasible: achieved_margin <= accept,
        masked,
        naive,
        diagnostics,
    })
}

fn margin_of(seq: &[Vec<f64>], grads: &[Vec<f64>], u: &UtilityModel) -> f64 {
    let values: Vec<f64> = seq.iter().map(|b| u.eval_extended(b)).collect();
    anchored_margin_with_values(seq, grads, &values)
}

/// Margin of a supplied sequence if it is a valid budget-feasible candidate.
fn admissible(seq: &[Vec<f64>], probes: &[Vec<f64>], grads: &[Vec<f64>], u: &UtilityModel) -> Option<f64> {
    if seq.len() != probes.len() {
        return None;
    }
    for (b, a) in seq.iter().zip(probes) {
        if b.len() != a.len() || budget_residual(b, a) > 1e-8 {
            return None;
        }
    }
    Some(margin_of(seq, grads, u))
}

/// Uniform point on the budget simplex `{b >= 0, alpha'b = 1}`.
fn random_budget_point<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = alpha.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    e.iter().zip(alpha).map(|(x, a)| x / (total * a)).collect()
}

#[derive(Debug, Clone)]
struct PairOutcome {
    x: Vec<f64>,
    y: Vec<f64>,
    objective: f64,
    term: f64,
}

/// Moves `b_t` (here `x`) and `b_s` (`y`) on their budget sets so that
/// `u(x) + g'(y - x) - u(y) <= target`.
struct PairProblem<'a> {
    u: &'a UtilityModel,
    alpha_t: &'a [f64],
    alpha_s: &'a [f64],
    naive_t: &'a [f64],
    naive_s: &'a [f64],
    g: &'a [f64],
    target: f64,
}

impl PairProblem<'_> {
    fn term(&self, x: &[f64], y: &[f64]) -> f64 {
        self.u.eval_extended(x) - self.u.eval_extended(y) + dot(self.g, y) - dot(self.g, x)
    }

    fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let dx: f64 = x.iter().zip(self.naive_t).map(|(a, b)| (a - b) * (a - b)).sum();
        let dy: f64 = y.iter().zip(self.naive_s).map(|(a, b)| (a - b) * (a - b)).sum();
        dx + dy
    }

    fn penalized(&self, x: &[f64], y: &[f64], rho: f64) -> f64 {
        let v = (self.term(x, y) - self.target).max(0.0);
        self.distance(x, y) + rho * v * v
    }

    fn gradient(&self, x: &[f64], y: &[f64], rho: f64, gx: &mut [f64], gy: &mut [f64]) {
        let v = (self.term(x, y) - self.target).max(0.0);
        let w = 2.0 * rho * v;
        self.u.gradient_floored(x, GRAD_FLOOR, gx);
        self.u.gradient_floored(y, GRAD_FLOOR, gy);
        for i in 0..x.len() {
            gx[i] = 2.0 * (x[i] - self.naive_t[i]) + w * (gx[i] - self.g[i]);
        }
        for i in 0..y.len() {
            gy[i] = 2.0 * (y[i] - self.naive_s[i]) + w * (self.g[i] - gy[i]);
        }
    }

    /// Projected gradient at fixed `rho` with Barzilai-Borwein trial steps
    /// and backtracking; returns the number of iterations used.
    fn descend(&self, x: &mut Vec<f64>, y: &mut Vec<f64>, rho: f64, step: &mut f64, max_iter: usize, buf: &mut Buffers) -> usize {
        let m = x.len();
        let mut f = self.penalized(x, y, rho);
        let mut used = 0;
        let mut have_prev = false;
        while used < max_iter {
            used += 1;
            self.gradient(x, y, rho, &mut buf.gx, &mut buf.gy);
            if have_prev {
                // s = z - z_prev, r = g - g_prev
                let (mut ss, mut sr) = (0.0, 0.0);
                for i in 0..m {
                    let (sx, sy) = (x[i] - buf.px[i], y[i] - buf.py[i]);
                    ss += sx * sx + sy * sy;
                    sr += sx * (buf.gx[i] - buf.hx[i]) + sy * (buf.gy[i] - buf.hy[i]);
                }
                *step = if sr > 0.0 { (ss / sr).clamp(1e-14, 1e6) } else { 1.0 };
            }
            // a trial move longer than the budget sets is pointless
            let gnorm = buf.gx.iter().chain(&buf.gy).map(|g| g * g).sum::<f64>().sqrt();
            if gnorm > 0.0 {
                *step = step.min(buf.diameter / gnorm);
            }
            let mut accepted = false;
            let mut moved = 0.0;
            while *step > 1e-18 {
                for i in 0..m {
                    buf.tx[i] = x[i] - *step * buf.gx[i];
                    buf.ty[i] = y[i] - *step * buf.gy[i];
                }
                project_into(&buf.tx, self.alpha_t, &mut buf.px);
                project_into(&buf.ty, self.alpha_s, &mut buf.py);
                let mut lin = 0.0;
                moved = 0.0;
                for i in 0..m {
                    let (dx, dy) = (buf.px[i] - x[i], buf.py[i] - y[i]);
                    lin += buf.gx[i] * dx + buf.gy[i] * dy;
                    moved += dx * dx + dy * dy;
                }
                let fp = self.penalized(&buf.px, &buf.py, rho);
                if fp <= f + 1e-4 * lin {
                    f = fp;
                    accepted = true;
                    break;
                }
                *step *= 0.5;
            }
            if !accepted {
                break;
            }
            // keep the old point and gradient for the next spectral step
            std::mem::swap(x, &mut buf.px);
            std::mem::swap(y, &mut buf.py);
            std::mem::swap(&mut buf.gx, &mut buf.hx);
            std::mem::swap(&mut buf.gy, &mut buf.hy);
            have_prev = true;
            // stationary when the gradient mapping vanishes
            if moved.sqrt() <= STATIONARY * *step {
                break;
            }
        }
        used
    }

    /// Searches along budget-tangent directions for a lower penalized value.
    /// Needed because the naive response is a stationary point of
    /// `u(x) - g'x`, so gradient steps never leave it.
    fn escape(&self, x: &mut Vec<f64>, y: &mut Vec<f64>, rho: f64, buf: &mut Buffers) -> bool {
        let f0 = self.penalized(x, y, rho);
        let mut best = f0;
        let mut found: Option<(bool, Vec<f64>)> = None;
        for (first, point, basis, alpha) in [(true, &*x, &buf.basis_t, self.alpha_t), (false, &*y, &buf.basis_s, self.alpha_s)] {
            let scale = point.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
            for d in basis {
                for sign in [1.0, -1.0] {
                    let mut tau = 1e-5 * scale;
                    let mut prev = f0;
                    while tau <= 4.0 * scale {
                        for ((t, p), e) in buf.tx.iter_mut().zip(point.iter()).zip(d) {
                            *t = p + sign * tau * e;
                        }
                        project_into(&buf.tx, alpha, &mut buf.px);
                        let fc = if first { self.penalized(&buf.px, y, rho) } else { self.penalized(x, &buf.px, rho) };
                        if fc < best {
                            best = fc;
                            found = Some((first, buf.px.clone()));
                        }
                        if fc > prev && prev < f0 {
                            break;
                        }
                        prev = fc;
                        tau *= 2.0;
                    }
                }
            }
        }
        match found {
            Some((first, cand)) if best < f0 - 1e-15 * f0.abs() => {
                if first {
                    *x = cand;
                } else {
                    *y = cand;
                }
                true
            }
            _ => false,
        }
    }

    /// Gives up (objective `+inf`) once the penalized value, which
    /// underestimates the constrained optimum, reaches `bound`.
    fn solve(&self, mut x: Vec<f64>, mut y: Vec<f64>, cfg: &DetMaskConfig, bound: f64) -> PairOutcome {
        let m = x.len();
        let levels = ((RHO_TARGET / RHO_START).log2().ceil() as usize + 1).max(1);
        let per_level = (cfg.iters / levels).max(20);
        let mut buf = Buffers {
            gx: vec![0.0; m],
            gy: vec![0.0; m],
            hx: vec![0.0; m],
            hy: vec![0.0; m],
            tx: vec![0.0; m],
            ty: vec![0.0; m],
            px: vec![0.0; m],
            py: vec![0.0; m],
            diameter: [self.alpha_t, self.alpha_s]
                .iter()
                .flat_map(|a| a.iter().map(|v| 1.0 / v))
                .fold(0.0, f64::max)
                * 2.0,
            basis_t: tangent_basis(self.alpha_t),
            basis_s: tangent_basis(self.alpha_s),
        };
        let mut step = cfg.step;
        let mut rho = RHO_START;
        let mut last_violation = f64::INFINITY;
        loop {
            self.descend(&mut x, &mut y, rho, &mut step, per_level, &mut buf);
            for _ in 0..3 {
                if !self.escape(&mut x, &mut y, rho, &mut buf) {
                    break;
                }
                step = cfg.step;
                self.descend(&mut x, &mut y, rho, &mut step, per_level, &mut buf);
            }
            let violation = self.term(&x, &y) - self.target;
            if self.penalized(&x, &y, rho) >= bound {
                return PairOutcome { objective: f64::INFINITY, term: self.term(&x, &y), x, y };
            }
            if rho >= RHO_TARGET {
                // past the nominal weight, keep going only while it pays off
                let done = violation <= TARGET_GAP;
                let stalled = violation > 0.5 * last_violation;
                if done || stalled || rho >= RHO_LIMIT {
                    break;
                }
            }
            last_violation = violation;
            rho *= 2.0;
        }
        PairOutcome {
            objective: self.distance(&x, &y),
            term: self.term(&x, &y),
            x,
            y,
        }
    }
}

struct Buffers {
    gx: Vec<f64>,
    gy: Vec<f64>,
    hx: Vec<f64>,
    hy: Vec<f64>,
    tx: Vec<f64>,
    ty: Vec<f64>,
    px: Vec<f64>,
    py: Vec<f64>,
    diameter: f64,
    basis_t: Vec<Vec<f64>>,
    basis_s: Vec<Vec<f64>>,
}

/// Orthonormal basis of the hyperplane `alpha'd = 0`.
fn tangent_basis(alpha: &[f64]) -> Vec<Vec<f64>> {
    let m = alpha.len();
    let na = dot(alpha, alpha).sqrt();
    let mut basis: Vec<Vec<f64>> = vec![alpha.iter().map(|a| a / na).collect()];
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        for b in &basis {
            let c = dot(&e, b);
            e.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = dot(&e, &e).sqrt();
        if n > 1e-8 {
            basis.push(e.iter().map(|x| x / n).collect());
        }
        if basis.len() == m {
            break;
        }
    }
    basis.remove(0);
    basis
}
