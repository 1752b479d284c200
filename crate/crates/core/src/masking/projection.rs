//! Euclidean projection onto the budget set `{b >= 0, alpha'b = 1}`.

use crate::dataset::dot;

/// Projects `v` onto `{b >= 0, alpha'b = 1}` for `alpha > 0`.
///
/// The projection is `max(0, v - mu alpha)` where `mu` solves
/// `alpha' max(0, v - mu alpha) = 1`. The left side is piecewise linear and
/// decreasing in `mu` with breakpoints `v_i / alpha_i`; bisection over the
/// sorted breakpoints finds the active piece, on which `mu` is exact.
pub fn project_budget(v: &[f64], alpha: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    project_into(v, alpha, &mut out);
    out
}

pub(crate) fn project_into(v: &[f64], alpha: &[f64], out: &mut [f64]) {
    let m = v.len();
    let mut stack = [0usize; 8];
    let mut heap = Vec::new();
    let idx: &mut [usize] = if m <= stack.len() {
        &mut stack[..m]
    } else {
        heap.resize(m, 0);
        &mut heap[..]
    };
    for (i, slot) in idx.iter_mut().enumerate() {
        *slot = i;
    }
    let ratio = |i: usize| v[i] / alpha[i];
    idx.sort_unstable_by(|&a, &b| ratio(b).total_cmp(&ratio(a)));

    // With the first j coordinates active, the spend at mu = ratio(idx[j]) is
    // nondecreasing in j. The active set ends at the first j where it reaches 1.
    let prefix = |j: usize| -> (f64, f64) {
        idx[..j].iter().fold((0.0, 0.0), |(av, aa), &i| (av + alpha[i] * v[i], aa + alpha[i] * alpha[i]))
    };
    let reaches = |j: usize| {
        let (av, aa) = prefix(j);
        av - ratio(idx[j]) * aa >= 1.0
    };
    let (mut lo, mut hi) = (1, m);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if reaches(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let active = lo;
    let (av, aa) = prefix(active);
    let mu = (av - 1.0) / aa;
    for (k, &i) in idx.iter().enumerate() {
        out[i] = if k < active { (v[i] - mu * alpha[i]).max(0.0) } else { 0.0 };
    }
}

/// `|alpha'b - 1| + sum of negative parts`.
pub fn budget_residual(b: &[f64], alpha: &[f64]) -> f64 {
    (dot(alpha, b) - 1.0).abs() + b.iter().map(|x| (-x).max(0.0)).sum::<f64>()
}
