//! Step sizes and feasible directions for every rule.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{check_feasible, BoundHit, Direction, LipschitzInfo, ProblemSpec, FEASIBILITY_TOL};
use crate::rules::{truncated_magnitude, PairChoice};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepPolicy {
    /// `α = 1/L₂`.
    FixedInvL2,
    /// `α = 1/L₁ = 2/L₂`.
    FixedInvL1,
    /// `δ = −(∇ᵢf − ∇ⱼf)/(Lᵢ + Lⱼ)`.
    LiPairwise,
    Explicit(f64),
}

impl StepPolicy {
    /// Global step size, or `None` for the pairwise `Lᵢ` policy.
    pub fn alpha(&self, lips: &LipschitzInfo) -> Option<f64> {
        match *self {
            StepPolicy::FixedInvL2 => Some(1.0 / lips.l2()),
            StepPolicy::FixedInvL1 => Some(1.0 / lips.l1()),
            StepPolicy::LiPairwise => None,
            StepPolicy::Explicit(a) => Some(a),
        }
    }
}

impl fmt::Display for StepPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepPolicy::FixedInvL2 => f.write_str("1/L2"),
            StepPolicy::FixedInvL1 => f.write_str("1/L1"),
            StepPolicy::LiPairwise => f.write_str("1/(Li+Lj)"),
            StepPolicy::Explicit(a) => write!(f, "{a}"),
        }
    }
}

/// `δ = −(α/2)(∇ᵢf − ∇ⱼf)` applied as `+δ` on `i`, `−δ` on `j`.
pub fn step_equality(grad: &[f64], pair: &PairChoice, alpha: f64) -> Direction {
    let delta = -0.5 * alpha * (grad[pair.i] - grad[pair.j]);
    Direction::pair(pair.i, pair.j, delta)
}

/// `δ = −(∇ᵢf − ∇ⱼf)/(Lᵢ + Lⱼ)`.
pub fn step_li(grad: &[f64], pair: &PairChoice, li: &[f64]) -> Direction {
    let delta = -(grad[pair.i] - grad[pair.j]) / (li[pair.i] + li[pair.j]);
    Direction::pair(pair.i, pair.j, delta)
}

/// Equality step truncated so `xᵢ` stays above `lᵢ` and `xⱼ` below `uⱼ`.
///
/// Expects `∇ᵢf ≥ ∇ⱼf`; a reversed pair yields an empty direction.
pub fn step_bound(grad: &[f64], pair: &PairChoice, x: &[f64], spec: &ProblemSpec, alpha: f64) -> Result<Direction> {
    let gap = grad[pair.i] - grad[pair.j];
    truncated_pair(pair, 0.5 * alpha * gap, x, spec)
}

/// [`step_li`] with the same truncation as [`step_bound`].
pub fn step_li_bound(grad: &[f64], pair: &PairChoice, x: &[f64], spec: &ProblemSpec, li: &[f64]) -> Result<Direction> {
    let gap = grad[pair.i] - grad[pair.j];
    truncated_pair(pair, gap / (li[pair.i] + li[pair.j]), x, spec)
}

fn truncated_pair(pair: &PairChoice, magnitude: f64, x: &[f64], spec: &ProblemSpec) -> Result<Direction> {
    let (i, j) = (pair.i, pair.j);
    let lower = spec.lower_slack(x, i);
    let upper = spec.upper_slack(x, j);
    for (index, slack) in [(i, lower), (j, upper)] {
        if slack < -FEASIBILITY_TOL {
            return Err(Error::NegativeSlack { index, slack });
        }
    }
    if !(magnitude > 0.0) {
        return Ok(Direction::empty());
    }
    // α = 2 turns the helper's (α/2)·gap into the raw magnitude.
    let m = truncated_magnitude(magnitude, 2.0, lower.max(0.0), upper.max(0.0));
    let hit_i = if lower.is_finite() && m >= lower { BoundHit::Lower } else { BoundHit::Interior };
    let hit_j = if upper.is_finite() && m >= upper { BoundHit::Upper } else { BoundHit::Interior };
    Ok(Direction::pair_with_hits(i, j, -m, hit_i, hit_j))
}

/// Value of the 1-norm model `∇fᵀd + ‖d‖₁²/(2α)`.
pub fn steepest_1norm_value(grad: &[f64], d: &Direction, alpha: f64) -> f64 {
    let n1 = d.norm1();
    d.dot(grad) + n1 * n1 / (2.0 * alpha)
}

/// Greedy pair with `δ = −(α/4)(∇ᵢf − ∇ⱼf)`: the unconstrained 1-norm steepest-descent step.
pub fn gs1_pair_equality(grad: &[f64], alpha: f64) -> Result<Direction> {
    let pair = crate::rules::select_greedy(grad)?;
    let delta = -0.25 * alpha * (grad[pair.i] - grad[pair.j]);
    Ok(Direction::pair(pair.i, pair.j, delta))
}

/// Scan statistics of the last [`gs1_direction`] call, for work-bound tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Gs1Stats {
    pub pointer_advances: usize,
}

/// Minimizer of `∇fᵀd + ‖d‖₁²/(2α)` over `{d : Σd = 0, l ≤ x + d ≤ u}`.
pub fn gs1_direction(grad: &[f64], x: &[f64], spec: &ProblemSpec, alpha: f64) -> Result<Direction> {
    gs1_direction_with_stats(grad, x, spec, alpha).map(|(d, _)| d)
}

/// [`gs1_direction`] that also reports how far the two pointers travelled.
///
/// Let `t = ‖d‖₁/2` be the mass moved. For a fixed `t` the best direction lowers the
/// coordinates with the largest partials, each down to its lower bound in turn, and raises
/// those with the smallest partials up to their upper bounds. The model is convex in `t` with
/// slope `4t/α − (∇_top − ∇_bottom)`, where top and bottom are the coordinates being filled
/// at mass `t`. Walking the sorted coordinates from both ends finds the first `t` where that
/// slope turns non-negative. Every coordinate passed on the way lands on a bound; only the two
/// under the pointers can end strictly inside.
pub fn gs1_direction_with_stats(grad: &[f64], x: &[f64], spec: &ProblemSpec, alpha: f64) -> Result<(Direction, Gs1Stats)> {
    let n = spec.n();
    if grad.len() != n || x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: grad.len().min(x.len()) });
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if !check_feasible(x, spec, FEASIBILITY_TOL)? {
        return Err(Error::Infeasible("gs1_direction needs a feasible point".into()));
    }
    let mut stats = Gs1Stats::default();
    if n < 2 {
        return Ok((Direction::empty(), stats));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| grad[b].partial_cmp(&grad[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));

    let lower = |k: usize| spec.lower_slack(x, k).max(0.0);
    let upper = |k: usize| spec.upper_slack(x, k).max(0.0);

    // Positions in `order`; `top` walks down from the largest partial, `bottom_pos` up from
    // the smallest. Coordinates with no room on their side are skipped.
    let skip_top = |mut p: usize| {
        while p < n && lower(order[p]) == 0.0 {
            p += 1;
        }
        p
    };
    let skip_bottom = |mut p: isize| {
        while p >= 0 && upper(order[p as usize]) == 0.0 {
            p -= 1;
        }
        p
    };
    let mut top = skip_top(0);
    let mut bottom_pos = skip_bottom(n as isize - 1);

    // Mass already moved by fully consumed coordinates on each side.
    let mut consumed_top = 0.0;
    let mut consumed_bottom = 0.0;
    let mut done_top = Vec::new();
    let mut done_bottom = Vec::new();
    let mut t = 0.0;

    loop {
        if top >= n || bottom_pos < 0 {
            break;
        }
        let (ci, cj) = (order[top], order[bottom_pos as usize]);
        let gap = grad[ci] - grad[cj];
        if ci == cj || !(gap > 0.0) {
            break;
        }
        let top_end = consumed_top + lower(ci);
        let bottom_end = consumed_bottom + upper(cj);
        let segment_end = top_end.min(bottom_end);
        let candidate = 0.25 * alpha * gap;
        if candidate <= t {
            break;
        }
        if candidate <= segment_end {
            t = candidate;
            break;
        }
        t = segment_end;
        // Ties consume the lower-bound (top) side first; the other side is revisited with a
        // zero-length segment on the next pass.
        if top_end <= bottom_end {
            consumed_top = top_end;
            done_top.push(ci);
            top = skip_top(top + 1);
        } else {
            consumed_bottom = bottom_end;
            done_bottom.push(cj);
            bottom_pos = skip_bottom(bottom_pos - 1);
        }
        stats.pointer_advances += 1;
    }

    let mut d = Direction::empty();
    if t <= 0.0 {
        return Ok((d, stats));
    }
    for &k in &done_top {
        d.push(k, -lower(k), BoundHit::Lower);
    }
    if top < n {
        let k = order[top];
        let part = t - consumed_top;
        let hit = if part >= lower(k) { BoundHit::Lower } else { BoundHit::Interior };
        d.push(k, -part.min(lower(k)), hit);
    }
    for &k in &done_bottom {
        d.push(k, upper(k), BoundHit::Upper);
    }
    if bottom_pos >= 0 {
        let k = order[bottom_pos as usize];
        let part = t - consumed_bottom;
        let hit = if part >= upper(k) { BoundHit::Upper } else { BoundHit::Interior };
        d.push(k, part.min(upper(k)), hit);
    }
    Ok((d, stats))
}

/// Splits a sum-zero vector into sign-conformal 2-sparse pieces.
///
/// Repeatedly pairs the lowest-index remaining positive entry with the lowest-index remaining
/// negative entry and transfers the smaller magnitude, which zeroes at least one of them.
pub fn conformal_decompose(d: &[f64]) -> Result<Vec<Direction>> {
    let sum: f64 = d.iter().sum();
    let scale = d.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    if sum.abs() > 1e-10 * scale {
        return Err(Error::NotSumZero(sum));
    }
    let tol = 1e-12 * scale;
    let mut rest = d.to_vec();
    let mut parts = Vec::new();
    let mut pos = 0usize;
    let mut neg = 0usize;
    loop {
        while pos < rest.len() && rest[pos] <= tol {
            pos += 1;
        }
        while neg < rest.len() && rest[neg] >= -tol {
            neg += 1;
        }
        if pos >= rest.len() || neg >= rest.len() {
            break;
        }
        let amount = rest[pos].min(-rest[neg]);
        parts.push(Direction {
            support: vec![pos, neg],
            values: vec![amount, -amount],
            hits: vec![BoundHit::Interior; 2],
        });
        if rest[pos] <= -rest[neg] {
            rest[neg] += rest[pos];
            rest[pos] = 0.0;
        } else {
            rest[pos] += rest[neg];
            rest[neg] = 0.0;
        }
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::select_greedy;

    fn boxed(n: usize, gamma: f64) -> ProblemSpec {
        ProblemSpec::new(n, gamma).unwrap().with_uniform_bounds(-1.0, 1.0).unwrap()
    }

    fn dense(d: &Direction, n: usize) -> Vec<f64> {
        d.to_dense(n)
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(u, v)| (u - v).abs() <= tol)
    }

    #[test]
    fn equality_step_examples() {
        let g = [3.0, -1.0];
        let p = PairChoice { i: 0, j: 1, score: 4.0 };
        let d = step_equality(&g, &p, 0.5);
        assert_eq!(dense(&d, 2), vec![-1.0, 1.0]);
        assert!(step_equality(&[2.0, 2.0], &PairChoice { i: 0, j: 1, score: 0.0 }, 1.0).is_empty());
    }

    #[test]
    fn equality_step_solves_two_variable_identity() {
        // f = ½‖x‖², Σx = 0. The KKT system x + ν1 = 0, Σx = 0 gives x* = 0.
        let x = [1.0, -1.0];
        let g = x;
        let p = select_greedy(&g).unwrap();
        let d = step_equality(&g, &p, 1.0);
        let mut y = x.to_vec();
        d.apply(&mut y, &ProblemSpec::new(2, 0.0).unwrap());
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn bound_step_truncates() {
        // (α/2)·gap = 2, xᵢ − lᵢ = 0.5, uⱼ − xⱼ = 1.
        let spec = ProblemSpec::new(2, 0.0).unwrap().with_bounds(vec![-0.5, -5.0], vec![5.0, 1.0]).unwrap();
        let x = [0.0, 0.0];
        let g = [2.0, -2.0];
        let p = PairChoice { i: 0, j: 1, score: 4.0 };
        let d = step_bound(&g, &p, &x, &spec, 1.0).unwrap();
        assert_eq!(d.values, vec![-0.5, 0.5]);
        assert_eq!(d.hits, vec![BoundHit::Lower, BoundHit::Interior]);

        let free = ProblemSpec::new(2, 0.0).unwrap();
        assert_eq!(step_bound(&g, &p, &x, &free, 1.0).unwrap(), step_equality(&g, &p, 1.0));

        let at_bound = [-0.5, 0.5];
        assert!(step_bound(&g, &p, &at_bound, &spec, 1.0).unwrap().is_empty());

        let bad = [-0.7, 0.7];
        assert!(matches!(step_bound(&g, &p, &bad, &spec, 1.0), Err(Error::NegativeSlack { .. })));
    }

    #[test]
    fn li_step_examples() {
        let g = [4.0, 0.0];
        let p = PairChoice { i: 0, j: 1, score: 4.0 };
        let d = step_li(&g, &p, &[4.0, 1.0]);
        assert!((d.values[0] + 0.8).abs() < 1e-15);
        let l = 2.5;
        assert_eq!(step_li(&g, &p, &[l, l]), step_equality(&g, &p, 1.0 / l));
    }

    #[test]
    fn li_step_minimizes_diagonal_quadratic() {
        // f = ½(Lᵢxᵢ² + Lⱼxⱼ²) − cᵀx with xᵢ + xⱼ = 0. KKT: Lᵢxᵢ − cᵢ + ν = 0, Lⱼxⱼ − cⱼ + ν = 0,
        // so xᵢ = (cᵢ − cⱼ)/(Lᵢ + Lⱼ).
        let (li, lj, ci, cj) = (3.0, 0.5, 1.0, -2.0);
        let x_star = (ci - cj) / (li + lj);
        let g = [-ci, -cj];
        let p = PairChoice::oriented(0, 1, &g);
        let d = step_li(&g, &p, &[li, lj]);
        let mut x = vec![0.0, 0.0];
        d.apply(&mut x, &ProblemSpec::new(2, 0.0).unwrap());
        assert!((x[0] - x_star).abs() < 1e-15 && (x[1] + x_star).abs() < 1e-15);
    }

    #[test]
    fn gs1_interior_step() {
        let spec = boxed(3, 0.0);
        let d = gs1_direction(&[3.0, 0.0, -3.0], &[0.1, 0.0, -0.1], &spec, 0.5).unwrap();
        assert!(close(&dense(&d, 3), &[-0.75, 0.0, 0.75], 1e-15));
        assert_eq!(d.interior_moves(), 2);
    }

    #[test]
    fn gs1_both_sides_at_bounds() {
        let spec = boxed(3, 0.0);
        let g = [3.0, 0.0, -3.0];
        let d = gs1_direction(&g, &[-0.9, 0.0, 0.9], &spec, 0.5).unwrap();
        assert!(close(&dense(&d, 3), &[-0.1, 0.0, 0.1], 1e-15));
        assert!(d.hits.iter().all(|h| *h != BoundHit::Interior));
        assert!((steepest_1norm_value(&g, &d, 0.5) + 0.56).abs() < 1e-12);
    }

    #[test]
    fn gs1_three_coordinate_step() {
        let spec = boxed(3, -0.95);
        let g = [10.0, 0.0, -10.0];
        let x = [-0.95, 0.0, 0.0];
        let d = gs1_direction(&g, &x, &spec, 1.0).unwrap();
        assert!(close(&dense(&d, 3), &[-0.05, -0.95, 1.0], 1e-12), "{:?}", dense(&d, 3));
        assert_eq!(d.len(), 3);
        assert_eq!(d.interior_moves(), 1);
        assert!((steepest_1norm_value(&g, &d, 1.0) + 8.5).abs() < 1e-12);
    }

    #[test]
    fn gs1_unbounded_matches_greedy_pair() {
        let spec = ProblemSpec::new(5, 0.0).unwrap();
        let g = [0.7, -1.2, 3.3, 0.0, -0.4];
        let l2 = 4.0;
        let d = gs1_direction(&g, &[0.0; 5], &spec, 2.0 / l2).unwrap();
        let p = select_greedy(&g).unwrap();
        let e = step_equality(&g, &p, 1.0 / l2);
        assert_eq!(dense(&d, 5), dense(&e, 5));
    }

    #[test]
    fn gs1_pair_equality_examples() {
        let g = [3.0, -1.0, 2.0];
        let d = gs1_pair_equality(&g, 1.0).unwrap();
        assert_eq!(dense(&d, 3), vec![-1.0, 1.0, 0.0]);
        assert_eq!(steepest_1norm_value(&g, &d, 1.0), -2.0);
        let d = gs1_pair_equality(&[1.5; 4], 1.0).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn gs1_rejects_infeasible_point() {
        let spec = boxed(2, 0.0);
        assert!(matches!(
            gs1_direction(&[1.0, 0.0], &[0.5, 0.0], &spec, 1.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn conformal_examples() {
        let parts = conformal_decompose(&[2.0, -2.0, 0.0]).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(dense(&parts[0], 3), vec![2.0, -2.0, 0.0]);

        let parts = conformal_decompose(&[3.0, -1.0, -2.0]).unwrap();
        let dense_parts: Vec<Vec<f64>> = parts.iter().map(|p| dense(p, 3)).collect();
        assert_eq!(dense_parts, vec![vec![1.0, -1.0, 0.0], vec![2.0, 0.0, -2.0]]);

        assert!(conformal_decompose(&[0.0; 4]).unwrap().is_empty());
        assert!(matches!(conformal_decompose(&[1.0, 0.5]), Err(Error::NotSumZero(_))));
    }

    #[test]
    fn two_sparse_norm_identity() {
        let d = Direction::pair(3, 7, -0.3125);
        assert_eq!(d.norm1().powi(2), 2.0 * d.norm2_sq());
    }
}
