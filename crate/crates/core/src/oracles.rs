//! Brute-force references for tests and the `verify` command.
//!
//! Nothing here calls into the selection rules or the step engine, and the KKT oracle uses
//! its own elimination instead of `nalgebra`'s factorizations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::rules::PairChoice;

/// Largest dimension accepted by [`oracle_exhaustive_pair`].
pub const EXHAUSTIVE_MAX_N: usize = 64;
/// Largest dimension accepted by [`oracle_steepest_1norm`].
pub const GRID_MAX_N: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleModel {
    /// Largest `|∇ᵢf − ∇ⱼf|`.
    AbsDiff,
    /// Two-coordinate model `∇ᵀd + ‖d‖₂²/(2α)`, no bounds.
    GSqEquality,
    /// Same model restricted to `l ≤ x + d ≤ u`.
    GSqBound,
    /// `∇ᵀd + ½(Lᵢdᵢ² + Lⱼdⱼ²)`.
    GSL,
    /// `∇ᵀd + (√Lᵢ|dᵢ| + √Lⱼ|dⱼ|)²/(2α)`.
    GSL1,
}

/// Minimizes `−gap·t + ½ curvature·t²` over `t ∈ [0, cap]`.
fn inner_min(gap: f64, curvature: f64, cap: f64) -> (f64, f64) {
    let t = (gap / curvature).clamp(0.0, cap.max(0.0));
    (t, -gap * t + 0.5 * curvature * t * t)
}

/// Enumerates every ordered pair `(i, j)` (decrease `i`, increase `j`), solves the pair's
/// model exactly and returns the best one; ties go to the lexicographically smallest pair.
///
/// `score` is the model decrease (`|∇ᵢf − ∇ⱼf|` for [`OracleModel::AbsDiff`]).
pub fn oracle_exhaustive_pair(
    grad: &[f64],
    x: &[f64],
    spec: &ProblemSpec,
    alpha: f64,
    li: Option<&[f64]>,
    model: OracleModel,
) -> Result<PairChoice> {
    let n = grad.len();
    if n < 2 {
        return Err(Error::TooFewCoordinates { min: 2, got: n });
    }
    if n > EXHAUSTIVE_MAX_N {
        return Err(Error::OracleTooLarge { max: EXHAUSTIVE_MAX_N, got: n });
    }
    let needs_li = matches!(model, OracleModel::GSL | OracleModel::GSL1);
    let li = match (needs_li, li) {
        (true, Some(l)) => l,
        (true, None) => return Err(Error::InvalidParameter("model needs Lipschitz constants".into())),
        (false, _) => &[][..],
    };

    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let gap = grad[i] - grad[j];
            let value = match model {
                OracleModel::AbsDiff => -gap.abs(),
                OracleModel::GSqEquality => inner_min(gap, 2.0 / alpha, f64::INFINITY).1,
                OracleModel::GSqBound => {
                    let cap = (x[i] - spec.lower()[i]).min(spec.upper()[j] - x[j]);
                    inner_min(gap, 2.0 / alpha, cap).1
                }
                OracleModel::GSL => inner_min(gap, li[i] + li[j], f64::INFINITY).1,
                OracleModel::GSL1 => {
                    let w = li[i].sqrt() + li[j].sqrt();
                    inner_min(gap, w * w / alpha, f64::INFINITY).1
                }
            };
            if best.is_none_or(|(v, _, _)| value < v) {
                best = Some((value, i, j));
            }
        }
    }
    let (value, i, j) = best.expect("n >= 2");
    Ok(PairChoice { i, j, score: -value })
}

/// `∇ᵀd + ‖d‖₁²/(2α)` for a dense `d`.
pub fn steepest_1norm_objective(grad: &[f64], d: &[f64], alpha: f64) -> f64 {
    let lin: f64 = grad.iter().zip(d).map(|(g, d)| g * d).sum();
    let n1: f64 = d.iter().map(|v| v.abs()).sum();
    lin + n1 * n1 / (2.0 * alpha)
}

/// Box for each `dᵢ`, intersected with `[−R, R]` where `R = (α/4)(max∇ − min∇)` bounds every
/// entry of a minimizer.
fn direction_box(grad: &[f64], x: &[f64], spec: &ProblemSpec, alpha: f64) -> Vec<(f64, f64)> {
    let max = grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = grad.iter().copied().fold(f64::INFINITY, f64::min);
    let radius = 0.25 * alpha * (max - min) * (1.0 + 1e-9);
    (0..grad.len())
        .map(|i| {
            let lo = (spec.lower()[i] - x[i]).max(-radius).min(0.0);
            let hi = (spec.upper()[i] - x[i]).min(radius).max(0.0);
            (lo, hi)
        })
        .collect()
}

/// Grid search over the sum-zero slice, zooming in around the incumbent.
///
/// The first level spans the whole box with 41 points per free coordinate; each further level
/// re-grids ±6 cells around the best point until the cell width drops below 1e−9. One
/// coordinate is eliminated through `Σd = 0` and grid points violating its bounds are skipped;
/// each coordinate takes that role once.
pub fn oracle_steepest_1norm(grad: &[f64], x: &[f64], spec: &ProblemSpec, alpha: f64) -> Result<(Vec<f64>, f64)> {
    let n = grad.len();
    if n > GRID_MAX_N {
        return Err(Error::OracleTooLarge { max: GRID_MAX_N, got: n });
    }
    if n < 2 {
        return Ok((vec![0.0; n], 0.0));
    }
    let bounds = direction_box(grad, x, spec, alpha);
    // The dependent coordinate's bounds become a slanted face in grid space,
    // so every choice of dependent coordinate is tried.
    let mut best = (vec![0.0; n], 0.0);
    for dep in 0..n {
        let order: Vec<usize> = (0..n).filter(|&k| k != dep).chain([dep]).collect();
        let g: Vec<f64> = order.iter().map(|&k| grad[k]).collect();
        let b: Vec<(f64, f64)> = order.iter().map(|&k| bounds[k]).collect();
        let (d, v) = zoom_grid(&g, &b, alpha);
        if v < best.1 {
            for (pos, &k) in order.iter().enumerate() {
                best.0[k] = d[pos];
            }
            best.1 = v;
        }
    }
    Ok(best)
}

fn zoom_grid(grad: &[f64], bounds: &[(f64, f64)], alpha: f64) -> (Vec<f64>, f64) {
    const POINTS: usize = 41;
    const HALF_CELLS: f64 = 6.0;
    const FINAL_CELL: f64 = 1e-9;

    let n = grad.len();
    let free = n - 1;
    let (last_lo, last_hi) = bounds[free];

    let mut best_d = vec![0.0; n];
    let mut best_v = 0.0;
    let mut window: Vec<(f64, f64)> = bounds[..free].to_vec();
    let mut idx = vec![0usize; free];
    let mut d = vec![0.0; n];

    loop {
        let steps: Vec<f64> = window.iter().map(|(lo, hi)| (hi - lo) / (POINTS - 1) as f64).collect();
        let counts: Vec<usize> = steps.iter().map(|&h| if h > 0.0 { POINTS } else { 1 }).collect();
        idx.iter_mut().for_each(|v| *v = 0);
        'grid: loop {
            let mut sum = 0.0;
            for k in 0..free {
                d[k] = window[k].0 + idx[k] as f64 * steps[k];
                sum += d[k];
            }
            d[free] = -sum;
            if d[free] >= last_lo && d[free] <= last_hi {
                let v = steepest_1norm_objective(grad, &d, alpha);
                if v < best_v {
                    best_v = v;
                    best_d.copy_from_slice(&d);
                }
            }
            let mut k = 0;
            loop {
                if k == free {
                    break 'grid;
                }
                idx[k] += 1;
                if idx[k] < counts[k] {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
        let widest = steps.iter().copied().fold(0.0, f64::max);
        if widest <= FINAL_CELL {
            break;
        }
        for k in 0..free {
            let half = HALF_CELLS * steps[k].max(FINAL_CELL);
            window[k] = (
                (best_d[k] - half).max(bounds[k].0),
                (best_d[k] + half).min(bounds[k].1),
            );
        }
    }
    (best_d, best_v)
}

/// Exact minimization of the 1-norm model along `eᵢ − eⱼ` from `d`; returns `(t, decrease)`.
fn pair_line_search(grad: &[f64], d: &[f64], lo: &[f64], hi: &[f64], norm1: f64, alpha: f64, i: usize, j: usize) -> (f64, f64) {
    let (di, dj) = (d[i], d[j]);
    let t_lo = (lo[i] - di).max(dj - hi[j]);
    let t_hi = (hi[i] - di).min(dj - lo[j]);
    if !(t_lo <= t_hi) {
        return (0.0, 0.0);
    }
    let rest = norm1 - di.abs() - dj.abs();
    let g = grad[i] - grad[j];
    let phi = |t: f64| {
        let s = rest + (di + t).abs() + (dj - t).abs();
        g * t + s * s / (2.0 * alpha)
    };
    let base = phi(0.0);
    let mut cuts = vec![t_lo, t_hi];
    for bp in [-di, dj] {
        if bp > t_lo && bp < t_hi {
            cuts.push(bp);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut best = (0.0, base);
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let si = if di + mid >= 0.0 { 1.0 } else { -1.0 };
        let sj = if dj - mid >= 0.0 { 1.0 } else { -1.0 };
        let slope = si - sj;
        let c = rest + si * di + sj * dj;
        let mut candidates = vec![a, b];
        if slope != 0.0 {
            let t = (-g * alpha / slope - c) / slope;
            candidates.push(t.clamp(a, b));
        }
        for t in candidates {
            let v = phi(t);
            if v < best.1 {
                best = (t, v);
            }
        }
    }
    (best.0, base - best.1)
}

/// Pairwise-exchange descent on the 1-norm model from `d = 0`.
///
/// Each pass moves along the pair `eᵢ − eⱼ` with the largest exact improvement; it stops when
/// no pair improves by more than 1e−12 or after `iters` passes.
pub fn oracle_pairwise_exchange(grad: &[f64], x: &[f64], spec: &ProblemSpec, alpha: f64, iters: usize) -> Result<(Vec<f64>, f64)> {
    let n = grad.len();
    if n < 2 {
        return Ok((vec![0.0; n], 0.0));
    }
    let bounds = direction_box(grad, x, spec, alpha);
    let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let mut d = vec![0.0f64; n];
    for _ in 0..iters {
        let norm1: f64 = d.iter().map(|v| v.abs()).sum();
        let mut best = (0.0f64, 0usize, 0usize, 0.0f64);
        for i in 0..n {
            for j in i + 1..n {
                let (t, gain) = pair_line_search(grad, &d, &lo, &hi, norm1, alpha, i, j);
                if gain > best.3 {
                    best = (t, i, j, gain);
                }
            }
        }
        if best.3 <= 1e-12 {
            break;
        }
        let (t, i, j, _) = best;
        d[i] += t;
        d[j] -= t;
    }
    let value = steepest_1norm_objective(grad, &d, alpha);
    Ok((d, value))
}

/// Solves `min ½xᵀHx − cᵀx` subject to `Σxᵢ = γ` through the bordered KKT system.
pub fn oracle_kkt_equality(h: &DMatrix<f64>, c: &[f64], gamma: f64) -> Result<Vec<f64>> {
    oracle_kkt_weighted(h, c, &vec![1.0; c.len()], gamma)
}

/// Same with constraint `Σ aᵢxᵢ = γ`.
///
/// Dense Gaussian elimination with partial pivoting on `[H a; aᵀ 0][x; ν] = [c; γ]`.
pub fn oracle_kkt_weighted(h: &DMatrix<f64>, c: &[f64], a: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let n = c.len();
    if h.nrows() != n || h.ncols() != n || a.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.nrows() });
    }
    let m = n + 1;
    let mut sys = vec![vec![0.0; m + 1]; m];
    for i in 0..n {
        for j in 0..n {
            sys[i][j] = h[(i, j)];
        }
        sys[i][n] = a[i];
        sys[n][i] = a[i];
        sys[i][m] = c[i];
    }
    sys[n][m] = gamma;
    let scale = sys.iter().flat_map(|r| r[..m].iter()).fold(0.0f64, |s, v| s.max(v.abs()));
    let original = sys.clone();

    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&p, &q| sys[p][col].abs().partial_cmp(&sys[q][col].abs()).expect("finite"))
            .expect("non-empty");
        if sys[pivot][col].abs() <= 1e-13 * scale {
            return Err(Error::SingularKkt(format!("zero pivot in column {col}")));
        }
        sys.swap(col, pivot);
        for row in col + 1..m {
            let factor = sys[row][col] / sys[col][col];
            if factor != 0.0 {
                for k in col..=m {
                    sys[row][k] -= factor * sys[col][k];
                }
            }
        }
    }
    let mut sol = vec![0.0; m];
    for row in (0..m).rev() {
        let tail: f64 = (row + 1..m).map(|k| sys[row][k] * sol[k]).sum();
        sol[row] = (sys[row][m] - tail) / sys[row][row];
    }

    let rhs_norm = original.iter().map(|r| r[m].abs()).fold(0.0, f64::max);
    let sol_norm = sol.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let residual = original
        .iter()
        .map(|r| (r[..m].iter().zip(&sol).map(|(a, s)| a * s).sum::<f64>() - r[m]).abs())
        .fold(0.0, f64::max);
    if !residual.is_finite() || residual > 1e-8 * (scale * sol_norm + rhs_norm).max(1.0) {
        return Err(Error::SingularKkt(format!("residual {residual:e}")));
    }
    sol.truncate(n);
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free(n: usize) -> ProblemSpec {
        ProblemSpec::new(n, 0.0).unwrap()
    }

    #[test]
    fn abs_diff_example() {
        let g = [3.0, -1.0, 2.0];
        let c = oracle_exhaustive_pair(&g, &[0.0; 3], &free(3), 1.0, None, OracleModel::AbsDiff).unwrap();
        assert_eq!((c.i, c.j), (0, 1));
    }

    #[test]
    fn gsl_models_need_li() {
        let g = [1.0, 0.0];
        assert!(oracle_exhaustive_pair(&g, &[0.0; 2], &free(2), 1.0, None, OracleModel::GSL).is_err());
    }

    #[test]
    fn grid_constant_gradient() {
        let (d, v) = oracle_steepest_1norm(&[2.0; 3], &[0.0; 3], &free(3), 1.0).unwrap();
        assert_eq!(d, vec![0.0; 3]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn grid_two_variables() {
        let (d, v) = oracle_steepest_1norm(&[3.0, -1.0], &[0.0; 2], &free(2), 1.0).unwrap();
        assert!((v + 2.0).abs() < 1e-9, "{v}");
        assert!((d[0] + 1.0).abs() < 1e-6 && (d[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn grid_rejects_large_n() {
        assert!(matches!(
            oracle_steepest_1norm(&[0.0; 5], &[0.0; 5], &free(5), 1.0),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn exchange_constant_gradient() {
        let (d, v) = oracle_pairwise_exchange(&[1.0; 4], &[0.0; 4], &free(4), 1.0, 10_000).unwrap();
        assert_eq!(d, vec![0.0; 4]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn exchange_matches_grid_on_bounded_example() {
        let spec = ProblemSpec::new(3, -0.95).unwrap().with_uniform_bounds(-1.0, 1.0).unwrap();
        let g = [10.0, 0.0, -10.0];
        let x = [-0.95, 0.0, 0.0];
        let (_, grid) = oracle_steepest_1norm(&g, &x, &spec, 1.0).unwrap();
        let (_, exch) = oracle_pairwise_exchange(&g, &x, &spec, 1.0, 10_000).unwrap();
        assert!((grid + 8.5).abs() < 1e-6, "{grid}");
        assert!((exch + 8.5).abs() < 1e-9, "{exch}");
    }

    #[test]
    fn kkt_trivial_cases() {
        let h = DMatrix::identity(4, 4);
        assert_eq!(oracle_kkt_equality(&h, &[0.0; 4], 0.0).unwrap(), vec![0.0; 4]);
        let x = oracle_kkt_equality(&h, &[0.0; 4], 4.0).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn kkt_detects_singular_system() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(oracle_kkt_equality(&h, &[0.0, 0.0], 1.0), Err(Error::SingularKkt(_))));
    }
}
