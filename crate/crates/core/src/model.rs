//! Problem description, iterates, Lipschitz data and sparse directions.
//!
//! The constraint set is `{x : Σ aᵢ xᵢ = γ, lᵢ ≤ xᵢ ≤ uᵢ}` with `aᵢ = 1` unless
//! explicit weights are supplied. Missing bounds are stored as `±∞`.

use std::fmt;

use crate::error::{Error, Result};
use crate::rules::RuleId;

/// Absolute tolerance used for feasibility checks on the sum and the bounds.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// A coordinate whose slack is at most this value is treated as sitting on its bound.
pub const ACTIVE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    n: usize,
    gamma: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl ProblemSpec {
    /// Unbounded problem `Σ xᵢ = γ`.
    pub fn new(n: usize, gamma: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::TooFewCoordinates { min: 1, got: 0 });
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma must be finite, got {gamma}")));
        }
        Ok(Self {
            n,
            gamma,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            weights: None,
        })
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len(self.n, lower.len())?;
        check_len(self.n, upper.len())?;
        for (index, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::NonFinite { index });
            }
            if l > u {
                return Err(Error::InvalidBounds { index, lower: l, upper: u });
            }
        }
        self.lower = lower;
        self.upper = upper;
        self.check_nonempty()?;
        Ok(self)
    }

    pub fn with_uniform_bounds(self, lower: f64, upper: f64) -> Result<Self> {
        let n = self.n;
        self.with_bounds(vec![lower; n], vec![upper; n])
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        check_len(self.n, weights.len())?;
        for (index, &value) in weights.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveWeight { index, value });
            }
        }
        self.weights = Some(weights);
        self.check_nonempty()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weight of coordinate `i` in the equality constraint.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |a| a[i])
    }

    pub fn has_unit_weights(&self) -> bool {
        self.weights.is_none()
    }

    /// True when at least one coordinate has a finite bound.
    pub fn is_bounded(&self) -> bool {
        self.lower.iter().any(|l| l.is_finite()) || self.upper.iter().any(|u| u.is_finite())
    }

    /// Room to decrease coordinate `i` from `x`.
    #[inline]
    pub fn lower_slack(&self, x: &[f64], i: usize) -> f64 {
        x[i] - self.lower[i]
    }

    /// Room to increase coordinate `i` from `x`.
    #[inline]
    pub fn upper_slack(&self, x: &[f64], i: usize) -> f64 {
        self.upper[i] - x[i]
    }

    /// Number of coordinates strictly inside their bounds.
    pub fn interior_count(&self, x: &[f64]) -> usize {
        (0..self.n)
            .filter(|&i| self.lower_slack(x, i) > ACTIVE_TOL && self.upper_slack(x, i) > ACTIVE_TOL)
            .count()
    }

    /// Weighted constraint residual `Σ aᵢxᵢ − γ`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mass: f64 = match &self.weights {
            Some(a) => a.iter().zip(x).map(|(a, x)| a * x).sum(),
            None => x.iter().sum(),
        };
        mass - self.gamma
    }

    fn mass_range(&self) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for i in 0..self.n {
            let a = self.weight(i);
            lo += a * self.lower[i];
            hi += a * self.upper[i];
        }
        (lo, hi)
    }

    fn check_nonempty(&self) -> Result<()> {
        let (min_mass, max_mass) = self.mass_range();
        if self.gamma < min_mass || self.gamma > max_mass {
            return Err(Error::EmptyFeasibleSet { gamma: self.gamma, min_mass, max_mass });
        }
        Ok(())
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `|Σ aᵢxᵢ − γ| ≤ tol` and `lᵢ − tol ≤ xᵢ ≤ uᵢ + tol` for every coordinate.
pub fn check_feasible(x: &[f64], spec: &ProblemSpec, tol: f64) -> Result<bool> {
    check_len(spec.n(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Ok(false);
    }
    if spec.residual(x).abs() > tol {
        return Ok(false);
    }
    Ok(x
        .iter()
        .zip(spec.lower().iter().zip(spec.upper()))
        .all(|(&xi, (&l, &u))| xi >= l - tol && xi <= u + tol))
}

/// Euclidean projection of `x0` onto the feasible set.
///
/// Unbounded problems use the closed-form shift along the weight vector. With bounds the
/// multiplier `ν` of `x(ν) = clamp(x0 − ν a, l, u)` is found by bisection on the
/// monotone constraint mass.
pub fn project_to_feasible(x0: &[f64], spec: &ProblemSpec) -> Result<Vec<f64>> {
    check_len(spec.n(), x0.len())?;
    if let Some(index) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    spec.check_nonempty()?;
    let n = spec.n();

    if !spec.is_bounded() {
        let norm_sq: f64 = (0..n).map(|i| spec.weight(i).powi(2)).sum();
        let shift = -spec.residual(x0) / norm_sq;
        return Ok((0..n).map(|i| x0[i] + shift * spec.weight(i)).collect());
    }

    let point = |nu: f64| -> Vec<f64> {
        (0..n)
            .map(|i| (x0[i] - nu * spec.weight(i)).clamp(spec.lower()[i], spec.upper()[i]))
            .collect()
    };
    let excess = |nu: f64| spec.residual(&point(nu));

    let r0 = excess(0.0);
    if r0 == 0.0 {
        return Ok(point(0.0));
    }
    // The mass is non-increasing in ν; bracket the root by doubling.
    let direction = if r0 > 0.0 { 1.0 } else { -1.0 };
    let mut near = 0.0;
    let mut far = direction;
    let mut expansions = 0;
    while excess(far) * direction > 0.0 {
        near = far;
        far *= 2.0;
        expansions += 1;
        if expansions > 2100 || !far.is_finite() {
            return Err(Error::Infeasible("could not bracket the projection multiplier".into()));
        }
    }
    let (mut lo, mut hi) = if direction > 0.0 { (near, far) } else { (far, near) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = point(0.5 * (lo + hi));

    // Bisection leaves a rounding-level residual; spread it over the free coordinates.
    for _ in 0..3 {
        let r = spec.residual(&x);
        if r == 0.0 {
            break;
        }
        let free: Vec<usize> = (0..n)
            .filter(|&i| x[i] > spec.lower()[i] && x[i] < spec.upper()[i])
            .collect();
        let norm_sq: f64 = free.iter().map(|&i| spec.weight(i).powi(2)).sum();
        if norm_sq == 0.0 {
            break;
        }
        for &i in &free {
            let a = spec.weight(i);
            x[i] = (x[i] - r * a / norm_sq).clamp(spec.lower()[i], spec.upper()[i]);
        }
    }
    Ok(x)
}

/// Current point with cached objective value and gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Iterate {
    pub x: Vec<f64>,
    pub k: usize,
    pub fval: f64,
    pub grad: Vec<f64>,
}

/// Smoothness constants: the pairwise block constant `L₂`, the 1-norm constant
/// `L₁ = L₂/2`, and per-coordinate constants `Lᵢ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzInfo {
    l2: f64,
    l1: f64,
    li: Vec<f64>,
}

impl LipschitzInfo {
    pub fn new(l2: f64, li: Vec<f64>) -> Result<Self> {
        if !(l2 > 0.0) || !l2.is_finite() {
            return Err(Error::InvalidParameter(format!("L2 must be positive, got {l2}")));
        }
        for (index, &value) in li.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveLipschitz { index, value });
            }
        }
        Ok(Self { l2, l1: l2 / 2.0, li })
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn li(&self) -> &[f64] {
        &self.li
    }
}

/// Which bound, if any, a coordinate landed on after a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundHit {
    Interior,
    Lower,
    Upper,
}

/// Sparse feasible step. `values` sum to zero (weighted sum under weights).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Direction {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
    pub hits: Vec<BoundHit>,
}

impl Direction {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Two-coordinate step `+delta` on `i`, `−delta` on `j`; zero steps give an empty direction.
    pub fn pair(i: usize, j: usize, delta: f64) -> Self {
        Self::pair_with_hits(i, j, delta, BoundHit::Interior, BoundHit::Interior)
    }

    pub fn pair_with_hits(i: usize, j: usize, delta: f64, hit_i: BoundHit, hit_j: BoundHit) -> Self {
        if delta == 0.0 {
            return Self::empty();
        }
        Self {
            support: vec![i, j],
            values: vec![delta, -delta],
            hits: vec![hit_i, hit_j],
        }
    }

    pub fn push(&mut self, index: usize, value: f64, hit: BoundHit) {
        if value != 0.0 {
            self.support.push(index);
            self.values.push(value);
            self.hits.push(hit);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support.iter().copied().zip(self.values.iter().copied())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn norm1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn norm2_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, g: &[f64]) -> f64 {
        self.iter().map(|(i, v)| g[i] * v).sum()
    }

    /// Dense copy of length `n`.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut d = vec![0.0; n];
        for (i, v) in self.iter() {
            d[i] += v;
        }
        d
    }

    /// Adds the step to `x`, snapping coordinates flagged as bound hits exactly onto the bound.
    pub fn apply(&self, x: &mut [f64], spec: &ProblemSpec) {
        for ((&i, &v), &hit) in self.support.iter().zip(&self.values).zip(&self.hits) {
            x[i] = match hit {
                BoundHit::Lower => spec.lower()[i],
                BoundHit::Upper => spec.upper()[i],
                BoundHit::Interior => x[i] + v,
            };
        }
    }

    /// Number of support coordinates that did not land on a bound.
    pub fn interior_moves(&self) -> usize {
        self.hits.iter().filter(|h| **h == BoundHit::Interior).count()
    }
}

/// One row of a solver trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub fval: f64,
    pub gap: Option<f64>,
    pub optimality: f64,
    pub rule: RuleId,
    pub support_size: usize,
    pub pair: Option<(usize, usize)>,
    pub delta: Option<f64>,
    pub elapsed_ns: u64,
    /// Coordinates strictly inside their bounds after the step.
    pub interior: usize,
}

/// Records of one solver run plus the starting state they are measured against.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub rule: RuleId,
    pub initial_fval: f64,
    pub initial_optimality: f64,
    pub initial_interior: usize,
    pub f_star: Option<f64>,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn last_fval(&self) -> f64 {
        self.records.last().map_or(self.initial_fval, |r| r.fval)
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.f_star.map(|f| self.last_fval() - f)
    }
}

impl fmt::Display for BoundHit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundHit::Interior => "interior",
            BoundHit::Lower => "lower",
            BoundHit::Upper => "upper",
        };
        f.write_str(s)
    }
}
