//! Coordinate-pair selection rules.
//!
//! Greedy rules search ordered pairs `(i, j)` where `i` is decreased and `j` increased, so
//! scores are non-negative. Ties go to the lowest index (lexicographically smallest pair for
//! the exhaustive rules). When the argmax and argmin coincide, `j` advances to the lowest
//! admissible index different from `i`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ProblemSpec, ACTIVE_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleId {
    RandomUniform,
    LiProportional,
    Greedy,
    GSs,
    GSqBound,
    GSL,
    GSL1,
    Ratio,
    GS1,
}

impl RuleId {
    pub const ALL: [RuleId; 9] = [
        RuleId::RandomUniform,
        RuleId::LiProportional,
        RuleId::Greedy,
        RuleId::GSs,
        RuleId::GSqBound,
        RuleId::GSL,
        RuleId::GSL1,
        RuleId::Ratio,
        RuleId::GS1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleId::RandomUniform => "random",
            RuleId::LiProportional => "li-random",
            RuleId::Greedy => "greedy",
            RuleId::GSs => "gs-s",
            RuleId::GSqBound => "gs-q",
            RuleId::GSL => "gsl",
            RuleId::GSL1 => "gsl-1",
            RuleId::Ratio => "ratio",
            RuleId::GS1 => "gs-1",
        }
    }

    pub fn is_random(self) -> bool {
        matches!(self, RuleId::RandomUniform | RuleId::LiProportional)
    }

    pub fn uses_li(self) -> bool {
        matches!(self, RuleId::LiProportional | RuleId::GSL | RuleId::GSL1 | RuleId::Ratio)
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleId::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::UnknownRule(s.to_owned()))
    }
}

/// Selected pair: `i` is decreased, `j` increased.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairChoice {
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

impl PairChoice {
    /// Orients the pair so that `grad[i] >= grad[j]`.
    pub fn oriented(i: usize, j: usize, grad: &[f64]) -> Self {
        if grad[i] >= grad[j] {
            Self { i, j, score: grad[i] - grad[j] }
        } else {
            Self { i: j, j: i, score: grad[j] - grad[i] }
        }
    }
}

fn need_pair(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::TooFewCoordinates { min: 2, got: n });
    }
    Ok(())
}

fn check_li(li: &[f64]) -> Result<()> {
    need_pair(li.len())?;
    for (index, &value) in li.iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveLipschitz { index, value });
        }
    }
    Ok(())
}

/// Uniform unordered pair, reported in draw order.
pub fn select_random_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<PairChoice> {
    need_pair(n)?;
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    Ok(PairChoice { i, j, score: 0.0 })
}

/// Draws coordinates with probability proportional to `Lᵢ`, the second without replacement.
#[derive(Clone, Debug)]
pub struct LiSampler {
    cumulative: Vec<f64>,
}

impl LiSampler {
    pub fn new(li: &[f64]) -> Result<Self> {
        check_li(li)?;
        let mut total = 0.0;
        let cumulative = li
            .iter()
            .map(|l| {
                total += l;
                total
            })
            .collect();
        Ok(Self { cumulative })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u);
        k.min(self.cumulative.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PairChoice {
        let i = self.draw(rng);
        // Rejecting repeats of i is the same as renormalizing over the remaining mass.
        let j = loop {
            let j = self.draw(rng);
            if j != i {
                break j;
            }
        };
        PairChoice { i, j, score: 0.0 }
    }
}

pub fn select_li_proportional<R: Rng + ?Sized>(li: &[f64], rng: &mut R) -> Result<PairChoice> {
    Ok(LiSampler::new(li)?.sample(rng))
}

/// `i ∈ argmax ∇ᵢf`, `j ∈ argmin ∇ⱼf` in one pass.
pub fn select_greedy(grad: &[f64]) -> Result<PairChoice> {
    need_pair(grad.len())?;
    let (mut i, mut j) = (0, 0);
    for (k, &g) in grad.iter().enumerate().skip(1) {
        if g > grad[i] {
            i = k;
        }
        if g < grad[j] {
            j = k;
        }
    }
    if i == j {
        j = if i == 0 { 1 } else { 0 };
    }
    Ok(PairChoice { i, j, score: grad[i] - grad[j] })
}

/// Most-negative directional derivative among pairs that can move.
///
/// Returns `None` when no admissible pair exists (the rule is blocked).
pub fn select_gs_s(grad: &[f64], x: &[f64], spec: &ProblemSpec) -> Result<Option<PairChoice>> {
    need_pair(grad.len())?;
    let can_decrease = |k: usize| spec.lower_slack(x, k) > ACTIVE_TOL;
    let can_increase = |k: usize| spec.upper_slack(x, k) > ACTIVE_TOL;

    let argmax = |skip: Option<usize>| {
        (0..grad.len())
            .filter(|&k| can_decrease(k) && Some(k) != skip)
            .fold(None, |best: Option<usize>, k| match best {
                Some(b) if grad[b] >= grad[k] => Some(b),
                _ => Some(k),
            })
    };
    let argmin = |skip: Option<usize>| {
        (0..grad.len())
            .filter(|&k| can_increase(k) && Some(k) != skip)
            .fold(None, |best: Option<usize>, k| match best {
                Some(b) if grad[b] <= grad[k] => Some(b),
                _ => Some(k),
            })
    };

    let Some(i) = argmax(None) else { return Ok(None) };
    let Some(mut j) = argmin(None) else { return Ok(None) };
    if i == j {
        match argmin(Some(i)) {
            Some(k) => j = k,
            None => return Ok(None),
        }
    }
    Ok(Some(PairChoice { i, j, score: grad[i] - grad[j] }))
}

/// Truncated step length `min{(α/2)(∇ᵢf − ∇ⱼf), xᵢ − lᵢ, uⱼ − xⱼ}` for an oriented pair.
#[inline]
pub(crate) fn truncated_magnitude(gap: f64, alpha: f64, lower_slack: f64, upper_slack: f64) -> f64 {
    let mut m = 0.5 * alpha * gap;
    // Infinite slack never binds; skip it rather than compare.
    if lower_slack.is_finite() && lower_slack < m {
        m = lower_slack;
    }
    if upper_slack.is_finite() && upper_slack < m {
        m = upper_slack;
    }
    m.max(0.0)
}

/// Value of the 2-coordinate quadratic model `−gap·m + m²/α` at the truncated step.
#[inline]
pub(crate) fn bound_model_value(gap: f64, alpha: f64, m: f64) -> f64 {
    -gap * m + m * m / alpha
}

/// Exhaustive GS-q scan for the bounded problem. `score` holds the model decrease.
pub fn select_gs_q_bound(grad: &[f64], x: &[f64], spec: &ProblemSpec, alpha: f64) -> Result<PairChoice> {
    let n = grad.len();
    need_pair(n)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let upper: Vec<f64> = (0..n).map(|k| spec.upper_slack(x, k).max(0.0)).collect();
    let mut best = PairChoice { i: 0, j: 1, score: f64::NEG_INFINITY };
    let mut best_model = f64::INFINITY;
    for i in 0..n {
        let lower = spec.lower_slack(x, i).max(0.0);
        if lower == 0.0 && best_model <= 0.0 {
            // Zero movement gives model 0, which cannot beat an existing candidate.
            continue;
        }
        let gi = grad[i];
        for j in 0..n {
            if j == i || grad[j] > gi {
                continue;
            }
            let gap = gi - grad[j];
            let m = truncated_magnitude(gap, alpha, lower, upper[j]);
            let model = bound_model_value(gap, alpha, m);
            if model < best_model {
                best_model = model;
                best = PairChoice { i, j, score: -model };
            }
        }
    }
    if best_model == f64::INFINITY {
        // Every coordinate is at its lower bound; fall back to the first pair.
        best = PairChoice::oriented(0, 1, grad);
        best.score = 0.0;
    }
    Ok(best)
}

fn exhaustive_max<F>(grad: &[f64], mut score: F) -> PairChoice
where
    F: FnMut(usize, usize, f64) -> f64,
{
    let n = grad.len();
    let mut best = PairChoice { i: 0, j: 1, score: f64::NEG_INFINITY };
    for i in 0..n {
        for j in 0..n {
            if i == j || grad[j] > grad[i] {
                continue;
            }
            let s = score(i, j, grad[i] - grad[j]);
            if s > best.score {
                best = PairChoice { i, j, score: s };
            }
        }
    }
    best
}

/// `argmax (∇ᵢf − ∇ⱼf)/√(Lᵢ + Lⱼ)` over all pairs.
pub fn select_gsl(grad: &[f64], li: &[f64]) -> Result<PairChoice> {
    check_li(li)?;
    check_same(grad, li)?;
    Ok(exhaustive_max(grad, |i, j, gap| gap / (li[i] + li[j]).sqrt()))
}

/// `argmax (∇ᵢf − ∇ⱼf)/(√Lᵢ + √Lⱼ)` over all pairs.
pub fn select_gsl_1(grad: &[f64], li: &[f64]) -> Result<PairChoice> {
    check_li(li)?;
    check_same(grad, li)?;
    let root: Vec<f64> = li.iter().map(|l| l.sqrt()).collect();
    Ok(exhaustive_max(grad, |i, j, gap| gap / (root[i] + root[j])))
}

/// O(n) approximation: `i ∈ argmax (∇ᵢf − μ)/√Lᵢ`, `j ∈ argmin (∇ⱼf − μ)/√Lⱼ`, `μ` the mean.
pub fn select_ratio(grad: &[f64], li: &[f64]) -> Result<PairChoice> {
    check_li(li)?;
    check_same(grad, li)?;
    let mean = grad.iter().sum::<f64>() / grad.len() as f64;
    let scaled = |k: usize| (grad[k] - mean) / li[k].sqrt();
    let (mut i, mut j) = (0, 0);
    let (mut hi, mut lo) = (scaled(0), scaled(0));
    for k in 1..grad.len() {
        let s = scaled(k);
        if s > hi {
            hi = s;
            i = k;
        }
        if s < lo {
            lo = s;
            j = k;
        }
    }
    if i == j {
        j = if i == 0 { 1 } else { 0 };
        lo = scaled(j);
    }
    Ok(PairChoice { i, j, score: hi - lo })
}

fn check_same(grad: &[f64], li: &[f64]) -> Result<()> {
    if grad.len() != li.len() {
        return Err(Error::DimensionMismatch { expected: grad.len(), got: li.len() });
    }
    Ok(())
}
