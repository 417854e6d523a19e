//! Iteration loop, stopping rule, reference optima and rate envelopes.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    check_feasible, project_to_feasible, Direction, LipschitzInfo, ProblemSpec, Trace, TraceRecord, ACTIVE_TOL,
    FEASIBILITY_TOL,
};
use crate::objectives::{lipschitz_info, reparameterize_spec, Objective, Quadratic};
use crate::rules::{
    select_gs_q_bound, select_gs_s, select_gsl, select_gsl_1, select_greedy, select_random_pair, select_ratio,
    LiSampler, PairChoice, RuleId,
};
use crate::step::{gs1_direction, step_bound, step_equality, step_li, step_li_bound, StepPolicy};

pub const DEFAULT_MAX_ITERS: usize = 100_000;
pub const DEFAULT_OPT_TOL: f64 = 1e-10;
pub const DEFAULT_RESYNC_EVERY: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub rule: RuleId,
    pub policy: StepPolicy,
    pub max_iters: usize,
    pub opt_tol: f64,
    /// Seed of the pair-drawing stream (random rules only).
    pub seed: u64,
    pub trace_every: usize,
    /// Re-project onto the feasible set and recompute `f`, `∇f` this often.
    pub resync_every: usize,
    /// Fill `elapsed_ns`; left at zero otherwise so traces are reproducible.
    pub record_timing: bool,
    /// Known optimum used for the `gap` column.
    pub f_star: Option<f64>,
}

impl SolverConfig {
    pub fn new(rule: RuleId, policy: StepPolicy) -> Self {
        Self {
            rule,
            policy,
            max_iters: DEFAULT_MAX_ITERS,
            opt_tol: DEFAULT_OPT_TOL,
            seed: 0,
            trace_every: 1,
            resync_every: DEFAULT_RESYNC_EVERY,
            record_timing: false,
            f_star: None,
        }
    }

    pub fn max_iters(mut self, iters: usize) -> Self {
        self.max_iters = iters;
        self
    }

    pub fn opt_tol(mut self, tol: f64) -> Self {
        self.opt_tol = tol;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn trace_every(mut self, every: usize) -> Self {
        self.trace_every = every;
        self
    }

    pub fn f_star(mut self, f_star: f64) -> Self {
        self.f_star = Some(f_star);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.opt_tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("opt_tol must be non-negative, got {}", self.opt_tol)));
        }
        if self.trace_every == 0 || self.resync_every == 0 {
            return Err(Error::InvalidParameter("trace_every and resync_every must be at least 1".into()));
        }
        if let StepPolicy::Explicit(a) = self.policy {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidParameter(format!("step size must be positive, got {a}")));
            }
        }
        let compatible = match (self.rule, self.policy) {
            (RuleId::GS1, StepPolicy::FixedInvL1 | StepPolicy::Explicit(_)) => true,
            (RuleId::GS1, _) => false,
            (RuleId::GSqBound, StepPolicy::LiPairwise) => false,
            _ => true,
        };
        if !compatible {
            return Err(Error::IncompatiblePolicy { rule: self.rule.name().into(), policy: self.policy.to_string() });
        }
        Ok(())
    }
}

/// KKT residual: the spread of the partial derivatives over coordinates that may still move.
///
/// Without bounds this is `max ∇f − min ∇f`. With bounds the maximum runs over coordinates
/// above their lower bound and the minimum over those below their upper bound, floored at 0.
pub fn optimality_measure(grad: &[f64], x: &[f64], spec: &ProblemSpec) -> f64 {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (k, &g) in grad.iter().enumerate() {
        if spec.lower_slack(x, k) > ACTIVE_TOL {
            hi = hi.max(g);
        }
        if spec.upper_slack(x, k) > ACTIVE_TOL {
            lo = lo.min(g);
        }
    }
    if hi == f64::NEG_INFINITY || lo == f64::INFINITY {
        return 0.0;
    }
    (hi - lo).max(0.0)
}

fn choose_pair(
    rule: RuleId,
    grad: &[f64],
    x: &[f64],
    spec: &ProblemSpec,
    alpha: Option<f64>,
    lips: &LipschitzInfo,
    sampler: Option<&LiSampler>,
    rng: &mut ChaCha8Rng,
) -> Result<Option<PairChoice>> {
    let pair = match rule {
        RuleId::RandomUniform => {
            let p = select_random_pair(grad.len(), rng)?;
            PairChoice::oriented(p.i, p.j, grad)
        }
        RuleId::LiProportional => {
            let p = sampler.expect("sampler built for li-random").sample(rng);
            PairChoice::oriented(p.i, p.j, grad)
        }
        RuleId::Greedy => select_greedy(grad)?,
        RuleId::GSs => match select_gs_s(grad, x, spec)? {
            Some(p) => p,
            None => return Ok(None),
        },
        RuleId::GSqBound => select_gs_q_bound(grad, x, spec, alpha.expect("validated"))?,
        RuleId::GSL => select_gsl(grad, lips.li())?,
        RuleId::GSL1 => select_gsl_1(grad, lips.li())?,
        RuleId::Ratio => {
            let p = select_ratio(grad, lips.li())?;
            PairChoice::oriented(p.i, p.j, grad)
        }
        RuleId::GS1 => unreachable!("GS-1 builds its own direction"),
    };
    Ok(Some(pair))
}

/// Runs the configured rule from `x0` and returns the final point with its trace.
///
/// Quadratic objectives keep `∇f` and `f` up to date from the Hessian columns of the moved
/// coordinates; other objectives are re-evaluated after every step. Deterministic rules stop
/// as soon as they produce an empty direction; random rules keep drawing.
pub fn run<O: Objective + ?Sized>(
    obj: &O,
    spec: &ProblemSpec,
    config: &SolverConfig,
    lips: &LipschitzInfo,
    x0: &[f64],
) -> Result<(Vec<f64>, Trace)> {
    run_with(obj, spec, config, lips, x0, |_, _, _| {})
}

/// [`run`] with a callback receiving `(k, direction, x after the step)` on every iteration.
pub fn run_with<O, F>(
    obj: &O,
    spec: &ProblemSpec,
    config: &SolverConfig,
    lips: &LipschitzInfo,
    x0: &[f64],
    mut on_step: F,
) -> Result<(Vec<f64>, Trace)>
where
    O: Objective + ?Sized,
    F: FnMut(usize, &Direction, &[f64]),
{
    config.validate()?;
    let n = spec.n();
    if obj.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: obj.dim() });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    if n < 2 {
        return Err(Error::TooFewCoordinates { min: 2, got: n });
    }
    if !spec.has_unit_weights() {
        return Err(Error::InvalidParameter("weighted constraint: reparameterize first".into()));
    }
    if !check_feasible(x0, spec, FEASIBILITY_TOL)? {
        return Err(Error::Infeasible("starting point violates the constraints".into()));
    }
    let li_needed = config.rule.uses_li() || config.policy == StepPolicy::LiPairwise;
    if li_needed && lips.li().len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: lips.li().len() });
    }

    let alpha = config.policy.alpha(lips);
    let bounded = spec.is_bounded();
    let quadratic = obj.hessian_column(0).is_some();
    let sampler = match config.rule {
        RuleId::LiProportional => Some(LiSampler::new(lips.li())?),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let started = Instant::now();

    let mut x = x0.to_vec();
    let mut grad = obj.grad(&x);
    let mut fval = obj.eval(&x);
    let mut opt = optimality_measure(&grad, &x, spec);
    let mut trace = Trace {
        rule: config.rule,
        initial_fval: fval,
        initial_optimality: opt,
        initial_interior: spec.interior_count(&x),
        f_star: config.f_star,
        records: Vec::new(),
    };
    let mut moved: Vec<(usize, f64)> = Vec::new();

    for k in 1..=config.max_iters {
        if opt <= config.opt_tol {
            break;
        }
        let d = if config.rule == RuleId::GS1 {
            gs1_direction(&grad, &x, spec, alpha.expect("validated"))?
        } else {
            let Some(pair) = choose_pair(config.rule, &grad, &x, spec, alpha, lips, sampler.as_ref(), &mut rng)? else {
                break;
            };
            match (bounded, alpha) {
                (false, Some(a)) => step_equality(&grad, &pair, a),
                (false, None) => step_li(&grad, &pair, lips.li()),
                (true, Some(a)) => step_bound(&grad, &pair, &x, spec, a)?,
                (true, None) => step_li_bound(&grad, &pair, &x, spec, lips.li())?,
            }
        };
        if d.is_empty() && !config.rule.is_random() {
            break;
        }

        moved.clear();
        moved.extend(d.iter().map(|(m, _)| (m, x[m])));
        d.apply(&mut x, spec);
        if quadratic {
            let mut cross = 0.0;
            for &(m, old) in &moved {
                cross += grad[m] * (x[m] - old);
            }
            for &(m, old) in &moved {
                let step = x[m] - old;
                if step != 0.0 {
                    let col = obj.hessian_column(m).expect("quadratic");
                    for (g, h) in grad.iter_mut().zip(col) {
                        *g += step * h;
                    }
                }
            }
            for &(m, old) in &moved {
                cross += grad[m] * (x[m] - old);
            }
            fval += 0.5 * cross;
        } else {
            obj.grad_into(&x, &mut grad);
            fval = obj.eval(&x);
        }
        if k % config.resync_every == 0 {
            x = project_to_feasible(&x, spec)?;
            obj.grad_into(&x, &mut grad);
            fval = obj.eval(&x);
        }
        opt = optimality_measure(&grad, &x, spec);
        on_step(k, &d, &x);

        let last = k == config.max_iters || opt <= config.opt_tol;
        if k % config.trace_every == 0 || last {
            trace.records.push(record(config, k, fval, opt, &d, spec, &x, started));
        }
    }
    Ok((x, trace))
}

#[allow(clippy::too_many_arguments)]
fn record(
    config: &SolverConfig,
    iter: usize,
    fval: f64,
    optimality: f64,
    d: &Direction,
    spec: &ProblemSpec,
    x: &[f64],
    started: Instant,
) -> TraceRecord {
    let two = (d.len() == 2).then(|| {
        let mut it = d.iter();
        let (i, delta) = it.next().expect("two entries");
        let (j, _) = it.next().expect("two entries");
        ((i, j), delta)
    });
    TraceRecord {
        iter,
        fval,
        gap: config.f_star.map(|f| fval - f),
        optimality,
        rule: config.rule,
        support_size: d.len(),
        pair: two.map(|t| t.0),
        delta: two.map(|t| t.1),
        elapsed_ns: if config.record_timing { started.elapsed().as_nanos() as u64 } else { 0 },
        interior: spec.interior_count(x),
    }
}

/// Solves a quadratic under `Σ aᵢxᵢ = γ` by running on `yᵢ = aᵢxᵢ`.
///
/// `x0` and the returned point are in the original coordinates; the trace is the one of the
/// transformed run (objective values coincide).
pub fn run_weighted(q: &Quadratic, spec: &ProblemSpec, config: &SolverConfig, x0: &[f64]) -> Result<(Vec<f64>, Trace)> {
    let n = spec.n();
    let a: Vec<f64> = (0..n).map(|i| spec.weight(i)).collect();
    let qy = q.reparameterized(&a)?;
    let spec_y = reparameterize_spec(spec)?;
    let lips = lipschitz_info(&qy)?;
    let y0: Vec<f64> = x0.iter().zip(&a).map(|(x, a)| x * a).collect();
    let (y, trace) = run(&qy, &spec_y, config, &lips, &y0)?;
    Ok((y.iter().zip(&a).map(|(y, a)| y / a).collect(), trace))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceOptimum {
    pub x: Vec<f64>,
    pub f: f64,
    /// Set when the bounded solve could not be confirmed by an exact active-set solve.
    pub approximate: bool,
}

/// Solves `[H a; aᵀ 0][x; ν] = [c; γ]` restricted to `free`, with the other coordinates fixed.
fn kkt_solve(q: &Quadratic, spec: &ProblemSpec, x: &[f64], free: &[usize]) -> Result<Vec<f64>> {
    let h = q.hessian();
    let c = q.linear();
    let m = free.len();
    let fixed: Vec<usize> = (0..spec.n()).filter(|k| !free.contains(k)).collect();
    let mut sys = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut rhs = DVector::<f64>::zeros(m + 1);
    let mut target = spec.gamma();
    for &k in &fixed {
        target -= spec.weight(k) * x[k];
    }
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            sys[(r, s)] = h[(i, j)];
        }
        sys[(r, m)] = spec.weight(i);
        sys[(m, r)] = spec.weight(i);
        rhs[r] = c[i] - fixed.iter().map(|&k| h[(i, k)] * x[k]).sum::<f64>();
    }
    rhs[m] = target;
    let sol = sys
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularKkt("H is singular on the constraint subspace; add a ridge term".into()))?;
    let mut out = x.to_vec();
    for (r, &i) in free.iter().enumerate() {
        out[i] = sol[r];
    }
    Ok(out)
}

/// Reference minimizer for gap curves.
///
/// Without bounds this is the exact KKT solve. With bounds a long GS-1 run identifies the
/// active set and the free coordinates are then re-solved exactly; if that point fails the
/// bound or sign checks, the GS-1 point is returned flagged as approximate.
pub fn reference_optimum(q: &Quadratic, spec: &ProblemSpec) -> Result<ReferenceOptimum> {
    let n = spec.n();
    if q.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: q.dim() });
    }
    let start = project_to_feasible(&vec![0.0; n], spec)?;
    if !spec.is_bounded() {
        let all: Vec<usize> = (0..n).collect();
        let x = kkt_solve(q, spec, &start, &all)?;
        let f = q.eval(&x);
        return Ok(ReferenceOptimum { x, f, approximate: false });
    }
    if !spec.has_unit_weights() {
        let a: Vec<f64> = (0..n).map(|i| spec.weight(i)).collect();
        let qy = q.reparameterized(&a)?;
        let r = reference_optimum(&qy, &reparameterize_spec(spec)?)?;
        let x: Vec<f64> = r.x.iter().zip(&a).map(|(y, a)| y / a).collect();
        let f = q.eval(&x);
        return Ok(ReferenceOptimum { x, f, approximate: r.approximate });
    }

    let lips = lipschitz_info(q)?;
    let config = SolverConfig::new(RuleId::GS1, StepPolicy::FixedInvL1)
        .max_iters(200_000)
        .opt_tol(0.0)
        .trace_every(usize::MAX);
    let (x_run, _) = run(q, spec, &config, &lips, &start)?;
    let f_run = q.eval(&x_run);

    let free: Vec<usize> = (0..n)
        .filter(|&k| spec.lower_slack(&x_run, k) > ACTIVE_TOL && spec.upper_slack(&x_run, k) > ACTIVE_TOL)
        .collect();
    if let Ok(x) = kkt_solve(q, spec, &x_run, &free) {
        let inside = free.iter().all(|&k| x[k] >= spec.lower()[k] && x[k] <= spec.upper()[k]);
        let g = q.grad(&x);
        let scale = g.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        if inside && optimality_measure(&g, &x, spec) <= 1e-9 * scale {
            let f = q.eval(&x);
            if f <= f_run + 1e-12 * f_run.abs().max(1.0) {
                return Ok(ReferenceOptimum { x, f, approximate: false });
            }
        }
    }
    Ok(ReferenceOptimum { x: x_run, f: f_run, approximate: true })
}

/// Smallest eigenvalue of `H`.
pub fn min_eigenvalue(q: &Quadratic) -> f64 {
    SymmetricEigen::new(q.hessian().clone()).eigenvalues.min()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvelopeMode {
    /// `ρ = 1 − 2μ₂/(nL₂)`.
    Equality,
    /// `ρ = 1 − μ₂/(L₂(n−1))`.
    GSqBound,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeReport {
    pub pass: bool,
    pub rho: f64,
    /// Smallest `ρᵏ(f(x⁰) − f*)(1 + 1e−6) − (f(xᵏ) − f*)` over the records.
    pub worst_margin: f64,
    pub worst_iter: usize,
}

/// Checks `f(xᵏ) − f* ≤ ρᵏ (f(x⁰) − f*)(1 + 1e−6)` at every recorded iteration.
pub fn rate_envelope_check(
    trace: &Trace,
    f_star: f64,
    mu2: f64,
    l2: f64,
    n: usize,
    mode: EnvelopeMode,
) -> Result<EnvelopeReport> {
    rate_envelope_check_with_floor(trace, f_star, mu2, l2, n, mode, 0.0)
}

/// Same check with `floor` added to the bound, for runs that reach the rounding level of `f`.
pub fn rate_envelope_check_with_floor(
    trace: &Trace,
    f_star: f64,
    mu2: f64,
    l2: f64,
    n: usize,
    mode: EnvelopeMode,
    floor: f64,
) -> Result<EnvelopeReport> {
    if !(mu2 > 0.0) {
        return Err(Error::NonPositiveMu(mu2));
    }
    if !(l2 > 0.0) || n < 2 {
        return Err(Error::InvalidParameter(format!("need L2 > 0 and n >= 2, got {l2}, {n}")));
    }
    let rho = match mode {
        EnvelopeMode::Equality => 1.0 - 2.0 * mu2 / (n as f64 * l2),
        EnvelopeMode::GSqBound => 1.0 - mu2 / (l2 * (n - 1) as f64),
    }
    .max(0.0);
    let gap0 = trace.initial_fval - f_star;
    let mut report = EnvelopeReport { pass: true, rho, worst_margin: f64::INFINITY, worst_iter: 0 };
    for r in &trace.records {
        let bound = rho.powi(r.iter as i32) * gap0 * (1.0 + 1e-6);
        let margin = bound + floor - (r.fval - f_star);
        if margin < report.worst_margin {
            report.worst_margin = margin;
            report.worst_iter = r.iter;
        }
    }
    report.pass = report.worst_margin >= 0.0;
    Ok(report)
}
