//! The two synthetic least-squares experiments: selection rules under the sum constraint alone,
//! and greedy rules with the extra box `[−1, 1]`.

use rayon::prelude::*;

use crate::error::Result;
use crate::model::{ProblemSpec, Trace};
use crate::objectives::{lipschitz_info, make_least_squares};
use crate::rules::RuleId;
use crate::solver::{reference_optimum, run, SolverConfig};
use crate::step::StepPolicy;

/// Rules compared without bounds, all with the `1/(Lᵢ+Lⱼ)` step.
pub const FIG1_RULES: [RuleId; 6] =
    [RuleId::RandomUniform, RuleId::LiProportional, RuleId::Greedy, RuleId::GSL, RuleId::Ratio, RuleId::GSL1];

/// Rules compared with bounds, with their step policies.
pub const FIG2_RULES: [(RuleId, StepPolicy); 3] = [
    (RuleId::GSs, StepPolicy::FixedInvL2),
    (RuleId::GSqBound, StepPolicy::FixedInvL2),
    (RuleId::GS1, StepPolicy::FixedInvL1),
];

/// Offset between the problem seed and the pair-drawing seed of the random rules.
const PAIR_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub iters: usize,
    pub seeds: Vec<u64>,
    pub trace_every: usize,
}

impl ExperimentConfig {
    /// n = m = 200, 5000 iterations, seeds 0..4.
    pub fn desk() -> Self {
        Self { n: 200, m: 200, iters: 5000, seeds: vec![0, 1, 2, 3], trace_every: 1 }
    }

    /// n = m = 1000, 20000 iterations, seeds 0..4.
    pub fn full() -> Self {
        Self { n: 1000, m: 1000, iters: 20_000, seeds: vec![0, 1, 2, 3], trace_every: 1 }
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub seed: u64,
    pub scaled: bool,
    pub rule: RuleId,
    pub f_star: f64,
    /// Set when `f_star` comes from an unconfirmed bounded solve.
    pub approximate: bool,
    pub trace: Trace,
}

impl RunResult {
    pub fn final_gap(&self) -> f64 {
        self.trace.last_fval() - self.f_star
    }
}

fn solver_config(rule: RuleId, policy: StepPolicy, seed: u64, cfg: &ExperimentConfig, f_star: f64) -> SolverConfig {
    SolverConfig {
        opt_tol: 0.0,
        ..SolverConfig::new(rule, policy)
            .max_iters(cfg.iters)
            .seed(seed ^ PAIR_STREAM)
            .trace_every(cfg.trace_every)
            .f_star(f_star)
    }
}

/// Runs every rule of [`FIG1_RULES`] on the unscaled and column-scaled problems for each seed.
pub fn run_fig1(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    let cases: Vec<(u64, bool)> =
        cfg.seeds.iter().flat_map(|&s| [(s, false), (s, true)]).collect();
    let runs: Vec<Vec<RunResult>> = cases
        .par_iter()
        .map(|&(seed, scaled)| -> Result<Vec<RunResult>> {
            let problem = make_least_squares(cfg.n, cfg.m, seed, scaled)?.problem;
            let q = problem.quadratic();
            let spec = ProblemSpec::new(cfg.n, 0.0)?;
            let lips = lipschitz_info(q)?;
            let reference = reference_optimum(q, &spec)?;
            let x0 = vec![0.0; cfg.n];
            FIG1_RULES
                .par_iter()
                .map(|&rule| {
                    let config = solver_config(rule, StepPolicy::LiPairwise, seed, cfg, reference.f);
                    let (_, trace) = run(q, &spec, &config, &lips, &x0)?;
                    Ok(RunResult { seed, scaled, rule, f_star: reference.f, approximate: false, trace })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(runs.into_iter().flatten().collect())
}

/// Runs GS-s, GS-q and GS-1 on the unscaled problem with `xᵢ ∈ [−1, 1]` for each seed.
pub fn run_fig2(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    let runs: Vec<Vec<RunResult>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<RunResult>> {
            let problem = make_least_squares(cfg.n, cfg.m, seed, false)?.problem;
            let q = problem.quadratic();
            let spec = ProblemSpec::new(cfg.n, 0.0)?.with_uniform_bounds(-1.0, 1.0)?;
            let lips = lipschitz_info(q)?;
            let reference = reference_optimum(q, &spec)?;
            let x0 = vec![0.0; cfg.n];
            FIG2_RULES
                .par_iter()
                .map(|&(rule, policy)| {
                    let config = solver_config(rule, policy, seed, cfg, reference.f);
                    let (_, trace) = run(q, &spec, &config, &lips, &x0)?;
                    Ok(RunResult {
                        seed,
                        scaled: false,
                        rule,
                        f_star: reference.f,
                        approximate: reference.approximate,
                        trace,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(runs.into_iter().flatten().collect())
}

/// First iteration from which the interior count never changes again (0 if it never changes).
pub fn settle_iteration(trace: &Trace) -> usize {
    let mut settle = 0;
    let mut prev = trace.initial_interior;
    for r in &trace.records {
        if r.interior != prev {
            settle = r.iter;
        }
        prev = r.interior;
    }
    settle
}

/// `(support_size, count)` pairs in increasing support size.
pub fn support_histogram(trace: &Trace) -> Vec<(usize, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for r in &trace.records {
        *counts.entry(r.support_size).or_insert(0usize) += 1;
    }
    counts.into_iter().collect()
}
