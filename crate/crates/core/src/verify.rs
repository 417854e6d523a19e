//! Randomized self-checks behind the `verify` command.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{check_feasible, Direction, ProblemSpec, FEASIBILITY_TOL};
use crate::objectives::{lipschitz_info, make_least_squares, Objective, Quadratic};
use crate::oracles::{
    oracle_exhaustive_pair, oracle_kkt_equality, oracle_pairwise_exchange, oracle_steepest_1norm, OracleModel,
    GRID_MAX_N,
};
use crate::rules::{select_greedy, select_gs_q_bound, select_gsl, select_gsl_1, PairChoice, RuleId};
use crate::solver::{
    min_eigenvalue, optimality_measure, rate_envelope_check_with_floor, reference_optimum, run, run_with, EnvelopeMode,
    SolverConfig,
};
use crate::step::{conformal_decompose, gs1_direction, step_equality, steepest_1norm_value, StepPolicy};

/// Dimensions exercised by every suite.
pub const VERIFY_DIMS: [usize; 6] = [2, 3, 4, 6, 8, 20];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    All,
    Oracles,
    Descent,
    Rates,
    Structure,
}

impl Suite {
    pub const NAMES: [&'static str; 5] = ["all", "oracles", "descent", "rates", "structure"];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Suite::All),
            "oracles" => Ok(Suite::Oracles),
            "descent" => Ok(Suite::Descent),
            "rates" => Ok(Suite::Rates),
            "structure" => Ok(Suite::Structure),
            other => Err(Error::InvalidParameter(format!("unknown suite {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub check: &'static str,
    pub n: usize,
    pub seed: u64,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<9} {:<22} n={:<3} seed={:<4} {}",
            if self.pass { "ok" } else { "FAIL" },
            self.suite,
            self.check,
            self.n,
            self.seed,
            self.detail
        )
    }
}

fn result(suite: &'static str, check: &'static str, n: usize, seed: u64, pass: bool, detail: String) -> CheckResult {
    CheckResult { suite, check, n, seed, pass, detail }
}

fn rng_for(check: u64, n: usize, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x1000_0001).wrapping_add(check * 1000 + n as u64))
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn random_quadratic(rng: &mut ChaCha8Rng, n: usize, ridge: f64) -> Quadratic {
    let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let g = b.transpose() * &b;
    let h = DMatrix::from_fn(n, n, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]) + if i == j { ridge } else { 0.0 });
    Quadratic::new(h, DVector::from_vec(normals(rng, n)), 0.0).expect("symmetric by construction")
}

fn random_box(rng: &mut ChaCha8Rng, n: usize) -> (ProblemSpec, Vec<f64>) {
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        let v = match rng.random_range(0..4) {
            0 => -1.0,
            1 => 1.0,
            _ => rng.random_range(-1.0..1.0),
        };
        x.push(v);
    }
    let gamma = x.iter().sum();
    let spec = ProblemSpec::new(n, gamma)
        .and_then(|s| s.with_uniform_bounds(-1.0, 1.0))
        .expect("x is feasible");
    (spec, x)
}

/// Model decrease of a pair under the unbounded two-coordinate model.
fn pair_decrease(grad: &[f64], p: &PairChoice, alpha: f64) -> f64 {
    let gap = grad[p.i] - grad[p.j];
    0.25 * alpha * gap * gap
}

fn oracle_checks(n: usize, seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut rng = rng_for(1, n, seed);
    let g = normals(&mut rng, n);
    let alpha = rng.random_range(0.1..2.0);
    let free = ProblemSpec::new(n, 0.0).expect("valid");
    let zero = vec![0.0; n];

    let greedy = select_greedy(&g).expect("n >= 2");
    let oracle = oracle_exhaustive_pair(&g, &zero, &free, alpha, None, OracleModel::GSqEquality).expect("small n");
    out.push(result(
        "oracles",
        "greedy=gsq-equality",
        n,
        seed,
        (greedy.i, greedy.j) == (oracle.i, oracle.j),
        format!("greedy=({},{}) oracle=({},{})", greedy.i, greedy.j, oracle.i, oracle.j),
    ));

    let (spec, x) = random_box(&mut rng, n);
    let chosen = select_gs_q_bound(&g, &x, &spec, alpha).expect("valid");
    let oracle = oracle_exhaustive_pair(&g, &x, &spec, alpha, None, OracleModel::GSqBound).expect("small n");
    let diff = (chosen.score - oracle.score).abs();
    out.push(result(
        "oracles",
        "gs-q=oracle",
        n,
        seed,
        diff <= 1e-12 * oracle.score.abs().max(1.0),
        format!("decrease {:.6e} vs {:.6e}", chosen.score, oracle.score),
    ));

    let li: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
    let gsl = select_gsl(&g, &li).expect("valid");
    let oracle = oracle_exhaustive_pair(&g, &zero, &free, alpha, Some(&li), OracleModel::GSL).expect("small n");
    let gap = g[gsl.i] - g[gsl.j];
    let mine = gap * gap / (2.0 * (li[gsl.i] + li[gsl.j]));
    out.push(result(
        "oracles",
        "gsl=oracle",
        n,
        seed,
        (mine - oracle.score).abs() <= 1e-12 * oracle.score.max(1.0),
        format!("decrease {mine:.6e} vs {:.6e}", oracle.score),
    ));
    let gsl1 = select_gsl_1(&g, &li).expect("valid");
    let oracle = oracle_exhaustive_pair(&g, &zero, &free, alpha, Some(&li), OracleModel::GSL1).expect("small n");
    let gap = g[gsl1.i] - g[gsl1.j];
    let w = li[gsl1.i].sqrt() + li[gsl1.j].sqrt();
    let mine = alpha * gap * gap / (2.0 * w * w);
    out.push(result(
        "oracles",
        "gsl-1=oracle",
        n,
        seed,
        (mine - oracle.score).abs() <= 1e-12 * oracle.score.max(1.0),
        format!("decrease {mine:.6e} vs {:.6e}", oracle.score),
    ));

    let d = gs1_direction(&g, &x, &spec, alpha).expect("feasible");
    let value = steepest_1norm_value(&g, &d, alpha);
    if n <= GRID_MAX_N {
        let (_, grid) = oracle_steepest_1norm(&g, &x, &spec, alpha).expect("small n");
        out.push(result(
            "oracles",
            "gs-1<=grid",
            n,
            seed,
            value <= grid + 1e-4,
            format!("gs-1 {value:.9e} grid {grid:.9e}"),
        ));
    }
    let (_, exch) = oracle_pairwise_exchange(&g, &x, &spec, alpha, 10_000).expect("valid");
    out.push(result(
        "oracles",
        "gs-1<=exchange",
        n,
        seed,
        value <= exch + 1e-8,
        format!("gs-1 {value:.9e} exchange {exch:.9e}"),
    ));

    let q = random_quadratic(&mut rng, n, 0.5);
    let gamma: f64 = rng.sample(StandardNormal);
    let spec = ProblemSpec::new(n, gamma).expect("valid");
    let detail;
    let pass = match (oracle_kkt_equality(q.hessian(), q.linear().as_slice(), gamma), reference_optimum(&q, &spec)) {
        (Ok(x), Ok(r)) => {
            let g = q.grad(&x);
            let scale = g.iter().fold(1.0f64, |s, v| s.max(v.abs()));
            let opt = optimality_measure(&g, &x, &spec);
            let diff = x.iter().zip(&r.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            detail = format!("optimality {opt:.2e} |oracle - reference| {diff:.2e}");
            opt <= 1e-9 * scale && diff <= 1e-8
        }
        (a, b) => {
            detail = format!("solve failed: {:?} / {:?}", a.err(), b.err());
            false
        }
    };
    out.push(result("oracles", "kkt", n, seed, pass, detail));
    out
}

/// Greedy iterations on a random unbounded quadratic with the given two-coordinate step,
/// checking that `f` never increases.
pub fn check_descent_with(step: fn(&[f64], &PairChoice, f64) -> Direction, n: usize, seed: u64) -> CheckResult {
    let mut rng = rng_for(2, n, seed);
    let q = random_quadratic(&mut rng, n, 0.1);
    let spec = ProblemSpec::new(n, 0.0).expect("valid");
    let lips = match lipschitz_info(&q) {
        Ok(l) => l,
        Err(e) => return result("descent", "greedy step", n, seed, false, e.to_string()),
    };
    let alpha = 1.0 / lips.l2();
    let mut x = vec![0.0; n];
    let mut f = q.eval(&x);
    for k in 1..=200 {
        let g = q.grad(&x);
        let Ok(pair) = select_greedy(&g) else { break };
        let d = step(&g, &pair, alpha);
        d.apply(&mut x, &spec);
        let f_new = q.eval(&x);
        if f_new > f + 1e-12 * f.abs().max(1.0) {
            return result("descent", "greedy step", n, seed, false, format!("f rose from {f:.6e} to {f_new:.6e} at k={k}"));
        }
        f = f_new;
    }
    result("descent", "greedy step", n, seed, true, format!("final f {f:.6e}"))
}

fn descent_checks(n: usize, seed: u64) -> Vec<CheckResult> {
    let mut out = vec![check_descent_with(step_equality, n, seed)];
    let mut rng = rng_for(3, n, seed);
    let q = random_quadratic(&mut rng, n, 0.1);
    let Ok(lips) = lipschitz_info(&q) else {
        out.push(result("descent", "lipschitz", n, seed, false, "no pairwise constant".into()));
        return out;
    };
    for bounded in [false, true] {
        let spec = if bounded {
            ProblemSpec::new(n, 0.0).and_then(|s| s.with_uniform_bounds(-0.5, 0.5))
        } else {
            ProblemSpec::new(n, 0.0)
        }
        .expect("valid");
        for rule in RuleId::ALL {
            let policy = match rule {
                RuleId::GS1 => StepPolicy::FixedInvL1,
                RuleId::GSqBound => StepPolicy::FixedInvL2,
                r if r.uses_li() => StepPolicy::LiPairwise,
                _ => StepPolicy::FixedInvL2,
            };
            let config = SolverConfig::new(rule, policy).max_iters(300).seed(seed);
            let mut f_prev = q.eval(&vec![0.0; n]);
            let mut problems = Vec::new();
            let outcome = run_with(&q, &spec, &config, &lips, &vec![0.0; n], |k, _, x| {
                let f = q.eval(x);
                if f > f_prev + 1e-12 * f_prev.abs().max(1.0) && problems.is_empty() {
                    problems.push(format!("f rose at k={k}"));
                }
                if !check_feasible(x, &spec, FEASIBILITY_TOL).unwrap_or(false) && problems.is_empty() {
                    problems.push(format!("infeasible at k={k}"));
                }
                f_prev = f;
            });
            match outcome {
                Ok((x, trace)) => {
                    let stopped_early = trace.records.last().is_some_and(|r| r.iter < config.max_iters);
                    let opt = optimality_measure(&q.grad(&x), &x, &spec);
                    // Bound-unaware rules may legitimately stop on a blocked pair.
                    let bound_aware = matches!(rule, RuleId::GSs | RuleId::GSqBound | RuleId::GS1);
                    if stopped_early && (bound_aware || !bounded) && opt > config.opt_tol {
                        problems.push(format!("stopped early with optimality {opt:.2e}"));
                    }
                }
                Err(e) => problems.push(e.to_string()),
            }
            let name = if bounded { "rule (bounded)" } else { "rule (equality)" };
            out.push(result(
                "descent",
                name,
                n,
                seed,
                problems.is_empty(),
                format!("{}: {}", rule, if problems.is_empty() { "monotone, feasible".into() } else { problems.join(", ") }),
            ));
        }
    }
    if n <= 8 {
        let g = normals(&mut rng, n);
        let greedy = select_greedy(&g).expect("n >= 2");
        let mut total = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                total += pair_decrease(&g, &PairChoice::oriented(i, j, &g), 1.0);
                count += 1;
            }
        }
        let best = pair_decrease(&g, &greedy, 1.0);
        let mean = total / count as f64;
        out.push(result(
            "descent",
            "greedy>=mean random",
            n,
            seed,
            best >= mean,
            format!("greedy {best:.4e} mean {mean:.4e}"),
        ));
    }
    out
}

fn rate_checks(n: usize, seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let problem = match make_least_squares(n, n, seed, false).and_then(|p| p.problem.with_ridge(1.0)) {
        Ok(p) => p,
        Err(e) => return vec![result("rates", "instance", n, seed, false, e.to_string())],
    };
    let q = problem.quadratic();
    let mu2 = min_eigenvalue(q);
    let Ok(lips) = lipschitz_info(q) else {
        return vec![result("rates", "instance", n, seed, false, "no pairwise constant".into())];
    };
    let x0 = vec![0.0; n];
    let cases = [
        ("greedy envelope", RuleId::Greedy, false, EnvelopeMode::Equality),
        ("gs-q envelope", RuleId::GSqBound, true, EnvelopeMode::GSqBound),
    ];
    for (name, rule, bounded, mode) in cases {
        let spec = if bounded {
            ProblemSpec::new(n, 0.0).and_then(|s| s.with_uniform_bounds(-1.0, 1.0))
        } else {
            ProblemSpec::new(n, 0.0)
        }
        .expect("valid");
        let checked = reference_optimum(q, &spec).and_then(|r| {
            let config = SolverConfig::new(rule, StepPolicy::FixedInvL2).max_iters(2000).opt_tol(0.0);
            let (_, trace) = run(q, &spec, &config, &lips, &x0)?;
            let floor = 64.0 * f64::EPSILON * trace.initial_fval.abs().max(r.f.abs());
            rate_envelope_check_with_floor(&trace, r.f, mu2, lips.l2(), n, mode, floor)
        });
        out.push(match checked {
            Ok(rep) => result(
                "rates",
                name,
                n,
                seed,
                rep.pass,
                format!("rho {:.6} worst margin {:.3e} at k={}", rep.rho, rep.worst_margin, rep.worst_iter),
            ),
            Err(e) => result("rates", name, n, seed, false, e.to_string()),
        });
    }
    out
}

fn structure_checks(n: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = rng_for(4, n, seed);
    let mut d: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.sample(StandardNormal) }).collect();
    let nz: Vec<usize> = (0..n).filter(|&k| d[k] != 0.0).collect();
    if !nz.is_empty() {
        let mean = d.iter().sum::<f64>() / nz.len() as f64;
        for &k in &nz {
            d[k] -= mean;
        }
    }
    let supp = d.iter().filter(|v| **v != 0.0).count();
    let conformal = match conformal_decompose(&d) {
        Ok(parts) => {
            let mut total = vec![0.0; n];
            let mut ok = parts.len() <= supp.saturating_sub(1);
            for p in &parts {
                ok &= p.len() == 2;
                let n1 = p.norm1();
                ok &= n1 * n1 == 2.0 * p.norm2_sq();
                for (k, v) in p.iter() {
                    ok &= v * d[k] > 0.0;
                    total[k] += v;
                }
            }
            let err = total.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            result("structure", "conformal", n, seed, ok && err <= 1e-12, format!("{} parts, support {supp}, error {err:.1e}", parts.len()))
        }
        Err(e) => result("structure", "conformal", n, seed, false, e.to_string()),
    };

    let g = normals(&mut rng, n);
    let (spec, x) = random_box(&mut rng, n);
    let alpha = rng.random_range(0.1..2.0);
    let gs1 = match gs1_direction(&g, &x, &spec, alpha) {
        Ok(d) => {
            let mut y = x.clone();
            d.apply(&mut y, &spec);
            let interior = d
                .iter()
                .filter(|&(m, _)| spec.lower_slack(&y, m) > 1e-12 && spec.upper_slack(&y, m) > 1e-12)
                .count();
            let feasible = check_feasible(&y, &spec, FEASIBILITY_TOL).unwrap_or(false);
            result(
                "structure",
                "gs-1 interior<=2",
                n,
                seed,
                interior <= 2 && feasible,
                format!("support {} interior {interior} feasible {feasible}", d.len()),
            )
        }
        Err(e) => result("structure", "gs-1 interior<=2", n, seed, false, e.to_string()),
    };
    vec![conformal, gs1]
}

/// Runs `suite` over [`VERIFY_DIMS`] and seeds `0..seeds`.
pub fn run_suite(suite: Suite, seeds: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for &n in &VERIFY_DIMS {
        for seed in 0..seeds {
            if matches!(suite, Suite::All | Suite::Oracles) {
                out.extend(oracle_checks(n, seed));
            }
            if matches!(suite, Suite::All | Suite::Descent) {
                out.extend(descent_checks(n, seed));
            }
            if matches!(suite, Suite::All | Suite::Rates) {
                out.extend(rate_checks(n, seed));
            }
            if matches!(suite, Suite::All | Suite::Structure) {
                out.extend(structure_checks(n, seed));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flipped(grad: &[f64], pair: &PairChoice, alpha: f64) -> Direction {
        let delta = 0.5 * alpha * (grad[pair.i] - grad[pair.j]);
        Direction::pair(pair.i, pair.j, delta)
    }

    #[test]
    fn sign_bug_is_caught() {
        assert!(check_descent_with(step_equality, 6, 0).pass);
        assert!(!check_descent_with(flipped, 6, 0).pass);
    }

    #[test]
    fn suite_names_parse() {
        for name in Suite::NAMES {
            name.parse::<Suite>().unwrap();
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn structure_suite_passes() {
        let results = run_suite(Suite::Structure, 3);
        assert!(results.iter().all(|r| r.pass), "{:#?}", results.iter().filter(|r| !r.pass).collect::<Vec<_>>());
    }
}

