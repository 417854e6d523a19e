use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eqcd_core::experiments::{
    run_fig1, run_fig2, settle_iteration, support_histogram, ExperimentConfig, RunResult,
};
use eqcd_core::io::{format_float, read_matrix, read_vector, write_matrix, write_trace, write_vector};
use eqcd_core::objectives::{lipschitz_info, make_least_squares, LeastSquares};
use eqcd_core::solver::{optimality_measure, reference_optimum, run, SolverConfig, DEFAULT_MAX_ITERS};
use eqcd_core::verify::{run_suite, Suite};
use eqcd_core::{project_to_feasible, Error, Objective, ProblemSpec, RuleId, StepPolicy};

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "eqcd", version, about = "Coordinate-pair descent under a summation constraint")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one least-squares problem and write its trace.
    Solve(SolveArgs),
    /// Write a synthetic least-squares instance to disk.
    Generate(GenerateArgs),
    /// Selection rules on the equality-constrained problem, unscaled and column-scaled.
    Fig1(ExperimentArgs),
    /// GS-s, GS-q and GS-1 with the extra box [-1, 1].
    Fig2(ExperimentArgs),
    /// Randomized oracle and property checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value_t = 100, conflicts_with = "matrix")]
    n: usize,
    /// Rows of A (defaults to n).
    #[arg(long, conflicts_with = "matrix")]
    m: Option<usize>,
    #[arg(long, default_value_t = 0, conflicts_with = "matrix")]
    seed: u64,
    /// Multiply each column of A by a standard-normal draw.
    #[arg(long, conflicts_with = "matrix")]
    scaled: bool,
    /// Add λ‖x‖²/2 to the objective.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    gamma: f64,
    /// Uniform bounds `lo,hi`.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "bounds_file")]
    bounds: Option<String>,
    /// CSV with one `lo,hi` row per coordinate.
    #[arg(long)]
    bounds_file: Option<PathBuf>,
    #[arg(long, default_value = "greedy")]
    rule: String,
    /// `auto`, `li` for the 1/(Li+Lj) step, or a positive number.
    #[arg(long, default_value = "auto")]
    alpha: String,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    trace_every: usize,
    /// Trace CSV destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Final point, one value per line.
    #[arg(long)]
    x_out: Option<PathBuf>,
    /// Matrix A as row-major CSV.
    #[arg(long, requires = "rhs")]
    matrix: Option<PathBuf>,
    /// Right-hand side b, one value per line.
    #[arg(long, requires = "matrix")]
    rhs: Option<PathBuf>,
    /// Fill the elapsed_ns column.
    #[arg(long)]
    timing: bool,
    /// Skip the reference solve; the gap column stays empty.
    #[arg(long)]
    no_reference: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    scaled: bool,
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    rhs: PathBuf,
    #[arg(long)]
    x_true: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// n = m = 1000 and 20000 iterations.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value_t = 1)]
    trace_every: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all", value_parser = Suite::NAMES)]
    suite: String,
    /// Seeds 0..k per dimension.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
}

enum Failure {
    Usage(String),
    Verify(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(e) => Failure::Runtime(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn parse_bounds(text: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::Usage(format!("--bounds expects lo,hi, got {text:?}"));
    let (lo, hi) = text.split_once(',').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

fn parse_policy(alpha: &str, rule: RuleId) -> Result<StepPolicy, Failure> {
    match alpha {
        "auto" => Ok(match rule {
            RuleId::GS1 => StepPolicy::FixedInvL1,
            r if r.uses_li() => StepPolicy::LiPairwise,
            _ => StepPolicy::FixedInvL2,
        }),
        "li" => Ok(StepPolicy::LiPairwise),
        value => match value.parse::<f64>() {
            Ok(a) if a > 0.0 && a.is_finite() => Ok(StepPolicy::Explicit(a)),
            _ => Err(Failure::Usage(format!("--alpha expects auto, li or a positive number, got {value:?}"))),
        },
    }
}

fn load_problem(args: &SolveArgs) -> Result<LeastSquares, Failure> {
    let problem = match (&args.matrix, &args.rhs) {
        (Some(a), Some(b)) => {
            let a = read_matrix(open(a)?)?;
            let b = read_vector(open(b)?)?;
            LeastSquares::new(a, b.into())?
        }
        _ => {
            if args.n < 2 {
                return Err(Failure::Usage("--n must be at least 2".into()));
            }
            make_least_squares(args.n, args.m.unwrap_or(args.n), args.seed, args.scaled)?.problem
        }
    };
    if args.ridge != 0.0 {
        return Ok(problem.with_ridge(args.ridge)?);
    }
    Ok(problem)
}

fn build_spec(args: &SolveArgs, n: usize) -> Result<ProblemSpec, Failure> {
    let spec = ProblemSpec::new(n, args.gamma)?;
    if let Some(text) = &args.bounds {
        let (lo, hi) = parse_bounds(text)?;
        return Ok(spec.with_uniform_bounds(lo, hi)?);
    }
    if let Some(path) = &args.bounds_file {
        let m = read_matrix(open(path)?)?;
        if m.ncols() != 2 || m.nrows() != n {
            return Err(Failure::Usage(format!("bounds file must have {n} rows of lo,hi")));
        }
        let lower = m.column(0).iter().copied().collect();
        let upper = m.column(1).iter().copied().collect();
        return Ok(spec.with_bounds(lower, upper)?);
    }
    Ok(spec)
}

fn cmd_solve(args: SolveArgs) -> CmdResult {
    let rule: RuleId = args.rule.parse()?;
    let policy = parse_policy(&args.alpha, rule)?;
    if args.trace_every == 0 || args.iters == 0 {
        return Err(Failure::Usage("--iters and --trace-every must be at least 1".into()));
    }
    let problem = load_problem(&args)?;
    let q = problem.quadratic();
    let n = q.dim();
    let spec = build_spec(&args, n)?;
    let lips = lipschitz_info(q)?;
    let x0 = project_to_feasible(&vec![0.0; n], &spec)?;

    let reference = if args.no_reference {
        None
    } else {
        match reference_optimum(q, &spec) {
            Ok(r) => Some(r),
            Err(e) => {
                eprintln!("warning: no reference optimum ({e}); gap column left empty");
                None
            }
        }
    };
    let mut config = SolverConfig::new(rule, policy)
        .max_iters(args.iters)
        .opt_tol(args.tol)
        .seed(args.seed)
        .trace_every(args.trace_every);
    config.record_timing = args.timing;
    config.f_star = reference.as_ref().map(|r| r.f);
    config.validate()?;

    let (x, trace) = run(q, &spec, &config, &lips, &x0)?;
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            write_trace(&mut w, &trace, false)?;
            w.flush()?;
        }
        None => write_trace(io::stdout().lock(), &trace, false)?,
    }
    if let Some(path) = &args.x_out {
        let mut w = create(path)?;
        write_vector(&mut w, &x)?;
        w.flush()?;
    }

    let iters = trace.records.last().map_or(0, |r| r.iter);
    let opt = optimality_measure(&q.grad(&x), &x, &spec);
    eprintln!("rule {rule} step {policy} iterations {iters}");
    eprintln!("f {} optimality {}", format_float(q.eval(&x)), format_float(opt));
    if let Some(r) = reference {
        let tag = if r.approximate { " (approximate)" } else { "" };
        eprintln!("f* {}{tag} gap {}", format_float(r.f), format_float(trace.last_fval() - r.f));
    }
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> CmdResult {
    if args.n == 0 {
        return Err(Failure::Usage("--n must be positive".into()));
    }
    let p = make_least_squares(args.n, args.m.unwrap_or(args.n), args.seed, args.scaled)?;
    let mut w = create(&args.matrix)?;
    write_matrix(&mut w, p.problem.matrix())?;
    w.flush()?;
    let mut w = create(&args.rhs)?;
    write_vector(&mut w, p.problem.rhs().as_slice())?;
    w.flush()?;
    if let Some(path) = &args.x_true {
        let mut w = create(path)?;
        write_vector(&mut w, &p.x_true)?;
        w.flush()?;
    }
    Ok(())
}

fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = if args.full { ExperimentConfig::full() } else { ExperimentConfig::desk() };
    if let Some(n) = args.n {
        cfg.n = n;
        cfg.m = n;
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(iters) = args.iters {
        cfg.iters = iters;
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    cfg.trace_every = args.trace_every;
    if cfg.n < 2 || cfg.m == 0 || cfg.iters == 0 || cfg.trace_every == 0 || cfg.seeds.is_empty() {
        return Err(Failure::Usage("n >= 2, m >= 1, iters >= 1, trace-every >= 1 and one seed are required".into()));
    }
    Ok(cfg)
}

fn variant(r: &RunResult) -> &'static str {
    if r.scaled {
        "scaled"
    } else {
        "unscaled"
    }
}

fn cmd_fig1(args: ExperimentArgs) -> CmdResult {
    let cfg = experiment_config(&args)?;
    let dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from("fig1"));
    let runs = run_fig1(&cfg)?;
    for r in &runs {
        let mut w = create(&dir.join(format!("{}_seed{}_{}.csv", variant(r), r.seed, r.rule)))?;
        write_trace(&mut w, &r.trace, false)?;
        w.flush()?;
    }
    let mut w = create(&dir.join("summary.csv"))?;
    writeln!(w, "seed,variant,rule,step,n,m,iters,f_star,final_gap")?;
    for r in &runs {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.seed,
            variant(r),
            r.rule,
            StepPolicy::LiPairwise,
            cfg.n,
            cfg.m,
            cfg.iters,
            format_float(r.f_star),
            format_float(r.final_gap())
        )?;
        println!("seed {} {:<8} {:<9} final gap {:.6e}", r.seed, variant(r), r.rule.name(), r.final_gap());
    }
    w.flush()?;
    Ok(())
}

fn cmd_fig2(args: ExperimentArgs) -> CmdResult {
    let cfg = experiment_config(&args)?;
    let dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from("fig2"));
    let runs = run_fig2(&cfg)?;
    for r in &runs {
        let mut w = create(&dir.join(format!("seed{}_{}.csv", r.seed, r.rule)))?;
        write_trace(&mut w, &r.trace, true)?;
        w.flush()?;
        if r.rule == RuleId::GS1 {
            let mut w = create(&dir.join(format!("seed{}_gs-1_support.csv", r.seed)))?;
            writeln!(w, "support_size,count")?;
            for (size, count) in support_histogram(&r.trace) {
                writeln!(w, "{size},{count}")?;
            }
            w.flush()?;
        }
    }
    let mut w = create(&dir.join("summary.csv"))?;
    writeln!(w, "seed,rule,step,n,m,iters,f_star,f_star_approximate,final_gap,final_interior,settle_iter")?;
    for r in &runs {
        let policy = eqcd_core::experiments::FIG2_RULES
            .iter()
            .find(|(rule, _)| *rule == r.rule)
            .map(|(_, p)| *p)
            .expect("fig2 rule");
        let interior = r.trace.records.last().map_or(r.trace.initial_interior, |x| x.interior);
        let settle = settle_iteration(&r.trace);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.rule,
            policy,
            cfg.n,
            cfg.m,
            cfg.iters,
            format_float(r.f_star),
            r.approximate,
            format_float(r.final_gap()),
            interior,
            settle
        )?;
        println!(
            "seed {} {:<5} final gap {:.6e} interior {interior} settled at {settle}",
            r.seed,
            r.rule.name(),
            r.final_gap()
        );
    }
    w.flush()?;
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let suite: Suite = args.suite.parse()?;
    let results = run_suite(suite, args.seeds);
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.pass).collect();
    println!("{} checks, {} failed", results.len(), failed.len());
    if failed.is_empty() {
        return Ok(());
    }
    let seeds: Vec<String> = failed.iter().map(|r| format!("{}:n={}:seed={}", r.check, r.n, r.seed)).collect();
    Err(Failure::Verify(format!("failing instances: {}", seeds.join(" "))))
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("EQCD_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Usage(format!("EQCD_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Fig1(a) => cmd_fig1(a),
        Command::Fig2(a) => cmd_fig2(a),
        Command::Verify(a) => cmd_verify(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Verify(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}
