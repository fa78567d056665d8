use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pradius_core::simulate::DEFAULT_TAIL_FRACTION;
use pradius_core::{
    empirical_rate, exact_value, increases, lower_reports, markov_optimize, optimize, simulate, stability_verdict,
    upper_reports, BoundReport, Effort, Error, Limits, LowerRequest, OptimizerConfig, ProblemFile, ScalarSearch,
    Stability, SwitchedSystem,
};

/// Exit codes beyond the verdict's 0 stable / 1 unstable / 2 undetermined.
const EXIT_USAGE: u8 = 3;
const EXIT_INPUT: u8 = 4;
const EXIT_COMPUTE: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// h_1 .. h_{k-max}
    Upper,
    /// Certified lower bounds
    Lower,
    /// The p-radius itself, where a formula applies
    Exact,
    /// Stable, unstable or undetermined; exit code 0, 1 or 2
    Verdict,
    /// Monte Carlo moments as CSV, then the empirical rate
    Simulate,
    /// Optimized weights only
    Optimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Bound {
    Zhou,
    Scalar,
    Optimized,
}

/// Bounds on the p-radius of matrix families under i.i.d. or Markov switching.
///
/// Exit codes: 0 stable (or success), 1 unstable, 2 undetermined, 3 usage
/// error, 4 unreadable or invalid problem file, 5 computation failed.
/// PRADIUS_DIM_CAP overrides the largest lifted dimension.
#[derive(Debug, Parser)]
#[command(name = "pradius", version)]
struct Cli {
    command: Command,
    /// JSON problem file
    file: PathBuf,
    /// Exponent; overrides the file's `p`
    #[arg(long)]
    p: Option<u32>,
    /// Longest product for h_k
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    /// Weight size for optimized bounds
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Product length for the refined lower bound (1 skips it)
    #[arg(long, default_value_t = 1)]
    q: u32,
    /// Seed for the optimizer, the scalar fallback and the simulator
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Depth of the joint spectral radius bracket
    #[arg(long, default_value_t = 8)]
    depth: usize,
    /// Emit JSON instead of a table
    #[arg(long)]
    json: bool,
    /// Largest number of products any single enumeration may visit
    #[arg(long)]
    budget: Option<u64>,
    /// Lower bounds to compute (default: all)
    #[arg(long, value_delimiter = ',')]
    bounds: Vec<Bound>,
    /// Optimizer restarts
    #[arg(long)]
    restarts: Option<usize>,
    /// Simulation horizon
    #[arg(long, default_value_t = 30)]
    horizon: usize,
    /// Simulated trajectories
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
}

enum Failure {
    Usage(String),
    Input(String),
    Compute(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Input(_) => EXIT_INPUT,
            Failure::Compute(_) => EXIT_COMPUTE,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Compute(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

fn limits(cli: &Cli) -> Result<Limits, Failure> {
    let mut limits = Limits::default();
    if let Some(b) = cli.budget {
        limits.product_budget = b;
    }
    if let Ok(v) = std::env::var("PRADIUS_DIM_CAP") {
        limits.dim_cap = v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("PRADIUS_DIM_CAP={v:?} is not a non-negative integer")))?;
    }
    Ok(limits)
}

fn load(cli: &Cli) -> Result<(ProblemFile, SwitchedSystem, u32), Failure> {
    let name = cli.file.display();
    let text = std::fs::read_to_string(&cli.file).map_err(|e| Failure::Input(format!("{name}: {e}")))?;
    let file = ProblemFile::parse(&text).map_err(|e| Failure::Input(format!("{name}: {e}")))?;
    let system = file.system().map_err(|e| Failure::Input(format!("{name}: {e}")))?;
    let p = cli.p.unwrap_or(file.p);
    if p == 0 {
        return Err(Failure::Usage("--p must be a positive integer".into()));
    }
    Ok((file, system, p))
}

fn optimizer_config(cli: &Cli) -> OptimizerConfig {
    let mut config = OptimizerConfig::with_seed(cli.seed);
    if let Some(r) = cli.restarts {
        config.restarts = r;
    }
    config
}

fn json<T: serde::Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

fn table(reports: &[BoundReport], witnesses: bool) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:width$}  {:>16}  {:9}  tolerance\n", "name", "value", "certified");
    for r in reports {
        let label = if r.is_certified() { "yes" } else { "heuristic" };
        let _ = writeln!(
            out,
            "{:width$}  {:>16.12}  {label:9}  {:.1e}",
            r.name, r.value, r.tolerance
        );
        if witnesses {
            if let Some(w) = &r.witness {
                let _ = writeln!(
                    out,
                    "{:width$}  witness: {}",
                    "",
                    serde_json::to_string(w).expect("witness serializes")
                );
            }
        }
        if !r.notes.is_empty() && witnesses {
            let _ = writeln!(out, "{:width$}  {}", "", r.notes);
        }
    }
    out
}

fn reports(cli: &Cli, reports: &[BoundReport], witnesses: bool) -> String {
    if cli.json {
        json(reports)
    } else {
        table(reports, witnesses)
    }
}

fn upper(cli: &Cli, system: &SwitchedSystem, p: u32, limits: &Limits) -> Result<String, Failure> {
    let list = upper_reports(system, p, cli.k_max, limits)?;
    let values: Vec<f64> = list.iter().map(|r| r.value).collect();
    for k in increases(&values, 1e-12) {
        eprintln!(
            "warning: h_{k} = {} exceeds h_{} = {}; h_k need not decrease, each is still an upper bound",
            values[k - 1],
            k - 1,
            values[k - 2]
        );
    }
    Ok(reports(cli, &list, false))
}

fn lower(cli: &Cli, system: &SwitchedSystem, p: u32, limits: &Limits) -> Result<String, Failure> {
    let all = cli.bounds.is_empty();
    let request = LowerRequest {
        zhou: all || cli.bounds.contains(&Bound::Zhou),
        scalar: all || cli.bounds.contains(&Bound::Scalar),
        optimize: all || cli.bounds.contains(&Bound::Optimized),
        m: cli.m,
        q: cli.q,
        jsr_depth: cli.depth,
        scalar_search: ScalarSearch {
            seed: cli.seed,
            ..ScalarSearch::default()
        },
        optimizer: optimizer_config(cli),
        limits: *limits,
    };
    let mut ok = Vec::new();
    for outcome in lower_reports(system, p, &request) {
        match outcome {
            Ok(r) => ok.push(r),
            Err((name, e)) => eprintln!("warning: {name} skipped: {e}"),
        }
    }
    if ok.is_empty() {
        return Err(Failure::Compute("no lower bound could be computed".into()));
    }
    Ok(reports(cli, &ok, true))
}

fn optimize_cmd(cli: &Cli, system: &SwitchedSystem, limits: &Limits) -> Result<String, Failure> {
    let config = optimizer_config(cli);
    let report = match system {
        SwitchedSystem::Iid(f) => optimize(f, cli.m, &config, limits)?,
        SwitchedSystem::Markov(m) => markov_optimize(m, cli.m, &config, limits)?,
    };
    if cli.json {
        return Ok(json(&[report]));
    }
    let mut out = table(std::slice::from_ref(&report), true);
    for t in &report.trace {
        let best = t.best_so_far.last().copied().unwrap_or(f64::NAN);
        let iters = t.best_so_far.len();
        let _ = writeln!(
            out,
            "restart {:3}  seed {:10}  {iters:4} rounds  best {best:.12}",
            t.restart, t.seed
        );
    }
    Ok(out)
}

fn verdict(cli: &Cli, system: &SwitchedSystem, p: u32, limits: &Limits) -> Result<(String, u8), Failure> {
    let mut effort = Effort {
        k_max: cli.k_max,
        jsr_depth: cli.depth,
        m: cli.m,
        limits: *limits,
        ..Effort::default()
    };
    effort.optimizer = OptimizerConfig {
        rng_seed: cli.seed,
        ..effort.optimizer
    };
    effort.scalar.seed = cli.seed;
    if let Some(r) = cli.restarts {
        effort.optimizer.restarts = r;
    }
    let v = stability_verdict(system, p, &effort)?;
    let code = v.status.exit_code() as u8;
    if cli.json {
        return Ok((json(&v), code));
    }
    let status = match v.status {
        Stability::Stable => "stable",
        Stability::Unstable => "unstable",
        Stability::Undetermined => "undetermined",
    };
    let mut out = format!("{status} (p = {p})\n");
    if let Some(w) = &v.witness {
        let _ = writeln!(out, "decided by {} = {:.12}", w.name, w.value);
    }
    let bracket: Vec<BoundReport> = v.lower.iter().chain(v.upper.iter()).cloned().collect();
    if !bracket.is_empty() {
        out.push_str(&table(&bracket, true));
    }
    for s in &v.skipped {
        let _ = writeln!(out, "skipped: {s}");
    }
    Ok((out, code))
}

fn simulate_cmd(cli: &Cli, system: &SwitchedSystem, p: u32) -> Result<String, Failure> {
    let ensemble = simulate(system, p, cli.horizon, cli.samples, cli.seed, None)?;
    let rate = empirical_rate(&ensemble, DEFAULT_TAIL_FRACTION);
    if cli.json {
        let value = serde_json::json!({
            "ensemble": ensemble,
            "rate": rate.as_ref().ok(),
            "rate_error": rate.as_ref().err().map(ToString::to_string),
        });
        return Ok(json(&value));
    }
    let mut out = String::from("k,moment,rate_to_date\n");
    let pf = f64::from(p);
    for (k, (&lm, m)) in ensemble.log_moment.iter().zip(ensemble.per_step_moment()).enumerate() {
        if k == 0 {
            let _ = writeln!(out, "0,{m},");
        } else {
            let _ = writeln!(out, "{k},{m},{}", (lm / (pf * k as f64)).exp());
        }
    }
    match rate {
        Ok(r) => {
            let _ = writeln!(
                out,
                "# rate {:.6} +/- {:.6} over steps {}..{} (p = {p}, samples = {}, seed = {})",
                r.rate, r.stderr, r.window.0, r.window.1, ensemble.samples, ensemble.rng_seed
            );
        }
        Err(e) => {
            let _ = writeln!(out, "# rate unavailable: {e}");
        }
    }
    Ok(out)
}

fn run(cli: &Cli) -> Result<(String, u8), Failure> {
    let limits = limits(cli)?;
    if cli.k_max == 0 || cli.m == 0 || cli.q == 0 || cli.depth == 0 || cli.horizon == 0 || cli.samples == 0 {
        return Err(Failure::Usage(
            "--k-max, --m, --q, --depth, --horizon and --samples must be at least 1".into(),
        ));
    }
    let (_, system, p) = load(cli)?;
    let out = match cli.command {
        Command::Upper => upper(cli, &system, p, &limits)?,
        Command::Lower => lower(cli, &system, p, &limits)?,
        Command::Exact => reports(cli, &[exact_value(&system, p, &limits)?], true),
        Command::Verdict => return verdict(cli, &system, p, &limits),
        Command::Simulate => simulate_cmd(cli, &system, p)?,
        Command::Optimize => optimize_cmd(cli, &system, &limits)?,
    };
    Ok((out, 0))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok((out, code)) => {
            // a closed pipe downstream is not an error of ours
            let _ = std::io::stdout().lock().write_all(out.as_bytes());
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("pradius: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
