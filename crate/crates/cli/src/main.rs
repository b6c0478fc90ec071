use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use stlt_core::{eval_recovery, generate_synthetic, io};
use stlt_cli::run::recovery_json;
use stlt_cli::{
    build_problem, check_derivatives, load_data, run_completion, CliError, ConstraintName, RunConfig, SolverName,
    SynthName, SyntheticSpec,
};

#[derive(Parser)]
#[command(name = "stlt", version, about = "Structured low-rank tensor completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete a tensor and write history, manifest, W_hat and plots.
    Complete(CompleteArgs),
    /// Draw a seeded synthetic problem and write observed.tns and truth.tns.
    Synth(SynthArgs),
    /// Check the gradient and Hessian against finite differences.
    CheckDerivs(CheckArgs),
    /// Score a recovered tensor against the ground truth.
    Eval(EvalArgs),
}

#[derive(Args, Clone, Default)]
struct ProblemFlags {
    /// JSON config or a previous manifest.json; repeat to batch several runs.
    #[arg(long)]
    config: Vec<PathBuf>,
    /// Observed entries (.tns, 1-based indices).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Ground truth (.tns with every entry) for recovery metrics.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Generate a synthetic problem with these dims instead of reading --input.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    synth_kind: Option<SynthName>,
    /// True ranks of the synthetic ground truth (defaults to --rank).
    #[arg(long, value_delimiter = ',')]
    true_rank: Option<Vec<usize>>,
    /// Observed fraction of the synthetic tensor.
    #[arg(long)]
    fraction: Option<f64>,
    /// Seed of the synthetic generator (defaults to --seed).
    #[arg(long)]
    synth_seed: Option<u64>,
    #[arg(long, value_enum)]
    constraint: Option<ConstraintName>,
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    rank: Option<Vec<usize>>,
    /// Total regularization weight, split evenly over the modes.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "cost-C")]
    cost_c: Option<f64>,
    #[arg(long, value_enum)]
    solver: Option<SolverName>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cg_tol: Option<f64>,
    #[arg(long)]
    cg_iters: Option<usize>,
    #[arg(long)]
    nnls_tol: Option<f64>,
    #[arg(long)]
    nnls_iters: Option<usize>,
    #[arg(long)]
    inner_rounds: Option<usize>,
    /// Stop the outer solver after this many seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Record measured wall times in history.csv instead of zeros.
    #[arg(long)]
    record_wall_time: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompleteArgs {
    #[command(flatten)]
    flags: ProblemFlags,
    /// Number of configs run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "nonneg")]
    synth_kind: SynthName,
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    true_rank: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    flags: ProblemFlags,
    /// Number of random (point, direction) pairs.
    #[arg(long, default_value_t = 3)]
    trials: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    w_hat: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Observed entries; their support is the training split.
    #[arg(long)]
    observed: PathBuf,
}

impl ProblemFlags {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = &self.input {
            c.input = Some(v.clone());
            c.synthetic = None;
        }
        if let Some(v) = &self.truth {
            c.truth = Some(v.clone());
        }
        if let Some(v) = self.constraint {
            c.constraint = v;
        }
        if let Some(v) = &self.tau {
            c.tau = Some(v.clone());
        }
        if let Some(v) = &self.rank {
            c.ranks = v.clone();
        }
        if let Some(v) = self.lambda {
            c.lambda = Some(v);
        }
        if let Some(v) = self.cost_c {
            c.cost_c = v;
        }
        if let Some(v) = self.solver {
            c.solver = Some(v);
        }
        if let Some(v) = self.eps {
            c.eps = v;
        }
        if let Some(v) = self.max_iters {
            c.max_iters = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.cg_tol {
            c.cg_tol = v;
        }
        if let Some(v) = self.cg_iters {
            c.cg_iters = v;
        }
        if let Some(v) = self.nnls_tol {
            c.nnls_tol = v;
        }
        if let Some(v) = self.nnls_iters {
            c.nnls_iters = v;
        }
        if let Some(v) = self.inner_rounds {
            c.inner_rounds = v;
        }
        if let Some(v) = self.time_limit {
            c.time_limit = Some(v);
        }
        if self.record_wall_time {
            c.record_wall_time = true;
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(dims) = &self.dims {
            c.input = None;
            c.synthetic = Some(SyntheticSpec {
                kind: self.synth_kind.unwrap_or(SynthName::for_constraint(c.constraint)),
                dims: dims.clone(),
                ranks: self.true_rank.clone().unwrap_or_else(|| c.ranks.clone()),
                fraction: self.fraction.unwrap_or(0.1),
                seed: self.synth_seed.unwrap_or(c.seed),
            });
        } else if let Some(s) = c.synthetic.as_mut() {
            if let Some(k) = self.synth_kind {
                s.kind = k;
            }
            if let Some(r) = &self.true_rank {
                s.ranks = r.clone();
            }
            if let Some(f) = self.fraction {
                s.fraction = f;
            }
            if let Some(seed) = self.synth_seed {
                s.seed = seed;
            }
        }
    }

    fn configs(&self) -> Result<Vec<RunConfig>, CliError> {
        let mut base = if self.config.is_empty() {
            vec![RunConfig::default()]
        } else {
            self.config.iter().map(|p| RunConfig::from_json_file(p)).collect::<Result<_, _>>()?
        };
        if base.len() > 1 && self.out.is_some() {
            return Err(CliError::Input("--out cannot be shared by several --config runs".into()));
        }
        for c in &mut base {
            self.apply(c);
            c.validate()?;
        }
        Ok(base)
    }
}

fn complete(args: &CompleteArgs) -> Result<i32, CliError> {
    let configs = args.flags.configs()?;
    let jobs = args.jobs.clamp(1, configs.len());
    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![None; configs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(c) = configs.get(i) else { break };
                let code = match run_completion(c) {
                    Ok(o) => {
                        let last = o.result.history.last().expect("nonempty history");
                        println!(
                            "{}: {} after {} iterations, g {:.6e}, grad {:.3e}, rel_gap {:.3e}",
                            c.out.display(),
                            o.result.status,
                            last.iter,
                            last.g_value,
                            last.grad_norm,
                            last.rel_gap
                        );
                        o.exit_code
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", c.out.display());
                        e.exit_code()
                    }
                };
                results.lock().expect("no poisoned lock")[i] = Some(code);
            });
        }
    });
    let codes = results.into_inner().expect("no poisoned lock");
    Ok(codes.into_iter().map(|c| c.unwrap_or(3)).max().unwrap_or(0))
}

fn synth(args: &SynthArgs) -> Result<i32, CliError> {
    let s = generate_synthetic(args.synth_kind.kind(), &args.dims, &args.true_rank, args.fraction, args.seed).map_err(CliError::input)?;
    std::fs::create_dir_all(&args.out).map_err(CliError::internal)?;
    io::write_sparse(args.out.join("observed.tns"), &s.observed).map_err(CliError::internal)?;
    io::write_dense(args.out.join("truth.tns"), &s.truth).map_err(CliError::internal)?;
    println!("wrote {} observed of {} entries to {}", s.observed.nnz(), s.truth.len(), args.out.display());
    Ok(0)
}

fn check_derivs(args: &CheckArgs) -> Result<i32, CliError> {
    let mut configs = args.flags.configs()?;
    if configs.len() != 1 {
        return Err(CliError::Input("check-derivs takes a single config".into()));
    }
    let c = configs.remove(0);
    let data = load_data(&c)?;
    let (problem, lambda) = build_problem(&c, data.observed)?;
    let r = check_derivatives(&problem, c.seed, args.trials).map_err(CliError::internal)?;
    let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
    println!("problem {:?}, {} constraint, lambda {lambda}", problem.dims(), problem.constraint().name());
    println!("gradient: max rel err {:.3e} (tol {:.0e}) {}", r.grad_err, stlt_cli::derivs::GRAD_TOL, verdict(r.grad_ok()));
    match (r.hess_err, r.taylor_slope) {
        (Some(e), Some(s)) => {
            println!("hessian: max rel err {e:.3e} (tol {:.0e}), taylor slope {s:.3} (min {}) {}", stlt_cli::derivs::HESS_TOL, stlt_cli::derivs::TAYLOR_SLOPE, verdict(r.hess_ok()));
        }
        _ => println!("hessian: skipped, the nonnegative inner solution is only piecewise smooth"),
    }
    if r.passed() {
        Ok(0)
    } else {
        Err(CliError::Internal("derivative check failed".into()))
    }
}

fn eval(args: &EvalArgs) -> Result<i32, CliError> {
    let read_dense = |p: &PathBuf| io::read_dense(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())));
    let w = read_dense(&args.w_hat)?;
    let t = read_dense(&args.truth)?;
    let y = io::read_sparse(&args.observed).map_err(|e| CliError::Input(format!("{}: {e}", args.observed.display())))?;
    let m = eval_recovery(&w, &t, y.support()).map_err(CliError::input)?;
    println!("{}", serde_json::to_string_pretty(&recovery_json(&m)).map_err(CliError::internal)?);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Complete(a) => complete(a),
        Command::Synth(a) => synth(a),
        Command::CheckDerivs(a) => check_derivs(a),
        Command::Eval(a) => eval(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("stlt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
