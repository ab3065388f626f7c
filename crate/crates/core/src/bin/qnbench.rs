use std::path::PathBuf;
use std::process::exit;

use clap::{Args, Parser, Subcommand};
use qnopt::bench::{
    exit_code, probe_bound, run, timing_compare, write_artifacts, write_probe, write_timing, Method, ProbeConfig,
    RunConfig, Task, TimingConfig, DATA_DIR_ENV, EXIT_NOT_CONVERGED, EXIT_OK,
};

#[derive(Parser)]
#[command(name = "qnbench", version, about = "Quasi-Newton optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One optimization run; writes records.csv, summary.json and config.echo.
    Run(RunArgs),
    /// Fixed-step L-BFGS offsets on a quadratic against the convergence bound.
    ProbeBound(ProbeArgs),
    /// Evaluation counts and wall time per (method, batch, memory) cell.
    Timing(TimingArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with kebab-case RunConfig keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "qnbench-out")]
    out: PathBuf,
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    wall_clock: bool,
}

impl RunArgs {
    fn overrides(&self) -> toml::Table {
        use toml::Value;
        let mut t = toml::Table::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                t.insert(k.into(), v);
            }
        };
        let int = |v: Option<usize>| v.map(|x| Value::Integer(x as i64));
        let path = |v: &Option<PathBuf>| v.as_ref().map(|p| Value::String(p.display().to_string()));
        put("task", self.task.map(|x| Value::String(x.name().into())));
        put("method", self.method.map(|x| Value::String(x.name().into())));
        put("m", int(self.m));
        put("b", int(self.b));
        put("lr", self.lr.map(Value::Float));
        put("seed", self.seed.map(|x| Value::Integer(x as i64)));
        put("max-iters", int(self.max_iters));
        put("grad-tol", self.grad_tol.map(Value::Float));
        put("dim", int(self.dim));
        put("samples", int(self.samples));
        put("hidden", int(self.hidden));
        put("overlap", self.overlap.map(Value::Float));
        put("data-dir", path(&self.data_dir));
        put("episodes", int(self.episodes));
        put("map", path(&self.map));
        put("wall-clock", self.wall_clock.then_some(Value::Boolean(true)));
        t
    }
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long, default_value = "qnbench-out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 10.0)]
    big_lambda: f64,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 300)]
    iters: usize,
    /// Batch size; every sample when omitted.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 20)]
    memory: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long, default_value = "qnbench-out")]
    out: PathBuf,
    #[arg(long, default_value = "logistic")]
    task: Task,
    #[arg(long, value_delimiter = ',', default_value = "ls-lbfgs,tr-lbfgs,sgd")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "100,500")]
    batch_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5,20")]
    memories: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    let code = match Cli::parse().command {
        Command::Run(args) => run_cmd(args),
        Command::ProbeBound(args) => probe_cmd(args),
        Command::Timing(args) => timing_cmd(args),
    };
    exit(code);
}

fn fail(err: qnopt::Error) -> i32 {
    eprintln!("qnbench: {err}");
    exit_code(&err)
}

fn run_cmd(args: RunArgs) -> i32 {
    let result = RunConfig::load(args.config.as_deref(), std::env::var(DATA_DIR_ENV).ok(), args.overrides())
        .and_then(|cfg| run(&cfg))
        .and_then(|report| write_artifacts(&args.out, &report).map(|()| report));
    match result {
        Ok(report) => {
            println!("{}", report.summary.to_json());
            if report.converged() {
                EXIT_OK
            } else {
                eprintln!("qnbench: not converged after {} iterations", report.summary.iterations);
                EXIT_NOT_CONVERGED
            }
        }
        Err(e) => fail(e),
    }
}

fn probe_cmd(a: ProbeArgs) -> i32 {
    let cfg = ProbeConfig {
        lambda: a.lambda,
        big_lambda: a.big_lambda,
        dim: a.dim,
        alpha: a.alpha,
        iters: a.iters,
        batch: a.batch,
        samples: a.samples,
        noise: a.noise,
        memory: a.memory,
        seed: a.seed,
    };
    match probe_bound(&cfg).and_then(|r| write_probe(&a.out, &r).map(|()| r)) {
        Ok(r) => {
            println!(
                "final offset {:.3e}  fitted rate {:.4}  contraction bound {:.4}  plateau {:.3e}  residual term {:.3e}  bound holds: {}",
                r.final_offset(),
                r.fitted_rate,
                r.contraction,
                r.plateau,
                r.residual_term,
                r.bound_holds
            );
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}

fn timing_cmd(a: TimingArgs) -> i32 {
    let cfg = TimingConfig {
        task: a.task,
        methods: a.methods,
        batch_sizes: a.batch_sizes,
        memories: a.memories,
        iters: a.iters,
        lr: a.lr,
        seed: a.seed,
    };
    match timing_compare(&cfg).and_then(|rows| write_timing(&a.out, &rows).map(|()| rows)) {
        Ok(rows) => {
            for r in rows {
                println!(
                    "{:>9} b={:<5} m={:<3} iters={:<4} fevals={:<5} wall={:.1} ms",
                    r.method.name(),
                    r.b,
                    r.m,
                    r.iterations,
                    r.fevals,
                    r.wall_ms
                );
            }
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}
