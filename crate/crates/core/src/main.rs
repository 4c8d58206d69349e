use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use aligned_mtl::aggregate::{align, Method, TaskWeights};
use aligned_mtl::diagnostics::{stability_report, StabilityReport};
use aligned_mtl::io::{read_metric_table, GradientDump};
use aligned_mtl::optim::{OptimizerConfig, OptimizerKind};
use aligned_mtl::synthetic::{
    build_oracle, run_benchmark, BenchmarkConfig, Bounds, H2Grouping, ParetoOracle, SyntheticObjective, Theta2,
    DEFAULT_LR, DEFAULT_STEPS, INIT_POINTS,
};
use aligned_mtl::toy::{
    delta_m, descent_bound_violations, train, DeltaMode, MultiTaskProblem, QuadraticSuite, RegressionProblem,
    TrainConfig,
};
use aligned_mtl::trajectory::Trajectory;
use aligned_mtl::Error;

/// Gradient alignment for multi-task optimization.
#[derive(Parser)]
#[command(name = "amtl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align a gradient matrix read from CSV and report balance coefficients.
    Align(AlignArgs),
    /// Print a stability report for each gradient matrix.
    Diagnose(DiagnoseArgs),
    /// Run the two-task synthetic benchmark.
    Synthetic(SyntheticArgs),
    /// Evaluate the synthetic objective on a grid.
    Oracle(OracleArgs),
    /// Train a toy multi-task problem.
    TrainToy(TrainToyArgs),
    /// Relative performance drop against single-task baselines.
    DeltaM(DeltaMArgs),
}

#[derive(Args)]
struct AlignArgs {
    /// CSV file: a header of task names, then one row per parameter.
    input: PathBuf,
    /// Comma-separated task weights [default: uniform].
    #[arg(long)]
    weights: Option<TaskWeights>,
    /// Output JSON file [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Gradient matrix CSV files, one per step.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output JSON-lines file [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SyntheticArgs {
    /// Aggregation method; repeat to compare several.
    #[arg(long = "method", default_value = "aligned-mtl")]
    methods: Vec<Method>,
    /// Start point `t1,t2`; repeat for several [default: the five standard points].
    #[arg(long = "init", allow_hyphen_values = true)]
    inits: Vec<Theta2>,
    /// Weights `α` of the objective `αL₁ + (1 − α)L₂`.
    #[arg(long, value_delimiter = ',', default_value = "0.5", conflicts_with = "weights")]
    alpha_grid: Vec<f64>,
    /// Explicit task weights instead of an α grid.
    #[arg(long)]
    weights: Option<TaskWeights>,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, default_value_t = DEFAULT_LR)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    record_stride: usize,
    #[arg(long, value_enum, default_value_t = GroupingArg::Mirrored)]
    grouping: GroupingArg,
    /// Grid points per axis of the reference oracle.
    #[arg(long, default_value_t = 1000)]
    oracle_resolution: usize,
    /// Smallest gap to the oracle optimum counted as reaching it.
    #[arg(long, default_value_t = 1e-2)]
    tolerance: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 1000)]
    resolution: usize,
    /// Square box `lo,hi` for both parameters.
    #[arg(long, default_value = "-10,10", allow_hyphen_values = true)]
    bounds: String,
    #[arg(long, default_value = "0.5,0.5")]
    weights: TaskWeights,
    #[arg(long, value_enum, default_value_t = GroupingArg::Mirrored)]
    grouping: GroupingArg,
    /// Output directory for `grid.csv` and `summary.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    Typeset,
    Parenthesized,
    Mirrored,
}

impl From<GroupingArg> for H2Grouping {
    fn from(g: GroupingArg) -> Self {
        match g {
            GroupingArg::Typeset => H2Grouping::Typeset,
            GroupingArg::Parenthesized => H2Grouping::Parenthesized,
            GroupingArg::Mirrored => H2Grouping::Mirrored,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Suite {
    /// Two planar quadratics with a chosen conflict angle and dominance.
    Conflict,
    /// Random quadratics behind a linear encoder.
    Quadratic,
    /// Linear encoder with two regression heads.
    Linear,
    /// Tanh encoder with three regression heads.
    Tanh,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Args)]
struct TrainToyArgs {
    #[arg(long, value_enum, default_value_t = Suite::Quadratic)]
    suite: Suite,
    #[arg(long, default_value = "aligned-mtl")]
    method: Method,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
    optimizer: OptimizerArg,
    /// Step size [default: 1/Λ for quadratic suites with SGD, else 0.01].
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated task weights [default: uniform].
    #[arg(long)]
    weights: Option<TaskWeights>,
    #[arg(long, default_value_t = 1)]
    record_stride: usize,
    /// Parameter dimension of the random quadratic suite.
    #[arg(long, default_value_t = 4)]
    dim: usize,
    /// Number of tasks of the random quadratic suite.
    #[arg(long, default_value_t = 2)]
    tasks: usize,
    /// Angle in degrees between the initial gradients of the conflict suite.
    #[arg(long, default_value_t = 135.0)]
    angle: f64,
    /// Norm ratio of the initial gradients of the conflict suite.
    #[arg(long, default_value_t = 10.0)]
    dominance: f64,
    /// Output directory for `trajectory.jsonl` and `summary.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Task,
    Metric,
    Both,
}

#[derive(Args)]
struct DeltaMArgs {
    /// CSV with columns task, metric, direction, baseline, model.
    table: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,
    /// Output JSON file [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<Error>() {
                Some(Error::ZeroGradient) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Align(a) => cmd_align(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Synthetic(a) => cmd_synthetic(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::TrainToy(a) => cmd_train_toy(a),
        Command::DeltaM(a) => cmd_delta_m(a),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> anyhow::Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn weights_for(weights: Option<TaskWeights>, tasks: usize) -> anyhow::Result<TaskWeights> {
    let w = weights.unwrap_or_else(|| TaskWeights::uniform(tasks));
    if w.len() != tasks {
        return Err(Error::DimensionMismatch {
            expected: tasks,
            found: w.len(),
        }
        .into());
    }
    Ok(w)
}

fn cmd_align(args: AlignArgs) -> anyhow::Result<()> {
    let dump = GradientDump::read(&args.input)?;
    let g = &dump.matrix;
    let w = weights_for(args.weights, g.cols())?;
    let result = align(g, &w)?;
    let pre = stability_report(g).ok();
    let post = stability_report(&result.aligned_matrix(g)?).ok();
    write_json(
        args.out.as_deref(),
        &json!({
            "tasks": dump.task_names,
            "weights": w,
            "alpha": result.alpha,
            "sigma": result.sigma,
            "rank": result.rank,
            "g_hat0": result.g_hat0,
            "weight_projections": result.weight_projections,
            "pre": pre,
            "post": post,
        }),
    )
}

fn cmd_diagnose(args: DiagnoseArgs) -> anyhow::Result<()> {
    let mut out = output(args.out.as_deref())?;
    for path in &args.inputs {
        let dump = GradientDump::read(path)?;
        if dump.matrix.is_zero() {
            return Err(anyhow::Error::new(Error::ZeroGradient).context(path.display().to_string()));
        }
        let report = stability_report(&dump.matrix).with_context(|| path.display().to_string())?;
        let mut value = serde_json::to_value(&report)?;
        value["input"] = json!(path.display().to_string());
        value["tasks"] = json!(dump.task_names);
        serde_json::to_writer(&mut out, &value)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn parse_bounds(s: &str) -> anyhow::Result<Bounds> {
    let (lo, hi) = s.split_once(',').context("bounds must be `lo,hi`")?;
    let (lo, hi): (f64, f64) = (lo.trim().parse()?, hi.trim().parse()?);
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        bail!("bounds must satisfy lo < hi, got {s}");
    }
    Ok(Bounds::square(lo, hi))
}

#[derive(Serialize)]
struct RunSummary {
    method: Method,
    init_index: usize,
    init: Theta2,
    weights: Vec<f64>,
    file: String,
    stop: aligned_mtl::trajectory::StopReason,
    steps_run: usize,
    final_theta: Vec<f64>,
    final_losses: Vec<f64>,
    final_l0: f64,
    oracle_l0: f64,
    l0_gap: f64,
    distance_to_optimum: f64,
    reached: bool,
    dominated: bool,
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> anyhow::Result<()> {
    let mut out = create(path)?;
    traj.write_jsonl(&mut out)
        .with_context(|| format!("writing {}", path.display()))
}

fn cmd_synthetic(args: SyntheticArgs) -> anyhow::Result<()> {
    if !(args.lr > 0.0 && args.lr.is_finite()) {
        bail!("--lr must be > 0");
    }
    let objective = SyntheticObjective::new(args.grouping.into());
    let inits = if args.inits.is_empty() {
        INIT_POINTS.to_vec()
    } else {
        args.inits.clone()
    };
    let weight_sets: Vec<TaskWeights> = match &args.weights {
        Some(w) => vec![weights_for(Some(w.clone()), 2)?],
        None => args
            .alpha_grid
            .iter()
            .map(|&a| {
                if !(0.0..=1.0).contains(&a) {
                    bail!("alpha must lie in [0, 1], got {a}");
                }
                Ok(TaskWeights::new(vec![a, 1.0 - a])?)
            })
            .collect::<anyhow::Result<_>>()?,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut oracles = Vec::new();
    let mut runs = Vec::new();
    for w in &weight_sets {
        let oracle = build_oracle(&objective, Bounds::default(), args.oracle_resolution, w)?;
        let tol = oracle.tolerance(args.tolerance);
        for &method in &args.methods {
            for (k, &init) in inits.iter().enumerate() {
                let cfg = BenchmarkConfig {
                    method,
                    init,
                    steps: args.steps,
                    lr: args.lr,
                    weights: w.clone(),
                    seed: args.seed,
                    record_stride: args.record_stride,
                    objective,
                };
                let traj = run_benchmark(&cfg)?;
                let file = format!("{}_init{}_w{}.jsonl", method.to_string().replace(':', "-"), k, w[0]);
                write_trajectory(&args.out.join(&file), &traj)?;
                runs.push(summarize_run(&cfg, k, file, &traj, &oracle, tol));
            }
        }
        oracles.push(oracle.summary());
    }
    write_json(
        Some(&args.out.join("summary.json")),
        &json!({
            "grouping": objective.grouping,
            "steps": args.steps,
            "lr": args.lr,
            "seed": args.seed,
            "tolerance": args.tolerance,
            "oracles": oracles,
            "runs": runs,
        }),
    )
}

fn summarize_run(
    cfg: &BenchmarkConfig,
    init_index: usize,
    file: String,
    traj: &Trajectory,
    oracle: &ParetoOracle,
    tol: f64,
) -> RunSummary {
    let last = traj.last();
    let opt = oracle.optimum_cell();
    let theta = Theta2::new(last.theta[0], last.theta[1]);
    RunSummary {
        method: cfg.method,
        init_index,
        init: cfg.init,
        weights: cfg.weights.as_slice().to_vec(),
        file,
        stop: traj.stop,
        steps_run: last.step,
        final_theta: last.theta.clone(),
        final_losses: last.losses.clone(),
        final_l0: last.l0,
        oracle_l0: opt.l0,
        l0_gap: last.l0 - opt.l0,
        distance_to_optimum: theta.distance(opt.theta),
        reached: last.l0 - opt.l0 <= tol,
        dominated: oracle.is_dominated(last.losses[0], last.losses[1], tol),
    }
}

fn cmd_oracle(args: OracleArgs) -> anyhow::Result<()> {
    let objective = SyntheticObjective::new(args.grouping.into());
    let oracle = build_oracle(&objective, parse_bounds(&args.bounds)?, args.resolution, &args.weights)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut grid = create(&args.out.join("grid.csv"))?;
    oracle.write_csv(&mut grid)?;
    grid.flush()?;
    let mut summary = serde_json::to_value(oracle.summary())?;
    summary["grouping"] = json!(objective.grouping);
    write_json(Some(&args.out.join("summary.json")), &summary)
}

fn cmd_train_toy(args: TrainToyArgs) -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (problem, quadratic): (Box<dyn MultiTaskProblem>, Option<QuadraticSuite>) = match args.suite {
        Suite::Conflict => {
            let s = QuadraticSuite::conflict(args.angle.to_radians(), args.dominance)?;
            (Box::new(s.clone()), Some(s))
        }
        Suite::Quadratic => {
            if args.dim == 0 || args.tasks == 0 {
                bail!("--dim and --tasks must be positive");
            }
            let s = QuadraticSuite::random(args.dim, args.tasks, &mut rng);
            (Box::new(s.clone()), Some(s))
        }
        Suite::Linear => (Box::new(RegressionProblem::linear_two_heads(args.seed)), None),
        Suite::Tanh => (Box::new(RegressionProblem::tanh_three_heads(args.seed)), None),
    };
    let w = weights_for(args.weights, problem.num_tasks())?;
    let lipschitz = quadratic.as_ref().map(|q| q.lipschitz(&w)).transpose()?;
    let kind = match args.optimizer {
        OptimizerArg::Sgd => OptimizerKind::Sgd,
        OptimizerArg::Adam => OptimizerKind::Adam,
    };
    let lr = match (args.lr, kind, lipschitz) {
        (Some(lr), _, _) => lr,
        (None, OptimizerKind::Sgd, Some(l)) => 1.0 / l,
        (None, _, _) => 0.01,
    };
    let optimizer = match kind {
        OptimizerKind::Sgd => OptimizerConfig::sgd(lr),
        OptimizerKind::Adam => OptimizerConfig::adam(lr),
    };
    let cfg = TrainConfig {
        method: args.method,
        optimizer,
        steps: args.steps,
        weights: w.clone(),
        seed: args.seed,
        record_stride: args.record_stride,
    };
    let run = train(problem.as_ref(), &cfg)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_trajectory(&args.out.join("trajectory.jsonl"), &run.trajectory)?;

    let optimum = match (&quadratic, args.suite) {
        (Some(q), _) => {
            let m = q.weighted_minimizer(&w)?;
            let (losses, _) = q.evaluate_at(&m)?;
            Some(json!({
                "theta": m,
                "l0": losses.iter().zip(w.as_slice()).map(|(l, w)| l * w).sum::<f64>(),
            }))
        }
        (None, Suite::Linear) => {
            let p = RegressionProblem::linear_two_heads(args.seed);
            Some(json!({ "l0": p.least_squares_optimum(&w)? }))
        }
        _ => None,
    };
    let violations = match (kind, lipschitz) {
        (OptimizerKind::Sgd, Some(l)) if args.record_stride == 1 => {
            Some(descent_bound_violations(&run.trajectory, lr, l, 1e-10).len())
        }
        _ => None,
    };
    let last = run.trajectory.last();
    let final_report: Option<&StabilityReport> = last.report.as_ref();
    write_json(
        Some(&args.out.join("summary.json")),
        &json!({
            "suite": args.suite,
            "config": cfg,
            "lipschitz": lipschitz,
            "stop": run.trajectory.stop,
            "steps_run": last.step,
            "final_losses": last.losses,
            "final_l0": last.l0,
            "final_report": final_report,
            "optimum": optimum,
            "descent_bound_violations": violations,
        }),
    )
}

fn cmd_delta_m(args: DeltaMArgs) -> anyhow::Result<()> {
    let table = read_metric_table(&args.table)?;
    let value = match args.mode {
        ModeArg::Task => json!({ "task_weighted": delta_m(&table, DeltaMode::Task)? }),
        ModeArg::Metric => json!({ "metric_weighted": delta_m(&table, DeltaMode::Metric)? }),
        ModeArg::Both => json!({
            "task_weighted": delta_m(&table, DeltaMode::Task)?,
            "metric_weighted": delta_m(&table, DeltaMode::Metric)?,
        }),
    };
    write_json(args.out.as_deref(), &value)
}
