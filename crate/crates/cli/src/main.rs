//! `homotopy-gym`: pretrain, transfer and evaluate motion policies.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use homotopy_gym::env::{describe_obs, obs_dim, Dynamics, EnvConfig, Robot};
use homotopy_gym::eval_harness::{
    converged_iteration, export_trajectory, robustness_grid, GridSpec, PolicyController,
};
use homotopy_gym::homotopy::interpolate_model;
use homotopy_gym::ppo::{read_metrics, Baseline, Checkpoint, Stage, Trainer};
use homotopy_gym::rigid_body::ArticulatedModel;
use homotopy_gym::Error;

use config::{load_model, load_task, resolve_train_config, RunDir};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("HOMOTOPY_GYM_GIT"), ")");

#[derive(Parser)]
#[command(name = "homotopy-gym", version = VERSION, about = "SRB pretraining and model-homotopy transfer for quadruped motions")]
struct Cli {
    /// Worker threads for environment stepping; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Bundled task name or path to a task file.
    #[arg(long)]
    task: String,
    /// Run seed; overrides the config file and `--set`. Defaults to 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; must not exist or be empty.
    #[arg(long)]
    out: PathBuf,
    /// Training config file (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single config override, e.g. `--set n_envs=16`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Robot description; the bundled quadruped by default.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Iteration budget (pretrain) or full-body iterations after the ramp (transfer).
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Ours,
    #[value(alias = "direct_transfer", alias = "dt")]
    Direct,
    Vanilla,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Trajectory,
    Robustness,
    Metrics,
}

#[derive(Clone, Copy, ValueEnum)]
enum World {
    Srb,
    Full,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train in the single-rigid-body world.
    Pretrain(TrainArgs),
    /// Move a pretrained policy to the full robot.
    Transfer {
        #[command(flatten)]
        train: TrainArgs,
        /// Pretrained checkpoint; ignored by the vanilla baseline.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "ours")]
        baseline: BaselineArg,
    },
    /// Evaluate a checkpoint or summarize a metrics log.
    Eval {
        #[arg(long, value_enum)]
        mode: EvalMode,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to the task stored in the checkpoint.
        #[arg(long)]
        task: Option<String>,
        /// Metrics CSV or run directory, for `--mode metrics`.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Disturbance directions per grid cell.
        #[arg(long, default_value_t = 100)]
        directions: usize,
        /// Force norms (N), comma separated.
        #[arg(long, value_delimiter = ',')]
        forces: Option<Vec<f64>>,
        /// Torque norms (N·m), comma separated.
        #[arg(long, value_delimiter = ',')]
        torques: Option<Vec<f64>>,
        /// World for trajectory export.
        #[arg(long, value_enum, default_value = "full")]
        world: World,
        /// Smoothing window for the converged iteration.
        #[arg(long, default_value_t = 100)]
        window: usize,
        /// Also write tidy long-format CSVs for plotting.
        #[arg(long)]
        plot_data: bool,
    },
    /// Check a task file and print its summary.
    ValidateTask { task: String },
    /// Print composite mass properties along the homotopy.
    InspectModel {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.25,0.5,0.75,1")]
        lambda: Vec<f64>,
    },
}

/// Exit codes: 1 for invalid inputs, 2 for runtime faults.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: if e.is_validation() { 1 } else { 2 }, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 2, message: e.to_string() }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

/// Thread count from `--workers`, capped by `HOMOTOPY_GYM_THREADS`.
fn worker_count(flag: Option<usize>) -> Result<usize, Failure> {
    let cap = match std::env::var("HOMOTOPY_GYM_THREADS") {
        Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| invalid(format!("HOMOTOPY_GYM_THREADS={s:?} is not a count")))?),
        Err(_) => None,
    };
    let wanted = flag.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok(cap.map_or(wanted, |c| wanted.min(c)).max(1))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let workers = worker_count(cli.workers)?;
    // evaluation parallelizes on the global pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    match cli.command {
        Cmd::Pretrain(args) => train(args, Stage::Srb, Baseline::Ours, None, "pretrain", workers),
        Cmd::Transfer { train: args, checkpoint, baseline } => {
            let baseline = match baseline {
                BaselineArg::Ours => Baseline::Ours,
                BaselineArg::Direct => Baseline::DirectTransfer,
                BaselineArg::Vanilla => Baseline::Vanilla,
            };
            train(args, Stage::Homotopy, baseline, checkpoint, "transfer", workers)
        }
        Cmd::Eval { mode, checkpoint, task, metrics, out, seed, model, directions, forces, torques, world, window, plot_data } => {
            std::fs::create_dir_all(&out)?;
            match mode {
                EvalMode::Metrics => eval_metrics(metrics.as_deref(), window, &out, plot_data),
                EvalMode::Trajectory | EvalMode::Robustness => {
                    let path = checkpoint.ok_or_else(|| invalid("--checkpoint is required for this mode"))?;
                    let ck = Checkpoint::load(&path)?;
                    let (task, _) = load_task(task.as_deref().unwrap_or(&ck.task))?;
                    if ck.policy.obs_dim() != obs_dim(&task) {
                        return Err(invalid(format!(
                            "checkpoint observes {} values but task '{}' provides {}",
                            ck.policy.obs_dim(),
                            task.name,
                            obs_dim(&task)
                        )));
                    }
                    let robot = Arc::new(Robot::new(load_model(model.as_deref())?.0, &EnvConfig::default())?);
                    let ctrl = PolicyController { policy: &ck.policy, estimator: Some(&ck.estimator) };
                    let task = Arc::new(task);
                    if let EvalMode::Trajectory = mode {
                        let dynamics = match world {
                            World::Srb => Dynamics::Srb,
                            World::Full => Dynamics::FullBody { lambda: 1.0 },
                        };
                        let log = export_trajectory(&ctrl, task, robot, dynamics, seed, &out.join("trajectory.csv"))?;
                        if plot_data {
                            log.write_long_csv(&out.join("trajectory_long.csv"))?;
                        }
                        println!("wrote {} rows to {}", log.rows.len(), out.join("trajectory.csv").display());
                    } else {
                        let mut spec = GridSpec { n_directions: directions, ..Default::default() };
                        if let Some(f) = forces {
                            spec.force_norms = f;
                        }
                        if let Some(t) = torques {
                            spec.torque_norms = t;
                        }
                        let grid = robustness_grid(&ctrl, &task, &robot, &spec, seed)?;
                        grid.write_csv(&out.join("robustness.csv"))?;
                        if plot_data {
                            grid.write_long_csv(&out.join("robustness_long.csv"))?;
                        }
                        println!("wrote {}", out.join("robustness.csv").display());
                    }
                    Ok(())
                }
            }
        }
        Cmd::ValidateTask { task } => {
            let (t, _) = load_task(&task)?;
            println!("task '{}' is valid", t.name);
            println!("  duration      {} s", t.duration);
            println!("  reward terms  {}", t.rewards.terms.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(", "));
            println!("  keyframes     {}", t.keyframes.len());
            println!("  tracking      {}", t.is_tracking());
            let layout: Vec<String> =
                describe_obs(&t).into_iter().map(|(n, r)| format!("{n} {}..{}", r.start, r.end)).collect();
            println!("  observation   {} values ({})", obs_dim(&t), layout.join(", "));
            Ok(())
        }
        Cmd::InspectModel { model, lambda } => {
            let (full, _) = load_model(model.as_deref())?;
            inspect(&full, &lambda)
        }
    }
}

fn train(
    args: TrainArgs,
    stage: Stage,
    baseline: Baseline,
    checkpoint: Option<PathBuf>,
    command: &str,
    workers: usize,
) -> Result<(), Failure> {
    let (task, task_text) = load_task(&args.task)?;
    let (model, model_text) = load_model(args.model.as_deref())?;
    let mut cfg = resolve_train_config(args.config.as_deref(), &args.overrides)?;
    cfg.stage = stage;
    cfg.baseline = baseline;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.iterations {
        match stage {
            Stage::Srb => cfg.pretrain_iterations = n,
            _ => cfg.finetune_iterations = n,
        }
    }
    cfg.validate()?;
    let init = match (baseline, &checkpoint) {
        (Baseline::Vanilla, _) => None,
        (_, Some(p)) => Some(Checkpoint::load(p)?),
        (_, None) if stage == Stage::Srb => None,
        (_, None) => return Err(invalid(format!("--checkpoint is required for the {baseline} baseline"))),
    };
    let robot = Arc::new(Robot::new(model, &EnvConfig::default())?);
    let task = Arc::new(task);
    // construct first so configuration problems surface before the run directory exists
    let mut trainer = Trainer::new(cfg.clone(), task.clone(), robot, init, workers)?;
    let run = RunDir::create(&args.out)?;
    run.write_snapshot(command, &cfg, &task.name, &task_text, &model_text, checkpoint.as_deref())?;
    let total = cfg.total_iterations();
    println!("{command}: task '{}', {} iterations, {} environments, seed {}", task.name, total, cfg.n_envs, cfg.seed);
    trainer.run(Some(run.path()), |row| {
        if row.iteration % 10 == 0 || row.iteration + 1 == total {
            let lambda = if row.lambda.is_nan() { "srb".to_string() } else { format!("λ={:.3}", row.lambda) };
            println!(
                "iter {:>5}  {:<9} return {:>9.3}  success {:.2}  kl {:.4}",
                row.iteration, lambda, row.mean_return, row.success_rate, row.kl
            );
        }
    })?;
    println!("done: {}", run.path().display());
    Ok(())
}

fn eval_metrics(metrics: Option<&Path>, window: usize, out: &Path, plot_data: bool) -> Result<(), Failure> {
    let path = metrics.ok_or_else(|| invalid("--metrics is required for --mode metrics"))?;
    let path = if path.is_dir() { path.join("metrics.csv") } else { path.to_path_buf() };
    let (terms, rows) = read_metrics(&path)?;
    let returns: Vec<f64> = rows.iter().map(|r| r.mean_return).collect();
    let converged = converged_iteration(&returns, window);
    let text = match converged {
        Some(i) => format!("converged_iteration = {i}\n"),
        None => format!("converged_iteration = none  # {} iterations, window {window}\n", returns.len()),
    };
    print!("{text}");
    std::fs::write(out.join("converged.txt"), &text)?;
    if plot_data {
        let mut long = String::from("iteration,variable,value\n");
        for r in &rows {
            let mut push = |name: &str, v: f64| long.push_str(&format!("{},{name},{v}\n", r.iteration));
            push("lambda", r.lambda);
            push("mean_return", r.mean_return);
            push("min_return", r.min_return);
            push("max_return", r.max_return);
            push("success_rate", r.success_rate);
            for (n, v) in terms.iter().zip(&r.terms) {
                push(n, *v);
            }
            push("estimator_loss", r.estimator_loss);
            push("kl", r.kl);
        }
        std::fs::write(out.join("metrics_long.csv"), long)?;
    }
    Ok(())
}

fn inspect(full: &ArticulatedModel, lambdas: &[f64]) -> Result<(), Failure> {
    println!("{:>6}  {:>9}  {:>26}  {:>30}  {:>9}", "lambda", "mass", "com (base frame)", "inertia diag", "leg mass");
    for &l in lambdas {
        let m = interpolate_model(full, l)?;
        let c = m.composite_nominal();
        let legs: f64 = m.links.iter().skip(1).map(|k| k.mass).sum();
        println!(
            "{l:>6.3}  {:>9.4}  [{:>7.4}, {:>7.4}, {:>7.4}]  [{:>8.5}, {:>8.5}, {:>8.5}]  {legs:>9.4}",
            c.mass,
            c.com.x,
            c.com.y,
            c.com.z,
            c.inertia[(0, 0)],
            c.inertia[(1, 1)],
            c.inertia[(2, 2)]
        );
    }
    Ok(())
}
