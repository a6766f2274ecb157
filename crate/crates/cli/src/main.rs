use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::warn;

use nngtl_core::bench::{
    compare, generate_instances, read_instances, render_svg, report, shipped_suite, summarize, write_instances,
    write_summary, CompareConfig, Instance,
};
use nngtl_core::buchi::{compute_rho, feasible_accepting, parse_hoa, prune_infeasible, Nba};
use nngtl_core::encodings::{export_dataset, ExpertConfig, ExportStatus};
use nngtl_core::ltl::{ltl_to_nba, parse_ltl};
use nngtl_core::planner::{plan, Plan, PlanError, PlannerConfig, Problem};
use nngtl_core::prediction::{oracle_predict, Prediction};
use nngtl_core::sampling::{Strategy, DEFAULT_SIGMA_ANGLE};
use nngtl_core::workspace::{GenParams, GridWorkspace};

const EXIT_UNSAT: u8 = 2;
const EXIT_NO_PLAN: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "nngtl", version, about = "Sampling-based LTL task planning on labeled grid workspaces")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a reproducible batch of workspace/formula instances.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Grid side in cells.
        #[arg(long, default_value_t = 200)]
        size: usize,
        /// Number of labeled regions.
        #[arg(long, default_value_t = 7)]
        labels: usize,
    },
    /// Translate an LTL formula to a Büchi automaton (.json or .hoa by extension).
    Translate {
        #[arg(long)]
        ltl: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Automaton utilities.
    Nba {
        #[command(subcommand)]
        cmd: NbaCmd,
    },
    /// Plan for one workspace and task.
    Plan(PlanArgs),
    /// Run every strategy on a batch of instances and summarize.
    Compare(CompareArgs),
    /// Render a workspace, optionally with a plan and heatmap, as SVG.
    Render {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Prediction file whose heatmap is overlaid.
        #[arg(long)]
        heatmap: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the deterministic oracle prediction (.json, otherwise binary).
    PredictOracle {
        #[arg(long)]
        workspace: PathBuf,
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export network inputs and expert labels for a batch of instances.
    ExportDataset {
        /// Directory written by `generate`.
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Biased-planner iterations per expert plan.
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
    },
}

#[derive(Subcommand)]
enum NbaCmd {
    /// Print state count, feasible accepting states and distances from the initial state.
    Info {
        #[command(flatten)]
        task: TaskArgs,
    },
}

#[derive(Args)]
struct TaskArgs {
    /// Task formula.
    #[arg(long, conflicts_with_all = ["formula_file", "nba"])]
    ltl: Option<String>,
    /// File holding the task formula.
    #[arg(long)]
    formula_file: Option<PathBuf>,
    /// Automaton file, JSON or HOA.
    #[arg(long, conflicts_with = "formula_file")]
    nba: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    workspace: PathBuf,
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, default_value = "biased")]
    strategy: Strategy,
    /// Prediction file for guided sampling.
    #[arg(long)]
    prediction: Option<PathBuf>,
    /// Use the built-in oracle when guided sampling has no prediction file.
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    pd: f64,
    #[arg(long, default_value_t = DEFAULT_SIGMA_ANGLE)]
    sigma_angle: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 0.6)]
    gamma: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iters: usize,
    /// Seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop at the first feasible plan.
    #[arg(long)]
    first_solution: bool,
    /// Directory receiving plan.json and stats.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory written by `generate`; the shipped suite when omitted.
    #[arg(long)]
    instances: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "uniform,biased,guided")]
    strategies: Vec<Strategy>,
    #[arg(long, default_value_t = 3)]
    trials: u64,
    #[arg(long, default_value_t = 50_000)]
    max_iters: usize,
    /// Seconds per run.
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
    /// Uniform mean T (seconds) separating simple from complex instances.
    #[arg(long, default_value_t = 5.0)]
    simple_threshold: f64,
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Output directory for runs.csv, summary.csv and report.md.
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
}

/// Failures mapped to exit codes.
enum Failure {
    Usage(String),
    Unsat(String),
    NoPlan(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Unsat(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_UNSAT)
        }
        Err(Failure::NoPlan(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_NO_PLAN)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Generate { seed, count, out, size, labels } => {
            let params = scaled_params(size, labels);
            let instances = generate_instances(seed, count, &params).context("generating instances")?;
            write_instances(&out, seed, &instances).context("writing instances")?;
            println!("{} instances written to {}", instances.len(), out.display());
        }
        Cmd::Translate { ltl, out } => {
            let f = parse_ltl(&ltl).map_err(|e| Failure::Usage(format!("bad formula: {e}")))?;
            let nba = ltl_to_nba(&f);
            match out {
                None => print!("{}", nba.to_json() + "\n"),
                Some(path) => {
                    let text = if has_ext(&path, "hoa") { nba.to_hoa() } else { nba.to_json() + "\n" };
                    write(&path, &text)?;
                }
            }
        }
        Cmd::Nba { cmd: NbaCmd::Info { task } } => {
            let nba = prune_infeasible(&load_task(&task)?);
            let rho = compute_rho(&nba);
            println!("states: {}", nba.state_count());
            match feasible_accepting(&nba, &rho) {
                Ok(f) => println!("feasible accepting: {f:?}"),
                Err(_) => println!("feasible accepting: none"),
            }
            let row: Vec<String> =
                rho.row(nba.init()).iter().map(|d| d.map_or("inf".into(), |d| d.to_string())).collect();
            println!("rho from init {}: [{}]", nba.init(), row.join(", "));
        }
        Cmd::Plan(args) => cmd_plan(args)?,
        Cmd::Compare(args) => cmd_compare(args)?,
        Cmd::Render { workspace, plan, heatmap, out } => {
            let ws = load_workspace(&workspace)?;
            let plan = match plan {
                Some(p) => Some(Plan::from_json(&read(&p)?).with_context(|| format!("reading {}", p.display()))?),
                None => None,
            };
            let heat = match heatmap {
                Some(p) => Some(Prediction::load(&p).with_context(|| format!("reading {}", p.display()))?),
                None => None,
            };
            let svg = render_svg(&ws, plan.as_ref(), heat.as_ref()).map_err(|e| Failure::Usage(e.to_string()))?;
            write(&out, &svg)?;
        }
        Cmd::PredictOracle { workspace, task, lambda, out } => {
            let ws = load_workspace(&workspace)?;
            let problem = problem(ws, &load_task(&task)?)?;
            let pred = oracle_predict(&problem.ws, &problem.nba, &problem.rho, lambda).context("oracle prediction")?;
            pred.save(&out).with_context(|| format!("writing {}", out.display()))?;
        }
        Cmd::ExportDataset { instances, out, iterations, seed, lambda } => {
            let batch = read_instances(&instances).context("reading instances")?;
            let cfg = ExpertConfig { iterations, seed, lambda };
            let manifest = export_dataset(&batch, &out, &cfg).context("exporting dataset")?;
            let ok = manifest.instances.iter().filter(|e| e.status == ExportStatus::Ok).count();
            println!("{ok} of {} instances exported to {}", manifest.instances.len(), out.display());
        }
    }
    Ok(())
}

fn cmd_plan(a: PlanArgs) -> Result<(), Failure> {
    let cfg = PlannerConfig {
        lambda: a.lambda,
        eta: a.eta,
        gamma: a.gamma,
        max_iters: a.max_iters,
        time_limit: a.time_limit,
        strategy: a.strategy,
        alpha: a.alpha,
        p_d: a.pd,
        sigma_angle: a.sigma_angle,
        seed: a.seed,
        first_solution_only: a.first_solution,
        ..Default::default()
    };
    cfg.validate().map_err(Failure::Usage)?;
    if cfg.strategy == Strategy::Guided && a.prediction.is_none() && !a.oracle {
        return Err(Failure::Usage("guided sampling needs --prediction <file> or --oracle".into()));
    }
    let ws = load_workspace(&a.workspace)?;
    let mut p = problem(ws, &load_task(&a.task)?)?;
    let mut cfg = cfg;
    if cfg.strategy == Strategy::Guided {
        if let Some(path) = &a.prediction {
            let pred = Prediction::load(path).with_context(|| format!("reading {}", path.display()))?;
            p = p.with_prediction(pred).map_err(|e| Failure::Usage(e.to_string()))?;
        } else {
            match p.clone().with_oracle(cfg.lambda) {
                Ok(g) => p = g,
                Err(e) => {
                    warn!("oracle prediction failed ({e}); falling back to biased sampling");
                    cfg.strategy = Strategy::Biased;
                }
            }
        }
    }
    let (plan, stats) = plan(&p, &cfg).map_err(|e| match e {
        PlanError::Unsatisfiable => Failure::Unsat(e.to_string()),
        PlanError::NoPrefixFound { .. } | PlanError::NoPlanFound { .. } => Failure::NoPlan(e.to_string()),
        e => Failure::Other(e.into()),
    })?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write(&a.out.join("plan.json"), &(plan.to_json() + "\n"))?;
    write(&a.out.join("stats.json"), &(stats.to_json() + "\n"))?;
    println!("J = {:.6} (Jpre {:.6}, Jsuf {:.6}) after n = {}, m = {}", plan.j, plan.j_pre, plan.j_suf, stats.n, stats.m);
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<(), Failure> {
    let instances: Vec<Instance> = match &a.instances {
        Some(dir) => read_instances(dir).context("reading instances")?,
        None => shipped_suite().context("generating the shipped suite")?,
    };
    let planner = PlannerConfig {
        max_iters: a.max_iters,
        time_limit: Some(a.time_limit),
        alpha: a.alpha,
        lambda: a.lambda,
        first_solution_only: true,
        ..Default::default()
    };
    planner.validate().map_err(Failure::Usage)?;
    let cfg = CompareConfig {
        strategies: a.strategies,
        trials: a.trials,
        planner,
        simple_threshold: a.simple_threshold,
        workers: None,
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let records = compare(&instances, &cfg, &a.out.join("runs.csv")).context("running comparison")?;
    let rows = summarize(&records, cfg.simple_threshold);
    write_summary(&a.out.join("summary.csv"), &rows).context("writing summary")?;
    let text = report(&records, &rows);
    write(&a.out.join("report.md"), &text)?;
    print!("{text}");
    Ok(())
}

/// Default generation ranges, scaled from the 200-cell grid to `size`.
fn scaled_params(size: usize, labels: usize) -> GenParams {
    let d = GenParams::default();
    let s = |v: usize| (v * size / d.width).max(1);
    let r = |(lo, hi): (usize, usize)| (s(lo), s(hi).max(s(lo)));
    GenParams {
        width: size,
        height: size,
        m: labels,
        region_size: r(d.region_size),
        obstacle_size: r(d.obstacle_size),
        ..d
    }
}

fn problem(ws: GridWorkspace, nba: &Nba) -> Result<Problem, Failure> {
    Problem::new(ws, nba).map_err(|e| match e {
        PlanError::Unsatisfiable => Failure::Unsat(e.to_string()),
        e => Failure::Other(e.into()),
    })
}

fn load_task(t: &TaskArgs) -> Result<Nba, Failure> {
    let formula = match (&t.ltl, &t.formula_file, &t.nba) {
        (Some(text), _, _) => text.clone(),
        (_, Some(path), _) => read(path)?,
        (_, _, Some(path)) => {
            let text = read(path)?;
            let nba = if has_ext(path, "hoa") { parse_hoa(&text) } else { Nba::from_json(&text) };
            return nba.map_err(|e| Failure::Usage(format!("{}: {e}", path.display())));
        }
        _ => return Err(Failure::Usage("one of --ltl, --formula-file or --nba is required".into())),
    };
    let f = parse_ltl(formula.trim()).map_err(|e| Failure::Usage(format!("bad formula: {e}")))?;
    Ok(ltl_to_nba(&f))
}

fn load_workspace(path: &Path) -> Result<GridWorkspace, Failure> {
    Ok(GridWorkspace::load(path).with_context(|| format!("reading {}", path.display()))?)
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
