//! The `mgritopt` command line: `seq`, `mgrit`, `tables` and `speedup`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mgritopt_core::analysis::{Figure, FigureRecorder};
use mgritopt_core::exec::Executor;
use mgritopt_core::mgrit::{coarsest_span, IterationView, Monitor};
use mgritopt_core::problems::{Problem, ProblemDescriptor};
use mgritopt_core::sequential::Storage;
use mgritopt_core::speedup::{estimate, optimal_m};
use mgritopt_core::{
    adaptive_horizon_solve, run_sequential, AdaptiveConfig, ConvergenceReport, GeneralizedGradient,
    GrowthPolicy, Method, MgritConfig, MgritSolver, Propagator, SequentialConfig,
};
use serde::Serialize;

use crate::config::{PartialSettings, Settings, THREADS_ENV};
use crate::exec::ThreadPoolExecutor;
use crate::io::{self, Checkpoint};
use crate::timing::{measure_alpha, AlphaMeasurement};

/// Exit status for a converged run.
pub const EXIT_OK: i32 = 0;
/// Exit status for invalid configuration or unreadable input.
pub const EXIT_CONFIG: i32 = 1;
/// Exit status for a run that stalled or hit its iteration cap.
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Table cell for a run that did not converge.
pub const SENTINEL: &str = "-";

#[derive(Debug, Parser)]
#[command(
    name = "mgritopt",
    version,
    about = "Parallel-in-iteration optimization with MGRIT"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sequential optimizer to tolerance and store its trajectory.
    Seq(RunArgs),
    /// Solve the iteration trajectory with MGRIT.
    Mgrit(RunArgs),
    /// Sweep MGRIT iteration counts over n, m and the number of levels.
    Tables(RunArgs),
    /// Estimate the speedup at the optimal coarsening factor.
    Speedup(RunArgs),
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunArgs {
    /// mp1, mp2-1d or mp2-2d.
    #[arg(long)]
    pub problem: Option<String>,
    /// Interior points per direction; a list such as `32,48` for tables.
    #[arg(long)]
    pub n: Option<String>,
    /// Coarsening factor; a list for tables.
    #[arg(long)]
    pub m: Option<String>,
    /// Number of levels, or a range such as `2..7`.
    #[arg(long)]
    pub levels: Option<String>,
    /// Fine iteration count (default: found by a sequential run).
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coarse-to-fine step cost ratio; measured when absent.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Worker threads (falls back to MGRITOPT_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML settings file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// fas or linear.
    #[arg(long)]
    pub scheme: Option<String>,
    /// gd, prox-grad, prox-point or alt-prox (seq only).
    #[arg(long)]
    pub method: Option<String>,
    /// Grow the horizon over successive windows until the gradient target
    /// is met; --nt is the first window.
    #[arg(long)]
    pub adaptive: bool,
    /// Window growth factor for --adaptive.
    #[arg(long)]
    pub growth: Option<f64>,
    /// Write per-iteration figure data as CSV.
    #[arg(long)]
    pub figures: bool,
    /// Write the final trajectory as CSV.
    #[arg(long)]
    pub snapshots: bool,
    /// Keep every stride-th iterate in trajectory outputs.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Steps per timed batch when measuring alpha.
    #[arg(long)]
    pub repetitions: Option<usize>,
}

impl RunArgs {
    fn partial(&self) -> PartialSettings {
        PartialSettings {
            problem: self.problem.clone(),
            n: self.n.clone(),
            m: self.m.clone(),
            levels: self.levels.clone(),
            nt: self.nt,
            tol: self.tol,
            lambda: self.lambda,
            seed: self.seed,
            alpha: self.alpha,
            threads: self.threads,
            out: self.out.clone(),
            max_iter: self.max_iter,
            scheme: self.scheme.clone(),
            method: self.method.clone(),
            adaptive: self.adaptive.then_some(true),
            growth: self.growth,
            figures: self.figures.then_some(true),
            snapshots: self.snapshots.then_some(true),
            stride: self.stride,
            repetitions: self.repetitions,
        }
    }

    /// Resolves flags over the `--config` file over the defaults.
    pub fn settings(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(path) => PartialSettings::from_file(path)?,
            None => PartialSettings::default(),
        };
        let env = std::env::var(THREADS_ENV).ok();
        Ok(Settings::resolve(self.partial(), file, env.as_deref())?)
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_CONFIG
        }
    }
}

fn dispatch(command: &Command) -> Result<i32> {
    let (args, name) = match command {
        Command::Seq(a) => (a, "seq"),
        Command::Mgrit(a) => (a, "mgrit"),
        Command::Tables(a) => (a, "tables"),
        Command::Speedup(a) => (a, "speedup"),
    };
    let settings = args.settings()?;
    fs::create_dir_all(&settings.out)
        .with_context(|| format!("creating {}", settings.out.display()))?;
    let manifest = toml::to_string(&settings.to_manifest())?;
    fs::write(settings.out.join(format!("{name}_manifest.toml")), manifest)?;
    let exec = ThreadPoolExecutor::new(settings.threads)?;
    match command {
        Command::Seq(_) => cmd_seq(&settings),
        Command::Mgrit(_) => cmd_mgrit(&settings, &exec),
        Command::Tables(_) => cmd_tables(&settings, &exec),
        Command::Speedup(_) => cmd_speedup(&settings, &exec),
    }
}

fn exit_code(converged: bool) -> i32 {
    if converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    }
}

fn build_problem(settings: &Settings, n: usize) -> Result<Problem> {
    let mut d = ProblemDescriptor::new(settings.problem, n, settings.seed);
    d.lambda = settings.lambda;
    Ok(d.build()?)
}

/// `N_t` from the settings, or the sequential iteration count to tolerance.
fn fine_steps(settings: &Settings, problem: &Problem) -> Result<(usize, Option<usize>)> {
    if let Some(nt) = settings.nt {
        return Ok((nt, None));
    }
    let mut cfg = SequentialConfig::new(Method::baseline(problem));
    cfg.tol = settings.tol;
    cfg.storage = Storage::Strided(usize::MAX);
    let run = run_sequential(problem, &cfg, &problem.initial_condition())?;
    if !run.converged {
        bail!("sequential run did not reach the tolerance; pass --nt");
    }
    Ok((run.steps.max(1), Some(run.steps)))
}

fn mgrit_config(settings: &Settings, m: usize, levels: usize, nt: usize) -> MgritConfig {
    let mut cfg = MgritConfig::new(m, levels, nt);
    cfg.tol = settings.tol;
    cfg.max_iter = settings.max_iter;
    cfg.scheme = settings.scheme;
    cfg
}

#[derive(Serialize)]
struct SeqReport<'a> {
    command: &'static str,
    problem: &'a ProblemDescriptor,
    seed: u64,
    method: Method,
    step: f64,
    tol: f64,
    steps: usize,
    converged: bool,
    gradient_norms: &'a [f64],
}

#[derive(Serialize)]
struct Timing {
    total_seconds: f64,
    per_iteration_seconds: Vec<f64>,
}

fn cmd_seq(settings: &Settings) -> Result<i32> {
    let problem = build_problem(settings, settings.single("n")?)?;
    let method = settings.method.unwrap_or(Method::baseline(&problem));
    let mut cfg = SequentialConfig::new(method);
    cfg.tol = settings.tol;
    if let Some(nt) = settings.nt {
        cfg.max_iter = nt;
    }
    if settings.stride > 1 {
        cfg.storage = Storage::Strided(settings.stride);
    }
    let start = Instant::now();
    let run = run_sequential(&problem, &cfg, &problem.initial_condition())?;
    let total = start.elapsed().as_secs_f64();
    let out = &settings.out;
    io::write_json(
        &out.join("seq_report.json"),
        &SeqReport {
            command: "seq",
            problem: problem.descriptor(),
            seed: problem.seed(),
            method,
            step: run.step,
            tol: settings.tol,
            steps: run.steps,
            converged: run.converged,
            gradient_norms: &run.gradient_norms,
        },
    )?;
    io::write_json(
        &out.join("seq_timing.json"),
        &Timing {
            total_seconds: total,
            per_iteration_seconds: Vec::new(),
        },
    )?;
    io::save_checkpoint(
        &out.join("trajectory.bin"),
        &Checkpoint {
            problem: *problem.descriptor(),
            steps: run.steps,
            trajectory: run.trajectory.clone(),
        },
    )?;
    let rows: Vec<Vec<String>> = run
        .gradient_norms
        .iter()
        .enumerate()
        .map(|(k, g)| vec![k.to_string(), g.to_string()])
        .collect();
    io::write_rows(
        File::create(out.join("seq_gradients.csv"))?,
        &["iteration", "gradient_norm"],
        &rows,
    )?;
    println!(
        "{} n={} method={} steps={} converged={}",
        problem.kind().name(),
        problem.descriptor().n,
        method.name(),
        run.steps,
        run.converged
    );
    Ok(exit_code(run.converged))
}

/// Records the wall-clock time at which each iteration is observed.
struct Stopwatch {
    start: Instant,
    marks: Vec<f64>,
}

impl Monitor for Stopwatch {
    fn observe(&mut self, _: &IterationView<'_>) -> ControlFlow<()> {
        self.marks.push(self.start.elapsed().as_secs_f64());
        ControlFlow::Continue(())
    }
}

#[derive(Serialize)]
struct MgritReport<'a> {
    command: &'static str,
    problem: &'a ProblemDescriptor,
    seed: u64,
    sequential_steps: Option<usize>,
    convergence: &'a ConvergenceReport,
    residual_factors: Vec<f64>,
}

fn cmd_mgrit(settings: &Settings, exec: &ThreadPoolExecutor) -> Result<i32> {
    let problem = build_problem(settings, settings.single("n")?)?;
    let m = settings.single("m")?;
    let levels = settings.single("levels")?;
    let out = &settings.out;
    if settings.adaptive {
        let Some(nt) = settings.nt else {
            bail!("--adaptive needs --nt for the first window");
        };
        let mut cfg = AdaptiveConfig::new(mgrit_config(settings, m, levels, nt));
        cfg.gradient_tol = settings.tol;
        cfg.growth = GrowthPolicy::Geometric(settings.growth);
        let report = adaptive_horizon_solve(&problem, &cfg, exec)?;
        io::write_json(&out.join("adaptive_report.json"), &report)?;
        println!(
            "{} windows={} total_steps={} converged={}",
            problem.kind().name(),
            report.windows.len(),
            report.total_steps,
            report.converged
        );
        return Ok(exit_code(report.converged));
    }

    let (nt, sequential_steps) = fine_steps(settings, &problem)?;
    let solver = MgritSolver::new(&problem, mgrit_config(settings, m, levels, nt))?;
    let mut watch = Stopwatch {
        start: Instant::now(),
        marks: Vec::new(),
    };
    let solution = if settings.figures {
        let gg = GeneralizedGradient::new(&problem, solver.hierarchy().fine_step())?;
        let mut recorder = FigureRecorder::new(&problem, gg);
        let sol = solver.solve_with(exec, &mut (&mut watch, &mut recorder))?;
        for figure in [
            Figure::GradByIteration,
            Figure::ResByIteration,
            Figure::SpatialResidual,
        ] {
            let path = out.join(format!("{}.csv", figure.name()));
            io::write_figure_csv(BufWriter::new(File::create(path)?), &recorder.table(figure))?;
        }
        sol
    } else {
        solver.solve_with(exec, &mut watch)?
    };
    let total = watch.start.elapsed().as_secs_f64();
    let report = &solution.report;
    io::write_json(
        &out.join("mgrit_report.json"),
        &MgritReport {
            command: "mgrit",
            problem: problem.descriptor(),
            seed: problem.seed(),
            sequential_steps,
            convergence: report,
            residual_factors: report.residual_factors(),
        },
    )?;
    let per_iteration = std::iter::once(0.0)
        .chain(watch.marks.iter().copied())
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| w[1] - w[0])
        .collect();
    io::write_json(
        &out.join("mgrit_timing.json"),
        &Timing {
            total_seconds: total,
            per_iteration_seconds: per_iteration,
        },
    )?;
    if settings.snapshots {
        io::write_trajectory_csv(
            BufWriter::new(File::create(out.join("trajectory.csv"))?),
            &solution.trajectory,
            solution.n,
            settings.stride,
        )?;
    }
    println!(
        "{} n={} m={m} levels={levels} nt={} iterations={} halted={:?}",
        problem.kind().name(),
        problem.descriptor().n,
        report.padded_steps,
        report.iterations,
        report.halted
    );
    Ok(exit_code(report.converged()))
}

fn table_cell(
    settings: &Settings,
    problem: &Problem,
    m: usize,
    levels: usize,
    nt: usize,
    exec: &dyn Executor,
) -> Result<Option<String>> {
    let Ok(span) = coarsest_span(m, levels) else {
        return Ok(None);
    };
    if span > nt {
        return Ok(None);
    }
    let solver = MgritSolver::new(problem, mgrit_config(settings, m, levels, nt))?;
    let sol = solver.solve_with(exec, &mut ())?;
    Ok(Some(if sol.report.converged() {
        sol.report.iterations.to_string()
    } else {
        SENTINEL.to_string()
    }))
}

fn cmd_tables(settings: &Settings, exec: &ThreadPoolExecutor) -> Result<i32> {
    let mut header = vec!["n".to_string(), "nt".to_string(), "m".to_string()];
    header.extend(settings.levels.iter().map(|l| format!("levels_{l}")));
    let mut rows = Vec::new();
    let mut all_converged = true;
    for &n in &settings.n {
        let problem = build_problem(settings, n)?;
        let (nt, _) = fine_steps(settings, &problem)?;
        for &m in &settings.m {
            let mut row = vec![n.to_string(), nt.to_string(), m.to_string()];
            for &levels in &settings.levels {
                let cell = table_cell(settings, &problem, m, levels, nt, exec)?;
                all_converged &= cell.as_deref() != Some(SENTINEL);
                row.push(cell.unwrap_or_default());
            }
            println!("{}", row.join(","));
            rows.push(row);
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_rows(
        File::create(settings.out.join("tables.csv"))?,
        &header_refs,
        &rows,
    )?;
    Ok(exit_code(all_converged))
}

#[derive(Serialize)]
struct SpeedupRow {
    levels: usize,
    m: usize,
    iterations: Option<usize>,
    speedup: Option<f64>,
    processors: usize,
}

#[derive(Serialize)]
struct SpeedupReport<'a> {
    command: &'static str,
    problem: &'a ProblemDescriptor,
    fine_steps: usize,
    alpha: f64,
    alpha_measurement: Option<AlphaMeasurement>,
    rows: &'a [SpeedupRow],
}

fn cmd_speedup(settings: &Settings, exec: &ThreadPoolExecutor) -> Result<i32> {
    let problem = build_problem(settings, settings.single("n")?)?;
    let (nt, _) = fine_steps(settings, &problem)?;
    let measurement = match settings.alpha {
        Some(_) => None,
        None => {
            let s = 1.0 / problem.lipschitz();
            let kind = Method::baseline(&problem).kind();
            let fine = Propagator::new(&problem, kind, s)?;
            let coarse = Propagator::new(&problem, kind.implicit_analogue(), 4.0 * s)?;
            Some(measure_alpha(&fine, &coarse, settings.repetitions)?)
        }
    };
    let alpha = settings
        .alpha
        .or(measurement.map(|m| m.alpha))
        .expect("alpha given or measured");
    let nf = nt as f64;
    let mut rows = Vec::new();
    let mut all_converged = true;
    for &levels in &settings.levels {
        let m = optimal_m(levels, nf, alpha)?;
        if m < 2 || coarsest_span(m, levels).map_or(true, |span| span > nt) {
            bail!("optimal coarsening factor {m} is unusable for {levels} levels and N_t = {nt}");
        }
        let sol = MgritSolver::new(&problem, mgrit_config(settings, m, levels, nt))?
            .solve_with(exec, &mut ())?;
        let converged = sol.report.converged();
        all_converged &= converged;
        let est = estimate(levels, nf, alpha, m, sol.report.iterations.max(1))?;
        rows.push(SpeedupRow {
            levels,
            m,
            iterations: converged.then_some(sol.report.iterations),
            speedup: converged.then_some(est.speedup),
            processors: est.processors,
        });
    }
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.levels.to_string(),
                r.m.to_string(),
                r.iterations.map_or(SENTINEL.to_string(), |i| i.to_string()),
                r.speedup
                    .map_or(SENTINEL.to_string(), |s| format!("{s:.2}")),
                r.processors.to_string(),
            ]
        })
        .collect();
    let header = ["levels", "m", "iterations", "speedup", "processors"];
    println!("alpha={alpha:.3} nt={nt}");
    println!("{}", header.join(","));
    for r in &csv_rows {
        println!("{}", r.join(","));
    }
    io::write_rows(
        File::create(settings.out.join("speedup.csv"))?,
        &header,
        &csv_rows,
    )?;
    io::write_json(
        &settings.out.join("speedup_report.json"),
        &SpeedupReport {
            command: "speedup",
            problem: problem.descriptor(),
            fine_steps: nt,
            alpha,
            alpha_measurement: measurement,
            rows: &rows,
        },
    )?;
    Ok(exit_code(all_converged))
}
