//! `jamcons` command-line front end.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{empirical_bound_check, AnalysisError, BoundParams, McSummary};
use crate::config::{ConfigError, Experiment, SeedsSpec};
use crate::engine::{consensus_times, simulate, AttackModel, ConsensusTimes, SimError};
use crate::output;
use crate::parallel::{map_ordered, Execution};
use crate::verify::{verify_trajectory, CheckResult, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "jamcons",
    version,
    about = "Consensus under jamming attacks with randomized transmissions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one run and write trajectory, attempt log and summary.
    Run(CommonArgs),
    /// Monte Carlo statistics over the configured seeds for every sweep cell.
    Sweep(CommonArgs),
    /// Monte Carlo statistics over the configured seeds.
    Montecarlo(CommonArgs),
    /// Run the invariant checks on every configured seed.
    Verify(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `seed` (and the start of a seed range).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for batch commands; 1 runs sequentially.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Fixed horizon in seconds, replacing the configured one.
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Params(p) => Self::Config(p.into()),
            SimError::Attack(a) => Self::Config(a.into()),
            SimError::Config(m) => Self::Config(ConfigError::Invalid(m)),
            other => Self::Other(other.into()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Sim(s) => s.into(),
            other => Self::Other(other.into()),
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Config(_) => EXIT_CONFIG,
                CliError::Verify(_) => EXIT_VERIFY,
                CliError::Other(_) => EXIT_IO,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Montecarlo(a) => cmd_montecarlo(&a),
        Command::Verify(a) => cmd_verify(&a),
    }
}

fn load(args: &CommonArgs) -> Result<Experiment, CliError> {
    let mut spec = crate::config::ExperimentSpec::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
        spec.seeds = spec.seeds.map(|s| match s {
            SeedsSpec::Range { count, .. } => SeedsSpec::Range { start: seed, count },
            SeedsSpec::List(v) => SeedsSpec::Range {
                start: seed,
                count: v.len() as u64,
            },
        });
    }
    let mut exp = Experiment::from_spec(spec)?;
    if let Some(h) = args.horizon {
        exp.set_horizon(h)?;
    }
    Ok(exp)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn out_dir(args: &CommonArgs) -> anyhow::Result<&Path> {
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create output directory {}", args.out.display()))?;
    Ok(&args.out)
}

fn finish(mut w: BufWriter<File>) -> anyhow::Result<()> {
    w.flush().context("write failed")
}

fn cmd_run(args: &CommonArgs) -> Result<(), CliError> {
    let exp = load(args)?;
    let cfg = exp.run_config(exp.spec.seed);
    let tr = simulate(&cfg)?;
    let times = consensus_times(&tr, exp.graph(), cfg.params.epsilon);
    let dir = out_dir(args)?;

    let mut w = create(dir, "trajectory.csv")?;
    output::write_trajectory_csv(&mut w, &tr).context("trajectory.csv")?;
    finish(w)?;
    let mut w = create(dir, "attempts.csv")?;
    output::write_attempts_csv(&mut w, &tr).context("attempts.csv")?;
    finish(w)?;
    if !matches!(
        cfg.attack,
        AttackModel::Deterministic {
            attack: crate::attacks::DeterministicAttack::Periodic(_),
            ..
        }
    ) {
        let mut w = create(dir, "attacks.csv")?;
        output::write_intervals_csv(&mut w, &tr).context("attacks.csv")?;
        finish(w)?;
    }
    let summary = output::RunSummary::new(&cfg, &tr, times);
    let mut w = create(dir, "summary.json")?;
    output::write_json(&mut w, &summary).context("summary.json")?;
    finish(w)?;
    if times.settling.is_none() {
        eprintln!("warning: no consensus within the horizon {}", cfg.horizon);
    }
    println!(
        "{}: settling {} first_entry {} ({} events)",
        exp.spec.name,
        show(times.settling),
        show(times.first_entry),
        tr.num_events()
    );
    Ok(())
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |t| format!("{t:.6}"))
}

fn batch_times(
    exp: &Experiment,
    template: &crate::analysis::RunTemplate,
    exec: Execution,
) -> Result<Vec<ConsensusTimes>, CliError> {
    let eps = template.base.params.epsilon;
    let graph = &template.base.graph;
    let results = map_ordered(exec, &exp.seeds, |&seed| {
        template
            .run(seed)
            .map(|tr| consensus_times(&tr, graph, eps))
    });
    Ok(results.into_iter().collect::<Result<Vec<_>, _>>()?)
}

fn metric_times(exp: &Experiment, times: &[ConsensusTimes]) -> Vec<Option<f64>> {
    times
        .iter()
        .map(|t| match exp.spec.metric {
            crate::analysis::TimeMetric::Settling => t.settling,
            crate::analysis::TimeMetric::FirstEntry => t.first_entry,
        })
        .collect()
}

fn cmd_montecarlo(args: &CommonArgs) -> Result<(), CliError> {
    let exp = load(args)?;
    if exp.seeds.len() < 2 {
        return Err(ConfigError::Invalid("montecarlo needs at least two seeds".into()).into());
    }
    let exec = Execution::from_workers(args.workers);
    let times = batch_times(&exp, &exp.template, exec)?;
    let dir = out_dir(args)?;
    let mut w = create(dir, "montecarlo.csv")?;
    output::write_montecarlo_csv(&mut w, &exp.seeds, &times).context("montecarlo.csv")?;
    finish(w)?;
    let summary = McSummary::from_times(exp.spec.metric, metric_times(&exp, &times))?;
    let mut w = create(dir, "montecarlo.json")?;
    output::write_json(&mut w, &summary).context("montecarlo.json")?;
    finish(w)?;
    println!(
        "{}: m_C {:.6} s_C {} over {} runs ({} unsettled)",
        exp.spec.name,
        summary.mean,
        show(summary.std_dev),
        summary.runs,
        summary.unsettled
    );
    Ok(())
}

fn cmd_sweep(args: &CommonArgs) -> Result<(), CliError> {
    let exp = load(args)?;
    let sweep = exp
        .spec
        .sweep
        .clone()
        .ok_or_else(|| ConfigError::Invalid("config has no sweep section".into()))?;
    if exp.seeds.len() < 2 {
        return Err(ConfigError::Invalid("sweep needs at least two seeds".into()).into());
    }
    let cells = sweep.cells()?;
    let templates = cells
        .iter()
        .map(|c| exp.cell_template(c))
        .collect::<Result<Vec<_>, _>>()?;
    // One flat job list keeps every worker busy across cells.
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| exp.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let exec = Execution::from_workers(args.workers);
    let results = map_ordered(exec, &jobs, |&(c, seed)| {
        let t = &templates[c];
        t.run(seed)
            .map(|tr| consensus_times(&tr, &t.base.graph, t.base.params.epsilon))
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(cells.len());
    for (c, chunk) in results.chunks(exp.seeds.len()).enumerate() {
        let summary = match McSummary::from_times(exp.spec.metric, metric_times(&exp, chunk)) {
            Ok(s) => Ok(s),
            Err(AnalysisError::AllRunsUnsettled { runs }) => Err(runs),
            Err(e) => return Err(e.into()),
        };
        rows.push((cells[c], summary));
    }
    let dir = out_dir(args)?;
    let mut w = create(dir, "sweep.csv")?;
    output::write_sweep_csv(&mut w, &rows).context("sweep.csv")?;
    finish(w)?;
    println!(
        "{}: {} cells x {} seeds",
        exp.spec.name,
        cells.len(),
        exp.seeds.len()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SeedReport {
    seed: u64,
    checks: Vec<CheckResult>,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    name: String,
    pass: bool,
    runs: Vec<SeedReport>,
}

fn cmd_verify(args: &CommonArgs) -> Result<(), CliError> {
    let exp = load(args)?;
    let budget = exp.template.base.attack.budget();
    let opts = VerifyOptions {
        budget,
        expect_consensus: exp.spec.verify.expect_consensus,
        integrator_step: exp.spec.verify.integrator_step,
    };
    let exec = Execution::from_workers(args.workers);
    let graph = exp.graph();
    let results = map_ordered(exec, &exp.seeds, |&seed| {
        exp.template.run(seed).map(|tr| SeedReport {
            seed,
            checks: verify_trajectory(&tr, graph, &opts),
        })
    });
    let mut runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    if let Some(spec) = &exp.spec.verify.block_bound {
        let check = block_bound_check(&exp, spec, exec)?;
        // Reported once, under the first seed.
        if let Some(first) = runs.first_mut() {
            first.checks.push(check);
        }
    }
    let pass = runs.iter().all(|r| r.checks.iter().all(|c| c.pass));
    let report = VerifyReport {
        name: exp.spec.name.clone(),
        pass,
        runs,
    };
    let dir = out_dir(args)?;
    let mut w = create(dir, "verify.json")?;
    output::write_json(&mut w, &report).context("verify.json")?;
    finish(w)?;

    let mut failed = Vec::new();
    for run in &report.runs {
        for c in &run.checks {
            if !c.pass {
                failed.push(format!("seed {}: {} ({})", run.seed, c.name, c.detail));
            }
        }
    }
    let names: Vec<&str> = report
        .runs
        .first()
        .map(|r| r.checks.iter().map(|c| c.name.as_str()).collect())
        .unwrap_or_default();
    for name in names {
        let ok = report
            .runs
            .iter()
            .all(|r| r.checks.iter().filter(|c| c.name == name).all(|c| c.pass));
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed.join("; ")))
    }
}

fn block_bound_check(
    exp: &Experiment,
    spec: &crate::config::BlockBoundSpec,
    exec: Execution,
) -> Result<CheckResult, CliError> {
    let AttackModel::Aware(budget) = exp.template.base.attack else {
        return Err(ConfigError::Invalid("verify.block_bound needs an aware attack".into()).into());
    };
    let delta = exp
        .template
        .base
        .params
        .common_delta()
        .ok_or(crate::attacks::AttackError::NonuniformDelta)
        .map_err(ConfigError::from)?;
    let params = BoundParams::new(budget.kappa, budget.rho, delta)?;
    let mut template = exp.template.clone();
    template.base.stop_at_quiescence = false;
    let n = template.base.graph.n();
    let series = map_ordered(exec, &exp.seeds, |&seed| {
        template
            .run(seed)
            .map(|tr| (0..n).map(|i| tr.success_series(i)).collect::<Vec<_>>())
    });
    let series = series.into_iter().collect::<Result<Vec<_>, _>>()?;
    let tails: Vec<(u64, u64)> = spec.tails.iter().map(|t| (t[0], t[1])).collect();
    let report = empirical_bound_check(&series, &params, &tails, spec.min_blocks)?;
    let worst = report
        .per_agent
        .iter()
        .map(|a| a.frequency)
        .fold(f64::INFINITY, f64::min);
    let mut detail = format!(
        "bound 2q^gamma = {:e} (gamma = {}), lowest agent frequency {worst:.4}",
        params.block_bound(),
        params.gamma
    );
    for t in &report.tails {
        detail.push_str(&format!(
            "; P[>= {} of {} blocks] = {:.4} vs bound {:.4}",
            t.m, t.n_blocks, t.empirical, t.bound
        ));
    }
    Ok(CheckResult {
        name: "block_bound".into(),
        pass: report.pass(),
        detail,
    })
}
