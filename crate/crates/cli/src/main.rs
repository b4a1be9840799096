use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use haultrack::config::load_file;
use haultrack::path::format_waypoints;
use haultrack::pathgen::{generate, PathSpec};
use haultrack::sim::{format_log, parse_log, run_scenario, scenario_path};
use haultrack_cli::{outcome_from_metadata, plots, run_metadata, RunOutcome, RunSummary};

#[derive(Parser)]
#[command(name = "haultrack", version, about = "Heavy-truck path tracking: simulate, generate routes, summarise logs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario, or every *.toml in a directory with --batch.
    Run {
        #[arg(long, required_unless_present = "batch", conflicts_with = "batch")]
        config: Option<PathBuf>,
        #[arg(long)]
        batch: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Shorthand for --set sim.seed=N.
        #[arg(long)]
        seed: Option<u64>,
        /// Override a configuration key, e.g. --set nmpc.w1=2.0
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write a waypoint file from a segment spec (TOML).
    GenPath {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the run summary from an existing log.
    Summarize {
        #[arg(long)]
        log: PathBuf,
        /// Defaults to run.meta next to the log.
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const LOG_FILE: &str = "log.csv";
const SUMMARY_FILE: &str = "summary.txt";
const META_FILE: &str = "run.meta";

/// Runs one scenario into `out`. Returns the outcome; configuration and I/O
/// problems are errors.
fn run_one(config: &Path, out: &Path, overrides: &[String]) -> Result<RunOutcome> {
    let cfg = load_file(config, overrides)?;
    let path = scenario_path(&cfg, config.parent()).context("building the scenario path")?;
    let t0 = Instant::now();
    let run = run_scenario(&cfg, &path)?;
    let outcome = RunOutcome::from_status(&run.status, t0.elapsed().as_secs_f64());

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(LOG_FILE), format_log(&run.rows))?;
    let summary = RunSummary::from_rows(&run.rows, Some(outcome.clone()));
    fs::write(out.join(SUMMARY_FILE), summary.to_text())?;
    fs::write(out.join(META_FILE), run_metadata(&cfg, &config.display().to_string(), &outcome))?;
    for (name, svg) in plots(&run.rows) {
        fs::write(out.join(name), svg)?;
    }
    Ok(outcome)
}

fn report(name: &str, res: &Result<RunOutcome>) -> bool {
    match res {
        Ok(o) if o.completed => {
            println!("{name}: completed in {:.2} s", o.wall_time);
            true
        }
        Ok(o) => {
            eprintln!("{name}: not completed: {}", o.reason.as_deref().unwrap_or("unknown"));
            false
        }
        Err(e) => {
            eprintln!("{name}: error: {e:#}");
            false
        }
    }
}

fn cmd_run(config: Option<PathBuf>, batch: Option<PathBuf>, out: PathBuf, seed: Option<u64>, mut overrides: Vec<String>) -> Result<bool> {
    if let Some(s) = seed {
        overrides.push(format!("sim.seed={s}"));
    }
    if let Some(config) = config {
        return Ok(report(&config.display().to_string(), &run_one(&config, &out, &overrides)));
    }
    let dir = batch.expect("clap enforces --config or --batch");
    let mut configs: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    configs.sort();
    if configs.is_empty() {
        bail!("no *.toml scenarios in {}", dir.display());
    }
    let results: Vec<(String, Result<RunOutcome>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| {
                let stem = c.file_stem().unwrap().to_string_lossy().into_owned();
                let dest = out.join(&stem);
                let overrides = &overrides;
                (stem, scope.spawn(move || run_one(c, &dest, overrides)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(stem, h)| (stem, h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("scenario thread panicked")))))
            .collect()
    });
    let mut all = true;
    for (name, res) in &results {
        all &= report(name, res);
    }
    Ok(all)
}

fn cmd_gen_path(spec: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec: PathSpec = toml::from_str(&text).context("parsing the path spec")?;
    let wps = generate(&spec)?;
    fs::write(out, format_waypoints(&wps)).with_context(|| format!("writing {}", out.display()))?;
    println!("{} waypoints, {:.1} m", wps.len(), spec.total_length());
    Ok(())
}

fn cmd_summarize(log: &Path, meta: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let text = fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
    let rows = parse_log(&text)?;
    let meta = meta.unwrap_or_else(|| log.with_file_name(META_FILE));
    let outcome = fs::read_to_string(&meta).ok().and_then(|m| outcome_from_metadata(&m));
    let summary = RunSummary::from_rows(&rows, outcome).to_text();
    match out {
        Some(p) => fs::write(&p, summary).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{summary}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { config, batch, out, seed, overrides } => cmd_run(config, batch, out, seed, overrides),
        Cmd::GenPath { spec, out } => cmd_gen_path(&spec, &out).map(|_| true),
        Cmd::Summarize { log, meta, out } => cmd_summarize(&log, meta, out).map(|_| true),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
