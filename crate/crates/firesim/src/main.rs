use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use firesim::server::{router, SimHandle};
use firesim_core::batch::{run_batch, BatchJob};
use firesim_core::{compare_traces, run, Scenario, SimConfig, Trace, TraceComparison};

#[derive(Parser)]
#[command(
    name = "firesim",
    version,
    about = "Deterministic fire-alert system simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write the canonical trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Logical milliseconds to simulate; defaults to the scenario's `duration_ms`.
        #[arg(long)]
        duration: Option<u64>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve the HTTP control API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Advance logical time on its own at this many ticks per second.
        #[arg(long)]
        pace: Option<f64>,
        /// Directory of static files (the operator console) to serve at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Compare two trace files and report the first divergence.
    Compare { a: PathBuf, b: PathBuf },
    /// Run several scenarios side by side, one trace file each.
    Batch {
        #[arg(long)]
        duration: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Option<SimConfig>> {
    path.map(SimConfig::load).transpose().map_err(Into::into)
}

fn resolve_duration(flag: Option<u64>, scenario: &Scenario, path: &Path) -> anyhow::Result<u64> {
    match flag.or(scenario.duration_ms) {
        Some(d) => Ok(d),
        None => bail!(
            "{}: no --duration given and the scenario has no duration_ms",
            path.display()
        ),
    }
}

fn cmd_run(
    scenario_path: &Path,
    duration: Option<u64>,
    trace_path: Option<&Path>,
    config: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    let scenario = Scenario::load(scenario_path)?;
    let config = load_config(config)?;
    let duration = resolve_duration(duration, &scenario, scenario_path)?;
    let outcome = run(&scenario, config.as_ref(), duration)?;
    if let Some(path) = trace_path {
        std::fs::write(path, outcome.trace.to_jsonl())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!(
        "{}: {} events over {} ms",
        scenario_path.display(),
        outcome.trace.len(),
        outcome.snapshot.now
    );
    match &outcome.failure {
        Some(f) => {
            eprintln!("expectation failed {f}");
            Ok(ExitCode::FAILURE)
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

fn cmd_compare(a: &Path, b: &Path) -> anyhow::Result<ExitCode> {
    let read = |p: &Path| -> anyhow::Result<Trace> {
        let text =
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Trace::from_jsonl(&text).with_context(|| format!("parsing {}", p.display()))
    };
    match compare_traces(&read(a)?, &read(b)?) {
        TraceComparison::Equal => {
            println!("equal");
            Ok(ExitCode::SUCCESS)
        }
        TraceComparison::Diverged { seq, field } => {
            println!("diverged at seq {seq}, field {field}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn cmd_batch(
    duration: Option<u64>,
    config: Option<&Path>,
    out_dir: &Path,
    paths: &[PathBuf],
) -> anyhow::Result<ExitCode> {
    let config = load_config(config)?;
    let jobs = paths
        .iter()
        .map(|p| {
            let scenario = Scenario::load(p)?;
            let duration_ms = resolve_duration(duration, &scenario, p)?;
            Ok(BatchJob {
                scenario,
                config: config.clone(),
                duration_ms,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir)?;
    let mut failed = false;
    for (path, result) in paths.iter().zip(run_batch(&jobs)) {
        let outcome = result?;
        let stem = path.file_stem().unwrap_or_default().to_string_lossy();
        std::fs::write(
            out_dir.join(format!("{stem}.jsonl")),
            outcome.trace.to_jsonl(),
        )?;
        match &outcome.failure {
            Some(f) => {
                failed = true;
                println!("FAIL {stem}: {f}");
            }
            None => println!("ok   {stem}: {} events", outcome.trace.len()),
        }
    }
    Ok(if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

async fn cmd_serve(
    port: u16,
    config: Option<&Path>,
    pace: Option<f64>,
    assets: Option<PathBuf>,
) -> anyhow::Result<ExitCode> {
    let config = load_config(config)?.unwrap_or_default();
    let handle = SimHandle::spawn(config, pace)?;
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(handle, assets))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            duration,
            trace,
            config,
        } => cmd_run(&scenario, duration, trace.as_deref(), config.as_deref()),
        Command::Compare { a, b } => cmd_compare(&a, &b),
        Command::Batch {
            duration,
            config,
            out_dir,
            scenarios,
        } => cmd_batch(duration, config.as_deref(), &out_dir, &scenarios),
        Command::Serve {
            port,
            config,
            pace,
            assets,
        } => tokio::runtime::Runtime::new()
            .map_err(anyhow::Error::from)
            .and_then(|rt| rt.block_on(cmd_serve(port, config.as_deref(), pace, assets))),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
