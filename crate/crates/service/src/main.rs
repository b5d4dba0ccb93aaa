use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use cfbd::report::{export_reports, Format};
use cfbd::simulator::{run_replicates_with, Execution};
use cfbd::{CohortOutcome, TrialState};
use cfbd_service::request::{NewTrial, SimulationRequest};
use cfbd_service::{router, ApiError, AppState};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cfbd", version, about = "Curve-free Bayesian decision-theoretic dose finding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "HOST", default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, env = "DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        /// Simulation worker threads (default: available cores).
        #[arg(long, env = "WORKERS")]
        workers: Option<usize>,
    },
    /// Simulate a scenario and write the operating-characteristics table.
    Simulate {
        /// Built-in scenario (`one-agent-3`, `3`, `two-agent-G`, `G`, ...)
        /// or a JSON scenario file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Defaults to the output file's extension, else csv.
        #[arg(long)]
        format: Option<String>,
        #[arg(long, value_enum)]
        design: Option<DesignChoice>,
        #[arg(long, env = "WORKERS")]
        workers: Option<usize>,
    },
    /// Conduct one trial interactively: enter the DLT count of each cohort.
    Conduct {
        /// JSON trial body, as accepted by `POST /trials`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        agents: Option<u8>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long)]
        calibrate: bool,
        /// Write the final trial state here.
        #[arg(long)]
        save: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignChoice {
    Cfbd,
    CCfbd,
    Both,
}

fn api_err(e: ApiError) -> anyhow::Error {
    match e.body.field {
        Some(f) => anyhow::anyhow!("{} (field `{f}`)", e.body.message),
        None => anyhow::anyhow!(e.body.message),
    }
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve {
            port,
            host,
            data_dir,
            workers,
        } => serve(SocketAddr::new(host, port), data_dir, workers).await,
        Command::Simulate {
            scenario,
            reps,
            seed,
            out,
            format,
            design,
            workers,
        } => tokio::task::spawn_blocking(move || simulate(&scenario, reps, seed, out, format, design, workers)).await?,
        Command::Conduct {
            config,
            agents,
            levels,
            rows,
            cols,
            calibrate,
            save,
        } => {
            let mut req: NewTrial = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => NewTrial::default(),
            };
            req.agents = agents.or(req.agents);
            req.levels = levels.or(req.levels);
            req.rows = rows.or(req.rows);
            req.cols = cols.or(req.cols);
            if calibrate {
                let mut c = req.config.take().unwrap_or_else(|| serde_json::json!({}));
                c["calibrate"] = true.into();
                req.config = Some(c);
            }
            let stdin = std::io::stdin();
            conduct(req, stdin.lock(), std::io::stdout().lock(), save)
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

async fn serve(addr: SocketAddr, data_dir: PathBuf, workers: Option<usize>) -> Result<()> {
    let workers = workers.unwrap_or_else(default_workers);
    let state = AppState::new(&data_dir, workers).with_context(|| format!("opening {}", data_dir.display()))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, data_dir = %data_dir.display(), workers, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn simulate(
    scenario: &str,
    reps: Option<u64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<String>,
    design: Option<DesignChoice>,
    workers: Option<usize>,
) -> Result<()> {
    let path = PathBuf::from(scenario);
    let mut base: SimulationRequest = if path.is_file() {
        serde_json::from_str(&std::fs::read_to_string(&path)?).with_context(|| format!("parsing {}", path.display()))?
    } else {
        SimulationRequest {
            scenario: Some(scenario.to_string()),
            ..Default::default()
        }
    };
    base.reps = reps.or(base.reps);
    base.seed = seed.or(base.seed);
    let file_sets_design = base
        .design
        .as_ref()
        .is_some_and(|d| d.get("calibrate").is_some());
    let variants: Vec<bool> = match design {
        Some(DesignChoice::Cfbd) => vec![false],
        Some(DesignChoice::CCfbd) => vec![true],
        Some(DesignChoice::Both) => vec![false, true],
        None if file_sets_design => vec![],
        None => vec![false, true],
    };
    let requests: Vec<SimulationRequest> = if variants.is_empty() {
        vec![base]
    } else {
        variants
            .into_iter()
            .map(|cal| {
                let mut r = base.clone();
                let mut d = r.design.take().unwrap_or_else(|| serde_json::json!({}));
                d["calibrate"] = cal.into();
                r.design = Some(d);
                r
            })
            .collect()
    };
    let execution = workers.map_or(Execution::Parallel, Execution::Workers);
    let mut results = Vec::new();
    for r in &requests {
        let sim = r.resolve().map_err(api_err)?;
        let started = std::time::Instant::now();
        let oc = run_replicates_with(&sim.scenario, &sim.config, &sim.grid, sim.reps, sim.seed, execution)?;
        tracing::info!(
            design = oc.design,
            scenario = oc.scenario,
            reps = oc.reps,
            elapsed_ms = started.elapsed().as_millis() as u64,
            "simulated"
        );
        results.push(oc);
    }
    let format: Format = match (&format, &out) {
        (Some(f), _) => f.parse()?,
        (None, Some(p)) if p.extension().is_some_and(|e| e == "json") => Format::Json,
        _ => Format::Csv,
    };
    let text = export_reports(&results, format)?;
    match out {
        Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn conduct(req: NewTrial, input: impl BufRead, mut out: impl Write, save: Option<PathBuf>) -> Result<()> {
    let (cfg, grid) = req.resolve().map_err(api_err)?;
    let mut state = TrialState::start(cfg, grid)?;
    writeln!(
        out,
        "{} trial, {} patients max, cohorts of {}. Enter DLTs per cohort; `q` quits.",
        state.config.design_name(),
        state.config.n_max,
        state.config.cohort_size
    )?;
    let mut lines = input.lines();
    while !state.is_stopped() {
        let n = state.next_cohort_size();
        write!(out, "cohort {}: treat {n} at dose {} > ", state.cohorts.len() + 1, state.current.label())?;
        out.flush()?;
        let Some(line) = lines.next().transpose()? else {
            writeln!(out)?;
            bail!("input ended before the trial stopped");
        };
        let line = line.trim();
        if line == "q" {
            writeln!(out, "stopped by user")?;
            break;
        }
        let t: u32 = match line.parse() {
            Ok(t) if t <= n => t,
            _ => {
                writeln!(out, "enter a DLT count between 0 and {n}")?;
                continue;
            }
        };
        state.report_cohort(CohortOutcome::new(state.current, n, t)?)?;
        let means: Vec<String> = state.grid.means().iter().map(|m| format!("{m:.3}")).collect();
        writeln!(
            out,
            "  n = {}, posterior means [{}], MTD estimate {}",
            state.n_total,
            means.join(", "),
            state.mtd_estimate.map_or("none".into(), |d| d.label())
        )?;
    }
    if state.is_stopped() {
        writeln!(
            out,
            "trial stopped ({:?}); recommended dose: {}",
            state.stop.reason(),
            state.recommendation.map_or("none".into(), |d| d.label())
        )?;
    }
    if let Some(p) = save {
        std::fs::write(&p, serde_json::to_vec_pretty(&state)?)?;
    }
    Ok(())
}
