use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use confpaas_core::bench::{self, audit, report, Mode, ScenarioConfig, ScenarioRun};
use confpaas_core::events::read_jsonl;
use confpaas_core::sim::{IaasConfig, PlacementMode};
use confpaas_gateway::{iaas_server, rest, GatewayConfig, IaasServerConfig};

#[derive(Parser)]
#[command(name = "confpaas", version, about = "Conferencing PaaS benchmark driver and servers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its metrics.
    Run(RunArgs),
    /// Run the same workload in every mode and write side-by-side metrics.
    Compare(RunArgs),
    /// Replay an event log and check the scaling invariants.
    Audit {
        /// JSONL event log written by `run` or `compare`.
        log: PathBuf,
    },
    /// Serve the REST API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve one simulated IaaS provider over HTTP.
    ServeIaas {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "iaas-a")]
        provider: String,
        #[arg(long, default_value = "per_substrate")]
        placement: String,
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML). Defaults to the built-in growth scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the mode of the scenario file (`run` only).
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    repetitions: Option<u32>,
    /// Also write a gnuplot script.
    #[arg(long)]
    gnuplot: bool,
}

impl RunArgs {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                ScenarioConfig::from_toml(&text).with_context(|| format!("loading {}", p.display()))?
            }
            None => ScenarioConfig::new(self.mode.unwrap_or(Mode::Csip)),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.repetitions {
            cfg.repetitions = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// The report's mean join time must agree with the one recomputed from the
/// logs.
fn cross_check(run: &ScenarioRun) -> Result<()> {
    let events: Vec<_> = run.logs.iter().flat_map(|l| l.events()).collect();
    let from_log = audit::mean_join_ms(&events).unwrap_or(0.0);
    let reported = run.report.participant_join_time_ms.mean;
    if (from_log - reported).abs() > 1e-9 {
        bail!("{}: reported mean join {reported} ms, event log gives {from_log} ms", run.report.mode);
    }
    Ok(())
}

fn emit(args: &RunArgs, runs: &[ScenarioRun]) -> Result<()> {
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let reports: Vec<_> = runs.iter().map(|r| r.report.clone()).collect();
    for run in runs {
        cross_check(run)?;
        let mut jsonl = String::new();
        for log in &run.logs {
            jsonl.push_str(&log.to_jsonl());
        }
        write(&args.out, &format!("events-{}.jsonl", run.report.mode), &jsonl)?;
    }
    write(&args.out, "allocation.csv", &report::comparison_allocation_csv(&reports))?;
    write(&args.out, "latency.csv", &report::latency_csv(&reports))?;
    write(&args.out, "summary.json", &report::summary_json(&reports))?;
    if args.gnuplot {
        write(&args.out, "plot.gp", &report::gnuplot_script(&reports))?;
    }
    print!("{}", report::summary_table(&reports));
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = args.scenario()?;
    let run = bench::run_scenario(&cfg)?;
    emit(args, &[run])
}

fn compare(args: &RunArgs) -> Result<()> {
    let base = args.scenario()?;
    let configs: Vec<ScenarioConfig> = Mode::ALL.into_iter().map(|m| ScenarioConfig { mode: m, ..base.clone() }).collect();
    let runs = bench::compare_modes(&configs)?;
    emit(args, &runs)
}

fn audit_log(path: &Path) -> Result<bool> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let events = read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    let report = audit::audit(&events);
    println!("{} events, {} quiescent points, {} violations", report.events, report.quiescent_points, report.violations.len());
    for v in &report.violations {
        let conf = v.conference.as_ref().map(|c| c.as_str()).unwrap_or("-");
        println!("  t={}ms {conf} {}: {}", v.t_ms, v.rule, v.detail);
    }
    if let Some(mean) = audit::mean_join_ms(&events) {
        println!("mean join {mean:.3} ms");
    }
    Ok(report.is_ok())
}

async fn serve(config: Option<PathBuf>) -> Result<()> {
    let cfg = match config {
        Some(p) => GatewayConfig::load(&p)?,
        None => {
            let mut c = GatewayConfig::default();
            c.apply_env();
            c
        }
    };
    let orchestrator = cfg.build()?;
    let listener = tokio::net::TcpListener::bind(&cfg.listen).await.with_context(|| format!("binding {}", cfg.listen))?;
    println!("REST API on http://{}{}", listener.local_addr()?, rest::PREFIX);
    confpaas_gateway::server::serve(listener, rest::router(orchestrator)).await?;
    Ok(())
}

async fn serve_iaas(config: Option<PathBuf>, provider: String, placement: String, listen: Option<String>) -> Result<()> {
    let mut cfg = match config {
        Some(p) => IaasServerConfig::load(&p)?,
        None => {
            let placement: PlacementMode = parse_placement(&placement)?;
            IaasServerConfig::new(&provider, IaasConfig::new(placement))
        }
    };
    if let Some(l) = listen {
        cfg.listen = l;
    }
    let sim = Arc::new(Mutex::new(cfg.simulator()));
    let listener = tokio::net::TcpListener::bind(&cfg.listen).await.with_context(|| format!("binding {}", cfg.listen))?;
    println!("IaaS `{}` on http://{}", cfg.provider_id, listener.local_addr()?);
    confpaas_gateway::server::serve(listener, iaas_server::router(sim)).await?;
    Ok(())
}

fn parse_placement(placement: &str) -> Result<PlacementMode> {
    match placement {
        "bundle" => Ok(PlacementMode::Bundle),
        "per_substrate" => Ok(PlacementMode::PerSubstrate),
        "prealloc" => Ok(PlacementMode::Prealloc),
        other => bail!("unknown placement `{other}` (bundle, per_substrate or prealloc)"),
    }
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(&args)?,
        Command::Compare(args) => compare(&args)?,
        Command::Audit { log } => {
            if !audit_log(&log)? {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Serve { config } => runtime()?.block_on(serve(config))?,
        Command::ServeIaas { config, provider, placement, listen } => {
            runtime()?.block_on(serve_iaas(config, provider, placement, listen))?
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}
