use std::fs;
use std::io::{stdout, ErrorKind, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use neuroguide::bus::{Bag, Topic};
use neuroguide::classifier::FacetModels;
use neuroguide::policy::{Condition, HttpReasoner, Reasoner, RuleTable, DEFAULT_REASONER_TIMEOUT};
use neuroguide::sim::{
    fixture_models, metrics_from_bag, replay_session, run_session_with, run_study, train_models, AgentConfig, Driver, LagConfig,
    LoadScript, SessionConfig, StudyConfig, StudyReport, TrainingConfig, PRESETS,
};
use neuroguide::task::ChecklistSpec;
use neuroguide_gateway::{bind, serve, GatewayConfig};

#[derive(Parser)]
#[command(name = "neuroguide", version, about = "Neuroadaptive checklist guidance: simulate, study, replay and serve sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulated session and print its metrics as a JSON line.
    Run(RunArgs),
    /// Run a Latin-square study over all three conditions.
    Study(StudyArgs),
    /// Re-drive a recorded session and report on it.
    Replay(ReplayArgs),
    /// Print a bag as one human-readable line per record.
    Bagdump(BagdumpArgs),
    /// Serve the operator websocket for human sessions.
    Serve(ServeArgs),
    /// Fit the three facet models on synthetic training data.
    Train(TrainArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Directory holding memory.model, attention.model and perception.model.
    /// The bundled models are used when omitted.
    #[arg(long)]
    models: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<FacetModels> {
        match &self.models {
            Some(dir) => FacetModels::load_dir(dir).with_context(|| format!("loading models from {}", dir.display())),
            None => Ok(fixture_models()),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "adaptive")]
    condition: Condition,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Checklist JSON; the bundled nine-procedure checklist by default.
    #[arg(long)]
    checklist: Option<PathBuf>,
    /// Rule table JSON; the bundled table by default.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Load script preset driving the synthetic fNIRS stream.
    #[arg(long, default_value = "task_coupled")]
    script: String,
    /// Simulate a novice pilot instead of an experienced one.
    #[arg(long)]
    novice: bool,
    /// Probability that an action reaches the backend late.
    #[arg(long, default_value_t = 0.0)]
    lag: f64,
    #[arg(long, default_value_t = 1800.0)]
    time_cap_s: f64,
    /// Write the session bag here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the engine event log (JSON lines) here.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Write the guidance log (JSON lines) here.
    #[arg(long)]
    guidance: Option<PathBuf>,
    #[command(flatten)]
    models: ModelArgs,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, default_value_t = 6)]
    participants: usize,
    /// Number of independent study seeds; sessions from all of them are
    /// pooled into the top-level report.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// First study seed.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Give every participant the experienced agent instead of alternating.
    #[arg(long)]
    experienced_only: bool,
    #[arg(long, default_value_t = 0.0)]
    lag: f64,
    /// Also write every session bag under `<out>/seed-<n>/bags/`.
    #[arg(long)]
    bags: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    models: ModelArgs,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    bag: PathBuf,
    /// Print the replayed metrics and check them against the recording.
    #[arg(long)]
    report: bool,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    guidance: Option<PathBuf>,
}

#[derive(Args)]
struct BagdumpArgs {
    #[arg(long)]
    bag: PathBuf,
    /// Only records on this topic (header lines are kept).
    #[arg(long)]
    topic: Option<Topic>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "NEUROGUIDE_HOST", default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "NEUROGUIDE_PORT", default_value_t = 8080)]
    port: u16,
    /// Session time per wall time.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Directory for the bags of finished sessions.
    #[arg(long)]
    bag_dir: Option<PathBuf>,
    #[command(flatten)]
    models: ModelArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    runs: usize,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(a) => run(a),
        Command::Study(a) => study(a),
        Command::Replay(a) => replay(a),
        Command::Bagdump(a) => bagdump(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Train(a) => train(a),
    }
}

fn env_reasoner() -> Option<Arc<dyn Reasoner>> {
    HttpReasoner::from_env(DEFAULT_REASONER_TIMEOUT).map(|r| Arc::new(r) as Arc<dyn Reasoner>)
}

fn script(name: &str) -> Result<LoadScript> {
    LoadScript::preset(name).with_context(|| format!("presets are {}", PRESETS.join(", ")))
}

fn run(a: RunArgs) -> Result<()> {
    let models = a.models.load()?;
    let mut cfg = SessionConfig::new(a.condition, a.seed);
    if let Some(p) = &a.checklist {
        cfg.checklist = ChecklistSpec::load(p).with_context(|| format!("loading {}", p.display()))?;
    }
    if let Some(p) = &a.rules {
        cfg.rules = RuleTable::load(p).with_context(|| format!("loading {}", p.display()))?;
    }
    cfg.script = script(&a.script)?;
    if a.novice {
        cfg.driver = Driver::Agent(AgentConfig::novice());
    }
    cfg.lag = LagConfig::late(a.lag);
    cfg.time_cap_s = a.time_cap_s;
    let out = run_session_with(&cfg, &models, env_reasoner())?;
    if let Some(p) = &a.out {
        out.bag.write(p).with_context(|| format!("writing {}", p.display()))?;
    }
    write_opt(a.events.as_deref(), &out.event_log())?;
    write_opt(a.guidance.as_deref(), &out.guidance_log())?;
    emit(&mut stdout(), &serde_json::to_string(&out.metrics)?)?;
    Ok(())
}

/// Prints a line to stdout. A closed pipe (as with `| head`) ends output
/// quietly and is reported as `false`.
fn emit(out: &mut impl Write, line: &str) -> Result<bool> {
    match writeln!(out, "{line}") {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == ErrorKind::BrokenPipe => Ok(false),
        Err(e) => Err(e.into()),
    }
}

fn write_opt(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn study(a: StudyArgs) -> Result<()> {
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let models = a.models.load()?;
    let mut pooled = Vec::new();
    let mut ordering = Vec::new();
    let mut template = None;
    for k in 0..a.seeds {
        let mut cfg = StudyConfig::new(a.participants, a.seed + k);
        cfg.mixed_expertise = !a.experienced_only;
        cfg.template.lag = LagConfig::late(a.lag);
        let (report, bags) = run_study(&cfg, &models)?;
        let dir = a.out.join(format!("seed-{}", a.seed + k));
        report.write(&dir)?;
        if a.bags {
            let bag_dir = dir.join("bags");
            fs::create_dir_all(&bag_dir)?;
            for b in &bags {
                b.write(&bag_dir.join(format!("{}.bag", b.session_id)))?;
            }
        }
        let offset = (k as usize) * a.participants;
        pooled.extend(report.sessions.into_iter().map(|mut s| {
            s.participant += offset;
            s
        }));
        ordering.extend(report.ordering);
        template.get_or_insert(cfg);
    }
    let mut cfg = template.expect("at least one seed");
    cfg.participants = a.participants * a.seeds as usize;
    let mut report = StudyReport::from_sessions(&cfg, pooled)?;
    report.ordering = ordering;
    report.write(&a.out)?;
    emit(&mut stdout(), report.summary_markdown().trim_end())?;
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let bag = Bag::read(&a.bag).with_context(|| format!("reading {}", a.bag.display()))?;
    let out = replay_session(&bag)?;
    write_opt(a.events.as_deref(), &out.event_log())?;
    write_opt(a.guidance.as_deref(), &out.guidance_log())?;
    eprintln!("session {}: {} engine events, {} guidance decisions", bag.session_id, out.events.len(), out.guidance.len());
    if a.report {
        let Some(replayed) = &out.metrics else { bail!("bag has no end record, so no metrics") };
        let recorded = metrics_from_bag(&bag)?;
        emit(&mut stdout(), &serde_json::to_string(replayed)?)?;
        if *replayed != recorded {
            bail!("replayed metrics differ from the recording");
        }
        eprintln!("replayed metrics match the recording");
    }
    Ok(())
}

fn bagdump(a: BagdumpArgs) -> Result<()> {
    let bag = Bag::read(&a.bag).with_context(|| format!("reading {}", a.bag.display()))?;
    let mut shown = bag.clone();
    if let Some(t) = a.topic {
        shown.records.retain(|r| r.topic == t);
    }
    let header: Vec<String> = bag.dump_lines().into_iter().take_while(|l| l.starts_with('#')).collect();
    let mut out = stdout().lock();
    for line in header.into_iter().chain(shown.dump_lines().into_iter().skip_while(|l| l.starts_with('#'))) {
        if !emit(&mut out, &line)? {
            break;
        }
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt::init();
    let models = a.models.load()?;
    let mut cfg = GatewayConfig::new(models);
    cfg.reasoner = env_reasoner();
    cfg.speed = a.speed;
    cfg.bag_dir = a.bag_dir;
    if let Some(d) = &cfg.bag_dir {
        fs::create_dir_all(d)?;
    }
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().context("invalid host or port")?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = bind(addr).await?;
        eprintln!("listening on ws://{}/session", listener.local_addr()?);
        serve(listener, cfg).await?;
        Ok(())
    })
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = TrainingConfig { seed: a.seed, runs: a.runs, ..TrainingConfig::default() };
    let (models, reports) = train_models(&cfg)?;
    models.save_dir(&a.out).with_context(|| format!("writing models to {}", a.out.display()))?;
    for (facet, r) in neuroguide::classifier::Facet::ALL.iter().zip(&reports) {
        let line = format!("{facet}: {} iterations, loss {:.6}, training accuracy {:.3}", r.iterations, r.loss, r.training_accuracy);
        emit(&mut stdout(), &line)?;
    }
    Ok(())
}
