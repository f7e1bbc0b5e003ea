use std::collections::BTreeMap;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use objevo_agents::events::{Event, EventRecord};
use objevo_agents::gates::{resolve_gate, ApprovalChannel, GateResolution, ParkChannel};
use objevo_agents::orchestrator::reselect;
use objevo_agents::store::RunDir;
use objevo_agents::{AgentError, Agents, AutonomyMode, Orchestrator, Outcome, RunConfig, RunStatus};
use objevo_core::model::{CandidatePayload, ScorerBinding};
use objevo_core::scorers::BoundScorer;
use objevo_core::{BindContext, DnaSequence, ScorerRegistry};
use objevo_service::{AppState, ServiceConfig};

use crate::scaffold;
use crate::style::Style;
use crate::terminal::{TerminalChannel, RESOLVER};
use crate::view;

/// Exit status of a run that stopped at an unresolved gate.
pub const EXIT_PARKED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "objevo", version, about = "Goal-evolving optimization runs")]
pub struct Cli {
    /// Log progress details (repeat for debug output)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a commented config, plan schedule, activity tables and motifs
    Init {
        dir: PathBuf,
        /// Seed for the synthetic activity tables
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Execute a run in this process
    Run(RunArgs),
    /// Continue a parked or interrupted run
    Resume { run_dir: PathBuf },
    /// Score payloads with one scoring function
    Score {
        #[arg(long)]
        scorer: String,
        /// JSON or TOML table of scorer parameters
        #[arg(long)]
        params: Option<PathBuf>,
        /// Sequences (one per line, FASTA headers allowed) or a JSON array of payloads
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// List the gates of a run, or show one
    Gates {
        run_dir: PathBuf,
        /// Print this gate's payload in full
        #[arg(long)]
        show: Option<String>,
        /// Print the editable payload of `--show` as JSON
        #[arg(long, requires = "show")]
        json: bool,
        #[arg(long)]
        open: bool,
    },
    /// Resolve a gate, accepting it or replacing its payload
    Approve {
        run_dir: PathBuf,
        gate_id: String,
        /// Revised plan or report (JSON, or TOML by extension)
        #[arg(long)]
        revise: Option<PathBuf>,
    },
    /// Re-run final selection over every iteration's population
    Select {
        run_dir: PathBuf,
        #[arg(long, short)]
        n: usize,
    },
    /// Start the HTTP service
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(env = "OBJEVO_CONFIG")]
    pub config: PathBuf,
    #[arg(long)]
    pub mode: Option<AutonomyMode>,
    /// Seed for both the outer and the inner loop
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_outer_loop: bool,
    /// Run directory (default: runs/<timestamp>)
    #[arg(long, conflicts_with = "serve")]
    pub out: Option<PathBuf>,
    /// Serve the run over HTTP on this address; gates are resolved through the API
    #[arg(long, value_name = "ADDR")]
    pub serve: Option<String>,
    /// Where served runs are stored
    #[arg(long, default_value = "runs", requires = "serve")]
    pub runs_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub addr: Option<String>,
    /// Service settings file (TOML)
    #[arg(long, env = "OBJEVO_SERVICE_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
}

pub fn main() -> ExitCode {
    // usage errors exit 1; 2 is reserved for parked runs
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let style = Style::detect();
    match execute(cli.command, &style) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{} {e:#}", style.red("error:"));
            ExitCode::FAILURE
        }
    }
}

pub fn execute(cmd: Command, style: &Style) -> Result<ExitCode> {
    match cmd {
        Command::Init { dir, seed } => init(&dir, seed),
        Command::Run(args) => run(args, style),
        Command::Resume { run_dir } => resume(&run_dir, style),
        Command::Score { scorer, params, input } => score(&scorer, params.as_deref(), &input),
        Command::Gates {
            run_dir,
            show,
            json,
            open,
        } => gates(&run_dir, show.as_deref(), json, open, style),
        Command::Approve {
            run_dir,
            gate_id,
            revise,
        } => approve(&run_dir, &gate_id, revise.as_deref()),
        Command::Select { run_dir, n } => select(&run_dir, n),
        Command::Serve(args) => serve(args),
    }
}

fn init(dir: &Path, seed: u64) -> Result<ExitCode> {
    let s = scaffold::write(dir, seed).with_context(|| format!("cannot initialize {}", dir.display()))?;
    for f in &s.files {
        println!("wrote {}", f.display());
    }
    println!("run it with: objevo run {}", s.config.display());
    Ok(ExitCode::SUCCESS)
}

fn open_run(dir: &Path) -> Result<RunDir> {
    RunDir::open(dir).map_err(|e| anyhow!(e))
}

fn load_config(path: &Path) -> Result<RunConfig> {
    if !path.is_file() {
        bail!("config file {} not found", path.display());
    }
    Ok(RunConfig::load(path)?)
}

/// Applies command-line overrides to a loaded config.
pub fn apply_overrides(
    cfg: &mut RunConfig,
    mode: Option<AutonomyMode>,
    seed: Option<u64>,
    no_outer_loop: bool,
) -> Result<()> {
    if no_outer_loop && matches!(mode, Some(AutonomyMode::Copilot | AutonomyMode::Semipilot)) {
        bail!("--no-outer-loop runs without gates and conflicts with --mode copilot/semipilot");
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(s) = seed {
        cfg.outer_seed = s;
        cfg.inner.seed = s;
    }
    if no_outer_loop {
        cfg.outer_loop_enabled = false;
    }
    Ok(())
}

fn default_run_dir() -> PathBuf {
    PathBuf::from("runs").join(format!("run-{}", chrono::Utc::now().format("%Y%m%dT%H%M%S")))
}

fn channel_for(cfg: &RunConfig, style: &Style) -> Box<dyn ApprovalChannel> {
    let gated = cfg.outer_loop_enabled && cfg.mode != AutonomyMode::Autopilot;
    if gated && std::io::stdin().is_terminal() {
        Box::new(TerminalChannel::stdio(*style))
    } else {
        Box::new(ParkChannel)
    }
}

fn progress(style: Style) -> impl FnMut(&EventRecord) + Send + 'static {
    move |rec| match &rec.event {
        Event::Generation(g) => log::info!(
            "iteration {} generation {}: best {:.4}, mean {:.4}, {} evaluations",
            g.iteration,
            g.generation,
            g.best_aggregate,
            g.mean_aggregate,
            g.evaluations_used
        ),
        Event::ObjectivesMatched { match_result, .. } => {
            let ids: Vec<&str> = match_result.matched.iter().map(|m| m.objective_id.as_str()).collect();
            eprintln!("iteration {}: objectives {}", rec.iteration, ids.join(", "));
        }
        Event::IterationCompleted {
            evaluations,
            best_aggregate,
            ..
        } => eprintln!(
            "iteration {} done: best {}, {evaluations} evaluations",
            rec.iteration,
            best_aggregate.map(|b| format!("{b:.4}")).unwrap_or_else(|| "-".into())
        ),
        Event::Degraded { agent, reason } => eprintln!("{} {agent}: {reason}", style.yellow("degraded")),
        _ => {}
    }
}

fn report(dir: &RunDir, outcome: Outcome, style: &Style) -> Result<ExitCode> {
    match outcome {
        Outcome::Finished => {
            let n = dir.load_final().map(|f| f.len()).unwrap_or(0);
            println!(
                "{} {n} final candidates in {}",
                style.green("finished:"),
                dir.root().join("final").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Outcome::Parked { gate_id } => {
            println!(
                "{} waiting at gate {gate_id}; resolve with `objevo approve {} {gate_id}` then `objevo resume {}`",
                style.yellow("parked:"),
                dir.root().display(),
                dir.root().display()
            );
            Ok(ExitCode::from(EXIT_PARKED))
        }
        Outcome::Failed { reason } => bail!("run failed: {reason}"),
    }
}

fn run(args: RunArgs, style: &Style) -> Result<ExitCode> {
    let mut cfg = load_config(&args.config)?;
    apply_overrides(&mut cfg, args.mode, args.seed, args.no_outer_loop)?;
    cfg.validate()?;
    if let Some(addr) = &args.serve {
        return run_served(cfg, addr, &args.runs_dir, style);
    }
    let root = args.out.unwrap_or_else(default_run_dir);
    let agents = Agents::from_config(&cfg, Some(root.join("transcripts")))?;
    let channel = channel_for(&cfg, style);
    let mut orch =
        Orchestrator::create(&root, cfg, ScorerRegistry::builtin(), agents, channel)?.with_event_sink(progress(*style));
    eprintln!("run directory {}", root.display());
    let outcome = orch.run()?;
    report(orch.dir(), outcome, style)
}

fn run_served(cfg: RunConfig, addr: &str, runs_dir: &Path, style: &Style) -> Result<ExitCode> {
    let mut service = ServiceConfig::load(None).map_err(|e| anyhow!(e))?;
    service.addr = addr.to_string();
    service.runs_dir = runs_dir.to_path_buf();
    let state = AppState::new(&service, ScorerRegistry::builtin())?;
    let summary = state.runs.create(cfg).map_err(|e| anyhow!(e.body.message))?;
    let run_id = summary.run_id.clone();
    eprintln!("run {run_id} served on http://{addr}/runs/{run_id}");
    let rt = tokio::runtime::Runtime::new()?;
    let watcher = state.clone();
    let id = run_id.clone();
    let finished = async move {
        loop {
            tokio::time::sleep(Duration::from_millis(500)).await;
            match watcher.runs.summary(&id) {
                Ok(s) if matches!(s.status, RunStatus::Finished | RunStatus::Failed) => return,
                Ok(_) => {}
                Err(e) => {
                    log::error!("cannot read run {id}: {}", e.body.message);
                    return;
                }
            }
        }
    };
    rt.block_on(objevo_service::serve_until(state.clone(), addr, finished))?;
    let dir = open_run(&runs_dir.join(&run_id))?;
    let st: objevo_agents::RunState = dir.load_state()?.ok_or_else(|| anyhow!("run has no checkpoint"))?;
    let outcome = match st.status {
        RunStatus::Finished => Outcome::Finished,
        _ => Outcome::Failed {
            reason: st.failure.unwrap_or_default(),
        },
    };
    report(&dir, outcome, style)
}

fn resume(run_dir: &Path, style: &Style) -> Result<ExitCode> {
    let dir = open_run(run_dir)?;
    let cfg = dir.load_config()?;
    let agents = Agents::from_config(&cfg, Some(dir.transcripts_dir()))?;
    let channel = channel_for(&cfg, style);
    let mut orch =
        Orchestrator::resume(dir, ScorerRegistry::builtin(), agents, channel)?.with_event_sink(progress(*style));
    let outcome = orch.run()?;
    report(orch.dir(), outcome, style)
}

fn read_params(path: Option<&Path>) -> Result<BTreeMap<String, serde_json::Value>> {
    let Some(path) = path else { return Ok(BTreeMap::new()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "toml") {
        Ok(toml::from_str(&text).with_context(|| format!("{}", path.display()))?)
    } else {
        Ok(serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?)
    }
}

/// Labelled payloads: FASTA headers label the sequence after them, bare
/// lines are numbered from 1.
pub fn read_payloads(path: &Path) -> Result<Vec<(String, CandidatePayload)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let payloads: Vec<CandidatePayload> =
            serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
        return Ok(payloads
            .into_iter()
            .enumerate()
            .map(|(i, p)| ((i + 1).to_string(), p))
            .collect());
    }
    let mut out = Vec::new();
    let mut label: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(h) = line.strip_prefix('>') {
            label = Some(h.trim().to_string());
            continue;
        }
        let seq =
            DnaSequence::new(line.to_ascii_uppercase()).map_err(|e| anyhow!("{}:{}: {e}", path.display(), i + 1))?;
        let name = label.take().unwrap_or_else(|| (out.len() + 1).to_string());
        out.push((name, CandidatePayload::Sequence { text: seq }));
    }
    Ok(out)
}

fn score(scorer: &str, params: Option<&Path>, input: &Path) -> Result<ExitCode> {
    let registry = ScorerRegistry::builtin();
    let base = params
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let binding = ScorerBinding {
        descriptor_id: scorer.to_string(),
        params: read_params(params)?,
    };
    let bound = registry.bind(&binding, &BindContext::new(base))?;
    let payloads = read_payloads(input)?;
    let mut failed = false;
    match bound {
        BoundScorer::Candidate(s) => {
            for (label, p) in &payloads {
                match s.score(p) {
                    Ok(v) => println!("{label}\t{v}"),
                    Err(e) => {
                        failed = true;
                        eprintln!("{label}\terror: {e}");
                    }
                }
            }
        }
        BoundScorer::Population(s) => {
            let refs: Vec<&CandidatePayload> = payloads.iter().map(|(_, p)| p).collect();
            println!("population\t{}", s.score(&refs)?);
        }
    }
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn gates(run_dir: &Path, show: Option<&str>, json: bool, open: bool, style: &Style) -> Result<ExitCode> {
    let dir = open_run(run_dir)?;
    match show {
        Some(id) => {
            let gate = dir.load_gate(id)?;
            if json {
                print!("{}", view::editable(&gate));
            } else {
                print!("{}", view::gate_text(&gate, style));
            }
        }
        None => {
            let gates: Vec<_> = dir.gates()?.into_iter().filter(|g| !open || g.is_open()).collect();
            print!("{}", view::gate_list(&gates, style));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn approve(run_dir: &Path, gate_id: &str, revise: Option<&Path>) -> Result<ExitCode> {
    let dir = open_run(run_dir)?;
    let cfg = dir.load_config()?;
    let gate = dir.load_gate(gate_id)?;
    let res = match revise {
        None => GateResolution::accept(RESOLVER),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let payload =
                view::parse_revision(gate.stage, &text, Some(path)).map_err(|e| anyhow!("{}: {e}", path.display()))?;
            GateResolution::revise(RESOLVER, payload)
        }
    };
    match resolve_gate(&dir, gate_id, res, cfg.max_objectives) {
        Ok(g) => {
            let action = if g.resolution.as_ref().is_some_and(|r| r.revised_payload.is_some()) {
                "revised"
            } else {
                "accepted"
            };
            println!(
                "{action} gate {gate_id}; continue with `objevo resume {}`",
                run_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(AgentError::AlreadyResolved(id)) => bail!("gate {id} already resolved"),
        Err(e) => Err(e.into()),
    }
}

fn select(run_dir: &Path, n: usize) -> Result<ExitCode> {
    if n == 0 {
        bail!("--n must be at least 1");
    }
    let dir = open_run(run_dir)?;
    let chosen = reselect(&dir, &ScorerRegistry::builtin(), n)?;
    dir.write_final(&chosen)?;
    for c in &chosen {
        let agg = c.aggregate.map(|a| format!("{a:.6}")).unwrap_or_else(|| "-".into());
        let payload = match &c.payload {
            CandidatePayload::Sequence { text } => text.to_string(),
            other => serde_json::to_string(other)?,
        };
        println!("{}\t{agg}\t{payload}", c.id);
    }
    if chosen.len() < n {
        eprintln!("only {} distinct candidates available", chosen.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(args: ServeArgs) -> Result<ExitCode> {
    let mut cfg = ServiceConfig::load(args.config.as_deref()).map_err(|e| anyhow!(e))?;
    if let Some(a) = args.addr {
        cfg.addr = a;
    }
    if let Some(d) = args.runs_dir {
        cfg.runs_dir = d;
    }
    if cfg.token.is_none() {
        log::warn!("no OBJEVO_TOKEN set; the API accepts unauthenticated requests");
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(objevo_service::serve(cfg, ScorerRegistry::builtin()))?;
    Ok(ExitCode::SUCCESS)
}
