//! Subcommands behind the `domino` binary. Each writes into its own output
//! directory, together with a `manifest.json` describing the run.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use domino_core::detect::DetectorConfig;
use domino_core::dsl::{compile_str, emit_pseudocode, DetectionPlan, Diagnostic};
use domino_core::ingest::{load_trace, ClockOffsets, APP_FILE, PKT_FILE, RAN_FILE};
use domino_core::pipeline::{Analysis, Pipeline};
use domino_core::stats::{render, DedupMode, Format, Table, DEFAULT_PRIORITY};
use domino_core::synth::{generate, Scenario, SynthReport};
use domino_core::trace::{TraceMeta, DEFAULT_STEP_S, DEFAULT_WINDOW_S};
use domino_core::DominoError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MATCHES_FILE: &str = "matches.jsonl";
pub const FEATURES_FILE: &str = "features.csv";
pub const STATS_CSV: &str = "stats.csv";
pub const STATS_TXT: &str = "stats.txt";
pub const INGEST_FILE: &str = "ingest.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const SYNTH_FILE: &str = "synth.json";
pub const SCENARIO_FILE: &str = "scenario.txt";
pub const PLAN_TEXT_FILE: &str = "plan.txt";
pub const PLAN_JSON_FILE: &str = "plan.json";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_SPEC: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "domino",
    version,
    about = "Cross-layer root-cause analysis for video calls over 5G"
)]
pub struct Cli {
    /// Only print errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    /// Worker threads for window evaluation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect events and causal chains in a trace.
    Detect(DetectArgs),
    /// Generate a synthetic trace with ground truth.
    Synth(SynthArgs),
    /// Compile a chain spec and print the plan.
    Compile(CompileArgs),
    /// Recompute reports from a saved match file.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    /// Directory holding ran.csv, pkt.csv and app.csv.
    #[arg(long, conflicts_with_all = ["ran", "pkt", "app"])]
    pub input: Option<PathBuf>,
    #[arg(long, requires_all = ["pkt", "app"])]
    pub ran: Option<PathBuf>,
    #[arg(long, requires_all = ["ran", "app"])]
    pub pkt: Option<PathBuf>,
    #[arg(long, requires_all = ["ran", "pkt"])]
    pub app: Option<PathBuf>,
    /// Chain spec extending the built-in events and graph.
    #[arg(long)]
    pub chains: Option<PathBuf>,
    /// Detector thresholds as `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_WINDOW_S)]
    pub window: f64,
    #[arg(long, default_value_t = DEFAULT_STEP_S)]
    pub step: f64,
    #[arg(long, value_enum, default_value_t = Mode::Priority)]
    pub mode: Mode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Scenario script (`key = value` lines and `event = ...` lines).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the seed in the script.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompileArgs {
    /// Chain spec; without it the built-in plan is compiled.
    #[arg(long)]
    pub chains: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub matches: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Priority)]
    pub mode: Mode,
    #[arg(long)]
    pub out: PathBuf,
}

/// How multi-cause windows are counted in the chain-ratio report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Priority,
    PerCause,
}

impl From<Mode> for DedupMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Priority => DedupMode::Priority,
            Mode::PerCause => DedupMode::PerCause,
        }
    }
}

/// Written verbatim into every output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub inputs: Vec<PathBuf>,
    pub config: Option<PathBuf>,
    pub chains: Option<PathBuf>,
    pub window_s: Option<f64>,
    pub step_s: Option<f64>,
    pub mode: Option<Mode>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl RunManifest {
    fn new(command: &str, out: &Path) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            out: out.to_path_buf(),
            ..Default::default()
        }
    }
}

/// A failed command: what to print and which exit code to use.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_INTERNAL,
            message: e.to_string(),
        }
    }

    fn spec(path: &Path, d: &Diagnostic) -> Self {
        Failure {
            code: EXIT_SPEC,
            message: format!("{}:{d}", path.display()),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type Outcome = Result<(), Failure>;

/// Dispatches a parsed command line.
pub fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Detect(a) => cmd_detect(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Compile(a) => cmd_compile(a),
        Command::Stats(a) => cmd_stats(a),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(DominoError::io(path, e)))
}

fn create_out(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::internal(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Outcome {
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| Failure::internal(format!("cannot write {}: {e}", p.display())))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::internal)?;
    text.push('\n');
    write_file(dir, name, text)
}

fn load_chains(path: &Path) -> Result<DetectionPlan, Failure> {
    compile_str(&read_text(path)?).map_err(|d| Failure::spec(path, &d))
}

fn write_reports(dir: &Path, tables: &[Table]) -> Outcome {
    write_file(dir, STATS_CSV, render(tables, Format::Csv))?;
    write_file(dir, STATS_TXT, render(tables, Format::Text))
}

fn priority() -> Vec<String> {
    DEFAULT_PRIORITY.iter().map(|s| s.to_string()).collect()
}

fn features_csv(a: &Analysis) -> String {
    let mut out = String::from("window_start_us,dir");
    for l in &a.header.labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for r in &a.results {
        out.push_str(&format!("{},{}", r.window_start.micros(), r.dir));
        for b in &r.features.bits {
            out.push_str(if *b { ",1" } else { ",0" });
        }
        out.push('\n');
    }
    out
}

pub fn cmd_detect(a: &DetectArgs) -> Outcome {
    let (ran, pkt, app) = match (&a.input, &a.ran, &a.pkt, &a.app) {
        (Some(d), ..) => (d.join(RAN_FILE), d.join(PKT_FILE), d.join(APP_FILE)),
        (None, Some(r), Some(p), Some(x)) => (r.clone(), p.clone(), x.clone()),
        _ => return Err(Failure::input("give --input DIR or all of --ran, --pkt and --app")),
    };
    // Specs and config are checked before the (slow) trace load.
    let plan = a.chains.as_deref().map(load_chains).transpose()?;
    let cfg = match &a.config {
        Some(p) => {
            DetectorConfig::from_kv_str(&read_text(p)?).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?
        }
        None => DetectorConfig::default(),
    };
    let pipeline = match plan {
        Some(p) => Pipeline::from_plan(p, cfg),
        None => Pipeline::builtin(cfg),
    }
    .with_window(a.window, a.step)
    .map_err(Failure::input)?;

    let (trace, ingest) =
        load_trace(&ran, &pkt, &app, &ClockOffsets::default(), TraceMeta::default()).map_err(Failure::input)?;
    log::info!(
        "loaded {} ran, {} packet and {} app records",
        trace.ran.len(),
        trace.packets.len(),
        trace.app.len()
    );
    let analysis = pipeline.run(&trace).map_err(Failure::input)?;
    if let Some(w) = &analysis.warning {
        log::warn!("{w}");
    }
    let tables = analysis
        .reports(&priority(), a.mode.into())
        .map_err(Failure::internal)?;

    create_out(&a.out)?;
    let mp = a.out.join(MATCHES_FILE);
    let f = File::create(&mp).map_err(|e| Failure::internal(format!("cannot write {}: {e}", mp.display())))?;
    analysis
        .write_matches(BufWriter::with_capacity(1 << 16, f))
        .map_err(|e| Failure::internal(format!("cannot write {}: {e}", mp.display())))?;
    write_file(&a.out, FEATURES_FILE, features_csv(&analysis))?;
    write_reports(&a.out, &tables)?;
    write_json(&a.out, INGEST_FILE, &ingest)?;
    write_json(
        &a.out,
        MANIFEST_FILE,
        &RunManifest {
            inputs: vec![ran, pkt, app],
            config: a.config.clone(),
            chains: a.chains.clone(),
            window_s: Some(a.window),
            step_s: Some(a.step),
            mode: Some(a.mode),
            ..RunManifest::new("detect", &a.out)
        },
    )?;
    log::info!(
        "{} windows, {} chain matches",
        analysis.results.len(),
        analysis.match_count()
    );
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Outcome {
    let mut sc = Scenario::parse(&read_text(&a.scenario)?)
        .map_err(|e| Failure::input(format!("{}: {e}", a.scenario.display())))?;
    if let Some(seed) = a.seed {
        sc.seed = seed;
    }
    let g = generate(&sc).map_err(Failure::input)?;
    create_out(&a.out)?;
    domino_core::ingest::write_trace_dir(&a.out, &g.trace).map_err(Failure::internal)?;
    write_json(&a.out, TRUTH_FILE, &g.truth)?;
    write_json(
        &a.out,
        SYNTH_FILE,
        &SynthReport {
            scenario: sc.clone(),
            stats: g.stats.clone(),
            truth: g.truth.clone(),
        },
    )?;
    write_file(&a.out, SCENARIO_FILE, sc.to_script())?;
    write_json(
        &a.out,
        MANIFEST_FILE,
        &RunManifest {
            inputs: vec![a.scenario.clone()],
            seed: Some(sc.seed),
            ..RunManifest::new("synth", &a.out)
        },
    )?;
    log::info!(
        "{}: {} records, {} injected events",
        sc.name,
        g.trace.ran.len() + g.trace.packets.len() + g.trace.app.len(),
        g.truth.events.len()
    );
    Ok(())
}

/// Machine-readable summary of a compiled plan.
#[derive(Debug, Serialize)]
pub struct PlanSummary {
    pub events: Vec<String>,
    pub slot_count: usize,
    pub slots: Vec<String>,
    pub nodes: Vec<String>,
    pub path_count: usize,
    pub paths: Vec<String>,
}

impl PlanSummary {
    pub fn of(plan: &DetectionPlan) -> Self {
        PlanSummary {
            events: plan.events.iter().map(|e| e.name.clone()).collect(),
            slot_count: plan.slot_count(),
            slots: plan.slot_labels(),
            nodes: plan.graph.nodes().iter().map(|n| n.id.clone()).collect(),
            path_count: plan.chains.len(),
            paths: plan.chains.iter().map(|c| c.render()).collect(),
        }
    }
}

pub fn cmd_compile(a: &CompileArgs) -> Outcome {
    let plan = match &a.chains {
        Some(p) => load_chains(p)?,
        None => domino_core::dsl::builtin_plan(),
    };
    let summary = PlanSummary::of(&plan);
    create_out(&a.out)?;
    write_file(&a.out, PLAN_TEXT_FILE, emit_pseudocode(&plan))?;
    write_json(&a.out, PLAN_JSON_FILE, &summary)?;
    write_json(
        &a.out,
        MANIFEST_FILE,
        &RunManifest {
            chains: a.chains.clone(),
            ..RunManifest::new("compile", &a.out)
        },
    )?;
    log::info!("{} slots, {} paths", summary.slot_count, summary.path_count);
    Ok(())
}

pub fn cmd_stats(a: &StatsArgs) -> Outcome {
    let f = File::open(&a.matches).map_err(|e| Failure::input(DominoError::io(&a.matches, e)))?;
    let analysis = Analysis::read_matches(BufReader::new(f))
        .map_err(|e| Failure::input(format!("{}: {e}", a.matches.display())))?;
    let tables = analysis
        .reports(&priority(), a.mode.into())
        .map_err(Failure::internal)?;
    create_out(&a.out)?;
    write_reports(&a.out, &tables)?;
    write_json(
        &a.out,
        MANIFEST_FILE,
        &RunManifest {
            inputs: vec![a.matches.clone()],
            mode: Some(a.mode),
            ..RunManifest::new("stats", &a.out)
        },
    )?;
    Ok(())
}

/// Sets up logging and the worker pool, runs the command and returns the
/// process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        log::LevelFilter::Info
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_INPUT;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return EXIT_INTERNAL;
        }
    }
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            let _ = std::io::stderr().flush();
            f.code
        }
    }
}
