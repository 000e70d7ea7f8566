mod config;
mod report;
mod stages;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rowpilot_core::nav::Policy;

use config::{EffectiveConfig, MissionConfig};
use stages::{Ctx, Failure, Outputs, StageDone};

#[derive(Parser, Debug)]
#[command(name = "rowpilot", version, about = "Row-crop coverage planning and navigation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory shared by all stages.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    policy: Option<Policy>,
    /// Missions with seeds seed..seed+N, run in parallel.
    #[arg(long, global = true)]
    batch: Option<usize>,
    /// Also render the SVG report after simulate or evaluate.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Synthesize a field: raster, plants and ground-truth waypoints.
    Generate,
    /// Encode the ground truth as a waypoint map and decode it.
    Predict,
    /// Order the waypoints and build the global path.
    Plan,
    /// Fly the mission in the simulator.
    Simulate,
    /// Score trajectories against the ideal path.
    Evaluate,
    /// Render the SVG overlay.
    Report,
    /// Every stage in order.
    All,
}

type StageFn = fn(&Ctx, &mut Outputs) -> Result<StageDone, Failure>;

fn stages_for(cmd: Command, svg: bool) -> Vec<(&'static str, StageFn)> {
    let report: (&'static str, StageFn) = ("report", stages::report_stage);
    let mut list: Vec<(&'static str, StageFn)> = match cmd {
        Command::Generate => vec![("generate", stages::generate)],
        Command::Predict => vec![("predict", stages::predict)],
        Command::Plan => vec![("plan", stages::plan_stage)],
        Command::Simulate => vec![("simulate", stages::simulate)],
        Command::Evaluate => vec![("evaluate", stages::evaluate)],
        Command::Report => vec![report],
        Command::All => vec![
            ("generate", stages::generate),
            ("predict", stages::predict),
            ("plan", stages::plan_stage),
            ("simulate", stages::simulate),
            ("evaluate", stages::evaluate),
            report,
        ],
    };
    if svg && matches!(cmd, Command::Simulate | Command::Evaluate) {
        list.push(report);
    }
    list
}

#[derive(Debug, Serialize, Deserialize)]
struct StageRecord {
    version: u32,
    config_hash: String,
    seed: u64,
    batch: Option<usize>,
    /// File digests, SHA-256.
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    created_unix: u64,
    command: String,
    seed: u64,
    batch: Option<usize>,
    config_hash: String,
    config: serde_json::Value,
    stages: BTreeMap<String, StageRecord>,
}

const MANIFEST: &str = "manifest.json";

impl Manifest {
    /// Starts from the manifest already in `out`, keeping the records of
    /// stages this run does not redo.
    fn open(out: &Path, command: &str, cfg: &EffectiveConfig, batch: Option<usize>) -> Self {
        let stages = std::fs::read_to_string(out.join(MANIFEST))
            .ok()
            .and_then(|t| serde_json::from_str::<Manifest>(&t).ok())
            .map(|m| m.stages)
            .unwrap_or_default();
        Self {
            tool: "rowpilot".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            command: command.into(),
            seed: cfg.mission.seed,
            batch,
            config_hash: cfg.hash(),
            config: serde_json::to_value(cfg).expect("config serializes"),
            stages,
        }
    }

    fn write(&self, out: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(out.join(MANIFEST), text)
    }
}

fn load_config(cli: &Cli) -> Result<EffectiveConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => MissionConfig::load(path).map_err(Failure::Config)?,
        None => MissionConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(policy) = cli.policy {
        cfg.policy = policy;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if cli.batch == Some(0) {
        return Err(Failure::Config("--batch must be at least 1".into()));
    }
    cfg.resolve().map_err(Failure::Config)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let out = cfg.mission.out.clone();
    let fresh = !out.exists();
    let result = run_stages(cli, cfg, &out);
    if result.is_err() && fresh {
        // only succeeds when nothing was kept
        let _ = std::fs::remove_dir(&out);
    }
    result
}

fn run_stages(cli: &Cli, cfg: EffectiveConfig, out: &Path) -> Result<(), Failure> {
    let out = out.to_path_buf();
    std::fs::create_dir_all(&out).map_err(|e| Failure::Stage {
        stage: "setup",
        message: format!("{}: {e}", out.display()),
    })?;
    let command = format!("{:?}", cli.command).to_lowercase();
    let mut manifest = Manifest::open(&out, &command, &cfg, cli.batch);
    let ctx = Ctx {
        cfg,
        out: out.clone(),
        batch: cli.batch,
    };

    let mut mission_failure = None;
    for (name, stage) in stages_for(cli.command, cli.svg) {
        let mut outs = Outputs::new(&out);
        let done = match stage(&ctx, &mut outs) {
            Ok(done) => done,
            Err(e) => {
                // stale files of this stage no longer match its inputs
                outs.discard();
                for f in stages::stage_outputs(name, &ctx) {
                    let _ = std::fs::remove_file(f);
                }
                if manifest.stages.remove(name).is_some() {
                    let _ = manifest.write(&out);
                }
                return Err(e);
            }
        };
        let outputs = outs.digests().map_err(|e| Failure::Stage {
            stage: name,
            message: e.to_string(),
        })?;
        println!("{name}: {} file(s) written", outputs.len());
        manifest.stages.insert(
            name.to_string(),
            StageRecord {
                version: stages::stage_version(name),
                config_hash: manifest.config_hash.clone(),
                seed: ctx.seed(),
                batch: ctx.batch,
                outputs,
            },
        );
        manifest.write(&out).map_err(|e| Failure::Stage {
            stage: name,
            message: format!("manifest: {e}"),
        })?;
        if let Some(msg) = done.mission_failure {
            mission_failure = Some(msg);
        }
    }
    match mission_failure {
        Some(message) => Err(Failure::Mission {
            stage: "simulate",
            message,
        }),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
