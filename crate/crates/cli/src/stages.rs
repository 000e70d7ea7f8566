//! Pipeline stages. Each reads the files of earlier stages from the
//! output directory and writes its own.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rowpilot_core::eval::{evaluate_samples, write_batch_csv, write_metrics_json, RunMetrics};
use rowpilot_core::field::{generate_field, FieldSpec, FieldWorld, OccupancyGrid, Side};
use rowpilot_core::nav::write_mode_log;
use rowpilot_core::planner::{plan, GlobalPath, OrderedWaypoints, SegmentTag};
use rowpilot_core::sim::{read_trajectory_csv, run_mission, DebugDump, MissionSummary, Outcome, SimWorld};
use rowpilot_core::waymap::{
    average_precision, decode_waypoint_map, encode_waypoint_map, perturb_map, read_predictions_csv,
    write_predictions_csv, WaypointMap,
};
use rowpilot_core::Vec2;

use crate::config::EffectiveConfig;
use crate::report;

pub const FIELD: &str = "field.json";
pub const GRID: &str = "field.pgm";
pub const GEOREF: &str = "field.geo";
pub const PLANTS: &str = "plants.csv";
pub const TRUTH: &str = "truth_waypoints.csv";
pub const WAYMAP: &str = "waymap.bin";
pub const WAYPOINTS: &str = "waypoints.csv";
pub const PREDICT: &str = "predict.json";
pub const ORDERED: &str = "ordered.csv";
pub const PATH: &str = "path.csv";
pub const PLAN: &str = "plan.json";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const MODES: &str = "modes.csv";
pub const MISSION: &str = "mission.json";
pub const METRICS: &str = "metrics.json";
pub const BATCH_DIR: &str = "batch";
pub const BATCH_CSV: &str = "batch.csv";
pub const REPORT: &str = "report.svg";

/// Bumped whenever a stage's outputs change for the same inputs.
pub fn stage_version(stage: &str) -> u32 {
    match stage {
        "generate" | "predict" | "plan" | "simulate" | "evaluate" | "report" => 1,
        _ => 0,
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Stage { stage: &'static str, message: String },
    Mission { stage: &'static str, message: String },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Stage { .. } => 3,
            Failure::Mission { .. } => 4,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (kind, stage, message) = match self {
            Failure::Config(m) => ("config", None, m),
            Failure::Stage { stage, message } => ("stage", Some(*stage), message),
            Failure::Mission { stage, message } => ("mission", Some(*stage), message),
        };
        serde_json::json!({ "error": { "kind": kind, "stage": stage, "message": message, "exit_code": self.exit_code() } })
    }
}

/// Shared inputs of every stage.
pub struct Ctx {
    pub cfg: EffectiveConfig,
    pub out: PathBuf,
    pub batch: Option<usize>,
}

impl Ctx {
    pub fn seed(&self) -> u64 {
        self.cfg.mission.seed
    }

    /// Seeds of the missions this invocation covers.
    pub fn mission_seeds(&self) -> Vec<u64> {
        match self.batch {
            Some(n) => (0..n as u64).map(|i| self.seed() + i).collect(),
            None => vec![self.seed()],
        }
    }

    /// Directory holding the files of the mission with `seed`.
    pub fn run_dir(&self, seed: u64) -> PathBuf {
        match self.batch {
            Some(_) => self.out.join(BATCH_DIR).join(format!("seed_{seed}")),
            None => self.out.clone(),
        }
    }
}

/// Every file a stage owns, written this run or earlier.
pub fn stage_outputs(stage: &str, ctx: &Ctx) -> Vec<PathBuf> {
    let root = |names: &[&str]| names.iter().map(|n| ctx.out.join(n)).collect::<Vec<_>>();
    let per_run = |names: &[&str]| {
        ctx.mission_seeds()
            .into_iter()
            .flat_map(|seed| names.iter().map(move |n| ctx.run_dir(seed).join(n)))
            .collect::<Vec<_>>()
    };
    match stage {
        "generate" => root(&[FIELD, GRID, GEOREF, PLANTS, TRUTH]),
        "predict" => root(&[WAYMAP, WAYPOINTS, PREDICT]),
        "plan" => root(&[ORDERED, PATH, PLAN]),
        "simulate" => per_run(&[TRAJECTORY, MODES, MISSION]),
        "evaluate" => {
            let mut v = per_run(&[METRICS]);
            v.push(ctx.out.join(BATCH_CSV));
            v
        }
        "report" => per_run(&[REPORT]),
        _ => Vec::new(),
    }
}

/// Files written by the running stage, removed again if it fails.
pub struct Outputs {
    root: PathBuf,
    written: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            written: Vec::new(),
            dirs: Vec::new(),
        }
    }

    pub fn file(&mut self, path: PathBuf) -> PathBuf {
        self.written.push(path.clone());
        path
    }

    pub fn dir(&mut self, dir: &Path) -> std::io::Result<()> {
        if !dir.exists() {
            std::fs::create_dir_all(dir)?;
            self.dirs.push(dir.to_path_buf());
        }
        Ok(())
    }

    pub fn discard(self) {
        for f in &self.written {
            let _ = std::fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = std::fs::remove_dir_all(d);
        }
    }

    /// Output names relative to the root, with their digests.
    pub fn digests(&self) -> Result<BTreeMap<String, String>, std::io::Error> {
        let mut out = BTreeMap::new();
        for f in &self.written {
            let bytes = std::fs::read(f)?;
            let name = f.strip_prefix(&self.root).unwrap_or(f).to_string_lossy().replace('\\', "/");
            out.insert(name, hex::encode(Sha256::digest(&bytes)));
        }
        Ok(out)
    }
}

/// What a successful stage leaves behind. A mission that ran to a
/// collision or timeout still succeeds as a stage; its files are kept.
pub struct StageDone {
    pub mission_failure: Option<String>,
}

fn fail<E: Display>(stage: &'static str) -> impl Fn(E) -> Failure {
    move |e| Failure::Stage {
        stage,
        message: e.to_string(),
    }
}

fn need(stage: &'static str, path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Stage {
            stage,
            message: format!("missing input {}; run the earlier stages first", path.display()),
        })
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)
}

fn read_json<T: for<'de> Deserialize<'de>>(stage: &'static str, path: &Path) -> Result<T, Failure> {
    need(stage, path)?;
    let text = std::fs::read_to_string(path).map_err(fail(stage))?;
    serde_json::from_str(&text).map_err(|e| Failure::Stage {
        stage,
        message: format!("{}: {e}", path.display()),
    })
}

/// Regenerates the world from the stored spec and checks it against the
/// stored raster.
fn load_world(stage: &'static str, out: &Path) -> Result<FieldWorld, Failure> {
    let spec: FieldSpec = read_json(stage, &out.join(FIELD))?;
    let world = generate_field(&spec).map_err(fail(stage))?;
    need(stage, &out.join(GRID))?;
    let grid = OccupancyGrid::load(&out.join(GRID)).map_err(fail(stage))?;
    if grid != world.occupancy {
        return Err(Failure::Stage {
            stage,
            message: format!("{GRID} does not match {FIELD}"),
        });
    }
    Ok(world)
}

fn read_truth(stage: &'static str, path: &Path) -> Result<Vec<Vec2>, Failure> {
    need(stage, path)?;
    let mut r = csv::Reader::from_path(path).map_err(fail(stage))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(fail(stage))?;
        let num = |i: usize| -> Result<f64, Failure> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| Failure::Stage {
                stage,
                message: format!("{}: bad column {i}", path.display()),
            })
        };
        out.push(Vec2::new(num(0)?, num(1)?));
    }
    Ok(out)
}

pub fn generate(ctx: &Ctx, outs: &mut Outputs) -> Result<StageDone, Failure> {
    const S: &str = "generate";
    let world = generate_field(&ctx.cfg.field).map_err(fail(S))?;
    write_json(&world.spec, &outs.file(ctx.out.join(FIELD))).map_err(fail(S))?;
    outs.file(ctx.out.join(GEOREF));
    world.occupancy.save(&outs.file(ctx.out.join(GRID))).map_err(fail(S))?;

    let mut w = csv::Writer::from_path(outs.file(ctx.out.join(PLANTS))).map_err(fail(S))?;
    w.write_record(["x_m", "y_m", "radius_m"]).map_err(fail(S))?;
    for p in &world.plants {
        w.write_record([p.center.x.to_string(), p.center.y.to_string(), p.radius.to_string()])
            .map_err(fail(S))?;
    }
    w.flush().map_err(fail(S))?;

    let mut w = csv::Writer::from_path(outs.file(ctx.out.join(TRUTH))).map_err(fail(S))?;
    w.write_record(["x_px", "y_px", "corridor", "side"]).map_err(fail(S))?;
    for g in world.ground_truth_waypoints() {
        let side = match g.side {
            Side::Start => "start",
            Side::End => "end",
        };
        w.write_record([g.position.x.to_string(), g.position.y.to_string(), g.corridor.to_string(), side.into()])
            .map_err(fail(S))?;
    }
    w.flush().map_err(fail(S))?;
    Ok(StageDone { mission_failure: None })
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictReport {
    truth: usize,
    predicted: usize,
    /// Average precision keyed by match radius in pixels.
    ap: BTreeMap<String, Option<f64>>,
}

/// Oracle detector: the exact map for the ground-truth waypoints, passed
/// through the configured noise model, then decoded.
pub fn predict(ctx: &Ctx, outs: &mut Outputs) -> Result<StageDone, Failure> {
    const S: &str = "predict";
    let m = &ctx.cfg.mission;
    let spec: FieldSpec = read_json(S, &ctx.out.join(FIELD))?;
    let truth = read_truth(S, &ctx.out.join(TRUTH))?;
    let exact = encode_waypoint_map(&truth, spec.grid_height, spec.grid_width, m.k, None).map_err(fail(S))?;
    let noise = m.map_noise();
    let map: WaypointMap = if noise == Default::default() {
        exact
    } else {
        perturb_map(&exact, &noise, m.seed)
    };
    map.save(&outs.file(ctx.out.join(WAYMAP))).map_err(fail(S))?;
    let preds = decode_waypoint_map(&map, m.c_thr, m.d_thr);
    write_predictions_csv(&outs.file(ctx.out.join(WAYPOINTS)), &preds).map_err(fail(S))?;
    let report = PredictReport {
        truth: truth.len(),
        predicted: preds.len(),
        ap: [8.0, 4.0, 2.0]
            .iter()
            .map(|&d| (format!("{d}"), average_precision(&preds, &truth, d)))
            .collect(),
    };
    write_json(&report, &outs.file(ctx.out.join(PREDICT))).map_err(fail(S))?;
    Ok(StageDone { mission_failure: None })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlanInfo {
    /// Row direction, radians.
    pub orientation: f64,
    pub rows: usize,
    pub intra_row_runs: usize,
    pub turn_runs: usize,
    pub path_points: usize,
    /// Meters.
    pub path_length: f64,
    /// Meters.
    pub step: f64,
}

pub fn plan_stage(ctx: &Ctx, outs: &mut Outputs) -> Result<StageDone, Failure> {
    const S: &str = "plan";
    need(S, &ctx.out.join(GRID))?;
    let grid = OccupancyGrid::load(&ctx.out.join(GRID)).map_err(fail(S))?;
    need(S, &ctx.out.join(WAYPOINTS))?;
    let preds = read_predictions_csv(&ctx.out.join(WAYPOINTS)).map_err(fail(S))?;
    let positions: Vec<Vec2> = preds.iter().map(|p| p.position()).collect();
    let p = plan(&grid, &positions, &ctx.cfg.mission.planner()).map_err(fail(S))?;
    p.ordered.write_csv(&outs.file(ctx.out.join(ORDERED))).map_err(fail(S))?;
    p.path.write_csv(&outs.file(ctx.out.join(PATH))).map_err(fail(S))?;
    let runs = p.path.runs();
    let info = PlanInfo {
        orientation: p.orientation,
        rows: p.ordered.row_count(),
        intra_row_runs: runs.iter().filter(|(t, _)| matches!(t, SegmentTag::IntraRow(_))).count(),
        turn_runs: runs.iter().filter(|(t, _)| matches!(t, SegmentTag::Turn(_))).count(),
        path_points: p.path.len(),
        path_length: p.path.length(),
        step: p.path.step,
    };
    write_json(&info, &outs.file(ctx.out.join(PLAN))).map_err(fail(S))?;
    Ok(StageDone { mission_failure: None })
}

fn load_plan(stage: &'static str, out: &Path) -> Result<(PlanInfo, OrderedWaypoints, GlobalPath), Failure> {
    let info: PlanInfo = read_json(stage, &out.join(PLAN))?;
    need(stage, &out.join(ORDERED))?;
    need(stage, &out.join(PATH))?;
    let ordered = OrderedWaypoints::read_csv(&out.join(ORDERED), info.orientation).map_err(fail(stage))?;
    let path = GlobalPath::read_csv(&out.join(PATH), info.step).map_err(fail(stage))?;
    if ordered.points.len() < 4 || ordered.points.len() % 2 != 0 || path.is_empty() {
        return Err(Failure::Stage {
            stage,
            message: "plan files are empty or truncated".into(),
        });
    }
    Ok((info, ordered, path))
}

pub fn simulate(ctx: &Ctx, outs: &mut Outputs) -> Result<StageDone, Failure> {
    const S: &str = "simulate";
    let m = &ctx.cfg.mission;
    let world = load_world(S, &ctx.out)?;
    let (_, ordered, path) = load_plan(S, &ctx.out)?;
    let nav = m.nav();
    let sim_world = SimWorld::new(&world);
    let fly = |seed: u64| {
        run_mission(&sim_world, &path, &ordered, m.policy, &m.sim(seed), &nav, &DebugDump::default())
    };
    let seeds = ctx.mission_seeds();
    // share-nothing across seeds; a single mission stays on this thread
    let results: Vec<_> = if ctx.batch.is_some() {
        seeds.par_iter().map(|&s| (s, fly(s))).collect()
    } else {
        seeds.iter().map(|&s| (s, fly(s))).collect()
    };

    let mut failures = Vec::new();
    for (seed, r) in &results {
        let dir = ctx.run_dir(*seed);
        outs.dir(&dir).map_err(fail(S))?;
        r.write_trajectory_csv(&outs.file(dir.join(TRAJECTORY))).map_err(fail(S))?;
        write_mode_log(&r.events, &outs.file(dir.join(MODES))).map_err(fail(S))?;
        write_json(&r.summary(*seed), &outs.file(dir.join(MISSION))).map_err(fail(S))?;
        match r.outcome {
            Outcome::Completed => {}
            Outcome::Collision { tick, x, y, .. } => {
                failures.push(format!("seed {seed}: collision at tick {tick} near ({x:.2}, {y:.2})"))
            }
            Outcome::Timeout { tick, x, y, .. } => {
                failures.push(format!("seed {seed}: timeout at tick {tick} near ({x:.2}, {y:.2})"))
            }
        }
    }
    Ok(StageDone {
        mission_failure: (!failures.is_empty()).then(|| failures.join("; ")),
    })
}

pub fn evaluate(ctx: &Ctx, outs: &mut Outputs) -> Result<StageDone, Failure> {
    const S: &str = "evaluate";
    let world = load_world(S, &ctx.out)?;
    let (_, ordered, _) = load_plan(S, &ctx.out)?;
    let reference = world.ground_truth_path(ctx.cfg.mission.d_er).points;
    let mut runs = Vec::new();
    for seed in ctx.mission_seeds() {
        let dir = ctx.run_dir(seed);
        let summary: MissionSummary = read_json(S, &dir.join(MISSION))?;
        need(S, &dir.join(TRAJECTORY))?;
        let samples = read_trajectory_csv(&dir.join(TRAJECTORY)).map_err(fail(S))?;
        let metrics = evaluate_samples(&samples, &summary.outcome, &world, &ordered, &reference, ctx.cfg.mission.dt)
            .ok_or_else(|| Failure::Stage {
                stage: S,
                message: format!("{} is empty", dir.join(TRAJECTORY).display()),
            })?;
        write_metrics_json(&metrics, &outs.file(dir.join(METRICS))).map_err(fail(S))?;
        runs.push((seed, metrics));
    }
    if ctx.batch.is_some() {
        write_batch_csv(&runs, &outs.file(ctx.out.join(BATCH_CSV))).map_err(fail(S))?;
    }
    Ok(StageDone { mission_failure: None })
}

/// One SVG per mission; the plan alone when nothing was flown yet.
pub fn report_stage(ctx: &Ctx, outs: &mut Outputs) -> Result<StageDone, Failure> {
    const S: &str = "report";
    need(S, &ctx.out.join(GRID))?;
    let grid = OccupancyGrid::load(&ctx.out.join(GRID)).map_err(fail(S))?;
    let res = grid.resolution();
    let waypoints: Vec<Vec2> = if ctx.out.join(WAYPOINTS).is_file() {
        read_predictions_csv(&ctx.out.join(WAYPOINTS))
            .map_err(fail(S))?
            .iter()
            .map(|p| p.position())
            .collect()
    } else {
        Vec::new()
    };
    let path: Vec<Vec2> = if ctx.out.join(PATH).is_file() {
        GlobalPath::read_csv(&ctx.out.join(PATH), 0.0)
            .map_err(fail(S))?
            .points
            .iter()
            .map(|p| p / res)
            .collect()
    } else {
        Vec::new()
    };
    for seed in ctx.mission_seeds() {
        let dir = ctx.run_dir(seed);
        let trajectory: Vec<Vec2> = if dir.join(TRAJECTORY).is_file() {
            read_trajectory_csv(&dir.join(TRAJECTORY))
                .map_err(fail(S))?
                .iter()
                .map(|s| Vec2::new(s.x, s.y) / res)
                .collect()
        } else {
            Vec::new()
        };
        let metrics: Option<RunMetrics> = if dir.join(METRICS).is_file() {
            Some(read_json(S, &dir.join(METRICS))?)
        } else {
            None
        };
        let svg = report::render(&report::Layers {
            grid: &grid,
            waypoints: &waypoints,
            path: &path,
            trajectory: &trajectory,
            metrics: metrics.as_ref(),
            title: &format!("seed {seed}, policy {}", ctx.cfg.mission.policy),
        });
        if dir != ctx.out && !dir.is_dir() {
            return Err(Failure::Stage {
                stage: S,
                message: format!("missing run directory {}", dir.display()),
            });
        }
        std::fs::write(outs.file(dir.join(REPORT)), svg).map_err(fail(S))?;
    }
    Ok(StageDone { mission_failure: None })
}
