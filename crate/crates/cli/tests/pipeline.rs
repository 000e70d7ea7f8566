use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rowpilot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rowpilot")).args(args).output().expect("binary runs")
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

/// Writes a field spec and a config pointing at it; returns the config.
fn setup(dir: &Path, field: &str, extra: &str) -> PathBuf {
    std::fs::write(dir.join("field.toml"), field).unwrap();
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, format!("field_spec = \"field.toml\"\n{extra}")).unwrap();
    cfg
}

const SMALL_FIELD: &str = "n_rows = 5
row_orientation = 0.4
row_length = 12.0
inter_row_spacing = 2.8
plant_radius_range = [0.3, 0.4]
plant_spacing = 0.8
hole_probability = 0.0
curvature = 0.0
resolution = 0.1
grid_height = 320
grid_width = 320
rng_seed = 3
geo_origin = { lat = 45.0647, lon = 7.6586 }
";

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(name, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn all_twice_is_byte_identical_except_the_timestamp() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), SMALL_FIELD, "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let r = rowpilot(&["all", "--seed", "7", "--config", s(&cfg), "--out", s(out)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let (mut fa, mut fb) = (files(&a), files(&b));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for name in ["report.svg", "metrics.json", "trajectory.csv", "path.csv", "manifest.json"] {
        assert!(fa.contains_key(name), "{name} missing");
    }
    let manifest = |bytes: Vec<u8>| {
        let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        v.as_object_mut().unwrap().remove("created_unix").expect("timestamp present");
        v
    };
    let (ma, mb) = (manifest(fa.remove("manifest.json").unwrap()), manifest(fb.remove("manifest.json").unwrap()));
    assert_eq!(ma, mb);
    assert_eq!(ma["seed"], 7);
    assert_eq!(ma["config"]["seed"], 7);
    assert_eq!(ma["stages"].as_object().unwrap().len(), 6);
    assert_eq!(ma["config_hash"].as_str().unwrap().len(), 64);
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{name} differs between runs");
    }
    // the manifest digests describe the files on disk
    let digest = ma["stages"]["simulate"]["outputs"]["trajectory.csv"].as_str().unwrap().to_string();
    use sha2::Digest as _;
    assert_eq!(digest, hex::encode(sha2::Sha256::digest(&fa["trajectory.csv"])));
}

#[test]
fn plan_on_a_ten_corridor_field() {
    let tmp = tempfile::tempdir().unwrap();
    let field = SMALL_FIELD
        .replace("n_rows = 5", "n_rows = 11")
        .replace("row_length = 12.0", "row_length = 10.0")
        .replace("row_orientation = 0.4", "row_orientation = 0.0")
        .replace("grid_height = 320", "grid_height = 400")
        .replace("grid_width = 320", "grid_width = 400");
    let cfg = setup(tmp.path(), &field, "");
    let out = tmp.path().join("out");
    for stage in ["generate", "predict", "plan"] {
        let r = rowpilot(&[stage, "--config", s(&cfg), "--out", s(&out)]);
        assert!(r.status.success(), "{stage}: {}", String::from_utf8_lossy(&r.stderr));
    }
    let mut runs: Vec<String> = Vec::new();
    let mut reader = csv::Reader::from_path(out.join("path.csv")).unwrap();
    for rec in reader.records() {
        let tag = rec.unwrap()[4].to_string();
        if runs.last() != Some(&tag) {
            runs.push(tag);
        }
    }
    let intra: Vec<&String> = runs.iter().filter(|t| t.starts_with("intra_row:")).collect();
    assert_eq!(intra.len(), 10, "{runs:?}");
    assert_eq!(runs.len(), 19);
    let info: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("plan.json")).unwrap()).unwrap();
    assert_eq!(info["intra_row_runs"], 10);
    assert_eq!(info["turn_runs"], 9);
}

#[test]
fn evaluate_on_the_noiseless_smoke_mission() {
    let tmp = tempfile::tempdir().unwrap();
    let quiet = "sigma_gnss_open = 1e-6\nsigma_gnss_row = 1e-6\nsigma_compass = 1e-6\nwheel_noise = 0.0\n";
    let cfg = setup(tmp.path(), SMALL_FIELD, quiet);
    let out = tmp.path().join("out");
    let r = rowpilot(&["all", "--config", s(&cfg), "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["completion"], true);
    assert_eq!(m["collisions"], 0);
    assert_eq!(m["n_rows"], 4);
    assert!(m["mae"].as_f64().unwrap() <= 0.12, "{m}");
    assert!(m["intra_row"]["rmse"].as_f64().unwrap() <= 0.15, "{m}");
}

#[test]
fn config_errors_exit_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for (body, needle) in [
        ("alpha_ema = 1.5\n", "alpha_ema"),
        ("c_threshold = 0.9\n", "c_threshold"),
        ("field_spec = \"nowhere.toml\"\n", "field_spec"),
        ("k = 7\n", "divisible"),
    ] {
        let cfg = tmp.path().join("bad.toml");
        std::fs::write(&cfg, body).unwrap();
        let r = rowpilot(&["all", "--config", s(&cfg), "--out", s(&out)]);
        assert_eq!(r.status.code(), Some(2), "{body}");
        let e = error_json(&r);
        assert_eq!(e["error"]["kind"], "config");
        assert!(e["error"]["message"].as_str().unwrap().contains(needle), "{e}");
        assert!(!out.exists());
    }
    let r = rowpilot(&["simulate", "--batch", "0", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn stage_failures_exit_3_and_remove_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), SMALL_FIELD, "");
    let out = tmp.path().join("out");
    let o = s(&out);

    let r = rowpilot(&["plan", "--config", s(&cfg), "--out", o]);
    assert_eq!(r.status.code(), Some(3));
    assert_eq!(error_json(&r)["error"]["stage"], "plan");
    assert!(!out.exists(), "an empty output directory was left behind");

    for args in [["generate"], ["predict"], ["plan"]] {
        assert!(rowpilot(&[args[0], "--config", s(&cfg), "--out", o]).status.success());
    }
    let r = rowpilot(&["simulate", "--batch", "1", "--config", s(&cfg), "--out", o]);
    assert!(r.status.success());
    // seed 1 was never flown: the metrics already written for seed 0 go
    let r = rowpilot(&["evaluate", "--batch", "2", "--config", s(&cfg), "--out", o]);
    assert_eq!(r.status.code(), Some(3));
    assert!(!out.join("batch/seed_0/metrics.json").exists());
    assert!(!out.join("batch.csv").exists());
    assert!(out.join("batch/seed_0/trajectory.csv").exists());

    // an all-dropout map leaves nothing to plan
    let dropout = setup(tmp.path(), SMALL_FIELD, "map_dropout_rate = 1.0\n");
    assert!(rowpilot(&["predict", "--config", s(&dropout), "--out", o]).status.success());
    let r = rowpilot(&["plan", "--config", s(&dropout), "--out", o]);
    assert_eq!(r.status.code(), Some(3));
    assert!(error_json(&r)["error"]["message"].as_str().unwrap().contains("waypoints"));
    for f in ["ordered.csv", "path.csv", "plan.json"] {
        assert!(!out.join(f).exists(), "{f} survived");
    }
}

#[test]
fn timeouts_exit_4_and_keep_the_log() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), SMALL_FIELD, "max_time = 5.0\n");
    let out = tmp.path().join("out");
    let r = rowpilot(&["all", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(4));
    let e = error_json(&r);
    assert_eq!(e["error"]["kind"], "mission");
    assert!(e["error"]["message"].as_str().unwrap().contains("timeout"));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["completion"], false);
    assert!(m["coverage"]["abort_tick"].as_u64().is_some());
    assert!(out.join("report.svg").exists());
}

#[test]
fn batch_runs_match_single_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), SMALL_FIELD, "policy = \"gnss_only\"\n");
    let out = tmp.path().join("out");
    let o = s(&out);
    for stage in ["generate", "predict", "plan"] {
        assert!(rowpilot(&[stage, "--config", s(&cfg), "--out", o]).status.success());
    }
    let r = rowpilot(&["simulate", "--batch", "3", "--seed", "4", "--svg", "--config", s(&cfg), "--out", o]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let r = rowpilot(&["evaluate", "--batch", "3", "--seed", "4", "--config", s(&cfg), "--out", o]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let table = std::fs::read_to_string(out.join("batch.csv")).unwrap();
    let seeds: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(seeds, ["4", "5", "6"]);
    assert!(out.join("batch/seed_6/report.svg").exists());

    let r = rowpilot(&["simulate", "--seed", "5", "--config", s(&cfg), "--out", o]);
    assert!(r.status.success());
    assert_eq!(
        std::fs::read(out.join("trajectory.csv")).unwrap(),
        std::fs::read(out.join("batch/seed_5/trajectory.csv")).unwrap()
    );
}
