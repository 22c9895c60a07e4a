//! End-to-end runs of the installed binary: the synth -> build -> inspect ->
//! eval -> nav flow on a real temp directory, plus the exit-code contract
//! (2 for bad input, 3 for a run that starts but fails).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use si_maps::SIMap;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simap"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    map: PathBuf,
}

impl Fixture {
    fn catalog(&self) -> PathBuf {
        self.data.join("catalog.tsv")
    }

    fn truth(&self) -> PathBuf {
        self.data.join("truth.simap")
    }
}

/// One synthesized dataset and one built map, shared by every test here.
fn fixture() -> &'static Fixture {
    static FIX: OnceLock<Fixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let map = dir.path().join("built.simap");

        let synth = run(bin()
            .args(["synth", "--out"])
            .arg(&data)
            .args(["--mode", "touching", "--objects", "4", "--pairs", "2"])
            .args(["--frames", "12", "--seed", "5", "--half-extent", "2.0"]));
        assert_eq!(code(&synth), 0, "synth: {}", stderr(&synth));

        // The config written by synth pins the truth map's exact window, so
        // the built map is cell-aligned with truth.simap.
        let build = run(bin()
            .args(["build", "--data"])
            .arg(&data)
            .args(["--out"])
            .arg(&map)
            .args(["--config"])
            .arg(data.join("run.cfg")));
        assert_eq!(code(&build), 0, "build: {}", stderr(&build));
        let text = stdout(&build);
        assert!(text.contains("built"), "build banner missing: {text}");
        assert!(map.is_file());
        assert!(sidecar(&map, "meta.json").is_file());

        Fixture { _dir: dir, data, map }
    })
}

fn read_simap(path: &Path) -> SIMap {
    SIMap::deserialize(&std::fs::read(path).unwrap()).unwrap()
}

/// Mirrors the binary's sidecar naming: path plus a dotted suffix.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}.{suffix}", path.display()))
}

#[test]
fn build_writes_valid_map_and_report() {
    let fx = fixture();
    let map = read_simap(&fx.map);
    let truth = read_simap(&fx.truth());
    assert_eq!(map.geometry, truth.geometry, "config pins the truth window");

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sidecar(&fx.map, "meta.json")).unwrap())
            .unwrap();
    assert!(meta["observed_cells"].as_u64().unwrap() > 0);
    assert!(meta["classes"].as_array().unwrap().iter().any(|c| c["class_id"] == 2));
}

#[test]
fn inspect_describes_map_and_writes_rasters() {
    let fx = fixture();
    let out = run(bin().args(["inspect", "--map"]).arg(&fx.map));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("m/cell"), "header missing: {text}");
    assert!(text.contains("class 2:"), "class summary missing: {text}");
    // Raster files land next to the map by default.
    let prefix = fx.map.with_extension("");
    let written: Vec<PathBuf> = ["classes.ppm", "instances.ppm"]
        .iter()
        .map(|s| PathBuf::from(format!("{}.{s}", prefix.display())))
        .collect();
    for path in &written {
        assert!(path.is_file(), "missing raster {}", path.display());
    }
}

#[test]
fn eval_scores_map_against_truth() {
    let fx = fixture();
    let report_path = fx.data.join("eval_si.json");
    let out = run(bin()
        .args(["eval", "--map"])
        .arg(&fx.map)
        .args(["--truth"])
        .arg(fx.truth())
        .args(["--catalog"])
        .arg(fx.catalog())
        .args(["--out"])
        .arg(&report_path));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["method"], "si");
    let pq = report["macro_pq"].as_f64().expect("pq defined for a mapped scene");
    assert!(pq > 0.5, "suspiciously low quality: {pq}");
    assert!(report["success_rate"].is_null(), "no episodes were given");
}

#[test]
fn eval_cc_method_relabels_by_connectivity() {
    let fx = fixture();
    let out = run(bin()
        .args(["eval", "--map"])
        .arg(&fx.map)
        .args(["--truth"])
        .arg(fx.truth())
        .args(["--catalog"])
        .arg(fx.catalog())
        .args(["--method", "cc"]));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("\"method\": \"cc\""));
}

#[test]
fn eval_scores_episode_outcomes() {
    let fx = fixture();
    // An episode that ends exactly on a truth chair counts as a success.
    let truth = read_simap(&fx.truth());
    let rec = &truth.instances_of(2).unwrap()[0];
    let episodes = fx.data.join("episodes.json");
    std::fs::write(
        &episodes,
        format!(
            "[{{\"x\": {}, \"y\": {}, \"class\": \"chair\", \"t\": {}}}]",
            rec.centroid.x, rec.centroid.y, rec.t
        ),
    )
    .unwrap();

    let out = run(bin()
        .args(["eval", "--map"])
        .arg(&fx.map)
        .args(["--truth"])
        .arg(fx.truth())
        .args(["--catalog"])
        .arg(fx.catalog())
        .args(["--episodes"])
        .arg(&episodes));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("\"success_rate\": 1.0"), "episode not scored: {text}");
}

#[test]
fn nav_streams_trajectory_records() {
    let fx = fixture();
    let prog = fx.data.join("turn.prog");
    std::fs::write(&prog, "turn_left(90.0)\nstop()\n").unwrap();
    let out = run(bin()
        .args(["nav", "--map"])
        .arg(&fx.map)
        .args(["--catalog"])
        .arg(fx.catalog())
        .args(["--program"])
        .arg(&prog));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let lines: Vec<serde_json::Value> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).expect("trajectory is JSON lines"))
        .collect();
    assert!(lines.len() >= 3, "start record plus one per call");
    assert!(lines.iter().any(|r| {
        r["event"].as_str().is_some_and(|e| e.starts_with("call:turn_left"))
    }));
    let final_heading = lines.last().unwrap()["heading"].as_f64().unwrap();
    assert!((final_heading - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
}

#[test]
fn nav_failure_exits_3_with_partial_trajectory() {
    let fx = fixture();
    let prog = fx.data.join("missing.prog");
    std::fs::write(&prog, "move_to_instance(\"chair\", 99)\n").unwrap();
    let traj_out = fx.data.join("partial.jsonl");
    let out = run(bin()
        .args(["nav", "--map"])
        .arg(&fx.map)
        .args(["--catalog"])
        .arg(fx.catalog())
        .args(["--program"])
        .arg(&prog)
        .args(["--out"])
        .arg(&traj_out));
    assert_eq!(code(&out), 3, "runtime failure must exit 3: {}", stderr(&out));
    assert!(stderr(&out).contains("navigation failed"));
    assert!(traj_out.is_file(), "partial trajectory still written");
}

#[test]
fn missing_required_inputs_exit_2() {
    let out = run(bin().args(["build", "--out", "/tmp/nowhere.simap"]));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--data"));

    let out = run(bin().args(["build", "--data", "/no/such/dir", "--out", "/tmp/x.simap"]));
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_flag_values_exit_2() {
    let fx = fixture();
    let out = run(bin()
        .args(["build", "--data"])
        .arg(&fx.data)
        .args(["--out", "/tmp/x.simap", "--k-merge", "150"]));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("k-merge"));

    // Touching mode needs an even split into pairs.
    let out = run(bin().args([
        "synth",
        "--out",
        "/tmp/odd_pairs",
        "--mode",
        "touching",
        "--objects",
        "5",
    ]));
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_config_key_exits_2() {
    let fx = fixture();
    let cfg = fx.data.join("bad.cfg");
    std::fs::write(&cfg, "[map]\nbogus = 1\n").unwrap();
    let out = run(bin()
        .args(["build", "--data"])
        .arg(&fx.data)
        .args(["--out", "/tmp/x.simap", "--config"])
        .arg(&cfg));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bogus"), "should name the offending key: {}", stderr(&out));
}

#[test]
fn malformed_program_exits_2_with_diagnostic() {
    let fx = fixture();
    let prog = fx.data.join("bad.prog");
    std::fs::write(&prog, "move_somewhere(\"chair\")\n").unwrap();
    let out = run(bin()
        .args(["nav", "--map"])
        .arg(&fx.map)
        .args(["--catalog"])
        .arg(fx.catalog())
        .args(["--program"])
        .arg(&prog));
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(
        err.contains("line 1 col 1: unknown primitive"),
        "parser diagnostic missing: {err}"
    );
}

#[test]
fn corrupt_map_file_exits_2() {
    let fx = fixture();
    let bogus = fx.data.join("corrupt.simap");
    std::fs::write(&bogus, b"NOTAMAP0rest").unwrap();
    let out = run(bin().args(["inspect", "--map"]).arg(&bogus));
    assert_eq!(code(&out), 2);
}
