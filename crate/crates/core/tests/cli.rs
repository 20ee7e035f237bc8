use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use difga::cli::{write_results, Format};
use difga::experiments::{run, ExperimentConfig, ExperimentId, ExperimentResult};

fn difga(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_difga"))
        .args(args)
        .env_remove("DIFGA_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> ExperimentResult {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn list_names_every_experiment() {
    let o = difga(&["list"]);
    assert!(o.status.success());
    for id in ExperimentId::ALL {
        assert!(stdout(&o).contains(id.as_str()));
    }
}

#[test]
fn run_writes_named_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let o = difga(&["run", "loss_sweep", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("loss_sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("eta,baseline_loss,final_loss,degradation_DT"));
    assert_eq!(lines.count(), 7);
    assert!(!out.join("loss_sweep.json").exists());
}

#[test]
fn csv_bytes_are_reproducible_without_jitter() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = difga(&["run", "sm_vs_mm", "--out", out.to_str().unwrap(), "--seed", "3"]);
        assert!(o.status.success());
    }
    let x = fs::read(a.join("sm_vs_mm.csv")).unwrap();
    assert_eq!(x, fs::read(b.join("sm_vs_mm.csv")).unwrap());
    assert_eq!(String::from_utf8(x).unwrap().lines().count(), 1 + 4);
}

#[test]
fn json_mirrors_csv_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = difga(&[
        "run",
        "param_dynamics",
        "--steps",
        "12",
        "--format",
        "both",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json = read_json(&out.join("param_dynamics.json"));
    assert_eq!(json.config_snapshot.steps, 12);
    assert_eq!(json.config_snapshot.seed, 42);
    assert_eq!(json.rows.len(), 13);

    let mut rdr = csv::Reader::from_path(out.join("param_dynamics.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), json.columns);
    for (rec, row) in rdr.records().zip(&json.rows) {
        let rec = rec.unwrap();
        for (text, cell) in rec.iter().zip(&row.values) {
            assert_eq!(text.parse::<f64>().ok(), cell.as_f64(), "{text}");
        }
    }
    assert_eq!(run(&json.config_snapshot).unwrap().rows, json.rows);
}

#[test]
fn json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::defaults(ExperimentId::CriticalThreshold);
    c.set("deltas", "0,0.3,0.8").unwrap();
    let result = run(&c).unwrap();
    let paths = write_results(&result, dir.path(), Format::Json).unwrap();
    assert_eq!(paths, vec![dir.path().join("critical_threshold.json")]);
    assert_eq!(read_json(&paths[0]), result);
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let seed_of = |env: Option<&str>, flag: Option<&str>| {
        let out = dir.path().join(format!("{env:?}{flag:?}").replace(['"', '(', ')'], ""));
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_difga"));
        cmd.args(["run", "sm_vs_mm", "--format", "json", "--out", out.to_str().unwrap()]);
        cmd.env_remove("DIFGA_SEED");
        if let Some(e) = env {
            cmd.env("DIFGA_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        assert!(cmd.output().unwrap().status.success());
        read_json(&out.join("sm_vs_mm.json")).config_snapshot.seed
    };
    assert_eq!(seed_of(None, None), 42);
    assert_eq!(seed_of(Some("7"), None), 7);
    assert_eq!(seed_of(Some("7"), Some("9")), 9);
}

#[test]
fn train_prints_final_loss() {
    let o = difga(&["train", "--eta", "0.55", "--ancillas", "1", "--steps", "40"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o)
        .lines()
        .find(|l| l.starts_with("final_loss = "))
        .map(|l| l["final_loss = ".len()..].to_string())
        .unwrap();
    assert!(line.parse::<f64>().unwrap() <= 1e-20, "{line}");
}

#[test]
fn delta_out_of_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = difga(&[
        "run",
        "phase_diagram",
        "--delta",
        "1.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("delta"), "{}", stderr(&o));
    assert!(!dir.path().join("phase_diagram.csv").exists());
}

#[test]
fn unknown_override_key_is_named() {
    let o = difga(&["run", "loss_sweep", "--set", "gamma=0.1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("gamma"));
}

#[test]
fn unknown_subcommand_and_flag_show_usage() {
    for args in [&["frobnicate"][..], &["run", "loss_sweep", "--bogus"]] {
        let o = difga(args);
        assert!(!o.status.success());
        assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    }
    let o = difga(&["run", "fig42"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("fig42"));
}

#[test]
fn unwritable_output_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = difga(&["run", "sm_vs_mm", "--out", blocker.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(blocker.to_str().unwrap()), "{}", stderr(&o));
}

#[test]
fn sweep_and_gradcheck() {
    let dir = tempfile::tempdir().unwrap();
    let o = difga(&[
        "sweep",
        "--etas",
        "0.5,0.9",
        "--deltas",
        "0,0.2",
        "--steps",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("phase_diagram.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);

    let o = difga(&["gradcheck", "--cases", "8"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("ok"));
}
