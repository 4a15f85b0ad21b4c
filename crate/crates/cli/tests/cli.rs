use std::path::PathBuf;
use std::process::{Command, Output};

fn bandlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bandlab")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bandlab-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_profile(dir: &std::path::Path) -> String {
    let path = dir.join("profile.json");
    std::fs::write(&path, r#"{"W": 4, "edges": [[1, 2, 0.2], [2, 3, 0.2], [3, 4, 0.2], [4, 1, 0.2]]}"#).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn missing_seed_is_a_configuration_error() {
    let dir = scratch("seed");
    let prof = write_profile(&dir);
    let out = bandlab(&["deloc", "--profile", &prof, "--M", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn n_must_be_a_multiple_of_w() {
    let dir = scratch("ndiv");
    let prof = write_profile(&dir);
    let out = bandlab(&["locallaw", "--profile", &prof, "--N", "30", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not divisible"));
}

#[test]
fn csv_starts_with_metadata_line() {
    let dir = scratch("csv");
    let prof = write_profile(&dir);
    let out = bandlab(&["lindeberg", "probe", "--profile", &prof, "--M", "4", "--trials", "3", "--seed", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let meta = lines.next().unwrap();
    assert!(meta.starts_with(&format!("# bandlab v{} config=", env!("CARGO_PKG_VERSION"))));
    assert_eq!(lines.next().unwrap(), "m,median_remainder,median_ratio,ratio_lo,ratio_hi,in_band");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = scratch("cfg");
    let prof = write_profile(&dir);
    let cfg = dir.join("run.json");
    std::fs::write(&cfg, format!(r#"{{"profile": "{prof}", "M": 4, "trials": 2, "seed": 5}}"#)).unwrap();
    let out_path = dir.join("deloc.csv");
    let out = bandlab(&["deloc", "--config", cfg.to_str().unwrap(), "--trials", "3", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.code().is_some_and(|c| c < 2), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().count(), 2 + 3);
    let dump: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("deloc.csv.config.json")).unwrap()).unwrap();
    assert_eq!(dump["config"]["trials"], 3);
    assert_eq!(dump["config"]["seed"], 5);
}

#[test]
fn profile_check_emits_assumption_report() {
    let dir = scratch("check");
    let prof = write_profile(&dir);
    let out = bandlab(&["profile", "check", "--config", &prof, "--C", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["report"]["W"], 4);
    assert_eq!(v["report"]["green_bound"]["pass"], true);
}

#[test]
fn same_seed_reruns_are_byte_identical() {
    let dir = scratch("rerun");
    let prof = write_profile(&dir);
    let args = ["lindeberg", "compare", "--profile", &prof, "--M", "4", "--trials", "10", "--probes", "3", "--seed", "8"];
    assert_eq!(bandlab(&args).stdout, bandlab(&args).stdout);
}
