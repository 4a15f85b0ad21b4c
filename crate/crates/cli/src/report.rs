//! Artifact emission: CSV tables with a metadata comment line and JSON
//! documents embedding the resolved configuration.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of the canonical JSON form of the configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// `# bandlab v<semver> config=<sha256>`.
pub fn metadata_line(cfg: &ExperimentConfig) -> String {
    format!("# bandlab v{VERSION} config={}", config_hash(cfg))
}

/// Shortest round-trip decimal form; empty for `None`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// A rendered table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Metadata line, header row and records.
    pub fn to_csv(&self, cfg: &ExperimentConfig) -> Vec<u8> {
        let mut buf = Vec::new();
        writeln!(buf, "{}", metadata_line(cfg)).expect("write to Vec");
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.header).expect("write to Vec");
            for r in &self.rows {
                w.write_record(r).expect("write to Vec");
            }
            w.flush().expect("write to Vec");
        }
        buf
    }
}

/// JSON document `{"bandlab": {...}, "config": ..., "report": ...}`.
pub fn to_json<T: Serialize>(cfg: &ExperimentConfig, report: &T) -> Vec<u8> {
    let doc = serde_json::json!({
        "bandlab": { "version": VERSION, "config_sha256": config_hash(cfg) },
        "config": cfg,
        "report": report,
    });
    let mut out = serde_json::to_vec_pretty(&doc).expect("report serializes");
    out.push(b'\n');
    out
}

/// One output file: the main artifact has an empty suffix, companions are
/// written next to it as `<out>.<suffix>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub suffix: &'static str,
    pub bytes: Vec<u8>,
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes the artifacts. Without `--out` the main artifact goes to stdout
/// and companions are dropped; with `--out` a resolved-config dump
/// `<out>.config.json` is written alongside.
pub fn write_artifacts(cfg: &ExperimentConfig, artifacts: &[Artifact]) -> std::io::Result<()> {
    match &cfg.out {
        None => {
            let mut stdout = std::io::stdout().lock();
            for a in artifacts.iter().filter(|a| a.suffix.is_empty()) {
                stdout.write_all(&a.bytes)?;
            }
            stdout.flush()
        }
        Some(out) => {
            for a in artifacts {
                let path = if a.suffix.is_empty() { out.clone() } else { sidecar(out, a.suffix) };
                std::fs::write(path, &a.bytes)?;
            }
            let dump = serde_json::json!({
                "bandlab": { "version": VERSION, "config_sha256": config_hash(cfg) },
                "config": cfg,
                "parallel": cfg.parallel,
            });
            let mut bytes = serde_json::to_vec_pretty(&dump).expect("config serializes");
            bytes.push(b'\n');
            std::fs::write(sidecar(out, "config.json"), bytes)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve, ExperimentKind, Settings};

    fn cfg() -> ExperimentConfig {
        resolve(Settings { experiment: Some(ExperimentKind::Wick), seed: Some(9), ..Default::default() }).unwrap()
    }

    #[test]
    fn metadata_line_format() {
        let line = metadata_line(&cfg());
        let hash = line.strip_prefix(&format!("# bandlab v{VERSION} config=")).unwrap();
        assert_eq!(hash.len(), 64);
        assert!(hash.bytes().all(|b| b.is_ascii_hexdigit()));
    }

    #[test]
    fn hash_tracks_config() {
        let a = cfg();
        let b = ExperimentConfig { seed: Some(10), ..a.clone() };
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["E", "eta"]);
        t.push(vec![num(0.5), num(1e-3)]);
        let text = String::from_utf8(t.to_csv(&cfg())).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# bandlab v"));
        assert_eq!(lines[1], "E,eta");
        assert_eq!(lines[2], "0.5,0.001");
    }

    #[test]
    fn sidecar_paths() {
        assert_eq!(sidecar(Path::new("out/r.csv"), "config.json"), PathBuf::from("out/r.csv.config.json"));
    }
}
