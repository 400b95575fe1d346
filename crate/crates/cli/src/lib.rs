//! Experiment harness behind the `codnet` binary.

pub mod config;
pub mod studies;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use codnet::verify::{CriterionReport, Status};
use serde::Serialize;

pub use config::Config;
pub use studies::{run_study, StudyOutput, STUDIES};

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub study: &'a str,
    pub config_hash: String,
    pub base_seed: u64,
    /// How per-instance seeds derive from the base seed.
    pub seed_rule: &'static str,
    pub instances: usize,
    pub files: &'a [studies::Table],
    pub checks: &'a [studies::DataCheck],
}

pub const SEED_RULE: &str = "instance i uses base * 1000003 + i * 65536; the seed column holds the seed actually used";

/// Writes every table of `out` plus `<study>_manifest.json` into `dir`.
pub fn write_study(dir: &Path, study: &str, cfg: &Config, out: &StudyOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for t in &out.tables {
        let path = dir.join(&t.file);
        std::fs::write(&path, t.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    let manifest = Manifest {
        study,
        config_hash: cfg.hash(),
        base_seed: cfg.seed,
        seed_rule: SEED_RULE,
        instances: out.instances,
        files: &out.tables,
        checks: &out.checks,
    };
    let path = dir.join(format!("{study}_manifest.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(written)
}

#[derive(Debug, Serialize)]
pub struct VerifyManifest<'a> {
    pub config_hash: String,
    pub criteria: &'a [CriterionReport],
    pub all_passed: bool,
}

pub fn write_verify(dir: &Path, cfg: &Config, reports: &[CriterionReport]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let m = VerifyManifest {
        config_hash: cfg.hash(),
        criteria: reports,
        all_passed: reports.iter().all(|r| r.status != Status::Fail),
    };
    let path = dir.join("verify_manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(path)
}

/// Parses a comma-separated list such as `1,7,13`.
pub fn parse_ids(s: &str) -> Result<Vec<u8>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<u8>().with_context(|| format!("bad criterion id '{t}'")))
        .collect()
}
