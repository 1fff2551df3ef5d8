use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crossview::dataset_io::load_dataset;

use crate::config::PipelineConfig;
use crate::stages;

pub const ALIGNED_DIR: &str = "aligned";
pub const PATCHES_DIR: &str = "patches";
pub const FUSED_DIR: &str = "fused";
pub const NOISY_DIR: &str = "noisy";
pub const REPORT_FILE: &str = "run_report.json";

const STAGE_DIRS: [&str; 4] = [ALIGNED_DIR, PATCHES_DIR, FUSED_DIR, NOISY_DIR];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: PipelineConfig,
    pub gamma: f64,
    pub gamma_refined: bool,
    pub source_mean_before: f64,
    pub source_mean_after: f64,
    pub target_mean: f64,
    pub n_source: usize,
    pub n_target: usize,
    pub n_aligned: usize,
    pub n_patches: usize,
    pub n_fused: usize,
    pub n_noisy: usize,
    /// Wall times; left out of the report file so reruns stay byte-identical.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stage_times: Vec<StageTime>,
}

/// A pipeline failure tagged with the stage it happened in.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

fn failed_dir(out: &Path, name: &str) -> PathBuf {
    out.join(format!("{name}_failed"))
}

fn clean_outputs(out: &Path) -> Result<()> {
    for name in STAGE_DIRS {
        for d in [out.join(name), failed_dir(out, name)] {
            if d.exists() {
                fs::remove_dir_all(&d).with_context(|| format!("removing {}", d.display()))?;
            }
        }
    }
    let report = out.join(REPORT_FILE);
    if report.exists() {
        fs::remove_file(&report)?;
    }
    Ok(())
}

struct Runner<'a> {
    out: &'a Path,
    times: Vec<StageTime>,
}

impl Runner<'_> {
    /// Runs one stage writing into `out/<dir>`; on failure whatever was
    /// written is moved to `out/<dir>_failed`.
    fn stage<T>(
        &mut self,
        stage: &'static str,
        dir: Option<&str>,
        body: impl FnOnce(Option<&Path>) -> Result<T>,
    ) -> Result<T, StageError> {
        let start = Instant::now();
        let target = dir.map(|d| self.out.join(d));
        let result = match &target {
            Some(t) => fs::create_dir_all(t)
                .with_context(|| format!("creating {}", t.display()))
                .and_then(|_| body(Some(t))),
            None => body(None),
        };
        let seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(v) => {
                info!("{stage}: {seconds:.3}s");
                self.times.push(StageTime {
                    stage: stage.to_string(),
                    seconds,
                });
                Ok(v)
            }
            Err(source) => {
                if let (Some(d), Some(t)) = (dir, &target) {
                    if t.exists() {
                        let _ = fs::rename(t, failed_dir(self.out, d));
                    }
                }
                Err(StageError { stage, source })
            }
        }
    }
}

/// Runs align, extract, fuse and noise in order, writing every stage's
/// artifacts plus `run_report.json` under `config.output_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, StageError> {
    let setup = |source| StageError { stage: "setup", source };
    config.validate().map_err(setup)?;
    let out = config.output_dir.as_path();
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(setup)?;
    clean_outputs(out).map_err(setup)?;

    let mut runner = Runner { out, times: Vec::new() };

    let (source, target) = runner.stage("load", None, |_| {
        let source = load_dataset(&config.source_dir)
            .with_context(|| format!("source dataset {}", config.source_dir.display()))?;
        let target = load_dataset(&config.target_dir)
            .with_context(|| format!("target dataset {}", config.target_dir.display()))?;
        Ok((source, target))
    })?;

    let (aligned, align_report) = runner.stage("align", Some(ALIGNED_DIR), |dir| {
        let (aligned, report) = stages::align(&source, &target, config.refinement())?;
        stages::save_samples(&aligned, dir.expect("stage dir"))?;
        Ok((aligned, report))
    })?;

    let patches = runner.stage("extract", Some(PATCHES_DIR), |dir| {
        let patches = stages::extract(&aligned, config.padding);
        stages::save_patches(&patches, dir.expect("stage dir"))?;
        Ok(patches)
    })?;

    let fused = runner.stage("fuse", Some(FUSED_DIR), |dir| {
        let dir = dir.expect("stage dir");
        let results = stages::fuse(&aligned, &patches, &config.match_config(), config.seed)?;
        stages::save_fused(&results, dir)?;
        Ok(results)
    })?;

    let n_noisy = runner.stage("noise", Some(NOISY_DIR), |dir| {
        let samples: Vec<_> = fused.iter().map(|r| r.to_sample()).collect();
        let noisy = stages::noise(&samples, config.alpha, config.seed)?;
        stages::save_samples(&noisy, dir.expect("stage dir"))?;
        Ok(noisy.len())
    })?;

    let mut report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        gamma: align_report.gamma,
        gamma_refined: align_report.gamma_refined,
        source_mean_before: align_report.source_mean_before,
        source_mean_after: align_report.source_mean_after,
        target_mean: align_report.target_mean,
        n_source: align_report.n_source,
        n_target: align_report.n_target,
        n_aligned: align_report.n_aligned,
        n_patches: patches.len(),
        n_fused: fused.len(),
        n_noisy,
        stage_times: Vec::new(),
    };
    runner.stage("report", None, |_| {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        fs::write(out.join(REPORT_FILE), text)?;
        Ok(())
    })?;
    report.stage_times = runner.times;
    Ok(report)
}

/// SHA-256 of every file under `root`, keyed by `/`-separated relative path.
pub fn digest_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let bytes = fs::read(&path)?;
            let rel = path.strip_prefix(root)?;
            let key = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            let hash: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            out.insert(key, hash);
        }
    }
    Ok(out)
}
