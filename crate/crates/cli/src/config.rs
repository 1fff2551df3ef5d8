use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crossview::channel_align::Refinement;
use crossview::metrics::DEFAULT_CENTROID_THRESHOLD;
use crossview::noise_repr::DEFAULT_ALPHA;
use crossview::MatchConfig;

/// Everything a pipeline run needs. Read from a flat TOML file; relative
/// paths there are taken relative to the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub source_dir: PathBuf,
    pub target_dir: PathBuf,
    pub output_dir: PathBuf,
    pub gamma_refine: bool,
    pub tolerance: f64,
    pub padding: usize,
    pub stride: usize,
    pub k: usize,
    /// Unset means "largest side of the patch being matched".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_separation: Option<f64>,
    pub alpha: f64,
    pub seed: u64,
    pub centroid_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source_dir: PathBuf::from("source"),
            target_dir: PathBuf::from("target"),
            output_dir: PathBuf::from("out"),
            gamma_refine: true,
            tolerance: 0.5,
            padding: 2,
            stride: 4,
            k: 3,
            min_separation: None,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            centroid_threshold: DEFAULT_CENTROID_THRESHOLD,
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        bail!("`{key}` must be a finite number > 0, got {v}");
    }
    Ok(())
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        bail!("`{key}` must be a finite number >= 0, got {v}");
    }
    Ok(())
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        positive("tolerance", self.tolerance)?;
        non_negative("alpha", self.alpha)?;
        non_negative("centroid_threshold", self.centroid_threshold)?;
        if let Some(s) = self.min_separation {
            positive("min_separation", s)?;
        }
        if self.stride == 0 {
            bail!("`stride` must be >= 1");
        }
        if self.k == 0 {
            bail!("`k` must be >= 1");
        }
        Ok(())
    }

    pub fn refinement(&self) -> Option<Refinement> {
        self.gamma_refine.then(|| Refinement {
            tolerance: self.tolerance,
            ..Refinement::default()
        })
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            stride: self.stride,
            k: self.k,
            min_separation: self.min_separation,
            ..MatchConfig::default()
        }
    }

    fn rebase(&mut self, base: &Path) {
        for p in [&mut self.source_dir, &mut self.target_dir, &mut self.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Prefixes toml's message with the key on the offending line, which the
/// message itself omits for value errors.
fn describe(text: &str, e: &toml::de::Error) -> anyhow::Error {
    let key = e.span().and_then(|span| {
        let start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
        let line = &text[start..];
        let line = &line[..line.find('\n').unwrap_or(line.len())];
        line.split_once('=').map(|(k, _)| k.trim().to_string())
    });
    match key {
        Some(k) if !e.message().contains(&format!("`{k}`")) => anyhow::anyhow!("`{k}`: {}", e.message()),
        _ => anyhow::anyhow!("{}", e.message()),
    }
}

pub fn parse_config_str(text: &str) -> Result<PipelineConfig> {
    let config: PipelineConfig = toml::from_str(text).map_err(|e| describe(text, &e))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut config = parse_config_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    if let Some(base) = path.parent() {
        config.rebase(base);
    }
    Ok(config)
}
