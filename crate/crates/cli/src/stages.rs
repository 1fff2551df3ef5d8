//! Stage bodies shared by `run` and the standalone subcommands.
//!
//! Every stage hands quantized 8-bit images to the next one, so a stage run
//! from PNGs on disk sees exactly what it would have seen inside `run`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crossview::channel_align::Refinement;
use crossview::dataset_io::{self, quantized, IMAGES_DIR, MASKS_DIR};
use crossview::image::Image;
use crossview::{
    align_dataset, dataset_stats, extract_patches, fuse_dataset, BinaryMask, FusionResult, LabeledSample, MatchConfig,
    NoiseConfig, Rect, TargetPatch,
};

use crate::seeds::derive_seed;

pub const PATCH_SIDECAR: &str = "patches.json";
pub const PROVENANCE_LOG: &str = "provenance.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignReport {
    pub gamma: f64,
    pub gamma_refined: bool,
    pub source_mean_before: f64,
    pub source_mean_after: f64,
    pub target_mean: f64,
    pub n_source: usize,
    pub n_target: usize,
    pub n_aligned: usize,
}

pub fn align(
    source: &[LabeledSample],
    target: &[LabeledSample],
    refine: Option<Refinement>,
) -> Result<(Vec<LabeledSample>, AlignReport)> {
    let before = dataset_stats(source)?;
    let target_stats = dataset_stats(target)?;
    let alignment = align_dataset(source, &target_stats, refine)?;
    let samples = alignment
        .samples
        .iter()
        .map(|s| s.with_image(quantized(s.image())))
        .collect::<crossview::Result<Vec<_>>>()?;
    let after = dataset_stats(&samples)?;
    let report = AlignReport {
        gamma: alignment.params.gamma,
        gamma_refined: alignment.params.refined,
        source_mean_before: before.mean_intensity,
        source_mean_after: after.mean_intensity,
        target_mean: target_stats.mean_intensity,
        n_source: source.len(),
        n_target: target.len(),
        n_aligned: samples.len(),
    };
    Ok((samples, report))
}

pub fn extract(samples: &[LabeledSample], padding: usize) -> Vec<TargetPatch> {
    samples
        .par_iter()
        .map(|s| extract_patches(s, padding))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Origin metadata stored next to the patch PNGs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub id: String,
    pub origin_sample: String,
    pub origin_bbox: Rect,
    pub tight_bbox: Rect,
    pub padding: usize,
}

impl From<&TargetPatch> for PatchRecord {
    fn from(p: &TargetPatch) -> Self {
        Self {
            id: p.id.clone(),
            origin_sample: p.origin_sample.clone(),
            origin_bbox: p.origin_bbox,
            tight_bbox: p.tight_bbox,
            padding: p.padding,
        }
    }
}

fn create_layout(dir: &Path) -> Result<()> {
    for sub in [IMAGES_DIR, MASKS_DIR] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    }
    Ok(())
}

pub fn save_patches(patches: &[TargetPatch], dir: &Path) -> Result<()> {
    create_layout(dir)?;
    let samples = patches
        .iter()
        .map(|p| LabeledSample::new(p.id.clone(), p.image.clone(), p.mask.clone()))
        .collect::<crossview::Result<Vec<_>>>()?;
    dataset_io::save_dataset(&samples, dir)?;
    let records: Vec<PatchRecord> = patches.iter().map(PatchRecord::from).collect();
    let path = dir.join(PATCH_SIDECAR);
    let mut text = serde_json::to_string_pretty(&records)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads patches back in sidecar order.
pub fn load_patches(dir: &Path) -> Result<Vec<TargetPatch>> {
    let path = dir.join(PATCH_SIDECAR);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let records: Vec<PatchRecord> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    records
        .into_par_iter()
        .map(|r| {
            let file = format!("{}.png", r.id);
            let image: Image<f64> = dataset_io::load_gray_png(&dir.join(IMAGES_DIR).join(&file))?;
            let mask = dataset_io::load_mask_png(&dir.join(MASKS_DIR).join(&file))?;
            let (w, h) = (image.width(), image.height());
            if (w, h) != (mask.width(), mask.height()) || (w, h) != (r.origin_bbox.w, r.origin_bbox.h) {
                anyhow::bail!(
                    "patch {}: image {w}x{h}, mask {}x{}, sidecar bbox {}x{}",
                    r.id,
                    mask.width(),
                    mask.height(),
                    r.origin_bbox.w,
                    r.origin_bbox.h
                );
            }
            Ok(TargetPatch {
                id: r.id,
                image,
                mask,
                origin_sample: r.origin_sample,
                origin_bbox: r.origin_bbox,
                tight_bbox: r.tight_bbox,
                padding: r.padding,
            })
        })
        .collect()
}

pub fn fuse(
    aligned: &[LabeledSample],
    patches: &[TargetPatch],
    config: &MatchConfig,
    master_seed: u64,
) -> Result<Vec<FusionResult>> {
    let seed = derive_seed(master_seed, "fuse", "");
    let mut results = fuse_dataset(aligned, patches, config, seed)?;
    for r in &mut results {
        r.image = quantized(&r.image);
    }
    Ok(results)
}

pub fn save_fused(results: &[FusionResult], dir: &Path) -> Result<()> {
    create_layout(dir)?;
    let samples: Vec<LabeledSample> = results.iter().map(FusionResult::to_sample).collect();
    dataset_io::save_dataset(&samples, dir)?;
    let path = dir.join(PROVENANCE_LOG);
    let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    for r in results {
        serde_json::to_writer(&mut out, &r.provenance)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Per-sample seeds come from the sample id, so output does not depend on
/// the order samples arrive in.
pub fn noise(samples: &[LabeledSample], alpha: f64, master_seed: u64) -> Result<Vec<LabeledSample>> {
    samples
        .par_iter()
        .map(|s| {
            let config = NoiseConfig {
                alpha,
                seed: derive_seed(master_seed, "noise", s.id()),
                clamp: true,
            };
            let noisy = crossview::add_noise(s.image(), &config)?;
            Ok(s.with_image(quantized(&noisy))?)
        })
        .collect()
}

pub fn save_samples(samples: &[LabeledSample], dir: &Path) -> Result<()> {
    create_layout(dir)?;
    dataset_io::save_dataset(samples, dir)?;
    Ok(())
}

/// Loads a directory of PNGs as masks, keyed and ordered by file stem.
pub fn load_mask_dir(dir: &Path) -> Result<Vec<(String, BinaryMask)>> {
    dataset_io::list_png_stems(dir)?
        .into_par_iter()
        .map(|stem| {
            let m = dataset_io::load_mask_png(&dir.join(format!("{stem}.png")))?;
            Ok((stem, m))
        })
        .collect()
}

pub fn load_image_dir(dir: &Path) -> Result<Vec<(String, Image<f64>)>> {
    dataset_io::list_png_stems(dir)?
        .into_par_iter()
        .map(|stem| {
            let m = dataset_io::load_gray_png(&dir.join(format!("{stem}.png")))?;
            Ok((stem, m))
        })
        .collect()
}
