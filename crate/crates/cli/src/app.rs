use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::warn;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crossview::dataset_io::{self, load_dataset, MASKS_DIR};
use crossview::image::Image;
use crossview::{
    bce_loss, dataset_stats, evaluate, feature_pyramid, noise_loss, roc, sliding_match, top_k, total_loss, BinaryMask,
    LabeledSample, PredictionMap,
};

use crate::config::{parse_config, PipelineConfig};
use crate::pipeline::run_pipeline;
use crate::stages;

#[derive(Debug, Parser)]
#[command(
    name = "crossview",
    version,
    about = "Cross-view alignment and Top-K fusion augmentation for IR small-target datasets"
)]
pub struct Cli {
    /// Pipeline config (flat TOML); flags given on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; stage and sample seeds are derived from it.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Only log errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample count and mean intensity of a dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Gamma-align a source dataset to a target dataset's mean intensity.
    Align {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the closed-form gamma only.
        #[arg(long)]
        no_refine: bool,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Cut one padded patch per target component.
    Extract {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        padding: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank background windows of one image for every patch in a patch directory.
    Match {
        #[arg(long)]
        image: PathBuf,
        /// Target mask of the image; its targets are excluded from matching.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        patch: PathBuf,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        min_sep: Option<f64>,
    },
    /// Poisson-blend patches into their Top-K background windows.
    Fuse {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        patches: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        min_sep: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add seeded Gaussian noise to every image of a dataset.
    Noise {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segmentation and noise-consistency losses.
    Loss {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, num_args = 2, value_names = ["CLEAN", "NOISY"])]
        noise_pair: Option<Vec<PathBuf>>,
    },
    /// IoU, Pd and Fa of prediction maps against ground-truth masks.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        centroid_thresh: Option<f64>,
        /// Scores at or above this (in [0, 1]) count as target.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Fa/Pd over a threshold sweep, as CSV.
    Roc {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Comma-separated, strictly decreasing, in (0, 1].
        #[arg(long)]
        thresholds: String,
        #[arg(long)]
        centroid_thresh: Option<f64>,
    },
    /// Full pipeline: align, extract, fuse, noise.
    Run,
}

fn settings(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => parse_config(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Executes one parsed command, writing its report to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let mut config = settings(cli)?;
    match &cli.command {
        Command::Stats { dataset } => {
            let samples: Vec<LabeledSample> = load_dataset(dataset)?;
            emit(out, &dataset_stats(&samples)?)
        }
        Command::Align {
            source,
            target,
            out: dir,
            no_refine,
            tolerance,
        } => {
            if *no_refine {
                config.gamma_refine = false;
            }
            config.tolerance = tolerance.unwrap_or(config.tolerance);
            config.validate()?;
            let (aligned, report) = stages::align(&load_dataset(source)?, &load_dataset(target)?, config.refinement())?;
            stages::save_samples(&aligned, dir)?;
            emit(out, &report)
        }
        Command::Extract {
            dataset,
            padding,
            out: dir,
        } => {
            let padding = padding.unwrap_or(config.padding);
            let patches = stages::extract(&load_dataset(dataset)?, padding);
            stages::save_patches(&patches, dir)?;
            emit(out, &json!({ "n_patches": patches.len(), "padding": padding }))
        }
        Command::Match {
            image,
            mask,
            patch,
            stride,
            k,
            min_sep,
        } => {
            override_matching(&mut config, *stride, *k, *min_sep)?;
            match_image(image, mask.as_deref(), patch, &config, out)
        }
        Command::Fuse {
            dataset,
            patches,
            k,
            stride,
            min_sep,
            out: dir,
        } => {
            override_matching(&mut config, *stride, *k, *min_sep)?;
            let aligned = load_dataset(dataset)?;
            let patches = stages::load_patches(patches)?;
            let results = stages::fuse(&aligned, &patches, &config.match_config(), config.seed)?;
            stages::save_fused(&results, dir)?;
            emit(out, &json!({ "n_fused": results.len(), "seed": config.seed }))
        }
        Command::Noise {
            dataset,
            alpha,
            out: dir,
        } => {
            config.alpha = alpha.unwrap_or(config.alpha);
            config.validate()?;
            let noisy = stages::noise(&load_dataset(dataset)?, config.alpha, config.seed)?;
            stages::save_samples(&noisy, dir)?;
            emit(
                out,
                &json!({ "n_noisy": noisy.len(), "alpha": config.alpha, "seed": config.seed }),
            )
        }
        Command::Loss { pred, gt, noise_pair } => {
            let report = losses(pred, gt, noise_pair.as_deref())?;
            emit(out, &report)
        }
        Command::Eval {
            pred,
            gt,
            centroid_thresh,
            threshold,
        } => {
            if !(0.0..=1.0).contains(threshold) {
                bail!("`threshold` must be in [0, 1], got {threshold}");
            }
            let (maps, gts) = load_scored(pred, gt)?;
            let preds: Vec<BinaryMask> = maps.par_iter().map(|m| m.binarize(*threshold)).collect();
            let report = evaluate(&preds, &gts, centroid_thresh.unwrap_or(config.centroid_threshold))?;
            emit(out, &report)
        }
        Command::Roc {
            pred,
            gt,
            thresholds,
            centroid_thresh,
        } => {
            let thresholds = parse_thresholds(thresholds)?;
            let (maps, gts) = load_scored(pred, gt)?;
            let curve = roc(
                &maps,
                &gts,
                &thresholds,
                centroid_thresh.unwrap_or(config.centroid_threshold),
            )?;
            writeln!(out, "threshold,fa,pd")?;
            for p in &curve.points {
                writeln!(out, "{},{},{}", p.threshold, p.fa, p.pd)?;
            }
            Ok(())
        }
        Command::Run => {
            let report = run_pipeline(&config)?;
            emit(out, &report)
        }
    }
}

fn override_matching(
    config: &mut PipelineConfig,
    stride: Option<usize>,
    k: Option<usize>,
    min_sep: Option<f64>,
) -> Result<()> {
    config.stride = stride.unwrap_or(config.stride);
    config.k = k.unwrap_or(config.k);
    config.min_separation = min_sep.or(config.min_separation);
    config.validate()
}

fn match_image(
    image: &Path,
    mask: Option<&Path>,
    patch_dir: &Path,
    config: &PipelineConfig,
    out: &mut dyn Write,
) -> Result<()> {
    let img: Image<f64> = dataset_io::load_gray_png(image)?;
    let mask = match mask {
        Some(m) => dataset_io::load_mask_png(m)?,
        None => BinaryMask::empty(img.width(), img.height())?,
    };
    let id = image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let background = LabeledSample::new(id, img, mask)?;
    let match_config = config.match_config();
    for patch in stages::load_patches(patch_dir)? {
        if patch.width() > background.width() || patch.height() > background.height() {
            warn!("patch {} is larger than {}, skipped", patch.id, image.display());
            continue;
        }
        let resolved = match_config.resolved_for(&patch);
        let candidates = sliding_match(&background, &patch, &resolved)?;
        for (rank, c) in top_k(&candidates, &resolved).iter().enumerate() {
            emit(
                out,
                &json!({ "patch_id": patch.id, "rank": rank + 1, "x": c.x, "y": c.y, "score": c.score }),
            )?;
        }
    }
    Ok(())
}

fn parse_thresholds(csv: &str) -> Result<Vec<f64>> {
    csv.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>().with_context(|| format!("bad threshold `{s}`"))
        })
        .collect()
}

/// A ground-truth argument may be a mask directory or a dataset root.
fn mask_dir(gt: &Path) -> PathBuf {
    let nested = gt.join(MASKS_DIR);
    if nested.is_dir() {
        nested
    } else {
        gt.to_path_buf()
    }
}

fn stem_mismatch(what: &str, a: &[String], b: &[String]) -> anyhow::Error {
    let only_a: Vec<_> = a.iter().filter(|s| !b.contains(s)).collect();
    let only_b: Vec<_> = b.iter().filter(|s| !a.contains(s)).collect();
    anyhow::anyhow!("{what}: files only on the left {only_a:?}, only on the right {only_b:?}")
}

/// Prediction PNGs (score = value / 255) paired with ground-truth masks by stem.
fn load_scored(pred: &Path, gt: &Path) -> Result<(Vec<PredictionMap>, Vec<BinaryMask>)> {
    let preds = stages::load_image_dir(pred)?;
    let gts = stages::load_mask_dir(&mask_dir(gt))?;
    let pred_ids: Vec<String> = preds.iter().map(|(s, _)| s.clone()).collect();
    let gt_ids: Vec<String> = gts.iter().map(|(s, _)| s.clone()).collect();
    if pred_ids != gt_ids {
        return Err(stem_mismatch("predictions vs ground truth", &pred_ids, &gt_ids));
    }
    if preds.is_empty() {
        bail!("no prediction PNGs in {}", pred.display());
    }
    let maps = preds.iter().map(|(_, img)| PredictionMap::from_image(img)).collect();
    Ok((maps, gts.into_iter().map(|(_, m)| m).collect()))
}

#[derive(Debug, Serialize)]
pub struct LossReport {
    pub bce: f64,
    pub noise: f64,
    pub total: f64,
}

/// BCE is averaged over every pixel of every pair; the noise term over image pairs.
fn losses(pred: &Path, gt: &Path, noise_pair: Option<&[PathBuf]>) -> Result<LossReport> {
    let (maps, gts) = load_scored(pred, gt)?;
    let per_sample = maps
        .par_iter()
        .zip(gts.par_iter())
        .map(|(m, g)| Ok(bce_loss(m, g)? * m.scores().len() as f64))
        .collect::<Result<Vec<f64>>>()?;
    let pixels: usize = maps.iter().map(|m| m.scores().len()).sum();
    let bce = per_sample.iter().sum::<f64>() / pixels as f64;

    let noise = match noise_pair {
        None => 0.0,
        Some([clean, noisy]) => {
            let clean = stages::load_image_dir(clean)?;
            let noisy = stages::load_image_dir(noisy)?;
            let ca: Vec<String> = clean.iter().map(|(s, _)| s.clone()).collect();
            let na: Vec<String> = noisy.iter().map(|(s, _)| s.clone()).collect();
            if ca != na {
                return Err(stem_mismatch("clean vs noisy", &ca, &na));
            }
            if clean.is_empty() {
                bail!("noise pair directories are empty");
            }
            let terms = clean
                .par_iter()
                .zip(noisy.par_iter())
                .map(|((_, c), (_, n))| Ok(noise_loss(&feature_pyramid(c)?, &feature_pyramid(n)?)?))
                .collect::<Result<Vec<f64>>>()?;
            terms.iter().sum::<f64>() / terms.len() as f64
        }
        Some(_) => bail!("--noise-pair takes exactly two directories"),
    };
    Ok(LossReport {
        bce,
        noise,
        total: total_loss(bce, noise),
    })
}
