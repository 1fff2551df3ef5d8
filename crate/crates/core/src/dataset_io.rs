//! Loading and saving `images/` + `masks/` sample directories.
//!
//! Pixels stay real-valued in memory; quantization to 8 bits (round half to
//! even) happens only when an image is written.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage as Luma8Image, ImageReader};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, Image, LabeledSample};
use crate::scalar::{CompensatedSum, Scalar};

pub const IMAGES_DIR: &str = "images";
pub const MASKS_DIR: &str = "masks";

/// Mask pixels strictly above this value are target pixels.
pub const MASK_THRESHOLD: u8 = 127;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub sample_count: usize,
    pub mean_intensity: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Lists `*.png` stems in `dir`, sorted lexicographically.
pub fn list_png_stems(dir: &Path) -> Result<Vec<String>> {
    let mut stems = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    Ok(stems)
}

fn read_luma8(path: &Path) -> Result<Luma8Image> {
    let reader = ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?;
    if reader.format() != Some(image::ImageFormat::Png) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "not a PNG file".into(),
        });
    }
    let decoded = reader.decode().map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    match decoded {
        DynamicImage::ImageLuma8(img) => Ok(img),
        other => Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected 8-bit grayscale, found {:?}", other.color()),
        }),
    }
}

fn write_luma8(path: &Path, width: usize, height: usize, bytes: Vec<u8>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let buf = Luma8Image::from_raw(width as u32, height as u32, bytes)
        .ok_or_else(|| Error::Dimensions(format!("{width}x{height} buffer")))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Reads an 8-bit grayscale PNG as a real-valued image.
pub fn load_gray_png<T: Scalar>(path: &Path) -> Result<Image<T>> {
    let img = read_luma8(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = img.into_raw().into_iter().map(|v| T::lit(v as f64)).collect();
    Image::new(w, h, pixels)
}

/// Reads an 8-bit grayscale PNG as a mask, binarizing at [`MASK_THRESHOLD`].
pub fn load_mask_png(path: &Path) -> Result<BinaryMask> {
    let img = read_luma8(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let bits = img.into_raw().into_iter().map(|v| v > MASK_THRESHOLD).collect();
    BinaryMask::new(w, h, bits)
}

/// Rounds an intensity to the nearest 8-bit level, ties to even.
pub fn quantize<T: Scalar>(value: T) -> u8 {
    value.to_f64_lossy().clamp(0.0, 255.0).round_ties_even() as u8
}

/// Returns the image as it would read back after [`save_gray_png`].
pub fn quantized<T: Scalar>(image: &Image<T>) -> Image<T> {
    let pixels = image.pixels().iter().map(|v| T::lit(quantize(*v) as f64)).collect();
    Image::new(image.width(), image.height(), pixels).expect("quantized pixels are in range")
}

pub fn save_gray_png<T: Scalar>(image: &Image<T>, path: &Path) -> Result<()> {
    let bytes = image.pixels().iter().map(|v| quantize(*v)).collect();
    write_luma8(path, image.width(), image.height(), bytes)
}

pub fn save_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    let bytes = mask.bits().iter().map(|b| if *b { 255 } else { 0 }).collect();
    write_luma8(path, mask.width(), mask.height(), bytes)
}

/// Loads every `images/NAME.png` + `masks/NAME.png` pair under `root`, in
/// lexicographic order of `NAME`.
pub fn load_dataset<T: Scalar>(root: &Path) -> Result<Vec<LabeledSample<T>>> {
    let images_dir = root.join(IMAGES_DIR);
    let masks_dir = root.join(MASKS_DIR);
    let images: BTreeSet<String> = list_png_stems(&images_dir)?.into_iter().collect();
    let masks: BTreeSet<String> = list_png_stems(&masks_dir)?.into_iter().collect();

    let images_only: Vec<String> = images.difference(&masks).cloned().collect();
    let masks_only: Vec<String> = masks.difference(&images).cloned().collect();
    if !images_only.is_empty() || !masks_only.is_empty() {
        return Err(Error::OrphanFiles {
            images_only,
            masks_only,
        });
    }

    let names: Vec<String> = images.into_iter().collect();
    names
        .par_iter()
        .map(|name| {
            let file = format!("{name}.png");
            let image = load_gray_png::<T>(&images_dir.join(&file))?;
            let mask = load_mask_png(&masks_dir.join(&file))?;
            LabeledSample::new(name.clone(), image, mask)
        })
        .collect()
}

/// Writes `out_dir/images/ID.png` and `out_dir/masks/ID.png`.
pub fn save_sample<T: Scalar>(sample: &LabeledSample<T>, out_dir: &Path) -> Result<()> {
    let file = format!("{}.png", sample.id());
    save_gray_png(sample.image(), &sample_path(out_dir, IMAGES_DIR, &file))?;
    save_mask_png(sample.mask(), &sample_path(out_dir, MASKS_DIR, &file))
}

fn sample_path(out_dir: &Path, sub: &str, file: &str) -> PathBuf {
    out_dir.join(sub).join(file)
}

/// Saves all samples in parallel; fails on the first error in list order.
pub fn save_dataset<T: Scalar>(samples: &[LabeledSample<T>], out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir.join(IMAGES_DIR)).map_err(io_err(out_dir))?;
    fs::create_dir_all(out_dir.join(MASKS_DIR)).map_err(io_err(out_dir))?;
    samples
        .par_iter()
        .map(|s| save_sample(s, out_dir))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Pixel-weighted mean intensity over the whole set.
pub fn dataset_stats<T: Scalar>(samples: &[LabeledSample<T>]) -> Result<DatasetStats> {
    if samples.is_empty() {
        return Err(Error::Empty("dataset_stats needs at least one sample"));
    }
    let partials: Vec<CompensatedSum> = samples.par_iter().map(|s| s.image().pixel_sum()).collect();
    let mut total = CompensatedSum::new();
    for p in &partials {
        total.merge(p);
    }
    let count: usize = samples.iter().map(|s| s.image().pixels().len()).sum();
    Ok(DatasetStats {
        sample_count: samples.len(),
        mean_intensity: total.value() / count as f64,
    })
}
