//! Gaussian noise injection and the loss terms of noise-consistency training:
//! multi-scale feature MSE, pixel-wise BCE and their unit-weight sum.
//!
//! The feature extractor here is a fixed 2x2 average-pooling pyramid. It
//! stands in for learned multi-scale features; any extractor producing grids
//! of the same shapes can be fed to [`noise_loss`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, Grid, Image};
use crate::rng::CounterRng;
use crate::scalar::Scalar;

pub const PYRAMID_LEVELS: usize = 4;
pub const MIN_PYRAMID_SIDE: usize = 8;
pub const BCE_EPSILON: f64 = 1e-7;
pub const DEFAULT_ALPHA: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation in normalized `[0, 1]` intensity units.
    pub alpha: f64,
    pub seed: u64,
    pub clamp: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            seed: 0,
            clamp: true,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_finite() && self.alpha >= 0.0 {
            Ok(())
        } else {
            Err(Error::param(
                "alpha",
                format!("must be finite and >= 0, got {}", self.alpha),
            ))
        }
    }
}

/// Adds `N(0, alpha^2)` noise in normalized units; pixel `i` uses draw `i` of
/// the generator keyed by `config.seed`.
///
/// With `clamp` off the result may leave `[0, 255]`.
pub fn add_noise<T: Scalar>(image: &Image<T>, config: &NoiseConfig) -> Result<Image<T>> {
    config.validate()?;
    let rng = CounterRng::new(config.seed);
    let amplitude = 255.0 * config.alpha;
    let full = T::lit(255.0);
    let clamp = config.clamp;
    let pixels: Vec<T> = image
        .pixels()
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let out = *v + T::lit(amplitude * rng.normal(i as u64));
            if clamp {
                out.max(T::zero()).min(full)
            } else {
                out
            }
        })
        .collect();
    let grid = Grid::new(image.width(), image.height(), pixels)?;
    Ok(Image::from_grid_unchecked(grid))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid<T> {
    levels: Vec<Grid<T>>,
}

impl<T: Scalar> FeaturePyramid<T> {
    /// Wraps externally computed feature maps; requires exactly four levels
    /// with each level `ceil(previous / 2)` in both dimensions.
    pub fn from_levels(levels: Vec<Grid<T>>) -> Result<Self> {
        if levels.len() != PYRAMID_LEVELS {
            return Err(Error::Dimensions(format!(
                "pyramid needs {PYRAMID_LEVELS} levels, got {}",
                levels.len()
            )));
        }
        for pair in levels.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.width() != a.width().div_ceil(2) || b.height() != a.height().div_ceil(2) {
                return Err(Error::Dimensions(format!(
                    "level {}x{} does not halve {}x{}",
                    b.width(),
                    b.height(),
                    a.width(),
                    a.height()
                )));
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[Grid<T>] {
        &self.levels
    }

    pub fn element_count(&self) -> usize {
        self.levels.iter().map(Grid::len).sum()
    }
}

/// 2x2 average pooling; edge cells average whatever pixels exist.
pub fn avg_pool2<T: Scalar>(grid: &Grid<T>) -> Grid<T> {
    let (w, h) = (grid.width(), grid.height());
    Grid::from_fn(w.div_ceil(2), h.div_ceil(2), |x, y| {
        let mut sum = T::zero();
        let mut n = 0usize;
        for yy in 2 * y..(2 * y + 2).min(h) {
            for xx in 2 * x..(2 * x + 2).min(w) {
                sum = sum + grid.get(xx, yy);
                n += 1;
            }
        }
        sum / T::from_usize(n).expect("small count")
    })
    .expect("non-empty")
}

pub fn feature_pyramid<T: Scalar>(image: &Image<T>) -> Result<FeaturePyramid<T>> {
    if image.width() < MIN_PYRAMID_SIDE || image.height() < MIN_PYRAMID_SIDE {
        return Err(Error::Dimensions(format!(
            "feature pyramid needs at least {MIN_PYRAMID_SIDE}x{MIN_PYRAMID_SIDE}, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    let inv = T::lit(1.0 / 255.0);
    let first = Grid::new(
        image.width(),
        image.height(),
        image.pixels().iter().map(|v| *v * inv).collect(),
    )?;
    let mut levels = vec![first];
    while levels.len() < PYRAMID_LEVELS {
        let next = avg_pool2(levels.last().expect("non-empty"));
        levels.push(next);
    }
    FeaturePyramid::from_levels(levels)
}

/// Mean squared difference pooled over every element of every level.
pub fn noise_loss<T: Scalar>(clean: &FeaturePyramid<T>, noisy: &FeaturePyramid<T>) -> Result<T> {
    let mut sum = T::zero();
    for (a, b) in clean.levels.iter().zip(&noisy.levels) {
        if !a.same_shape(b) {
            return Err(Error::DimensionMismatch {
                what: "noise_loss pyramid level".into(),
                left_w: a.width(),
                left_h: a.height(),
                right_w: b.width(),
                right_h: b.height(),
            });
        }
        for (x, y) in a.data().iter().zip(b.data()) {
            let d = *x - *y;
            sum = sum + d * d;
        }
    }
    Ok(sum / T::from_usize(clean.element_count()).expect("count fits"))
}

/// Per-pixel target probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMap<T> {
    grid: Grid<T>,
}

impl<T: Scalar> PredictionMap<T> {
    pub fn new(width: usize, height: usize, scores: Vec<T>) -> Result<Self> {
        let grid = Grid::new(width, height, scores)?;
        if let Some((index, v)) = grid
            .data()
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(Error::PixelRange {
                index,
                value: v.to_f64_lossy(),
            });
        }
        Ok(Self { grid })
    }

    /// Scales an 8-bit-range image to `[0, 1]`.
    pub fn from_image(image: &Image<T>) -> Self {
        let inv = T::lit(1.0 / 255.0);
        let scores = image.pixels().iter().map(|v| (*v * inv).min(T::one())).collect();
        Self::new(image.width(), image.height(), scores).expect("scaled image is in range")
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn scores(&self) -> &[T] {
        self.grid.data()
    }

    /// Pixels with score `>= threshold` become targets.
    pub fn binarize(&self, threshold: T) -> BinaryMask {
        BinaryMask::new(
            self.width(),
            self.height(),
            self.scores().iter().map(|s| *s >= threshold).collect(),
        )
        .expect("shape preserved")
    }
}

pub fn bce_loss<T: Scalar>(pred: &PredictionMap<T>, target: &BinaryMask) -> Result<T> {
    if pred.width() != target.width() || pred.height() != target.height() {
        return Err(Error::DimensionMismatch {
            what: "bce prediction and target".into(),
            left_w: pred.width(),
            left_h: pred.height(),
            right_w: target.width(),
            right_h: target.height(),
        });
    }
    let eps = T::lit(BCE_EPSILON);
    let hi = T::one() - eps;
    let mut sum = T::zero();
    for (p, y) in pred.scores().iter().zip(target.bits()) {
        let p = p.max(eps).min(hi);
        sum = sum + if *y { p.ln() } else { (T::one() - p).ln() };
    }
    Ok(-sum / T::from_usize(pred.scores().len()).expect("count fits"))
}

/// Unit-weight sum of the segmentation and consistency terms.
pub fn total_loss<T: Scalar>(bce: T, noise: T) -> T {
    bce + noise
}
