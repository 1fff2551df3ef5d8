//! Target patch extraction, whole-window SSIM, sliding-window scoring and
//! Top-K region selection.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::label_components;
use crate::error::{Error, Result};
use crate::image::{BinaryMask, Image, LabeledSample, Rect};
use crate::scalar::Scalar;

/// SSIM stabilizers for an 8-bit dynamic range: `(0.01 * 255)^2`, `(0.03 * 255)^2`.
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// A cropped target with its own component mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPatch<T> {
    pub id: String,
    pub image: Image<T>,
    pub mask: BinaryMask,
    pub origin_sample: String,
    /// Crop rectangle in source-image pixels (tight bbox grown by `padding`, clipped).
    pub origin_bbox: Rect,
    /// Tight bounding box of the component in source-image pixels.
    pub tight_bbox: Rect,
    pub padding: usize,
}

impl<T: Scalar> TargetPatch<T> {
    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub stride: usize,
    pub k: usize,
    /// Minimum Euclidean distance between selected window centers.
    /// `None` means `max(patch_w, patch_h)` of the patch being matched.
    pub min_separation: Option<f64>,
    pub exclude_target_overlap: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            stride: 4,
            k: 3,
            min_separation: None,
            exclude_target_overlap: true,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::param("stride", "must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if let Some(s) = self.min_separation {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::param("min_separation", format!("must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// Copy with the patch-sized separation default filled in.
    pub fn resolved_for<T: Scalar>(&self, patch: &TargetPatch<T>) -> MatchConfig {
        MatchConfig {
            min_separation: Some(self.min_separation.unwrap_or(patch.width().max(patch.height()) as f64)),
            ..*self
        }
    }
}

/// One patch per 8-connected mask component, ordered by tight bbox `(y, x)`.
pub fn extract_patches<T: Scalar>(sample: &LabeledSample<T>, padding: usize) -> Vec<TargetPatch<T>> {
    let (w, h) = (sample.width(), sample.height());
    let mut components = label_components(sample.mask());
    components.sort_by_key(|c| (c.bbox.y, c.bbox.x));
    components
        .into_iter()
        .enumerate()
        .map(|(i, comp)| {
            let crop = comp.bbox.expand_clipped(padding, w, h);
            let image = sample.image().crop(crop).expect("crop inside image");
            let mut mask = BinaryMask::empty(crop.w, crop.h).expect("non-empty crop");
            for &(x, y) in &comp.pixels {
                mask.set(x - crop.x, y - crop.y, true);
            }
            TargetPatch {
                id: format!("{}_{:03}", sample.id(), i),
                image,
                mask,
                origin_sample: sample.id().to_string(),
                origin_bbox: crop,
                tight_bbox: comp.bbox,
                padding,
            }
        })
        .collect()
}

/// Single-window SSIM with uniform weights over `n` paired samples.
#[inline]
fn ssim_core<T: Scalar>(n: usize, a: impl Fn(usize) -> T, b: impl Fn(usize) -> T) -> T {
    let count = T::from_usize(n).expect("window size fits scalar");
    let (mut sa, mut sb) = (T::zero(), T::zero());
    for i in 0..n {
        sa = sa + a(i);
        sb = sb + b(i);
    }
    let (ma, mb) = (sa / count, sb / count);
    let (mut vaa, mut vbb, mut vab) = (T::zero(), T::zero(), T::zero());
    for i in 0..n {
        let da = a(i) - ma;
        let db = b(i) - mb;
        vaa = vaa + da * da;
        vbb = vbb + db * db;
        vab = vab + da * db;
    }
    let (va, vb, cov) = (vaa / count, vbb / count, vab / count);
    let two = T::lit(2.0);
    let (c1, c2) = (T::lit(SSIM_C1), T::lit(SSIM_C2));
    ((two * ma * mb + c1) * (two * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
}

/// Whole-window SSIM between two equally sized images.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            what: "ssim operands".into(),
            left_w: a.width(),
            left_h: a.height(),
            right_w: b.width(),
            right_h: b.height(),
        });
    }
    let (pa, pb) = (a.pixels(), b.pixels());
    Ok(ssim_core(pa.len(), |i| pa[i], |i| pb[i]))
}

/// Summed-area table of mask bits for O(1) window occupancy queries.
struct MaskIntegral {
    stride: usize,
    table: Vec<usize>,
}

impl MaskIntegral {
    fn new(mask: &BinaryMask) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let stride = w + 1;
        let mut table = vec![0usize; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0;
            for x in 0..w {
                row += mask.get(x, y) as usize;
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
            }
        }
        Self { stride, table }
    }

    fn count(&self, r: Rect) -> usize {
        let s = self.stride;
        self.table[r.bottom() * s + r.right()] + self.table[r.y * s + r.x]
            - self.table[r.y * s + r.right()]
            - self.table[r.bottom() * s + r.x]
    }
}

/// Scores every stride-grid window of `background` against `patch.image`.
///
/// Output is in grid order (row by row), independent of the thread count.
pub fn sliding_match<T: Scalar>(
    background: &LabeledSample<T>,
    patch: &TargetPatch<T>,
    config: &MatchConfig,
) -> Result<Vec<MatchCandidate>> {
    config.validate()?;
    let (iw, ih) = (background.width(), background.height());
    let (pw, ph) = (patch.width(), patch.height());
    if pw > iw || ph > ih {
        return Err(Error::OutOfBounds {
            x: 0,
            y: 0,
            w: pw,
            h: ph,
            image_w: iw,
            image_h: ih,
        });
    }
    let integral = config
        .exclude_target_overlap
        .then(|| MaskIntegral::new(background.mask()));
    let own_bbox =
        (config.exclude_target_overlap && background.id() == patch.origin_sample).then_some(patch.origin_bbox);

    let image = background.image().pixels();
    let template = patch.image.pixels();
    let ys: Vec<usize> = (0..=ih - ph).step_by(config.stride).collect();
    let rows: Vec<Vec<MatchCandidate>> = ys
        .par_iter()
        .map(|&y| {
            let mut row = Vec::new();
            for x in (0..=iw - pw).step_by(config.stride) {
                let window = Rect::new(x, y, pw, ph);
                if let Some(integral) = &integral {
                    if integral.count(window) > 0 {
                        continue;
                    }
                }
                if own_bbox.is_some_and(|b| b.intersects(&window)) {
                    continue;
                }
                let score = ssim_core(pw * ph, |i| image[(y + i / pw) * iw + x + i % pw], |i| template[i]);
                row.push(MatchCandidate {
                    x,
                    y,
                    score: score.to_f64_lossy(),
                });
            }
            row
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Ranking order: score descending, then `y` ascending, then `x` ascending.
pub fn rank_order(a: &MatchCandidate, b: &MatchCandidate) -> Ordering {
    // Adding 0.0 maps -0.0 to 0.0 so equal scores fall through to (y, x).
    (b.score + 0.0)
        .total_cmp(&(a.score + 0.0))
        .then(a.y.cmp(&b.y))
        .then(a.x.cmp(&b.x))
}

/// Greedy Top-K with center-distance suppression.
///
/// All candidates share one window size, so center distance equals corner
/// distance. A missing `min_separation` disables suppression; use
/// [`MatchConfig::resolved_for`] to get the patch-sized default.
pub fn top_k(candidates: &[MatchCandidate], config: &MatchConfig) -> Vec<MatchCandidate> {
    let min_sep = config.min_separation.unwrap_or(0.0);
    let mut ordered = candidates.to_vec();
    ordered.sort_by(rank_order);
    let mut accepted: Vec<MatchCandidate> = Vec::with_capacity(config.k);
    for c in ordered {
        if accepted.len() == config.k {
            break;
        }
        let clear = accepted.iter().all(|a| {
            let dx = a.x as f64 - c.x as f64;
            let dy = a.y as f64 - c.y as f64;
            (dx * dx + dy * dy).sqrt() >= min_sep
        });
        if clear {
            accepted.push(c);
        }
    }
    accepted
}
