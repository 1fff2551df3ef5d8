//! Dataset-level gamma alignment of a source set toward a target set's mean
//! intensity: `O = 255 * (I / 255)^(1 / gamma)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset_io::{dataset_stats, DatasetStats};
use crate::error::{Error, Result};
use crate::image::{Image, LabeledSample};
use crate::scalar::Scalar;

pub const GAMMA_MIN: f64 = 1.0 / 64.0;
pub const GAMMA_MAX: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub gamma: f64,
    /// Set when the value came from [`refine_gamma`] rather than the closed form.
    pub refined: bool,
}

impl GammaParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::param(
                "gamma",
                format!("must be positive and finite, got {gamma}"),
            ));
        }
        Ok(Self { gamma, refined: false })
    }

    pub fn identity() -> Self {
        Self {
            gamma: 1.0,
            refined: false,
        }
    }
}

/// Settings for bisection refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            tolerance: 0.5,
            max_iters: 100,
        }
    }
}

fn check_mean(name: &'static str, mean: f64) -> Result<()> {
    if mean.is_finite() && mean > 0.0 && mean < 255.0 {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must lie strictly inside (0, 255), got {mean}"),
        ))
    }
}

/// Closed-form gamma mapping `source_mean` onto `target_mean`.
pub fn compute_gamma(source_mean: f64, target_mean: f64) -> Result<GammaParams> {
    check_mean("source_mean", source_mean)?;
    check_mean("target_mean", target_mean)?;
    let gamma = (source_mean / 255.0).ln() / (target_mean / 255.0).ln();
    GammaParams::new(gamma)
}

#[inline]
fn gamma_pixel<T: Scalar>(value: T, inv_gamma: T, full: T) -> T {
    let out = full * (value / full).powf(inv_gamma);
    out.max(T::zero()).min(full)
}

pub fn apply_gamma<T: Scalar>(image: &Image<T>, params: GammaParams) -> Image<T> {
    let inv_gamma = T::lit(1.0 / params.gamma);
    let full = T::lit(255.0);
    let pixels: Vec<T> = image
        .pixels()
        .par_iter()
        .map(|v| gamma_pixel(*v, inv_gamma, full))
        .collect();
    Image::new(image.width(), image.height(), pixels).expect("gamma output stays in range")
}

fn corrected_mean<T: Scalar>(samples: &[LabeledSample<T>], gamma: f64) -> f64 {
    let params = GammaParams { gamma, refined: false };
    let corrected: Vec<LabeledSample<T>> = samples
        .iter()
        .map(|s| s.with_image(apply_gamma(s.image(), params)).expect("shape preserved"))
        .collect();
    dataset_stats(&corrected).expect("non-empty").mean_intensity
}

/// Bisection (in log-gamma) for the gamma whose corrected dataset mean hits
/// `target_mean`. The corrected mean is non-decreasing in gamma.
pub fn refine_gamma<T: Scalar>(
    source: &[LabeledSample<T>],
    target_mean: f64,
    tolerance: f64,
    max_iters: usize,
) -> Result<GammaParams> {
    if source.is_empty() {
        return Err(Error::Empty("refine_gamma needs at least one source sample"));
    }
    check_mean("target_mean", target_mean)?;
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::param("tolerance", format!("must be positive, got {tolerance}")));
    }

    let min_mean = corrected_mean(source, GAMMA_MIN);
    let max_mean = corrected_mean(source, GAMMA_MAX);
    if target_mean < min_mean - tolerance || target_mean > max_mean + tolerance {
        return Err(Error::Unreachable {
            target: target_mean,
            min: min_mean,
            max: max_mean,
        });
    }

    let (mut lo, mut hi) = (GAMMA_MIN.ln(), GAMMA_MAX.ln());
    let mut best = (f64::INFINITY, 1.0);
    let mut consider = |log_gamma: f64| {
        let gamma = log_gamma.exp();
        let mean = corrected_mean(source, gamma);
        let err = (mean - target_mean).abs();
        if err < best.0 {
            best = (err, gamma);
        }
        (mean, err)
    };

    // gamma = 1 first: an already-aligned set needs no correction.
    let (_, err) = consider(0.0);
    if err > tolerance {
        for _ in 0..max_iters {
            let mid = 0.5 * (lo + hi);
            let (mean, err) = consider(mid);
            if err <= tolerance {
                break;
            }
            if mean < target_mean {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    Ok(GammaParams {
        gamma: best.1,
        refined: true,
    })
}

#[derive(Debug, Clone)]
pub struct Alignment<T> {
    pub samples: Vec<LabeledSample<T>>,
    pub params: GammaParams,
}

/// Gamma-corrects every source image with one dataset-level gamma; masks pass through.
pub fn align_dataset<T: Scalar>(
    source: &[LabeledSample<T>],
    target_stats: &DatasetStats,
    refine: Option<Refinement>,
) -> Result<Alignment<T>> {
    let source_stats = dataset_stats(source)?;
    let params = match refine {
        None => compute_gamma(source_stats.mean_intensity, target_stats.mean_intensity)?,
        Some(r) => refine_gamma(source, target_stats.mean_intensity, r.tolerance, r.max_iters)?,
    };
    let samples = source
        .par_iter()
        .map(|s| s.with_image(apply_gamma(s.image(), params)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Alignment { samples, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::BinaryMask;

    fn constant(id: &str, v: f64) -> LabeledSample<f64> {
        LabeledSample::new(id, Image::filled(4, 4, v).unwrap(), BinaryMask::empty(4, 4).unwrap()).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(compute_gamma(127.5, 127.5).unwrap().gamma, 1.0);
        let g = compute_gamma(127.5, 63.75).unwrap().gamma;
        assert!((g - 0.5).abs() < 1e-12);
        // Substituting back: (127.5/255)^(1/g) * 255 == 63.75.
        assert!((255.0 * (0.5f64).powf(1.0 / g) - 63.75).abs() < 1e-9);
        assert!((compute_gamma(63.75, 127.5).unwrap().gamma - 2.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_rejects_degenerate_means() {
        for (s, t) in [
            (0.0, 10.0),
            (255.0, 10.0),
            (10.0, 0.0),
            (10.0, 255.0),
            (-1.0, 5.0),
            (5.0, 300.0),
        ] {
            assert!(compute_gamma(s, t).is_err(), "({s}, {t})");
        }
    }

    #[test]
    fn apply_examples() {
        let img = Image::<f64>::new(4, 1, vec![0.0, 127.5, 200.0, 255.0]).unwrap();
        assert_eq!(apply_gamma(&img, GammaParams::identity()).pixels(), img.pixels());
        let out = apply_gamma(&img, GammaParams::new(0.5).unwrap());
        assert_eq!(out.pixels()[0], 0.0);
        assert_eq!(out.pixels()[3], 255.0);
        assert!((out.pixels()[1] - 63.75).abs() < 1e-12);
    }

    #[test]
    fn refine_already_aligned() {
        let set = vec![constant("a", 80.0), constant("b", 120.0)];
        let p = refine_gamma(&set, 100.0, 0.5, 60).unwrap();
        assert!(p.refined);
        assert_eq!(p.gamma, 1.0);
    }

    #[test]
    fn refine_constant_image_matches_closed_form() {
        let set = vec![constant("a", 180.0)];
        let closed = compute_gamma(180.0, 90.0).unwrap().gamma;
        let refined = refine_gamma(&set, 90.0, 1e-9, 200).unwrap().gamma;
        assert!((refined - closed).abs() / closed < 1e-9, "{refined} vs {closed}");
    }

    #[test]
    fn refine_two_image_set() {
        let set = vec![constant("a", 50.0), constant("b", 200.0)];
        let p = refine_gamma(&set, 100.0, 0.5, 100).unwrap();
        // Independent re-evaluation of the corrected mean.
        let f = |v: f64| 255.0 * (v / 255.0).powf(1.0 / p.gamma);
        let mean = (f(50.0) + f(200.0)) / 2.0;
        assert!((mean - 100.0).abs() <= 0.5, "{mean}");
    }

    #[test]
    fn refine_unreachable_target() {
        // Pure black and white images never move under gamma.
        let set = vec![constant("a", 0.0), constant("b", 255.0)];
        let err = refine_gamma(&set, 20.0, 0.5, 50).unwrap_err();
        assert!(matches!(err, Error::Unreachable { .. }), "{err}");
    }

    #[test]
    fn align_identity_and_refined() {
        let set = vec![constant("a", 60.0), constant("b", 140.0)];
        let stats = dataset_stats(&set).unwrap();
        let same = align_dataset(&set, &stats, None).unwrap();
        for (a, b) in same.samples.iter().zip(&set) {
            assert_eq!(a.image().pixels(), b.image().pixels());
        }

        let target = DatasetStats {
            sample_count: 3,
            mean_intensity: 70.0,
        };
        let out = align_dataset(
            &set,
            &target,
            Some(Refinement {
                tolerance: 1.0,
                max_iters: 100,
            }),
        )
        .unwrap();
        assert_eq!(out.samples.len(), set.len());
        let mean = dataset_stats(&out.samples).unwrap().mean_intensity;
        assert!((mean - 70.0).abs() <= 1.0);
        for (a, b) in out.samples.iter().zip(&set) {
            assert_eq!(a.mask(), b.mask());
        }
    }
}
