//! Seamless cloning: the pasted rectangle's interior solves the 5-point
//! Poisson equation `Δu = div g` where `g` is the patch gradient field and
//! the rectangle border is pinned to the background (Dirichlet).

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, Grid, Image, LabeledSample, Rect};
use crate::patch_match::{sliding_match, top_k, MatchConfig, TargetPatch};
use crate::scalar::Scalar;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

/// Forward-difference gradients of a patch; the last column of `gx` and the
/// last row of `gy` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceField<T> {
    pub gx: Grid<T>,
    pub gy: Grid<T>,
}

impl<T: Scalar> GuidanceField<T> {
    pub fn from_image(image: &Image<T>) -> Self {
        let (w, h) = (image.width(), image.height());
        let gx = Grid::from_fn(w, h, |x, y| {
            if x + 1 < w {
                image.get(x + 1, y) - image.get(x, y)
            } else {
                T::zero()
            }
        })
        .expect("non-empty");
        let gy = Grid::from_fn(w, h, |x, y| {
            if y + 1 < h {
                image.get(x, y + 1) - image.get(x, y)
            } else {
                T::zero()
            }
        })
        .expect("non-empty");
        Self { gx, gy }
    }

    pub fn width(&self) -> usize {
        self.gx.width()
    }

    pub fn height(&self) -> usize {
        self.gx.height()
    }

    /// Backward-difference divergence, the adjoint of the forward gradient.
    pub fn divergence(&self) -> Grid<T> {
        Grid::from_fn(self.width(), self.height(), |x, y| {
            let mut d = self.gx.get(x, y) + self.gy.get(x, y);
            if x > 0 {
                d = d - self.gx.get(x - 1, y);
            }
            if y > 0 {
                d = d - self.gy.get(x, y - 1);
            }
            d
        })
        .expect("non-empty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution<T> {
    /// Full rectangle: border copied from the boundary grid, interior solved.
    pub values: Grid<T>,
    pub iterations: usize,
    /// `‖Δu − rhs‖₂ / ‖rhs‖₂`, or the absolute norm when `rhs` is zero.
    pub residual: f64,
}

/// Interior 5-point operator `-Δ` with zero Dirichlet data: `out = A x`.
fn apply_neg_laplacian<T: Scalar>(x: &[T], iw: usize, ih: usize, out: &mut [T]) {
    let four = T::lit(4.0);
    for j in 0..ih {
        for i in 0..iw {
            let idx = j * iw + i;
            let mut v = four * x[idx];
            if i > 0 {
                v = v - x[idx - 1];
            }
            if i + 1 < iw {
                v = v - x[idx + 1];
            }
            if j > 0 {
                v = v - x[idx - iw];
            }
            if j + 1 < ih {
                v = v - x[idx + iw];
            }
            out[idx] = v;
        }
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Solves `Δu = rhs` on the interior of the rectangle with `u = boundary` on
/// its border, by unpreconditioned conjugate gradient.
///
/// Both grids cover the full rectangle: `rhs` is read on interior cells only,
/// `boundary` on border cells only.
pub fn solve_poisson<T: Scalar>(
    rhs: &Grid<T>,
    boundary: &Grid<T>,
    tolerance: f64,
    max_iters: usize,
) -> Result<PoissonSolution<T>> {
    let (w, h) = (rhs.width(), rhs.height());
    if !rhs.same_shape(boundary) {
        return Err(Error::DimensionMismatch {
            what: "poisson rhs and boundary".into(),
            left_w: w,
            left_h: h,
            right_w: boundary.width(),
            right_h: boundary.height(),
        });
    }
    if w < 3 || h < 3 {
        return Err(Error::Dimensions(format!(
            "poisson rectangle must be at least 3x3, got {w}x{h}"
        )));
    }
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::param("tolerance", format!("must be positive, got {tolerance}")));
    }

    let (iw, ih) = (w - 2, h - 2);
    let n = iw * ih;
    // b = (boundary neighbour sum) - rhs
    let mut b = vec![T::zero(); n];
    let mut rhs_norm2 = 0.0f64;
    for j in 0..ih {
        for i in 0..iw {
            let (x, y) = (i + 1, j + 1);
            let f = rhs.get(x, y);
            rhs_norm2 += f.to_f64_lossy().powi(2);
            let mut v = -f;
            if x == 1 {
                v = v + boundary.get(0, y);
            }
            if x == w - 2 {
                v = v + boundary.get(w - 1, y);
            }
            if y == 1 {
                v = v + boundary.get(x, 0);
            }
            if y == h - 2 {
                v = v + boundary.get(x, h - 1);
            }
            b[j * iw + i] = v;
        }
    }
    let scale = if rhs_norm2 > 0.0 { rhs_norm2.sqrt() } else { 1.0 };
    let threshold = tolerance * scale;

    let mut x = vec![T::zero(); n];
    let mut ax = vec![T::zero(); n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    let true_residual = |x: &[T], ax: &mut [T]| -> (Vec<T>, f64) {
        apply_neg_laplacian(x, iw, ih, ax);
        let r: Vec<T> = b.iter().zip(ax.iter()).map(|(b, a)| *b - *a).collect();
        let norm = dot(&r, &r).to_f64_lossy().sqrt();
        (r, norm)
    };

    loop {
        if rr.to_f64_lossy().sqrt() <= threshold {
            let (true_r, norm) = true_residual(&x, &mut ax);
            if norm <= threshold {
                return Ok(PoissonSolution {
                    values: assemble(&x, boundary, iw, ih),
                    iterations,
                    residual: norm / scale,
                });
            }
            // Recursive residual drifted; restart from the true one.
            r = true_r;
            p = r.clone();
            rr = dot(&r, &r);
        }
        if iterations >= max_iters {
            let (_, norm) = true_residual(&x, &mut ax);
            return Err(Error::NoConvergence {
                iterations,
                residual: norm / scale,
            });
        }
        apply_neg_laplacian(&p, iw, ih, &mut ax);
        let pap = dot(&p, &ax);
        if pap <= T::zero() {
            let (_, norm) = true_residual(&x, &mut ax);
            return Err(Error::NoConvergence {
                iterations,
                residual: norm / scale,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ax[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        iterations += 1;
    }
}

fn assemble<T: Scalar>(interior: &[T], boundary: &Grid<T>, iw: usize, ih: usize) -> Grid<T> {
    let mut out = boundary.clone();
    for j in 0..ih {
        for i in 0..iw {
            out.set(i + 1, j + 1, interior[j * iw + i]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub id: String,
    pub patch_id: String,
    pub background_id: String,
    pub paste_x: usize,
    pub paste_y: usize,
    /// 1-based rank among the selected regions; 0 for a standalone paste.
    pub k_rank: usize,
    pub ssim: Option<f64>,
    pub solver_iterations: usize,
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult<T> {
    pub image: Image<T>,
    pub mask: BinaryMask,
    pub provenance: Provenance,
}

impl<T: Scalar> FusionResult<T> {
    pub fn paste_rect(&self, patch_w: usize, patch_h: usize) -> Rect {
        Rect::new(self.provenance.paste_x, self.provenance.paste_y, patch_w, patch_h)
    }

    pub fn to_sample(&self) -> LabeledSample<T> {
        LabeledSample::new(self.provenance.id.clone(), self.image.clone(), self.mask.clone())
            .expect("fusion keeps shapes consistent")
    }
}

/// The Dirichlet problem a paste at `paste_at` poses: `(rhs, boundary)`.
pub fn clone_system<T: Scalar>(
    background: &Image<T>,
    patch: &TargetPatch<T>,
    paste_at: (usize, usize),
) -> Result<(Grid<T>, Grid<T>)> {
    let rect = Rect::new(paste_at.0, paste_at.1, patch.width(), patch.height());
    if !rect.fits_within(background.width(), background.height()) {
        return Err(Error::OutOfBounds {
            x: rect.x,
            y: rect.y,
            w: rect.w,
            h: rect.h,
            image_w: background.width(),
            image_h: background.height(),
        });
    }
    let rhs = GuidanceField::from_image(&patch.image).divergence();
    let boundary = background.crop(rect)?.as_grid().clone();
    Ok((rhs, boundary))
}

/// Poisson-blends `patch` into `background` with its top-left corner at `paste_at`.
pub fn seamless_clone<T: Scalar>(
    background: &Image<T>,
    patch: &TargetPatch<T>,
    paste_at: (usize, usize),
    tolerance: f64,
) -> Result<FusionResult<T>> {
    let (rhs, boundary) = clone_system(background, patch, paste_at)?;
    let solution = solve_poisson(&rhs, &boundary, tolerance, DEFAULT_MAX_ITERS)?;
    let (px, py) = paste_at;
    let (bw, bh) = (background.width(), background.height());

    let mut pixels = background.pixels().to_vec();
    let full = T::lit(255.0);
    for y in 1..patch.height() - 1 {
        for x in 1..patch.width() - 1 {
            let v = solution.values.get(x, y).max(T::zero()).min(full);
            pixels[(py + y) * bw + px + x] = v;
        }
    }
    let image = Image::new(bw, bh, pixels)?;

    let mut mask = BinaryMask::empty(bw, bh)?;
    for y in 0..patch.height() {
        for x in 0..patch.width() {
            if patch.mask.get(x, y) {
                mask.set(px + x, py + y, true);
            }
        }
    }

    Ok(FusionResult {
        image,
        mask,
        provenance: Provenance {
            id: format!("{}_at_{}_{}", patch.id, px, py),
            patch_id: patch.id.clone(),
            background_id: String::new(),
            paste_x: px,
            paste_y: py,
            k_rank: 0,
            ssim: None,
            solver_iterations: solution.iterations,
            final_residual: solution.residual,
        },
    })
}

/// Background/patch pairings: `max(backgrounds, patches)` jobs, patches in a
/// seeded shuffle, each list walked round-robin.
pub fn pairings(n_backgrounds: usize, n_patches: usize, seed: u64) -> Vec<(usize, usize)> {
    if n_backgrounds == 0 || n_patches == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n_patches).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..n_backgrounds.max(n_patches))
        .map(|j| (j % n_backgrounds, order[j % n_patches]))
        .collect()
}

/// Top-K Poisson fusion over a dataset; results follow job order, then rank.
pub fn fuse_dataset<T: Scalar>(
    aligned: &[LabeledSample<T>],
    patches: &[TargetPatch<T>],
    match_config: &MatchConfig,
    seed: u64,
) -> Result<Vec<FusionResult<T>>> {
    if aligned.is_empty() {
        return Err(Error::Empty("fuse_dataset needs at least one background"));
    }
    if patches.is_empty() {
        return Err(Error::Empty("fuse_dataset needs at least one patch"));
    }
    match_config.validate()?;

    let jobs = pairings(aligned.len(), patches.len(), seed);
    let per_job = jobs
        .par_iter()
        .map(|&(bi, pi)| fuse_pair(&aligned[bi], &patches[pi], match_config))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

fn fuse_pair<T: Scalar>(
    background: &LabeledSample<T>,
    patch: &TargetPatch<T>,
    match_config: &MatchConfig,
) -> Result<Vec<FusionResult<T>>> {
    let (bw, bh) = (background.width(), background.height());
    let (pw, ph) = (patch.width(), patch.height());
    if pw < 3 || ph < 3 || pw + 2 > bw || ph + 2 > bh {
        debug!(
            "skipping patch {} ({pw}x{ph}) on {}: no interior paste site",
            patch.id,
            background.id()
        );
        return Ok(Vec::new());
    }
    let config = match_config.resolved_for(patch);
    // Paste rectangles must sit strictly inside the frame.
    let candidates: Vec<_> = sliding_match(background, patch, &config)?
        .into_iter()
        .filter(|c| c.x > 0 && c.y > 0 && c.x + pw < bw && c.y + ph < bh)
        .collect();
    if candidates.is_empty() {
        debug!("no admissible windows for patch {} on {}", patch.id, background.id());
        return Ok(Vec::new());
    }
    top_k(&candidates, &config)
        .into_iter()
        .enumerate()
        .map(|(rank, site)| {
            let mut result = seamless_clone(background.image(), patch, (site.x, site.y), DEFAULT_TOLERANCE)?;
            let p = &mut result.provenance;
            p.k_rank = rank + 1;
            p.ssim = Some(site.score);
            p.background_id = background.id().to_string();
            p.id = format!("{}__{}__k{}", background.id(), patch.id, rank + 1);
            Ok(result)
        })
        .collect()
}
