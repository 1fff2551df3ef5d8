//! Pixel containers shared by every stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{CompensatedSum, Scalar};

/// Axis-aligned rectangle in pixel coordinates (`x`, `y` is the top-left corner).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.right() && other.x < self.right() && self.y < other.bottom() && other.y < self.bottom()
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.right() <= width && self.bottom() <= height
    }

    /// Grows the rectangle by `pad` on every side, clipped to `[0, width) x [0, height)`.
    pub fn expand_clipped(&self, pad: usize, width: usize, height: usize) -> Rect {
        let x0 = self.x.saturating_sub(pad);
        let y0 = self.y.saturating_sub(pad);
        let x1 = (self.right() + pad).min(width);
        let y1 = (self.bottom() + pad).min(height);
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimensions(format!(
            "width and height must be positive, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::Dimensions(format!(
            "{width}x{height} grid needs {} values, got {len}",
            width * height
        )));
    }
    Ok(())
}

/// Unconstrained real-valued grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_shape<U: Scalar>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().copied().collect::<CompensatedSum>().value() / self.data.len() as f64
    }
}

/// Single-channel intensity image with values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    grid: Grid<T>,
}

impl<T: Scalar> Image<T> {
    /// Builds an image, rejecting non-finite or out-of-range intensities.
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        let grid = Grid::new(width, height, pixels)?;
        let max = T::lit(255.0);
        if let Some((index, v)) = grid
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < T::zero() || **v > max)
        {
            return Err(Error::PixelRange {
                index,
                value: v.to_f64_lossy(),
            });
        }
        Ok(Self { grid })
    }

    /// Builds an image by clamping every value into `[0, 255]`. NaN maps to 0.
    pub fn from_clamped(width: usize, height: usize, mut pixels: Vec<T>) -> Result<Self> {
        let max = T::lit(255.0);
        for v in pixels.iter_mut() {
            *v = if v.is_nan() {
                T::zero()
            } else {
                v.max(T::zero()).min(max)
            };
        }
        Ok(Self {
            grid: Grid::new(width, height, pixels)?,
        })
    }

    /// Wraps a grid without range checks. Used where an operation is
    /// explicitly configured to leave intensities unclamped.
    pub(crate) fn from_grid_unchecked(grid: Grid<T>) -> Self {
        Self { grid }
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn pixels(&self) -> &[T] {
        &self.grid.data
    }

    pub fn as_grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.grid.get(x, y)
    }

    pub fn mean(&self) -> f64 {
        self.grid.mean()
    }

    pub fn pixel_sum(&self) -> CompensatedSum {
        self.grid.data.iter().copied().collect()
    }

    pub fn crop(&self, rect: Rect) -> Result<Self> {
        if !rect.fits_within(self.width(), self.height()) || rect.w == 0 || rect.h == 0 {
            return Err(Error::OutOfBounds {
                x: rect.x,
                y: rect.y,
                w: rect.w,
                h: rect.h,
                image_w: self.width(),
                image_h: self.height(),
            });
        }
        let grid = Grid::from_fn(rect.w, rect.h, |x, y| self.get(rect.x + x, rect.y + y))?;
        Ok(Self { grid })
    }

    pub fn same_shape(&self, mask: &BinaryMask) -> bool {
        self.width() == mask.width() && self.height() == mask.height()
    }
}

/// Row-major boolean mask; `true` marks target pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len())?;
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn crop(&self, rect: Rect) -> Result<Self> {
        if !rect.fits_within(self.width, self.height) || rect.w == 0 || rect.h == 0 {
            return Err(Error::OutOfBounds {
                x: rect.x,
                y: rect.y,
                w: rect.w,
                h: rect.h,
                image_w: self.width,
                image_h: self.height,
            });
        }
        Self::from_fn(rect.w, rect.h, |x, y| self.get(rect.x + x, rect.y + y))
    }

    pub(crate) fn check_same_shape(&self, other: &BinaryMask, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what: what.to_string(),
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            })
        }
    }
}

/// An image with its target mask and an opaque identifier (the file stem on disk).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample<T> {
    id: String,
    image: Image<T>,
    mask: BinaryMask,
}

impl<T: Scalar> LabeledSample<T> {
    pub fn new(id: impl Into<String>, image: Image<T>, mask: BinaryMask) -> Result<Self> {
        let id = id.into();
        if !image.same_shape(&mask) {
            return Err(Error::SampleMismatch {
                id,
                image_w: image.width(),
                image_h: image.height(),
                mask_w: mask.width(),
                mask_h: mask.height(),
            });
        }
        Ok(Self { id, image, mask })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn image(&self) -> &Image<T> {
        &self.image
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Replaces the image, keeping id and mask.
    pub fn with_image(&self, image: Image<T>) -> Result<Self> {
        Self::new(self.id.clone(), image, self.mask.clone())
    }

    pub fn into_parts(self) -> (String, Image<T>, BinaryMask) {
        (self.id, self.image, self.mask)
    }
}
