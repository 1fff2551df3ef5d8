//! 8-connected component labeling.

use crate::image::{BinaryMask, Rect};

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Pixel coordinates `(x, y)` in raster order.
    pub pixels: Vec<(usize, usize)>,
    /// Tight bounding box.
    pub bbox: Rect,
}

impl Component {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let (sx, sy) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x as f64, sy + y as f64));
        (sx / n, sy / n)
    }
}

/// Labels 8-connected components, ordered by their first pixel in raster order.
pub fn label_components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || !mask.bits()[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            pixels.push((x, y));
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let n = ny * w + nx;
                    if !seen[n] && mask.bits()[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        pixels.sort_by_key(|&(x, y)| (y, x));
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &(x, y) in &pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        out.push(Component {
            pixels,
            bbox: Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
        });
    }
    out
}
