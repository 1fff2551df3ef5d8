#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crossview::dataset_io::save_dataset;
use crossview::image::Image;
use crossview::{BinaryMask, LabeledSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textured background around `mean` with `targets` bright Gaussian spots;
/// each spot's mask is the 3x3 block at its center.
pub fn frame(id: &str, w: usize, h: usize, mean: f64, targets: usize, rng: &mut impl Rng) -> LabeledSample {
    let (fx, fy) = (rng.random_range(9.0..25.0), rng.random_range(9.0..25.0));
    let mut pixels: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            mean + 18.0 * (x / fx).sin() + 12.0 * (y / fy).cos() + rng.random_range(-6.0..6.0)
        })
        .collect();
    let mut mask = BinaryMask::empty(w, h).unwrap();
    let mut centers: Vec<(usize, usize)> = Vec::new();
    while centers.len() < targets {
        let c = (rng.random_range(12..w - 12), rng.random_range(12..h - 12));
        if centers
            .iter()
            .all(|&(x, y)| x.abs_diff(c.0) > 12 || y.abs_diff(c.1) > 12)
        {
            centers.push(c);
        }
    }
    for &(cx, cy) in &centers {
        let amp = rng.random_range(50.0..90.0);
        for y in cy - 4..=cy + 4 {
            for x in cx - 4..=cx + 4 {
                let r2 = (x as f64 - cx as f64).powi(2) + (y as f64 - cy as f64).powi(2);
                pixels[y * w + x] += amp * (-r2 / 4.5).exp();
            }
        }
        for y in cy - 1..=cy + 1 {
            for x in cx - 1..=cx + 1 {
                mask.set(x, y, true);
            }
        }
    }
    let image = Image::from_clamped(w, h, pixels.into_iter().map(|v| v.round()).collect()).unwrap();
    LabeledSample::new(id, image, mask).unwrap()
}

pub fn write_dataset(root: &Path, n: usize, w: usize, h: usize, mean: f64, targets: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<_> = (0..n)
        .map(|i| frame(&format!("f{i:03}"), w, h, mean, targets, &mut rng))
        .collect();
    save_dataset(&samples, root).unwrap();
}

/// Source (bright) and target (dark) datasets plus a config next to them.
pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new(n_source: usize, n_target: usize, w: usize, h: usize, extra_config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&dir.path().join("source"), n_source, w, h, 150.0, 2, 1);
        write_dataset(&dir.path().join("target"), n_target, w, h, 90.0, 1, 2);
        fs::write(
            dir.path().join("config.toml"),
            format!(
                "source_dir = \"source\"\ntarget_dir = \"target\"\noutput_dir = \"out\"\nseed = 42\n{extra_config}"
            ),
        )
        .unwrap();
        Self { dir }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn config(&self) -> PathBuf {
        self.path("config.toml")
    }
}

pub fn crossview(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossview"))
        .args(args)
        .output()
        .unwrap()
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
