//! Cross-view dataset alignment and augmentation for infrared small-target
//! detection.
//!
//! The pipeline gamma-aligns a source dataset to a target dataset's mean
//! intensity ([`channel_align`]), cuts target patches out of the aligned
//! frames and finds structurally similar background windows for them with
//! SSIM ([`patch_match`]), then Poisson-blends each patch into its Top-K
//! windows ([`poisson_fusion`]). [`noise_repr`] holds the noise model and the
//! loss terms used for noise-consistency training, and [`metrics`] scores
//! predicted masks with IoU, Pd and Fa.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the CLI uses.

pub mod channel_align;
pub mod components;
pub mod dataset_io;
pub mod error;
pub mod image;
pub mod metrics;
pub mod noise_repr;
pub mod patch_match;
pub mod poisson_fusion;
pub mod rng;
pub mod scalar;

pub use channel_align::{align_dataset, apply_gamma, compute_gamma, refine_gamma, Alignment, GammaParams, Refinement};
pub use dataset_io::{dataset_stats, load_dataset, save_sample, DatasetStats};
pub use error::{Error, Result};
pub use image::{BinaryMask, Rect};
pub use metrics::{evaluate, iou, pd_fa, roc, MetricsReport, RocCurve, RocPoint};
pub use noise_repr::{add_noise, bce_loss, feature_pyramid, noise_loss, total_loss, NoiseConfig};
pub use patch_match::{extract_patches, sliding_match, ssim, top_k, MatchCandidate, MatchConfig};
pub use poisson_fusion::{fuse_dataset, seamless_clone, solve_poisson, Provenance};
pub use scalar::Scalar;

pub type GrayImage = image::Image<f64>;
pub type Grid = image::Grid<f64>;
pub type LabeledSample = image::LabeledSample<f64>;
pub type TargetPatch = patch_match::TargetPatch<f64>;
pub type FusionResult = poisson_fusion::FusionResult<f64>;
pub type GuidanceField = poisson_fusion::GuidanceField<f64>;
pub type FeaturePyramid = noise_repr::FeaturePyramid<f64>;
pub type PredictionMap = noise_repr::PredictionMap<f64>;

pub type GrayImageF32 = image::Image<f32>;
pub type LabeledSampleF32 = image::LabeledSample<f32>;
pub type PredictionMapF32 = noise_repr::PredictionMap<f32>;
