//! Retinal layer segmentation for OCT B-scans.
//!
//! The crate locates three boundaries in a single B-scan — the inner
//! limiting membrane (ILM), the lower edge of the retinal nerve fiber
//! layer (RNFL) and the retinal pigment epithelium (RPE) — by running a
//! shortest-path search over a pixel graph whose edge weights favor strong
//! vertical intensity gradients. A morphological preprocessing stage
//! confines the RNFL search to a plausible band, and an intensity check
//! below the detected RNFL re-runs the search locally where the boundary
//! landed on tissue that is too bright to sit under the nerve fiber layer.
//!
//! [`layers::segment_all`] is the entry point for whole-scan segmentation;
//! the `octseg` binary wraps it with file handling, a phantom generator
//! and an accuracy evaluator.

pub mod cli;
pub mod config;
pub mod error;
pub mod graph;
pub mod image_io;
pub mod layers;
pub mod metrics;
pub mod phantom;
pub mod preprocess;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use graph::{Boundary, BoundaryLabel, GradientDirection, GraphConfig, RoiMask};
pub use image_io::BScan;
pub use layers::{segment_all, SegmentationFlag, SegmentationResult};
