//! Lightweight single-object tracking with a MobileViT-style backbone that
//! fuses template and search features inside the network.
//!
//! Pipeline: [`backbone`] (MV2 + Siamese MobileViT blocks) → [`neck`]
//! (pointwise cross-correlation) → [`head`] (score/offset/size maps) →
//! [`tracker`] (windowed arg-max in a frame loop). [`eval`] and [`dataset`]
//! cover benchmark metrics and GOT-10k compatible files; [`weights`] holds
//! the parameter manifest and the `MVTW` weight format.
//!
//! All kernels in [`ops`] are written directly on [`Tensor`] and are
//! deterministic regardless of the rayon thread count.

pub mod backbone;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod head;
pub mod layers;
pub mod loss;
pub mod model;
pub mod neck;
pub mod ops;
pub mod synthetic;
pub mod tensor;
pub mod tracker;
pub mod weights;

pub use config::ModelConfig;
pub use error::{Error, Result, WeightError};
pub use head::{HeadOutput, NormBox};
pub use model::MvtModel;
pub use tensor::Tensor;
pub use tracker::{BBox, ImageFrame, Tracker, TrackerConfig};
pub use weights::{build_manifest, WeightStore};
