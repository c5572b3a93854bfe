//! Robot-arm keypoint pose regression and movement forecasting.
//!
//! The pipeline runs from synthetic recordings ([`synth`]) through a small
//! self-calibrated convolutional regressor ([`backbone`]), an Extreme Learning
//! Machine refinement head ([`elm`]), auto-annotation of the full video, and a
//! stacked recurrent encoder-decoder that forecasts future keypoints
//! ([`forecast`]). [`eval`] holds the metrics, cross-validation, grid search
//! and report tables; [`pipeline`] wires the stages to files on disk.

pub mod backbone;
pub mod container;
pub mod elm;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod numeric;
pub mod params;
pub mod pipeline;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use numeric::{Matrix, Rng};
pub use synth::{PoseFrame, COORDS, KEYPOINTS};
