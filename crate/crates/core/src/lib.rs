//! Computational core for bending-loss regularized nuclei segmentation.
//!
//! The crate is organised around label maps (`imgcore`), from which closed
//! instance contours are traced (`contour`) and scored with a discrete
//! bending energy (`bending`). The remaining modules provide the training
//! loss kernels (`losses`), the instance-segmentation evaluation battery
//! including overlapped-nuclei metrics (`metrics`), and the distance-map /
//! watershed pre- and post-processing pipeline (`pipeline`).

pub mod bending;
pub mod contour;
mod error;
pub mod imgcore;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use bending::{bending_loss, BendingParams, BendingReport, PointBending};
pub use contour::{trace_contours, Contour, ContourSet};
pub use error::{Error, Result};
pub use imgcore::{BinaryMask, FloatMap, FloatMapPair, Grid, LabelFormat, LabelMap, Point};
pub use losses::LossBreakdown;
pub use metrics::{evaluate, MatchResult, MetricsReport};
pub use pipeline::{HvGroundTruth, PostprocessParams};
