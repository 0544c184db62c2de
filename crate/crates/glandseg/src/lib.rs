//! Gland segmentation for H&E-stained histology sections.
//!
//! The pipeline has three stages: stain-deconvolved, contrast-normalized
//! preprocessing; two CNN pixel classifiers (gland objects and
//! gland-separating structures); and a weighted total-variation
//! figure-ground segmentation solved to global optimality with a
//! primal-dual scheme. Post-processing labels the thresholded result and
//! scores it with object-level detection, segmentation and shape metrics.

pub mod classify;
pub mod cnn;
pub mod dataset;
mod edt;
pub mod error;
pub mod fusion;
pub mod imaging;
pub mod pipeline;
pub mod postmetrics;
pub mod preprocess;
pub mod tvseg;

pub use error::{Error, Result};
pub use imaging::{Image, PixelCoord};
