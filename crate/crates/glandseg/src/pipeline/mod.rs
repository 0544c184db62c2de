//! Batch orchestration: configuration, the five commands and the output
//! renderers.

mod commands;
mod config;
mod render;

pub use commands::{
    cmd_evaluate, cmd_gridsearch, cmd_segment, cmd_synth, cmd_train, GridSearchResult,
    SegmentOutcome,
};
pub use config::{GridSearchSpec, PipelineConfig, SynthConfig};
pub use render::{difference_image, overlay_image};
