//! Minimal CNN engine: layers, forward/backward passes, an MBSGD trainer,
//! the Object-Net and Separator-Net architectures, and sliding-window
//! inference.

pub mod checkpoint;
pub mod infer;
pub mod layers;
pub mod network;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, spec_from_text, spec_to_text};
pub use infer::{predict_map, ProbabilityMaps};
pub use network::{
    backward, forward, object_net_spec, separator_net_spec, tiny_object_net_spec,
    tiny_separator_net_spec, Activation, ForwardCache, LayerSpec, ModelParams, NetworkSpec,
    ParamPair,
};
pub use tensor::Tensor;
pub use train::{
    classification_error, mbsgd_step, train, EpochStats, TrainOutcome, TrainerConfig,
};
