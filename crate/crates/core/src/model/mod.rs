//! The assembled tokenizer and its variants.

mod checkpoint;
mod config;
mod forward;
mod net;
mod params;

pub use checkpoint::{
    load_checkpoint, read_manifest, save_checkpoint, CheckpointManifest, ParamEntry, MANIFEST_FILE,
    PARAMS_FILE,
};
pub use config::{ModelConfig, Variant};
pub use forward::{
    BottleneckMode, BottleneckOutput, EvalSampleOut, Model, StreamNodes, TokenizedSample,
    TrainGraph, TrainStep, AMP_COMMIT_BETA, MORPH_COMMIT_BETA,
};
pub use params::{Binding, Param, ParamStore};
