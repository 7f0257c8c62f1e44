//! The two trainable models and their training loops: a denoising CNN
//! that compensates CSI impairments, and a 3D-CNN wideband precoder
//! trained end to end against the bit-metric decoding rate. Checkpoint
//! serialization and layer-cost estimates live here too.

mod checkpoint;
mod compensator;
mod flops;
mod init;
mod precoder;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use compensator::{
    csi_mse, csi_to_image, image_to_csi, select_compensator, train_compensator, BoundCompensator,
    Compensator, CompensatorConfig, CompensatorTrainParams, TrainOutcome,
};
pub use flops::{compensator_flops, precoder_flops, zf_baseline_flops, GridDims, LayerFlops};
pub use precoder::{
    csi_to_volume, neural_precode, train_precoder, BoundPrecoder, NeuralPrecoder,
    NeuralPrecoderModel, PrecoderConfig, PrecoderTrainParams,
};
