//! The gesture generator: an audio-spectrogram transformer encoder, fusion
//! with the image-schema vector, and a single-layer pose decoder.

mod net;
mod train;

pub use net::{fuse, Meta4Arch, Meta4Model, SchemaMode, CHECKPOINT_KIND, FUSED_WIDTH};
pub use train::{
    prepare_samples, schema_vector, train_meta4, train_meta4_prepared, Meta4Config, Meta4History,
    Meta4TrainConfig, PreparedSample,
};

#[cfg(test)]
mod tests;
