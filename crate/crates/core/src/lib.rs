pub mod audio;
pub mod bertis;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod pose;
pub mod render;
pub mod schema;
pub mod tensor;

pub use error::{Error, Result};
pub use schema::{ImageSchemaLabel, NUM_SCHEMAS};
