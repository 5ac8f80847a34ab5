pub mod cli;
pub mod config;
pub mod convolution;
pub mod data;
pub mod embeddings;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod numerics;
pub mod pretrain;
pub mod recurrent;
pub mod training;

pub use error::{Error, Result};
