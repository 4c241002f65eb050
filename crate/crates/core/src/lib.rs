pub mod activation;
pub mod autodiff;
pub mod constructions;
pub mod error;
pub mod experiment;
pub mod field;
pub mod geometry;
pub mod harness;
pub mod losses;
pub mod network;
pub mod optimizer;

pub use activation::Activation;
pub use autodiff::{Jet, Order, ParamBlock, Tape};
pub use error::{Error, Result};
pub use experiment::{ExperimentId, Variant};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
