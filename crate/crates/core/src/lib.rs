pub mod atlas;
pub mod cli;
pub mod error;
pub mod io;
pub mod iuv;
pub mod losses;
pub mod mask_ops;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
