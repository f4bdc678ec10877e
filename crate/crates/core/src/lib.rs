pub mod error;
pub mod filters;
pub mod metrics;
pub mod noisemodel;
pub mod numerics;
pub mod spatial;
pub mod stft;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
