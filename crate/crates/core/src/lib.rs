//! Bias-corrected estimation of loop features in noisy grayscale images.

mod error;
pub mod filtration;
pub mod grid_image;
pub mod partda;
pub mod persistence;
pub mod segmentation;
pub mod sim;
pub mod stda;
pub mod util;

pub use error::{Error, Result};

/// Crate version with a `v` prefix, as recorded in manifests.
pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));
