//! Image compression by fitting a small patch-indexed neural network to an
//! image and then compressing the network's weights.
//!
//! Pipeline: [`pixel_io`] tiles an image into indexed patches, [`trainer`]
//! fits an [`inr_net`] decoder to them, [`hypercodec`] encodes the trained
//! weights as one integer trajectory index per weight group, and
//! [`container`] writes the result to a `.coli` file. [`baselines`] and
//! [`bench`] provide the comparison compressors and tables, and
//! [`quality_metrics`] the PSNR/SSIM/MS-SSIM/bpp measurements.

pub mod baselines;
pub mod bench;
pub mod container;
pub mod error;
pub mod hypercodec;
pub mod inr_net;
pub mod pixel_io;
pub mod quality_metrics;
pub mod testimage;
pub mod trainer;
mod wire;

pub use error::{Error, Result};
