//! CT image-quality bench testing toolkit.
//!
//! Simulates low-dose / normal-dose CT of analytic phantoms, trains and applies
//! denoisers, and scores their outputs with global fidelity metrics (RMSE,
//! PSNR, SSIM, MS-SSIM) and CT bench tests (contrast-dependent MTF, NPS, HU
//! accuracy, difference images). The [`harness`] module implements greedy
//! stage-wise tuning against either family of scores.

pub mod bench;
pub mod denoise;
pub mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod phantom;
pub mod scanner;

pub use error::{Error, ErrorClass, Result};
pub use image::{DisplayWindow, Image, Roi};
