//! Fourier-sampled phantom reconstruction.

mod ec;
mod fourier;
mod image;
pub mod ops;
mod tv;
mod uge;

use std::io::Write;

pub use ec::{ec_project, ec_project_with, ec_reconstruct, EcOptions, EcParams, EcResult};
pub use fourier::{fourier_sample, radial_mask, sufficient_lines, Fft2, FourierData, SamplingMask};
pub use image::{phantom_value, relative_error, shepp_logan, Ellipse, ImageGrid, SHEPP_LOGAN};
pub use tv::{split_bregman_tv, TvParams, TvResult, DIVERGENCE_LIMIT};
pub use uge::{
    image_uge, weighted_mixture, window_posterior_mean, ImageUgeParams, ImageUgeResult, WindowSample, PRIOR_RIDGE,
};

use crate::error::Result;
use crate::matrix_io::format_real;

/// Writes an `iteration,relative_error` CSV (iterations counted from 1).
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[f64]) -> Result<()> {
    writeln!(w, "iteration,relative_error")?;
    for (i, e) in trace.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, format_real(*e))?;
    }
    Ok(())
}
