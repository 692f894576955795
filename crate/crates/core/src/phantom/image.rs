//! Square images and the Shepp-Logan phantom.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{dim_err, param_err, Error, Result};
use crate::pgm;

/// Row-major `s × s` real image. Row 0 is the top edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    s: usize,
    pixels: Vec<f64>,
}

impl ImageGrid {
    /// `s` must be a power of two, at least 16.
    pub fn new(s: usize, pixels: Vec<f64>) -> Result<Self> {
        check_side(s)?;
        if pixels.len() != s * s {
            return dim_err(format!("{} pixels for side {s}", pixels.len()));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return param_err("image contains non-finite pixels");
        }
        Ok(ImageGrid { s, pixels })
    }

    pub fn zeros(s: usize) -> Result<Self> {
        Self::new(s, vec![0.0; s * s])
    }

    pub fn side(&self) -> usize {
        self.s
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.s + col]
    }

    pub fn norm(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn in_unit_range(&self) -> bool {
        self.pixels.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Sorted distinct pixel values.
    pub fn levels(&self) -> Vec<f64> {
        let mut v = self.pixels.clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn support_size(&self) -> usize {
        self.pixels.iter().filter(|v| **v != 0.0).count()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.s, self.s, &self.pixels)
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return dim_err("image matrix must be square");
        }
        Self::new(m.nrows(), m.transpose().as_slice().to_vec())
    }

    pub fn write_pgm<W: Write>(&self, w: W) -> Result<()> {
        pgm::write_pgm(w, self.s, self.s, &self.pixels)
    }

    pub fn read_pgm<R: Read>(r: R) -> Result<Self> {
        let (w, h, v) = pgm::read_pgm(r)?;
        if w != h {
            return Err(Error::Parse(format!("image is {w}x{h}, expected square")));
        }
        Self::new(w, v)
    }
}

pub(crate) fn check_side(s: usize) -> Result<()> {
    if s < 16 || !s.is_power_of_two() {
        return param_err(format!("side {s} must be a power of two and at least 16"));
    }
    Ok(())
}

/// `‖recon − truth‖ / ‖truth‖` in the Frobenius norm.
pub fn relative_error(recon: &ImageGrid, truth: &ImageGrid) -> Result<f64> {
    if recon.s != truth.s {
        return dim_err("images differ in size");
    }
    let t = truth.norm();
    if t == 0.0 {
        return param_err("reference image is zero");
    }
    let d: f64 = recon.pixels.iter().zip(&truth.pixels).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(d.sqrt() / t)
}

/// One phantom component: intensity, semi-axes, centre and rotation in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

const fn e(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Ellipse {
    Ellipse { intensity, a, b, x0, y0, phi_deg }
}

/// Modified (high-contrast) Shepp-Logan table on `[−1, 1]²`, `y` pointing up.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    e(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    e(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    e(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    e(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    e(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    e(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    e(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    e(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    e(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    e(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (sn, cs) = self.phi_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let xr = dx * cs + dy * sn;
        let yr = -dx * sn + dy * cs;
        (xr / self.a).powi(2) + (yr / self.b).powi(2) <= 1.0
    }
}

/// Phantom intensity at a point of `[−1, 1]²`, rounded to 1e-10 so that
/// overlapping sums land exactly on table levels.
pub fn phantom_value(x: f64, y: f64) -> f64 {
    let v: f64 = SHEPP_LOGAN.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum();
    (v * 1e10).round() / 1e10 + 0.0
}

/// Samples the phantom at pixel centres.
pub fn shepp_logan(s: usize) -> Result<ImageGrid> {
    check_side(s)?;
    let c = |k: usize| (k as f64 + 0.5) / s as f64 * 2.0 - 1.0;
    let mut pixels = Vec::with_capacity(s * s);
    for i in 0..s {
        for j in 0..s {
            pixels.push(phantom_value(c(j), -c(i)));
        }
    }
    ImageGrid::new(s, pixels)
}
