//! Unitary 2D FFT, radial sampling masks and masked Fourier data.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::image::{check_side, ImageGrid};
use crate::error::{dim_err, param_err, Result};
use crate::model::{rms, NoiseSpec};

/// `s × s` transform with the unitary scaling `1/s`, so forward and inverse
/// both preserve the Euclidean norm.
#[derive(Clone)]
pub struct Fft2 {
    s: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({})", self.s)
    }
}

impl Fft2 {
    pub fn new(s: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 { s, fwd: planner.plan_fft_forward(s), inv: planner.plan_fft_inverse(s) }
    }

    pub fn side(&self) -> usize {
        self.s
    }

    fn apply(&self, fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        let s = self.s;
        assert_eq!(data.len(), s * s, "buffer does not match transform size");
        fft.process(data);
        transpose(data, s);
        fft.process(data);
        transpose(data, s);
        let scale = 1.0 / s as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(&self.fwd, data)
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(&self.inv, data)
    }

    pub fn forward_real(&self, img: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = img.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Inverse transform, returning the real part and the largest `|Im|`.
    pub fn inverse_real(&self, k: &[Complex64]) -> (Vec<f64>, f64) {
        let mut buf = k.to_vec();
        self.inverse(&mut buf);
        let imag = buf.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
        (buf.iter().map(|v| v.re).collect(), imag)
    }
}

fn transpose(data: &mut [Complex64], s: usize) {
    for i in 0..s {
        for j in i + 1..s {
            data.swap(i * s + j, j * s + i);
        }
    }
}

/// Boolean sampling pattern over the (uncentred, FFT-ordered) frequency grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    s: usize,
    lines: usize,
    mask: Vec<bool>,
}

impl SamplingMask {
    pub fn new(s: usize, lines: usize, mask: Vec<bool>) -> Result<Self> {
        check_side(s)?;
        if mask.len() != s * s {
            return dim_err("mask size does not match the grid");
        }
        let m = SamplingMask { s, lines, mask };
        if !m.contains(0, 0) {
            return param_err("mask must include the DC component");
        }
        if !m.is_point_symmetric() {
            return param_err("mask must be symmetric under point reflection");
        }
        Ok(m)
    }

    pub fn full(s: usize) -> Result<Self> {
        Self::new(s, 0, vec![true; s * s])
    }

    pub fn side(&self) -> usize {
        self.s
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.s + col]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    pub fn coverage(&self) -> f64 {
        self.count() as f64 / self.mask.len() as f64
    }

    pub fn is_point_symmetric(&self) -> bool {
        let s = self.s;
        (0..s).all(|i| (0..s).all(|j| self.contains(i, j) == self.contains((s - i) % s, (s - j) % s)))
    }

    pub fn weights(&self) -> Vec<f64> {
        self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// `lines` digital lines through the DC term at angles `π l / lines`.
///
/// Each line steps one cell at a time along its major axis over
/// `[−s/2, s/2)` and rounds the minor coordinate to the nearest cell. The
/// union is closed under point reflection and always contains DC.
pub fn radial_mask(s: usize, lines: usize) -> Result<SamplingMask> {
    check_side(s)?;
    if lines == 0 || lines > 4 * s {
        return param_err(format!("line count {lines} outside [1, {}]", 4 * s));
    }
    let h = (s / 2) as i64;
    let si = s as i64;
    let mut mask = vec![false; s * s];
    let mut set = |ky: i64, kx: i64| {
        if (-h..h).contains(&ky) && (-h..h).contains(&kx) {
            mask[(ky.rem_euclid(si) * si + kx.rem_euclid(si)) as usize] = true;
        }
    };
    for l in 0..lines {
        let th = std::f64::consts::PI * l as f64 / lines as f64;
        let (sn, c) = th.sin_cos();
        if c.abs() >= sn.abs() {
            for kx in -h..h {
                set((kx as f64 * sn / c + 0.5).floor() as i64, kx);
            }
        } else {
            for ky in -h..h {
                set(ky, (ky as f64 * c / sn + 0.5).floor() as i64);
            }
        }
    }
    let reflected: Vec<bool> =
        (0..s).flat_map(|i| (0..s).map(move |j| ((s - i) % s, (s - j) % s))).map(|(i, j)| mask[i * s + j]).collect();
    for (m, r) in mask.iter_mut().zip(reflected) {
        *m |= r;
    }
    mask[0] = true;
    SamplingMask::new(s, lines, mask)
}

/// Smallest line count whose mask holds at least `2 N` samples, `N` being
/// the number of nonzero pixels of `img`; at that size `N`-sparse images
/// are within the uniqueness bound of a full-spark restricted transform.
pub fn sufficient_lines(img: &ImageGrid) -> Result<usize> {
    let need = 2 * img.support_size();
    let s = img.side();
    for l in 1..=4 * s {
        if radial_mask(s, l)?.count() >= need {
            return Ok(l);
        }
    }
    param_err(format!("no radial mask up to {} lines holds {need} samples", 4 * s))
}

/// Masked unitary spectrum of a (possibly noisy) image; entries off the
/// mask are zero.
#[derive(Debug, Clone)]
pub struct FourierData {
    pub mask: SamplingMask,
    pub values: Vec<Complex64>,
    /// Per-pixel noise standard deviation (0 when noiseless).
    pub sigma: f64,
    pub noise_realization: Option<Vec<f64>>,
}

impl FourierData {
    pub fn side(&self) -> usize {
        self.mask.side()
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Zero-filled inverse transform.
    pub fn zero_fill(&self, fft: &Fft2) -> Result<ImageGrid> {
        ImageGrid::new(self.side(), fft.inverse_real(&self.values).0)
    }
}

/// Adds spatial-domain noise to `img`, transforms, and keeps the masked
/// coefficients. Noise level is relative to the image RMS.
pub fn fourier_sample(img: &ImageGrid, mask: &SamplingMask, noise: &NoiseSpec) -> Result<FourierData> {
    let s = img.side();
    if mask.side() != s {
        return dim_err("mask and image sizes differ");
    }
    let mut pixels = img.pixels().to_vec();
    let (sigma, realization) = if noise.level > 0.0 {
        let positions: Vec<Vec<f64>> = (0..s * s).map(|k| vec![(k / s) as f64, (k % s) as f64]).collect();
        let eta = noise.draw(&DVector::from_vec(pixels.clone()), &positions)?;
        for (p, n) in pixels.iter_mut().zip(eta.iter()) {
            *p += n;
        }
        (noise.level * rms(img.pixels()), Some(eta.as_slice().to_vec()))
    } else {
        (0.0, None)
    };
    let fft = Fft2::new(s);
    let mut values = fft.forward_real(&pixels);
    for (v, &m) in values.iter_mut().zip(mask.as_slice()) {
        if !m {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(FourierData { mask: mask.clone(), values, sigma, noise_realization: realization })
}
