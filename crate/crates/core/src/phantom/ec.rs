//! Exact-coloring projection onto a known palette of gray levels.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fourier::{Fft2, FourierData};
use super::image::{relative_error, ImageGrid};
use super::ops::laplacian_symbol;
use crate::error::{param_err, Result};

const MAX_FIT_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EcOptions {
    /// Potts coupling between 4-neighbours; 0 gives plain nearest-level labels.
    pub beta: f64,
    /// Noise scale of the data term `(v − level)² / (2 sigma²)`.
    pub sigma: f64,
    pub sweeps: usize,
}

impl Default for EcOptions {
    fn default() -> Self {
        EcOptions { beta: 0.0, sigma: 1.0, sweeps: 5 }
    }
}

fn check_palette(palette: &[f64], ratios: Option<&[f64]>) -> Result<()> {
    if palette.is_empty() {
        return param_err("palette is empty");
    }
    if palette.windows(2).any(|w| !(w[1] > w[0])) {
        return param_err("palette must be strictly ascending");
    }
    if let Some(r) = ratios {
        if r.len() + 2 != palette.len() && !(palette.len() == 1 && r.is_empty()) {
            return param_err("expected one ratio per gap after the first");
        }
        let g0 = palette.get(1).map_or(1.0, |p| p - palette[0]);
        for (i, ri) in r.iter().enumerate() {
            let gi = (palette[i + 2] - palette[i + 1]) / g0;
            if (gi - ri).abs() > 1e-10 * ri.abs().max(1.0) {
                return param_err(format!("gap ratio {i} is {gi}, expected {ri}"));
            }
        }
    }
    Ok(())
}

fn nearest(v: f64, palette: &[f64]) -> usize {
    let mut best = 0;
    for (q, p) in palette.iter().enumerate() {
        if (v - p).abs() < (v - palette[best]).abs() {
            best = q;
        }
    }
    best
}

/// Checkerboard ICM for the Potts labelling on the cyclic grid.
fn potts_labels(v: &[f64], s: usize, palette: &[f64], opts: &EcOptions) -> Vec<usize> {
    let mut lab: Vec<usize> = v.iter().map(|&x| nearest(x, palette)).collect();
    if opts.beta <= 0.0 {
        return lab;
    }
    let inv = 0.5 / (opts.sigma * opts.sigma);
    for _ in 0..opts.sweeps {
        for parity in 0..2 {
            let prev = lab.clone();
            for i in 0..s {
                for j in 0..s {
                    if (i + j) % 2 != parity {
                        continue;
                    }
                    let nb = [
                        prev[((i + s - 1) % s) * s + j],
                        prev[((i + 1) % s) * s + j],
                        prev[i * s + (j + s - 1) % s],
                        prev[i * s + (j + 1) % s],
                    ];
                    let x = v[i * s + j];
                    let mut best = (f64::INFINITY, 0);
                    for (q, p) in palette.iter().enumerate() {
                        let c = (x - p).powi(2) * inv + opts.beta * nb.iter().filter(|&&l| l != q).count() as f64;
                        if c < best.0 {
                            best = (c, q);
                        }
                    }
                    lab[i * s + j] = best.1;
                }
            }
        }
    }
    lab
}

/// Fixed-point iteration of labelling and affine fit from the start `(a, c)`;
/// returns the labels and the misfit `Σ (u − a·level − c)²`.
fn fit_labels(u: &[f64], s: usize, palette: &[f64], opts: &EcOptions, mut a: f64, mut c: f64) -> (Vec<usize>, f64) {
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..MAX_FIT_ITER {
        let v: Vec<f64> = u.iter().map(|x| (x - c) / a).collect();
        let new = potts_labels(&v, s, palette, opts);
        if new == labels {
            break;
        }
        labels = new;
        let n = u.len() as f64;
        let lv: Vec<f64> = labels.iter().map(|&q| palette[q]).collect();
        let ml = lv.iter().sum::<f64>() / n;
        let mu = u.iter().sum::<f64>() / n;
        let var: f64 = lv.iter().map(|l| (l - ml).powi(2)).sum();
        let cov: f64 = lv.iter().zip(u).map(|(l, x)| (l - ml) * (x - mu)).sum();
        if var == 0.0 || cov <= 0.0 {
            break;
        }
        a = cov / var;
        c = mu - a * ml;
    }
    let sse = labels.iter().zip(u).map(|(&q, x)| (x - a * palette[q] - c).powi(2)).sum();
    (labels, sse)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

/// Maps `img` onto `palette` with [`EcOptions::default`] (nearest level).
pub fn ec_project(img: &ImageGrid, palette: &[f64], ratios: Option<&[f64]>) -> Result<ImageGrid> {
    ec_project_with(img, palette, ratios, &EcOptions::default())
}

/// Alternates labelling and a global affine fit `u ≈ a·level + c` until the
/// labels settle; the output holds only palette values.
///
/// `ratios[i]` is the gap `palette[i+2] − palette[i+1]` relative to the first
/// gap; when given it must agree with the palette.
pub fn ec_project_with(
    img: &ImageGrid,
    palette: &[f64],
    ratios: Option<&[f64]>,
    opts: &EcOptions,
) -> Result<ImageGrid> {
    check_palette(palette, ratios)?;
    if opts.beta > 0.0 && !(opts.sigma > 0.0) {
        return param_err("Potts labelling needs a positive sigma");
    }
    let s = img.side();
    let u = img.pixels();
    if palette.len() == 1 {
        return ImageGrid::new(s, vec![palette[0]; u.len()]);
    }
    let mut sorted = u.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (pmin, pmax) = (palette[0], palette[palette.len() - 1]);
    let mut starts = vec![(1.0, 0.0)];
    for (lo, hi) in [(sorted[0], sorted[sorted.len() - 1]), (percentile(&sorted, 0.001), percentile(&sorted, 0.999))] {
        if hi > lo {
            let a = (hi - lo) / (pmax - pmin);
            starts.push((a, lo - a * pmin));
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (a, c) in starts {
        let (labels, sse) = fit_labels(u, s, palette, opts, a, c);
        if best.as_ref().is_none_or(|b| sse < b.0) {
            best = Some((sse, labels));
        }
    }
    let labels = best.expect("identity start always present").1;
    ImageGrid::new(s, labels.iter().map(|&q| palette[q]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EcParams {
    /// Weight of the derivative coupling to the projected image.
    pub alpha: f64,
    pub beta: f64,
    pub sweeps: usize,
    pub iterations: usize,
    /// Per-pixel noise standard deviation; `None` takes it from the data.
    pub sigma: Option<f64>,
}

impl Default for EcParams {
    fn default() -> Self {
        EcParams { alpha: 0.1, beta: 2.0, sweeps: 5, iterations: 20, sigma: None }
    }
}

#[derive(Debug, Clone)]
pub struct EcResult {
    pub image: ImageGrid,
    /// Relative error of the projected image after each iteration.
    pub errors: Vec<f64>,
}

/// Iterates palette projection and a Fourier-domain Gaussian update whose
/// prior is centred on the projected image, starting from `init`.
pub fn ec_reconstruct(
    data: &FourierData,
    palette: &[f64],
    init: &ImageGrid,
    params: &EcParams,
    truth: Option<&ImageGrid>,
) -> Result<EcResult> {
    let s = data.side();
    if init.side() != s {
        return param_err("initial image has the wrong size");
    }
    let sigma = params.sigma.unwrap_or(data.sigma);
    if !(sigma > 0.0 && params.alpha > 0.0) {
        return param_err("sigma and alpha must be positive");
    }
    let opts = EcOptions { beta: params.beta, sigma, sweeps: params.sweeps };
    let fft = Fft2::new(s);
    let k = laplacian_symbol(s);
    let m = data.mask.weights();
    let iv = 1.0 / (sigma * sigma);
    let mut u = init.clone();
    let mut errors = Vec::new();
    for _ in 0..params.iterations {
        let v = ec_project_with(&u, palette, None, &opts)?;
        let fv = fft.forward_real(v.pixels());
        let spec: Vec<Complex64> = (0..s * s)
            .map(|i| {
                let q = 2.0 * params.alpha * (k[i] + 1e-8);
                (data.values[i] * (m[i] * iv) + fv[i] * q) / (m[i] * iv + q)
            })
            .collect();
        u = ImageGrid::new(s, fft.inverse_real(&spec).0)?;
        if let Some(t) = truth {
            errors.push(relative_error(&ec_project_with(&u, palette, None, &opts)?, t)?);
        }
    }
    Ok(EcResult { image: ec_project_with(&u, palette, None, &opts)?, errors })
}

#[cfg(test)]
mod tests {
    use super::super::image::shepp_logan;
    use super::*;
    use crate::rng;

    #[test]
    fn palette_image_is_fixed() {
        let p = shepp_logan(64).unwrap();
        let pal = p.levels();
        assert_eq!(ec_project(&p, &pal, None).unwrap(), p);
        let shifted = ImageGrid::new(64, p.pixels().iter().map(|v| v + 0.37).collect()).unwrap();
        assert_eq!(ec_project(&shifted, &pal, None).unwrap(), p);
        let affine = ImageGrid::new(64, p.pixels().iter().map(|v| 3.0 * v - 1.0).collect()).unwrap();
        assert_eq!(ec_project(&affine, &pal, None).unwrap(), p);
    }

    #[test]
    fn output_is_palette_valued() {
        let pal = [0.0, 0.25, 1.0];
        let img = ImageGrid::new(16, rng::gaussian_vec(&mut rng::stream(4), 256)).unwrap();
        let out = ec_project(&img, &pal, None).unwrap();
        assert!(out.pixels().iter().all(|v| pal.contains(v)));
        let smooth = ec_project_with(&img, &pal, None, &EcOptions { beta: 1.0, sigma: 0.5, sweeps: 3 }).unwrap();
        assert!(smooth.pixels().iter().all(|v| pal.contains(v)));
    }

    #[test]
    fn palette_validation() {
        let img = ImageGrid::zeros(16).unwrap();
        assert!(ec_project(&img, &[], None).is_err());
        assert!(ec_project(&img, &[0.5, 0.1], None).is_err());
        assert!(ec_project(&img, &[0.0, 0.1, 0.3], Some(&[2.0])).is_ok());
        assert!(ec_project(&img, &[0.0, 0.1, 0.3], Some(&[1.0])).is_err());
    }
}
