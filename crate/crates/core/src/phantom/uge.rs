//! Window-sampled Gaussian reconstruction with likelihood-weighted averaging.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fourier::{Fft2, FourierData};
use super::image::{relative_error, ImageGrid};
use super::ops::{dot, grad, grad_adjoint};
use crate::error::{param_err, Result};
use crate::rng;

/// Ridge added to the derivative prior so constants are identifiable.
pub const PRIOR_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageUgeParams {
    /// Per-pixel noise standard deviation; `None` takes it from the data.
    pub sigma: Option<f64>,
    /// Weight of the prior `exp(−alpha ‖D w‖²)`.
    pub alpha: f64,
    /// Side of the cyclic window carrying the unknowns.
    pub window: usize,
    pub samples: usize,
    pub seed: u64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for ImageUgeParams {
    fn default() -> Self {
        ImageUgeParams { sigma: None, alpha: 1.0, window: 62, samples: 1000, seed: 0, cg_tol: 1e-8, cg_max_iter: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct WindowSample {
    pub offset: (usize, usize),
    pub image: Vec<f64>,
    pub log_weight: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ImageUgeResult {
    pub image: ImageGrid,
    /// Relative error of the running weighted average after each sample.
    pub trace: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub offsets: Vec<(usize, usize)>,
    pub cg_iterations: Vec<usize>,
}

struct Window<'a> {
    s: usize,
    sw: usize,
    off: (usize, usize),
    fft: &'a Fft2,
    mask: Vec<f64>,
}

impl Window<'_> {
    fn embed(&self, w: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.s * self.s];
        for i in 0..self.sw {
            let r = (i + self.off.0) % self.s;
            for j in 0..self.sw {
                u[r * self.s + (j + self.off.1) % self.s] = w[i * self.sw + j];
            }
        }
        u
    }

    fn restrict(&self, u: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.sw * self.sw];
        for i in 0..self.sw {
            let r = (i + self.off.0) % self.s;
            for j in 0..self.sw {
                w[i * self.sw + j] = u[r * self.s + (j + self.off.1) % self.s];
            }
        }
        w
    }

    fn masked_back(&self, k: &mut [Complex64]) -> Vec<f64> {
        for (v, m) in k.iter_mut().zip(&self.mask) {
            *v *= *m;
        }
        self.fft.inverse_real(k).0
    }

    fn normal_op(&self, w: &[f64], inv_var: f64, two_alpha: f64) -> Vec<f64> {
        let mut k = self.fft.forward_real(&self.embed(w));
        let data = self.restrict(&self.masked_back(&mut k));
        let (gx, gy) = grad(w, self.sw);
        let prior = grad_adjoint(&gx, &gy, self.sw);
        (0..w.len()).map(|i| data[i] * inv_var + two_alpha * prior[i] + PRIOR_RIDGE * w[i]).collect()
    }
}

/// Posterior mean of the pixels inside one cyclic window (zero outside),
/// with its log likelihood `−‖M F u − d‖² / (2σ²)`.
pub fn window_posterior_mean(
    data: &FourierData,
    fft: &Fft2,
    sigma: f64,
    params: &ImageUgeParams,
    offset: (usize, usize),
) -> Result<WindowSample> {
    let s = data.side();
    let win = Window { s, sw: params.window, off: offset, fft, mask: data.mask.weights() };
    let inv_var = 1.0 / (sigma * sigma);
    let two_alpha = 2.0 * params.alpha;
    let b: Vec<f64> = win.restrict(&fft.inverse_real(&data.values).0).iter().map(|v| v * inv_var).collect();
    let bn = dot(&b, &b).sqrt();
    let mut x = vec![0.0; b.len()];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut iters = 0;
    while iters < params.cg_max_iter && rs.sqrt() > params.cg_tol * bn {
        let ap = win.normal_op(&p, inv_var, two_alpha);
        let a = rs / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        let rn = dot(&r, &r);
        let beta = rn / rs;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rs = rn;
        iters += 1;
    }
    let u = win.embed(&x);
    let fu = fft.forward_real(&u);
    let misfit: f64 = fu
        .iter()
        .zip(&data.values)
        .zip(data.mask.as_slice())
        .filter(|(_, m)| **m)
        .map(|((a, b), _)| (a - b).norm_sqr())
        .sum();
    Ok(WindowSample { offset, image: u, log_weight: -misfit * 0.5 * inv_var, cg_iterations: iters })
}

/// Running log-sum-exp average; calls `each` with the current mean after
/// every sample.
pub fn weighted_mixture(samples: &[WindowSample], mut each: impl FnMut(&[f64])) -> Vec<f64> {
    let n = samples.first().map_or(0, |s| s.image.len());
    let mut acc = vec![0.0; n];
    let mut total = 0.0;
    let mut top = f64::NEG_INFINITY;
    let mut mean = vec![0.0; n];
    for smp in samples {
        if smp.log_weight > top {
            let rescale = (top - smp.log_weight).exp();
            acc.iter_mut().for_each(|a| *a *= rescale);
            total *= rescale;
            top = smp.log_weight;
        }
        let w = (smp.log_weight - top).exp();
        for (a, v) in acc.iter_mut().zip(&smp.image) {
            *a += w * v;
        }
        total += w;
        for (m, a) in mean.iter_mut().zip(&acc) {
            *m = a / total;
        }
        each(&mean);
    }
    mean
}

/// Averages window posterior means over `samples` seeded random cyclic offsets.
pub fn image_uge(data: &FourierData, params: &ImageUgeParams, truth: Option<&ImageGrid>) -> Result<ImageUgeResult> {
    let s = data.side();
    if params.window == 0 || params.window > s {
        return param_err(format!("window {} must lie in [1, {s}]", params.window));
    }
    if params.samples == 0 || !(params.alpha > 0.0) || !(params.cg_tol > 0.0) || params.cg_max_iter == 0 {
        return param_err("samples, alpha, cg_tol and cg_max_iter must be positive");
    }
    let sigma = params.sigma.unwrap_or(data.sigma);
    if !(sigma > 0.0) {
        return param_err("noise standard deviation must be positive");
    }
    let fft = Fft2::new(s);
    let offsets: Vec<(usize, usize)> = (0..params.samples)
        .map(|k| {
            let mut r = rng::stream(rng::derive_seed(params.seed, k as u64));
            (r.random_range(0..s), r.random_range(0..s))
        })
        .collect();
    let samples: Vec<WindowSample> =
        offsets.par_iter().map(|&off| window_posterior_mean(data, &fft, sigma, params, off)).collect::<Result<_>>()?;
    let mut trace = Vec::new();
    let mean = weighted_mixture(&samples, |m| {
        if let Some(t) = truth {
            let img = ImageGrid::new(s, m.to_vec()).expect("finite mixture");
            trace.push(relative_error(&img, t).expect("matching sizes"));
        }
    });
    Ok(ImageUgeResult {
        image: ImageGrid::new(s, mean)?,
        trace,
        log_weights: samples.iter().map(|x| x.log_weight).collect(),
        offsets,
        cg_iterations: samples.iter().map(|x| x.cg_iterations).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::fourier::{fourier_sample, radial_mask};
    use super::super::image::shepp_logan;
    use super::super::ops::laplacian_symbol;
    use super::*;
    use crate::model::NoiseSpec;

    #[test]
    fn full_window_single_sample_is_fourier_tikhonov() {
        let s = 32;
        let p = shepp_logan(s).unwrap();
        let d = fourier_sample(&p, &radial_mask(s, 10).unwrap(), &NoiseSpec::iid(0.3, 4).unwrap()).unwrap();
        let params = ImageUgeParams { window: s, samples: 1, cg_tol: 1e-12, cg_max_iter: 2000, ..Default::default() };
        let r = image_uge(&d, &params, Some(&p)).unwrap();
        let fft = Fft2::new(s);
        let k = laplacian_symbol(s);
        let iv = 1.0 / (d.sigma * d.sigma);
        let m = d.mask.weights();
        let spec: Vec<Complex64> =
            (0..s * s).map(|i| d.values[i] * iv / (m[i] * iv + 2.0 * params.alpha * k[i] + PRIOR_RIDGE)).collect();
        let direct = ImageGrid::new(s, fft.inverse_real(&spec).0).unwrap();
        assert!(relative_error(&r.image, &direct).unwrap() < 1e-8);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn mixture_is_order_invariant() {
        let s = 16;
        let p = shepp_logan(s).unwrap();
        let d = fourier_sample(&p, &radial_mask(s, 6).unwrap(), &NoiseSpec::iid(0.2, 9).unwrap()).unwrap();
        let params = ImageUgeParams { window: 12, samples: 12, seed: 5, ..Default::default() };
        let fft = Fft2::new(s);
        let mut smp: Vec<WindowSample> =
            (0..12).map(|k| window_posterior_mean(&d, &fft, d.sigma, &params, (k, (3 * k) % s)).unwrap()).collect();
        let a = weighted_mixture(&smp, |_| {});
        smp.reverse();
        smp.swap(2, 7);
        let b = weighted_mixture(&smp, |_| {});
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12 * scale));
    }

    #[test]
    fn seeded_runs_repeat() {
        let s = 16;
        let p = shepp_logan(s).unwrap();
        let d = fourier_sample(&p, &radial_mask(s, 6).unwrap(), &NoiseSpec::iid(0.3, 2).unwrap()).unwrap();
        let params = ImageUgeParams { window: 14, samples: 8, seed: 11, ..Default::default() };
        let a = image_uge(&d, &params, Some(&p)).unwrap();
        let b = image_uge(&d, &params, Some(&p)).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.trace, b.trace);
        assert!(image_uge(&d, &ImageUgeParams { window: 17, ..params }, None).is_err());
    }
}
