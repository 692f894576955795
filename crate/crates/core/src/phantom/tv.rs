//! Total-variation reconstruction by Split Bregman iterations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fourier::{Fft2, FourierData};
use super::image::{relative_error, ImageGrid};
use super::ops::{complex_norm, grad, grad_adjoint, laplacian_symbol, norm};
use crate::error::{param_err, Error, Result};

/// Aborts when the error or residual exceeds this.
pub const DIVERGENCE_LIMIT: f64 = 1e10;
const IMAG_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TvParams {
    /// Data-fidelity weight.
    pub mu: f64,
    /// Splitting weight; shrinkage threshold is `1/lambda`.
    pub lambda: f64,
    /// Outer (Bregman data) iterations.
    pub iterations: usize,
    /// Inner sweeps per outer iteration stop once `‖u_k − u_{k−1}‖ / ‖u_k‖`
    /// falls below this.
    pub inner_tol: f64,
    pub inner_max: usize,
}

impl Default for TvParams {
    fn default() -> Self {
        TvParams { mu: 100.0, lambda: 1.0, iterations: 100, inner_tol: 1e-6, inner_max: 1 }
    }
}

impl TvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.lambda > 0.0 && self.iterations > 0 && self.inner_tol > 0.0 && self.inner_max > 0) {
            return param_err("TV parameters must all be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TvResult {
    pub image: ImageGrid,
    /// Relative error after each outer iteration (empty without a reference).
    pub errors: Vec<f64>,
    /// `‖M F u − f‖` after each outer iteration.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Inner sweeps that stopped on `inner_tol` rather than `inner_max`.
    pub inner_converged: usize,
}

/// Isotropic TV reconstruction from masked Fourier data.
///
/// Each inner sweep solves the `u` subproblem exactly in the Fourier domain
/// (cyclic boundary), shrinks `∇u + b` and updates `b`; each outer iteration
/// then adds the data residual back to the right-hand side.
pub fn split_bregman_tv(data: &FourierData, params: &TvParams, truth: Option<&ImageGrid>) -> Result<TvResult> {
    params.validate()?;
    let s = data.side();
    if !data.mask.contains(0, 0) {
        return param_err("mask must include the DC component");
    }
    if let Some(t) = truth {
        if t.side() != s {
            return param_err("reference image has the wrong size");
        }
    }
    let n = s * s;
    let fft = Fft2::new(s);
    let m = data.mask.weights();
    let k = laplacian_symbol(s);
    let den: Vec<f64> = m
        .iter()
        .zip(&k)
        .map(|(mi, ki)| {
            let d = params.mu * mi + params.lambda * ki;
            if d == 0.0 {
                1.0
            } else {
                d
            }
        })
        .collect();
    let f = &data.values;
    let mut fk = f.clone();
    let mut u = vec![0.0; n];
    let (mut dx, mut dy) = (vec![0.0; n], vec![0.0; n]);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    let thresh = 1.0 / params.lambda;
    let mut errors = Vec::new();
    let mut residuals = Vec::with_capacity(params.iterations);
    let mut inner_converged = 0;
    let mut done = 0;
    for _ in 0..params.iterations {
        for _ in 0..params.inner_max {
            let ex: Vec<f64> = dx.iter().zip(&bx).map(|(d, b)| d - b).collect();
            let ey: Vec<f64> = dy.iter().zip(&by).map(|(d, b)| d - b).collect();
            let t = fft.forward_real(&grad_adjoint(&ex, &ey, s));
            let rhs: Vec<Complex64> =
                (0..n).map(|i| (fk[i] * (params.mu * m[i]) + t[i] * params.lambda) / den[i]).collect();
            let (u_new, imag) = fft.inverse_real(&rhs);
            let scale = u_new.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            if imag > IMAG_LIMIT * scale {
                return Err(Error::Divergence(format!("reconstruction has imaginary residue {imag:e}")));
            }
            let change = norm(&u_new.iter().zip(&u).map(|(a, b)| a - b).collect::<Vec<_>>());
            u = u_new;

            let (gx, gy) = grad(&u, s);
            for i in 0..n {
                let (sx, sy) = (gx[i] + bx[i], gy[i] + by[i]);
                let mag = (sx * sx + sy * sy).sqrt();
                let shrink = if mag > thresh { (mag - thresh) / mag } else { 0.0 };
                dx[i] = shrink * sx;
                dy[i] = shrink * sy;
                bx[i] += gx[i] - dx[i];
                by[i] += gy[i] - dy[i];
            }
            let un = norm(&u);
            if un > 0.0 && change / un < params.inner_tol {
                inner_converged += 1;
                break;
            }
        }

        let fu = fft.forward_real(&u);
        let resid: Vec<Complex64> = (0..n).map(|i| f[i] - fu[i] * m[i]).collect();
        let r = complex_norm(&resid);
        for i in 0..n {
            fk[i] += resid[i];
        }
        residuals.push(r);
        done += 1;
        if let Some(t) = truth {
            let img = ImageGrid::new(s, u.clone()).map_err(|_| Error::Divergence("non-finite iterate".into()))?;
            errors.push(relative_error(&img, t)?);
        }
        let err = errors.last().copied().unwrap_or(0.0);
        if !(r.is_finite() && err.is_finite()) || r > DIVERGENCE_LIMIT || err > DIVERGENCE_LIMIT {
            return Err(Error::Divergence(format!("split Bregman diverged at iteration {done}")));
        }
    }
    Ok(TvResult { image: ImageGrid::new(s, u)?, errors, residuals, iterations: done, inner_converged })
}
