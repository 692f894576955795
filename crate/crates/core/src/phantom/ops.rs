//! Cyclic finite differences on square grids.

use num_complex::Complex64;

/// Forward differences `(u[i, j+1] − u[i, j], u[i+1, j] − u[i, j])`, indices mod `n`.
pub fn grad(u: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    for i in 0..n {
        let i1 = (i + 1) % n;
        for j in 0..n {
            let j1 = (j + 1) % n;
            gx[i * n + j] = u[i * n + j1] - u[i * n + j];
            gy[i * n + j] = u[i1 * n + j] - u[i * n + j];
        }
    }
    (gx, gy)
}

/// Adjoint of [`grad`].
pub fn grad_adjoint(gx: &[f64], gy: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let i0 = (i + n - 1) % n;
        for j in 0..n {
            let j0 = (j + n - 1) % n;
            out[i * n + j] = gx[i * n + j0] - gx[i * n + j] + gy[i0 * n + j] - gy[i * n + j];
        }
    }
    out
}

/// Fourier symbol of `gradᵀ grad` in FFT order.
pub fn laplacian_symbol(n: usize) -> Vec<f64> {
    let k: Vec<f64> = (0..n).map(|i| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
    (0..n * n).map(|idx| k[idx / n] + k[idx % n]).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn complex_norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn adjoint_identity() {
        let n = 7;
        let mut r = rng::stream(1);
        let u = rng::gaussian_vec(&mut r, n * n);
        let px = rng::gaussian_vec(&mut r, n * n);
        let py = rng::gaussian_vec(&mut r, n * n);
        let (gx, gy) = grad(&u, n);
        let lhs = dot(&gx, &px) + dot(&gy, &py);
        let rhs = dot(&u, &grad_adjoint(&px, &py, n));
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn symbol_matches_operator() {
        let n = 16;
        let fft = super::super::fourier::Fft2::new(n);
        let u = rng::gaussian_vec(&mut rng::stream(2), n * n);
        let (gx, gy) = grad(&u, n);
        let direct = fft.forward_real(&grad_adjoint(&gx, &gy, n));
        let k = laplacian_symbol(n);
        let via: Vec<Complex64> = fft.forward_real(&u).iter().zip(&k).map(|(v, s)| v * s).collect();
        assert!(direct.iter().zip(&via).all(|(a, b)| (a - b).norm() < 1e-11));
    }
}
