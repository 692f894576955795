//! Dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative eigenvalue floor used for inverse square roots.
pub const EIG_CLAMP: f64 = 1e-12;
/// Relative singular-value cutoff for compact SVDs and numerical rank.
pub const SVD_CUTOFF: f64 = 1e-10;

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Fails unless `a` is symmetric within 1e-12 relative and has positive spectrum.
pub fn check_spd(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!("{what} has non-finite entries")));
    }
    if !is_symmetric(a, 1e-12) {
        return Err(Error::NotPositiveDefinite(format!("{what} is not symmetric")));
    }
    let eig = symmetrize(a).symmetric_eigenvalues();
    let min = eig.min();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("{what} has smallest eigenvalue {min:e}")));
    }
    Ok(())
}

/// `A^{-1/2}` of a symmetric matrix, with the clamping that produced it.
#[derive(Debug, Clone)]
pub struct InvSqrt {
    pub matrix: DMatrix<f64>,
    pub clamped: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

/// Symmetric inverse square root. Eigenvalues below `EIG_CLAMP * max` are
/// raised to that floor; negative eigenvalues beyond `-1e-8 * max` are an error.
pub fn inv_sqrt_clamped(a: &DMatrix<f64>) -> Result<InvSqrt> {
    let eig = symmetrize(a).symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::Singular(format!("largest eigenvalue is {max:e}")));
    }
    if min < -1e-8 * max {
        return Err(Error::Singular(format!("eigenvalue {min:e} is negative beyond the clamping tolerance")));
    }
    let floor = EIG_CLAMP * max;
    let mut clamped = 0;
    let scale = eig.eigenvalues.map(|l| {
        if l < floor {
            clamped += 1;
            1.0 / floor.sqrt()
        } else {
            1.0 / l.sqrt()
        }
    });
    let q = &eig.eigenvectors;
    let mut qs = q.clone();
    for (j, s) in scale.iter().enumerate() {
        qs.column_mut(j).scale_mut(*s);
    }
    Ok(InvSqrt { matrix: symmetrize(&(qs * q.transpose())), clamped, min_eigenvalue: min, max_eigenvalue: max })
}

/// Compact SVD `A = U diag(s) Vᵀ` with `s` descending and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl CompactSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// Full thin SVD by one-sided Jacobi rotations: `(U, s, V)` with `U` of shape
/// `m × k`, `V` of shape `n × k`, `k = min(m, n)`, `s` descending. Columns of
/// `U` paired with zero singular values are zero.
///
/// nalgebra's bidiagonal SVD returns inaccurate factors for some
/// rank-deficient inputs, which the compact factors here cannot tolerate.
pub fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    if m < n {
        let (u, s, v) = jacobi_svd(&a.transpose());
        return (v, s, u);
    }
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..m {
                    let (x, y) = (w[(r, i)], w[(r, j)]);
                    w[(r, i)] = c * x - s * y;
                    w[(r, j)] = s * x + c * y;
                }
                for r in 0..n {
                    let (x, y) = (v[(r, i)], v[(r, j)]);
                    v[(r, i)] = c * x - s * y;
                    v[(r, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let mut u = DMatrix::zeros(m, n);
    let mut vs = DMatrix::zeros(n, n);
    let mut s = DVector::zeros(n);
    for (c, &j) in order.iter().enumerate() {
        s[c] = norms[j];
        if norms[j] > 0.0 {
            u.set_column(c, &(w.column(j) / norms[j]));
        }
        vs.set_column(c, &v.column(j));
    }
    (u, s, vs)
}

/// Drops singular values below `rel_cutoff` times the largest one. A zero
/// matrix gives rank 0.
pub fn compact_svd(a: &DMatrix<f64>, rel_cutoff: f64) -> CompactSvd {
    let (m, n) = a.shape();
    let (u, s, v) = jacobi_svd(a);
    let smax = s.iter().copied().fold(0.0, f64::max);
    let r = s.iter().filter(|&&x| smax > 0.0 && x > rel_cutoff * smax).count();
    CompactSvd {
        u: if r == 0 { DMatrix::zeros(m, 0) } else { u.columns(0, r).into_owned() },
        s: s.rows(0, r).into_owned(),
        v: if r == 0 { DMatrix::zeros(n, 0) } else { v.columns(0, r).into_owned() },
    }
}

/// Moore-Penrose pseudoinverse with relative cutoff.
pub fn pinv(a: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let f = compact_svd(a, rel_cutoff);
    let mut v = f.v.clone();
    for (j, s) in f.s.iter().enumerate() {
        v.column_mut(j).scale_mut(1.0 / s);
    }
    v * f.u.transpose()
}

/// Singular values (descending) of a real matrix.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    jacobi_svd(a).1.iter().copied().collect()
}

/// Singular values (descending) of a complex matrix, via the real embedding
/// `[[Re, -Im], [Im, Re]]` whose spectrum repeats every value twice.
pub fn complex_singular_values(a: &DMatrix<Complex64>) -> Vec<f64> {
    let (m, n) = a.shape();
    let mut r = DMatrix::zeros(2 * m, 2 * n);
    for i in 0..m {
        for j in 0..n {
            let z = a[(i, j)];
            r[(i, j)] = z.re;
            r[(i, j + n)] = -z.im;
            r[(i + m, j)] = z.im;
            r[(i + m, j + n)] = z.re;
        }
    }
    singular_values(&r).into_iter().step_by(2).collect()
}

/// Number of singular values above `rel_tol * s_max`.
pub fn rank_from_singular_values(s: &[f64], rel_tol: f64) -> usize {
    let smax = s.iter().copied().fold(0.0, f64::max);
    if smax > 0.0 {
        s.iter().filter(|&&v| v > rel_tol * smax).count()
    } else {
        0
    }
}

pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    rank_from_singular_values(&singular_values(a), rel_tol)
}

/// Minimum-norm least-squares solution of `A x ≈ b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    pinv(a, 1e-12) * b
}

/// Columns `[start, start + len)` of `a` as an owned matrix.
pub fn columns(a: &DMatrix<f64>, start: usize, len: usize) -> DMatrix<f64> {
    a.columns(start, len).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        DMatrix::from_vec(m, n, rng::gaussian_vec(&mut rng::stream(seed), m * n))
    }

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        let b = random(5, 5, 1);
        let a = &b * b.transpose() + DMatrix::identity(5, 5);
        let r = inv_sqrt_clamped(&a).unwrap();
        let prod = &r.matrix * &a * &r.matrix;
        assert!((prod - DMatrix::identity(5, 5)).norm() < 1e-10);
        assert_eq!(r.clamped, 0);
    }

    #[test]
    fn inv_sqrt_reports_clamps() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-20]));
        let r = inv_sqrt_clamped(&a).unwrap();
        assert_eq!(r.clamped, 1);
        assert!((r.matrix[(1, 1)] - 1e6).abs() < 1e-3);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1e-3]));
        assert!(inv_sqrt_clamped(&bad).is_err());
    }

    #[test]
    fn compact_svd_drops_null_directions() {
        let mut a = random(6, 3, 2);
        let c0 = a.column(0).into_owned();
        a.set_column(2, &c0);
        let f = compact_svd(&a, SVD_CUTOFF);
        assert_eq!(f.rank(), 2);
        let err = (f.reconstruct() - &a).norm();
        assert!(err < 1e-12 * a.norm(), "{err}");
        assert!((f.u.transpose() * &f.u - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert!(f.s[0] >= f.s[1]);
        assert_eq!(compact_svd(&DMatrix::zeros(4, 2), SVD_CUTOFF).rank(), 0);
    }

    #[test]
    fn jacobi_svd_reconstructs_rank_deficient_inputs() {
        for seed in 0..300u64 {
            let m = 2 + (seed % 7) as usize;
            let n = 1 + (seed % 5) as usize;
            let mut a = random(m, n, seed);
            if n >= 2 {
                let c = a.column(0).into_owned();
                a.set_column(n - 1, &c);
            }
            let (u, s, v) = jacobi_svd(&a);
            let rec = &u * DMatrix::from_diagonal(&s) * v.transpose();
            assert!((rec - &a).norm() < 1e-13 * a.norm(), "seed {seed}");
            assert!(s.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn complex_singular_values_match_real_case() {
        let a = random(4, 3, 30);
        let z = a.map(|x| Complex64::new(x, 0.0));
        let r = singular_values(&a);
        let c = complex_singular_values(&z);
        for (x, y) in r.iter().zip(&c) {
            assert!((x - y).abs() < 1e-13);
        }
        // multiplying by i leaves singular values unchanged
        let zi = a.map(|x| Complex64::new(0.0, x));
        let ci = complex_singular_values(&zi);
        assert!((ci[0] - r[0]).abs() < 1e-13);
    }

    #[test]
    fn pinv_of_full_column_rank_is_left_inverse() {
        let a = random(7, 3, 3);
        let p = pinv(&a, 1e-12);
        assert!((p * a - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn spd_check_rejects_asymmetry_and_indefiniteness() {
        let mut a = DMatrix::identity(3, 3);
        assert!(check_spd(&a, "a").is_ok());
        a[(0, 1)] = 0.5;
        assert!(check_spd(&a, "a").is_err());
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(check_spd(&b, "b").is_err());
    }
}
