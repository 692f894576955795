//! Cross-checks against direct dense formulas and independent numerics.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};
use unbiased_core::phantom::Fft2;
use unbiased_core::rng::{gaussian_vec, stream};
use unbiased_core::{mne, sloreta_scores, BlockForwardModel, CovarianceSpec, NoncentralF};

fn random_problem(seed: u64, m: usize, n: usize, d: usize) -> (BlockForwardModel, CovarianceSpec, DVector<f64>) {
    let mut r = stream(seed);
    let l = DMatrix::from_vec(m, n * d, gaussian_vec(&mut r, m * n * d));
    let g = DMatrix::from_vec(m, m, gaussian_vec(&mut r, m * m));
    let c = &g * g.transpose() / m as f64 + DMatrix::identity(m, m) * 0.2;
    let p = DMatrix::from_diagonal(&DVector::from_fn(n * d, |i, _| 0.5 + (i % 3) as f64 * 0.25));
    let y = DVector::from_vec(gaussian_vec(&mut r, m));
    (BlockForwardModel::new(l, d).unwrap(), CovarianceSpec::new(p, c).unwrap(), y)
}

fn dense_sigma_inv(l: &DMatrix<f64>, cov: &CovarianceSpec) -> DMatrix<f64> {
    (l * cov.source() * l.transpose() + cov.noise()).try_inverse().unwrap()
}

#[test]
fn mne_matches_dense_formula() {
    let (model, cov, y) = random_problem(11, 9, 7, 2);
    let l = model.entries();
    let direct = cov.source() * l.transpose() * dense_sigma_inv(l, &cov) * &y;
    let x = mne(&model, &cov, &y).unwrap();
    assert!((x - &direct).norm() <= 1e-10 * direct.norm());
}

#[test]
fn columnwise_sloreta_matches_dense_formula() {
    let (model, cov, y) = random_problem(12, 10, 8, 2);
    let l = model.entries();
    let si = dense_sigma_inv(l, &cov);
    let scores = sloreta_scores(&model, &cov, &y, 1).unwrap().field.scores;
    assert_eq!(scores.len(), 16);
    for (i, &score) in scores.iter().enumerate() {
        let li = l.column(i);
        let num = (li.transpose() * &si * &y)[0];
        let den = (li.transpose() * &si * li)[0];
        let expect = num * num / den;
        assert!((score - expect).abs() <= 1e-10 * expect.max(1.0), "column {i}");
    }
}

#[test]
fn block_sloreta_matches_dense_formula() {
    let (model, cov, y) = random_problem(13, 10, 6, 3);
    let l = model.entries();
    let si = dense_sigma_inv(l, &cov);
    let p = cov.source();
    let x = p * l.transpose() * &si * &y;
    let m = p * l.transpose() * &si * l * p;
    let scores = sloreta_scores(&model, &cov, &y, 3).unwrap().field.scores;
    for (k, &score) in scores.iter().enumerate() {
        let xk = x.rows(3 * k, 3).into_owned();
        let mk = m.view((3 * k, 3 * k), (3, 3)).into_owned().try_inverse().unwrap();
        let expect = (xk.transpose() * mk * &xk)[0];
        assert!((score - expect).abs() <= 1e-9 * expect.max(1.0), "block {k}");
    }
}

#[test]
fn fft_matches_naive_dft() {
    let s = 16;
    let mut r = stream(14);
    let re = gaussian_vec(&mut r, s * s);
    let im = gaussian_vec(&mut r, s * s);
    let input: Vec<Complex64> = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
    let mut fast = input.clone();
    Fft2::new(s).forward(&mut fast);
    let w = -2.0 * std::f64::consts::PI / s as f64;
    for u in 0..s {
        for v in 0..s {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..s {
                for j in 0..s {
                    acc += input[i * s + j] * Complex64::from_polar(1.0, w * ((u * i + v * j) % s) as f64);
                }
            }
            acc /= s as f64;
            assert!((fast[u * s + v] - acc).norm() < 1e-12, "({u}, {v})");
        }
    }
}

/// `P(F'(1, b, λ) ≤ x)` by integrating the noncentral chi-square CDF of one
/// degree of freedom against the chi-square density of the denominator.
fn ncf1_by_quadrature(b: f64, lambda: f64, x: f64) -> f64 {
    let std = Normal::new(0.0, 1.0).unwrap();
    let den = ChiSquared::new(b).unwrap();
    let shift = lambda.sqrt();
    let upper = den.inverse_cdf(1.0 - 1e-15);
    let steps = 200_000;
    let h = upper / steps as f64;
    let f = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let t = (x * v / b).sqrt();
        (std.cdf(t - shift) - std.cdf(-t - shift)) * den.pdf(v)
    };
    let mut sum = f(0.0) + f(upper);
    for i in 1..steps {
        sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[test]
fn noncentral_f_matches_quadrature() {
    for &(b, lambda, x) in &[(5.0, 3.0, 2.0), (12.0, 10.0, 8.0), (30.0, 40.0, 30.0), (50.0, 1.5, 0.7)] {
        let series = NoncentralF::new(1.0, b, lambda).unwrap();
        let q = ncf1_by_quadrature(b, lambda, x);
        assert!((series.cdf(x).unwrap() - q).abs() < 1e-8, "b {b}, λ {lambda}, x {x}");
        assert!((series.sf(x).unwrap() - (1.0 - q)).abs() < 1e-8);
    }
}
