//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use unbiased_core::model::NoiseSpec;
use unbiased_core::phantom::{fourier_sample, radial_mask, shepp_logan, FourierData, ImageGrid};
use unbiased_core::rng::{gaussian_vec, stream};
use unbiased_core::{BlockForwardModel, CovarianceSpec};

/// Random Gaussian model with isotropic covariances and a random observation.
pub fn gaussian_problem(m: usize, n: usize, d: usize, seed: u64) -> (BlockForwardModel, CovarianceSpec, DVector<f64>) {
    let mut r = stream(seed);
    let l = DMatrix::from_vec(m, n * d, gaussian_vec(&mut r, m * n * d));
    let y = DVector::from_vec(gaussian_vec(&mut r, m));
    let model = BlockForwardModel::new(l, d).expect("valid model");
    let cov = CovarianceSpec::isotropic(n * d, m, 0.1).expect("valid covariance");
    (model, cov, y)
}

/// Shepp-Logan phantom and its noisy radial samples.
pub fn phantom_problem(s: usize, lines: usize, noise: f64, seed: u64) -> (ImageGrid, FourierData) {
    let truth = shepp_logan(s).expect("valid side");
    let mask = radial_mask(s, lines).expect("valid mask");
    let data = fourier_sample(&truth, &mask, &NoiseSpec::iid(noise, seed).expect("valid noise")).expect("sampled");
    (truth, data)
}
