//! Block-structured observation model `y = L x + η`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg;
use crate::rng;

/// The `m × (d·n)` forward matrix; block `k` holds columns `[k·d, (k+1)·d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockForwardModel {
    entries: DMatrix<f64>,
    block_dim: usize,
}

impl BlockForwardModel {
    pub fn new(entries: DMatrix<f64>, block_dim: usize) -> Result<Self> {
        let (m, cols) = entries.shape();
        if m == 0 || block_dim == 0 || cols == 0 {
            return dim_err("forward model needs m, n, d >= 1");
        }
        if cols % block_dim != 0 {
            return dim_err(format!("{cols} columns do not split into blocks of {block_dim}"));
        }
        if !entries.iter().all(|v| v.is_finite()) {
            return param_err("forward model has non-finite entries");
        }
        Ok(BlockForwardModel { entries, block_dim })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn sensors(&self) -> usize {
        self.entries.nrows()
    }

    pub fn blocks(&self) -> usize {
        self.entries.ncols() / self.block_dim
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn parameters(&self) -> usize {
        self.entries.ncols()
    }

    pub fn block(&self, k: usize) -> DMatrix<f64> {
        linalg::columns(&self.entries, k * self.block_dim, self.block_dim)
    }

    /// Noiseless data `Σ_k L_k c_k`.
    pub fn apply(&self, sources: &SourceConfig) -> Result<DVector<f64>> {
        let mut y = DVector::zeros(self.sensors());
        for (&k, c) in sources.support().iter().zip(sources.coefficients()) {
            if k >= self.blocks() {
                return dim_err(format!("support index {k} >= {} blocks", self.blocks()));
            }
            if c.len() != self.block_dim {
                return dim_err(format!("coefficient of length {} for block dimension {}", c.len(), self.block_dim));
            }
            y += self.entries.columns(k * self.block_dim, self.block_dim) * c;
        }
        Ok(y)
    }
}

/// Source covariance `P` and noise covariance `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    source: DMatrix<f64>,
    noise: DMatrix<f64>,
}

impl CovarianceSpec {
    pub fn new(source: DMatrix<f64>, noise: DMatrix<f64>) -> Result<Self> {
        linalg::check_spd(&source, "source covariance")?;
        linalg::check_spd(&noise, "noise covariance")?;
        Ok(CovarianceSpec { source, noise })
    }

    /// `P = diag(P_1, …, P_n)` from per-block matrices.
    pub fn block_diagonal(blocks: &[DMatrix<f64>], noise: DMatrix<f64>) -> Result<Self> {
        let total: usize = blocks.iter().map(|b| b.nrows()).sum();
        let mut p = DMatrix::zeros(total, total);
        let mut off = 0;
        for b in blocks {
            if !b.is_square() {
                return dim_err("source covariance blocks must be square");
            }
            p.view_mut((off, off), b.shape()).copy_from(b);
            off += b.nrows();
        }
        Self::new(p, noise)
    }

    /// `P = I` and `C = noise_variance · I`.
    pub fn isotropic(parameters: usize, sensors: usize, noise_variance: f64) -> Result<Self> {
        Self::new(DMatrix::identity(parameters, parameters), DMatrix::identity(sensors, sensors) * noise_variance)
    }

    pub fn source(&self) -> &DMatrix<f64> {
        &self.source
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    pub fn check_against(&self, model: &BlockForwardModel) -> Result<()> {
        if self.source.nrows() != model.parameters() {
            return dim_err(format!(
                "source covariance is {0}x{0}, model has {1} parameters",
                self.source.nrows(),
                model.parameters()
            ));
        }
        if self.noise.nrows() != model.sensors() {
            return dim_err(format!(
                "noise covariance is {0}x{0}, model has {1} sensors",
                self.noise.nrows(),
                model.sensors()
            ));
        }
        Ok(())
    }

    /// The `d×d` diagonal blocks of `P`. Errors if `P` couples different blocks.
    pub fn source_blocks(&self, d: usize) -> Result<Vec<DMatrix<f64>>> {
        let p = &self.source;
        let total = p.nrows();
        if d == 0 || !total.is_multiple_of(d) {
            return dim_err(format!("{total} parameters do not split into blocks of {d}"));
        }
        let scale = linalg::max_abs(p);
        for i in 0..total {
            for j in 0..total {
                if i / d != j / d && p[(i, j)].abs() > 1e-12 * scale {
                    return param_err(format!("source covariance is not block-diagonal (entry {i},{j})"));
                }
            }
        }
        Ok((0..total / d).map(|k| p.view((k * d, k * d), (d, d)).into_owned()).collect())
    }
}

/// Active blocks and their coefficient vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    support: Vec<usize>,
    coefficients: Vec<Vec<f64>>,
}

impl SourceConfig {
    pub fn new(support: Vec<usize>, coefficients: Vec<DVector<f64>>) -> Result<Self> {
        if support.len() != coefficients.len() {
            return dim_err("one coefficient vector per support index required");
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return param_err("support must be strictly increasing");
        }
        if let Some(c) = coefficients.first() {
            if coefficients.iter().any(|v| v.len() != c.len()) {
                return dim_err("coefficient vectors differ in length");
            }
        }
        if coefficients.iter().any(|c| c.iter().all(|&v| v == 0.0)) {
            return param_err("every supported block needs a nonzero coefficient");
        }
        Ok(SourceConfig { support, coefficients: coefficients.into_iter().map(|c| c.as_slice().to_vec()).collect() })
    }

    pub fn empty() -> Self {
        SourceConfig { support: Vec::new(), coefficients: Vec::new() }
    }

    pub fn single(block: usize, coefficient: DVector<f64>) -> Result<Self> {
        Self::new(vec![block], vec![coefficient])
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn coefficients(&self) -> Vec<DVector<f64>> {
        self.coefficients.iter().map(|c| DVector::from_column_slice(c)).collect()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Coefficients embedded in the full `d·n` parameter vector.
    pub fn embed(&self, blocks: usize, d: usize) -> DVector<f64> {
        let mut x = DVector::zeros(blocks * d);
        for (&k, c) in self.support.iter().zip(&self.coefficients) {
            for (i, v) in c.iter().enumerate() {
                x[k * d + i] = *v;
            }
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Iid,
    Correlated,
}

/// Additive Gaussian noise, sized as an RMS ratio against the clean signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub correlation_length: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, level: f64, correlation_length: f64, seed: u64) -> Result<Self> {
        let spec = NoiseSpec { kind, level, correlation_length, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn none() -> Self {
        NoiseSpec { kind: NoiseKind::None, level: 0.0, correlation_length: 1.0, seed: 0 }
    }

    pub fn iid(level: f64, seed: u64) -> Result<Self> {
        Self::new(NoiseKind::Iid, level, 1.0, seed)
    }

    pub fn correlated(level: f64, correlation_length: f64, seed: u64) -> Result<Self> {
        Self::new(NoiseKind::Correlated, level, correlation_length, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.level) {
            return param_err(format!("noise level {} outside [0, 1)", self.level));
        }
        if (self.level == 0.0) != (self.kind == NoiseKind::None) {
            return param_err("noise level must be zero exactly when the kind is `none`");
        }
        if self.kind == NoiseKind::Correlated && !(self.correlation_length > 0.0 && self.correlation_length.is_finite())
        {
            return param_err("correlation length must be positive");
        }
        Ok(())
    }

    /// Unscaled noise shape: standard normal, optionally colored over `positions`.
    pub(crate) fn raw_draw(&self, positions: &[Vec<f64>]) -> Result<DVector<f64>> {
        let m = positions.len();
        let mut g = rng::gaussian_vector(&mut rng::stream(self.seed), m);
        if self.kind == NoiseKind::Correlated {
            let c = correlated_noise_covariance(positions, self.correlation_length, 1.0)?;
            let eig = c.symmetric_eigen();
            let mut q = eig.eigenvectors.clone();
            for (j, l) in eig.eigenvalues.iter().enumerate() {
                q.column_mut(j).scale_mut(l.max(0.0).sqrt());
            }
            g = q * (eig.eigenvectors.transpose() * g);
        }
        Ok(g)
    }

    /// Noise vector for `clean`, scaled so that `rms(η) = level · rms(clean)`.
    pub fn draw(&self, clean: &DVector<f64>, positions: &[Vec<f64>]) -> Result<DVector<f64>> {
        self.validate()?;
        if positions.len() != clean.len() {
            return dim_err("one position per sensor required");
        }
        if self.kind == NoiseKind::None {
            return Ok(DVector::zeros(clean.len()));
        }
        let target = self.level * rms(clean.as_slice());
        if target == 0.0 {
            return param_err("relative noise level needs a nonzero clean signal");
        }
        let g = self.raw_draw(positions)?;
        let r = rms(g.as_slice());
        if r == 0.0 {
            return Err(Error::Singular("noise draw is identically zero".into()));
        }
        Ok(g * (target / r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: DVector<f64>,
    pub noise_realization: DVector<f64>,
}

impl Observation {
    pub fn noiseless(y: DVector<f64>) -> Self {
        let n = y.len();
        Observation { y, noise_realization: DVector::zeros(n) }
    }

    pub fn clean(&self) -> DVector<f64> {
        &self.y - &self.noise_realization
    }
}

pub fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Sensor index used as a one-dimensional coordinate.
pub fn index_positions(m: usize) -> Vec<Vec<f64>> {
    (0..m).map(|i| vec![i as f64]).collect()
}

/// Draws `y = Σ L_k c_k + η`. Correlated noise uses the sensor index as coordinate.
pub fn synthesize(model: &BlockForwardModel, sources: &SourceConfig, noise: &NoiseSpec) -> Result<Observation> {
    synthesize_at(model, sources, noise, &index_positions(model.sensors()))
}

/// As [`synthesize`], with explicit sensor coordinates for correlated noise.
pub fn synthesize_at(
    model: &BlockForwardModel,
    sources: &SourceConfig,
    noise: &NoiseSpec,
    positions: &[Vec<f64>],
) -> Result<Observation> {
    let clean = model.apply(sources)?;
    add_noise(clean, noise, positions)
}

pub fn add_noise(clean: DVector<f64>, noise: &NoiseSpec, positions: &[Vec<f64>]) -> Result<Observation> {
    let eta = noise.draw(&clean, positions)?;
    Ok(Observation { y: clean + &eta, noise_realization: eta })
}

/// Squared-exponential covariance over sensor coordinates.
pub fn correlated_noise_covariance<P: AsRef<[f64]>>(
    positions: &[P],
    correlation_length: f64,
    variance: f64,
) -> Result<DMatrix<f64>> {
    if !(correlation_length > 0.0) || !(variance > 0.0) {
        return param_err("correlation length and variance must be positive");
    }
    if positions.iter().any(|p| p.as_ref().iter().any(|v| !v.is_finite())) {
        return param_err("non-finite sensor position");
    }
    let m = positions.len();
    let two_l2 = 2.0 * correlation_length * correlation_length;
    Ok(DMatrix::from_fn(m, m, |i, j| {
        let a = positions[i].as_ref();
        let b = positions[j].as_ref();
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let jitter = if i == j { 1e-10 * variance } else { 0.0 };
        variance * (-d2 / two_l2).exp() + jitter
    }))
}

/// `‖y‖² / (m σ) + 1` for the clean signal `y` and per-sensor noise variance `σ`.
pub fn snr(clean: &DVector<f64>, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return param_err("noise variance must be positive");
    }
    if clean.is_empty() {
        return dim_err("empty observation");
    }
    Ok(clean.norm_squared() / (clean.len() as f64 * sigma) + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(m: usize, n: usize, d: usize, seed: u64) -> BlockForwardModel {
        let v = rng::gaussian_vec(&mut rng::stream(seed), m * n * d);
        BlockForwardModel::new(DMatrix::from_vec(m, n * d, v), d).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(BlockForwardModel::new(DMatrix::zeros(3, 5), 2).is_err());
        assert!(BlockForwardModel::new(DMatrix::zeros(0, 4), 2).is_err());
        assert!(BlockForwardModel::new(DMatrix::zeros(3, 4), 0).is_err());
    }

    #[test]
    fn single_unit_source_selects_a_column() {
        let l = model(6, 4, 2, 1);
        let src = SourceConfig::single(2, DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let obs = synthesize(&l, &src, &NoiseSpec::none()).unwrap();
        assert_eq!(obs.y, l.entries().column(4).into_owned());
    }

    #[test]
    fn empty_support_gives_zero() {
        let l = model(5, 3, 1, 2);
        let obs = synthesize(&l, &SourceConfig::empty(), &NoiseSpec::none()).unwrap();
        assert_eq!(obs.y, DVector::zeros(5));
    }

    #[test]
    fn noise_ratio_and_reproducibility() {
        let l = model(20, 5, 2, 3);
        let src = SourceConfig::single(1, DVector::from_vec(vec![0.3, -1.2])).unwrap();
        let spec = NoiseSpec::iid(0.05, 99).unwrap();
        let a = synthesize(&l, &src, &spec).unwrap();
        let b = synthesize(&l, &src, &spec).unwrap();
        assert_eq!(a, b);
        let clean = l.apply(&src).unwrap();
        let ratio = rms(a.noise_realization.as_slice()) / rms(clean.as_slice());
        assert!((ratio - 0.05).abs() < 1e-12);
        assert!(((&a.y - &a.noise_realization) - clean).norm() < 1e-14);
    }

    #[test]
    fn correlated_noise_is_reproducible_and_scaled() {
        let l = model(12, 3, 1, 4);
        let src = SourceConfig::single(0, DVector::from_vec(vec![1.0])).unwrap();
        let spec = NoiseSpec::correlated(0.3, 2.0, 5).unwrap();
        let a = synthesize(&l, &src, &spec).unwrap();
        assert_eq!(a, synthesize(&l, &src, &spec).unwrap());
        let ratio = rms(a.noise_realization.as_slice()) / rms(l.apply(&src).unwrap().as_slice());
        assert!((ratio - 0.3).abs() < 1e-12);
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::iid(1.0, 0).is_err());
        assert!(NoiseSpec::iid(0.0, 0).is_err());
        assert!(NoiseSpec::new(NoiseKind::None, 0.1, 1.0, 0).is_err());
        assert!(NoiseSpec::correlated(0.1, 0.0, 0).is_err());
        assert!(NoiseSpec::none().validate().is_ok());
    }

    #[test]
    fn source_config_validation() {
        let c = || DVector::from_vec(vec![1.0]);
        assert!(SourceConfig::new(vec![2, 1], vec![c(), c()]).is_err());
        assert!(SourceConfig::new(vec![1, 1], vec![c(), c()]).is_err());
        assert!(SourceConfig::new(vec![1], vec![DVector::zeros(1)]).is_err());
        let l = model(4, 3, 1, 5);
        let far = SourceConfig::single(3, c()).unwrap();
        assert!(l.apply(&far).is_err());
        let wide = SourceConfig::single(0, DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!(l.apply(&wide).is_err());
    }

    #[test]
    fn covariance_kernel_examples() {
        let pos = vec![vec![0.0], vec![1.0], vec![2.0]];
        let c = correlated_noise_covariance(&pos, 1.0, 2.0).unwrap();
        let e = 2.0 * (-0.5f64).exp();
        assert!((c[(0, 1)] - e).abs() < 1e-15 && (c[(1, 2)] - e).abs() < 1e-15);
        assert!((c[(0, 0)] - 2.0 * (1.0 + 1e-10)).abs() < 1e-15);

        let short = correlated_noise_covariance(&pos, 1e-4, 2.0).unwrap();
        assert!((short - DMatrix::identity(3, 3) * 2.0).amax() < 1e-8);

        let dup = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let c = correlated_noise_covariance(&dup, 1.0, 1.0).unwrap();
        let ev = c.symmetric_eigenvalues();
        assert!(ev.min() > 0.0 && ev.min() < 1e-9);
        assert!(correlated_noise_covariance(&[vec![f64::NAN]], 1.0, 1.0).is_err());
    }

    #[test]
    fn snr_examples() {
        let z = DVector::zeros(4);
        assert_eq!(snr(&z, 1.0).unwrap(), 1.0);
        let mut y = DVector::zeros(16);
        y[0] = 32f64.sqrt();
        assert!((snr(&y, 1.0).unwrap() - 3.0).abs() < 1e-14);
        let y = DVector::from_element(4, 1.0);
        assert!((snr(&y, 1.0).unwrap() - 2.0).abs() < 1e-14);
        assert!(snr(&y, 0.0).is_err());
    }

    #[test]
    fn non_block_diagonal_source_covariance_is_rejected() {
        let mut p = DMatrix::identity(4, 4) * 2.0;
        p[(1, 2)] = 0.1;
        p[(2, 1)] = 0.1;
        let cov = CovarianceSpec::new(p, DMatrix::identity(3, 3)).unwrap();
        assert!(cov.source_blocks(2).is_err());
        assert!(cov.source_blocks(1).is_err());
        assert_eq!(cov.source_blocks(4).unwrap().len(), 1);
    }

    proptest! {
        #[test]
        fn synthesis_is_linear(seed in any::<u64>(), k in 0usize..4) {
            let l = model(7, 4, 2, seed);
            let c = rng::gaussian_vector(&mut rng::stream(seed ^ 1), 2);
            prop_assume!(c.norm() > 0.0);
            let a = l.apply(&SourceConfig::single(k, c.clone()).unwrap()).unwrap();
            let b = l.apply(&SourceConfig::single(k, c * 2.0).unwrap()).unwrap();
            prop_assert!((&b - &a * 2.0).norm() <= 1e-14 * (1.0 + a.norm()));
        }

        #[test]
        fn kernel_is_positive_definite(seed in any::<u64>(), len in 0.1f64..3.0) {
            let pts: Vec<Vec<f64>> = (0..8)
                .map(|i| rng::gaussian_vec(&mut rng::stream(seed.wrapping_add(i)), 2))
                .collect();
            let c = correlated_noise_covariance(&pts, len, 1.5).unwrap();
            prop_assert!(c.symmetric_eigenvalues().min() > 0.0);
        }
    }
}
