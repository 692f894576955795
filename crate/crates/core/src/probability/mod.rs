//! Noncentral F distribution and weak-reconstruction probabilities.

mod beta;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

pub use beta::{beta_tails, ln_beta, regularized_incomplete_beta};

use crate::disk::{self, DiskGeometry, Point};
use crate::error::{dim_err, param_err, Error, Result};
use crate::matrix_io::format_real;
use crate::model::{BlockForwardModel, CovarianceSpec};
use crate::pgm;
use crate::whitening::{whiten_with, SigmaForm, WhitenedModel};

/// Noncentralities above this use the normal approximation.
pub const NORMAL_FALLBACK_LAMBDA: f64 = 1e4;
const MAX_TERMS: usize = 1_000_000;

/// `F'(a, b, λ)`: `(χ'²_a(λ)/a) / (χ²_b/b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoncentralF {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdfMethod {
    Series,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NcfEvaluation {
    pub value: f64,
    pub terms: usize,
    /// Bound on the contribution of the omitted series terms.
    pub tail_mass: f64,
    pub method: CdfMethod,
}

#[derive(Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// `ln Γ(n + 1) − (n + ½) ln n + n − ln √(2π)`.
fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return ln_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    let nn = n * n;
    if n > 500.0 {
        return (S0 - S1 / nn) / n;
    }
    if n > 80.0 {
        return (S0 - (S1 - S2 / nn) / nn) / n;
    }
    if n > 35.0 {
        return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n;
    }
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// `x ln(x/μ) + μ − x` without cancellation when `x ≈ μ`.
fn deviance_term(x: f64, mu: f64) -> f64 {
    if (x - mu).abs() < 0.1 * (x + mu) {
        let v = (x - mu) / (x + mu);
        let mut s = (x - mu) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / mu).ln() + mu - x
    }
}

/// Poisson probability of `j` at mean `mu` via the saddle-point form,
/// accurate to a few ulps even for large arguments.
fn poisson_pmf(j: f64, mu: f64) -> f64 {
    if j == 0.0 {
        return (-mu).exp();
    }
    (-stirling_error(j) - deviance_term(j, mu)).exp() / (2.0 * std::f64::consts::PI * j).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl NoncentralF {
    pub fn new(a: f64, b: f64, lambda: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return param_err(format!("degrees of freedom must be positive, got ({a}, {b})"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return param_err(format!("noncentrality {lambda} must be finite and non-negative"));
        }
        Ok(NoncentralF { a, b, lambda })
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.cdf_detailed(x)?.value)
    }

    /// `P(X > x)`, summed directly so small upper tails keep their
    /// relative accuracy.
    pub fn sf(&self, x: f64) -> Result<f64> {
        let e = self.tail(x, true)?;
        if e.value > 0.5 && e.method == CdfMethod::Series {
            return Ok(1.0 - self.tail(x, false)?.value);
        }
        Ok(e.value)
    }

    /// Poisson mixture of regularized incomplete betas, summed outward from
    /// the Poisson mode until the bound on the omitted terms falls below
    /// 1e-16 of the running sum.
    pub fn cdf_detailed(&self, x: f64) -> Result<NcfEvaluation> {
        let e = self.tail(x, false)?;
        if e.value > 0.5 && e.method == CdfMethod::Series {
            let u = self.tail(x, true)?;
            return Ok(NcfEvaluation { value: 1.0 - u.value, terms: e.terms + u.terms, tail_mass: u.tail_mass, ..e });
        }
        Ok(e)
    }

    fn tail(&self, x: f64, upper: bool) -> Result<NcfEvaluation> {
        if x.is_nan() || x < 0.0 {
            return param_err(format!("x = {x} must be non-negative"));
        }
        let series = |lower: f64, terms, tail_mass| NcfEvaluation {
            value: if upper { 1.0 - lower } else { lower },
            terms,
            tail_mass,
            method: CdfMethod::Series,
        };
        if x == 0.0 {
            return Ok(series(0.0, 0, 0.0));
        }
        if x.is_infinite() {
            return Ok(series(1.0, 0, 0.0));
        }
        if self.lambda > NORMAL_FALLBACK_LAMBDA {
            return Ok(self.normal_approximation(x, upper));
        }
        let (ha, hb) = (0.5 * self.a, 0.5 * self.b);
        let z = self.a * x / (self.b + self.a * x);
        let zc = self.b / (self.b + self.a * x);
        let beta = |j: f64| -> Result<f64> {
            let (lo, hi) = beta_tails(z, zc, ha + j, hb)?;
            Ok(if upper { hi } else { lo })
        };
        let done = |bound: f64, sum: f64| bound <= 1e-16 * sum || bound < 1e-300;
        let mu = 0.5 * self.lambda;
        let evaluated = |value: f64, terms, tail_mass| NcfEvaluation {
            value: value.clamp(0.0, 1.0),
            terms,
            tail_mass,
            method: CdfMethod::Series,
        };
        if mu == 0.0 {
            return Ok(evaluated(beta(0.0)?, 1, 0.0));
        }
        // As j grows the lower tail of each beta term grows and the upper
        // tail shrinks.
        let j0 = mu.floor();
        let w0 = poisson_pmf(j0, mu);
        let mut value = Kahan::default();
        let mut omitted = 0.0;
        let mut terms = 0usize;

        let (mut j, mut w) = (j0, w0);
        loop {
            let g = beta(j)?;
            value.add(w * g);
            terms += 1;
            let q = mu / (j + 1.0);
            let rest = w * q / (1.0 - q);
            let bound = if upper { rest * g } else { rest };
            if done(bound, value.sum) {
                omitted += bound;
                break;
            }
            if terms >= MAX_TERMS {
                return Err(Error::NonConvergence(format!("noncentral F series at lambda = {}", self.lambda)));
            }
            w *= q;
            j += 1.0;
        }
        let (mut j, mut w) = (j0, w0);
        while j > 0.0 {
            w *= j / mu;
            j -= 1.0;
            let g = beta(j)?;
            value.add(w * g);
            terms += 1;
            let q = j / mu;
            let rest = w * q / (1.0 - q);
            let bound = if upper { rest } else { rest * g };
            if done(bound, value.sum) {
                omitted += bound;
                break;
            }
        }
        Ok(evaluated(value.sum, terms, omitted))
    }

    /// Cube-root normal approximation for large noncentrality.
    fn normal_approximation(&self, x: f64, upper: bool) -> NcfEvaluation {
        let (a, b, l) = (self.a, self.b, self.lambda);
        let c = a + l;
        let k = a + 2.0 * l;
        let u = (a * x / c).cbrt();
        let num = u * (1.0 - 2.0 / (9.0 * b)) - (1.0 - 2.0 * k / (9.0 * c * c));
        let den = (2.0 * k / (9.0 * c * c) + u * u * 2.0 / (9.0 * b)).sqrt();
        NcfEvaluation {
            value: std_normal_cdf(if upper { -num / den } else { num / den }).clamp(0.0, 1.0),
            terms: 0,
            tail_mass: 0.0,
            method: CdfMethod::NormalApproximation,
        }
    }
}

pub fn ncf_cdf(dist: &NoncentralF, x: f64) -> Result<f64> {
    dist.cdf(x)
}

/// `P(X > threshold)` for `X ~ F'(1, dof, λ)`.
pub fn exceedance(lambda: f64, dof: usize, threshold: f64) -> Result<f64> {
    NoncentralF::new(1.0, dof as f64, lambda)?.sf(threshold)
}

/// How the noncentrality of a weak-reconstruction probability is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode<'a> {
    /// Smallest `|𝒰_iᵀŷ|²` over the columns of the given (true) blocks.
    Truth(&'a [usize]),
    /// Smallest of the `N·d` largest `|𝒰_iᵀŷ|²`.
    Blind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakProbability {
    pub p: f64,
    pub lambda: f64,
    pub blind: bool,
    pub dof: usize,
    pub threshold: f64,
}

fn projection_lambda(wm: &WhitenedModel, yhat: &DVector<f64>, n: usize, mode: LambdaMode) -> Result<f64> {
    if yhat.len() != wm.sensors() {
        return dim_err("whitened observation has the wrong length");
    }
    let proj = wm.cal_u.transpose() * yhat;
    let sq: Vec<f64> = proj.iter().map(|v| v * v).collect();
    match mode {
        LambdaMode::Truth(blocks) => {
            if blocks.is_empty() {
                return param_err("truth mode needs at least one block");
            }
            let mut min = f64::INFINITY;
            for &k in blocks {
                if k >= wm.blocks() {
                    return dim_err(format!("block {k} out of range"));
                }
                for i in wm.block_range(k) {
                    min = min.min(sq[i]);
                }
            }
            Ok(if min.is_finite() { min } else { 0.0 })
        }
        LambdaMode::Blind => {
            let keep = n * wm.block_dim;
            let mut s = sq;
            s.sort_by(|a, b| b.total_cmp(a));
            Ok(s.get(keep.min(s.len()).saturating_sub(1)).copied().unwrap_or(0.0))
        }
    }
}

fn dof(wm: &WhitenedModel, n: usize) -> Result<usize> {
    let m = wm.sensors();
    let nd = n * wm.block_dim;
    if n == 0 || m <= nd {
        return param_err(format!("need m > N·d, got m = {m}, N·d = {nd}"));
    }
    Ok(m - nd)
}

/// `P(X̃ > 2(m − Nd))`, `X̃ ~ F'(1, m − Nd, λ)`.
pub fn weak_recon_prob(wm: &WhitenedModel, yhat: &DVector<f64>, n: usize, mode: LambdaMode) -> Result<WeakProbability> {
    let k = dof(wm, n)?;
    let lambda = projection_lambda(wm, yhat, n, mode)?;
    let threshold = 2.0 * k as f64;
    Ok(WeakProbability {
        p: exceedance(lambda, k, threshold)?,
        lambda,
        blind: matches!(mode, LambdaMode::Blind),
        dof: k,
        threshold,
    })
}

/// Orthogonal-operator variant with threshold `m − Nd`; requires `𝒰ᵀ𝒰 = I`.
pub fn weak_recon_prob_orthogonal(
    wm: &WhitenedModel,
    yhat: &DVector<f64>,
    n: usize,
    mode: LambdaMode,
) -> Result<WeakProbability> {
    let r = wm.cal_u.ncols();
    let gram = wm.cal_u.transpose() * &wm.cal_u;
    if (gram - DMatrix::identity(r, r)).amax() > 1e-8 {
        return param_err("unbiased operator is not orthogonal");
    }
    let k = dof(wm, n)?;
    let lambda = projection_lambda(wm, yhat, n, mode)?;
    let threshold = k as f64;
    Ok(WeakProbability {
        p: exceedance(lambda, k, threshold)?,
        lambda,
        blind: matches!(mode, LambdaMode::Blind),
        dof: k,
        threshold,
    })
}

/// Noncentrality of one column when the SNR's signal energy is shared
/// equally by the `d` columns of a block: `m (SNR − 1) / d`.
pub fn snr_lambda(m: usize, d: usize, snr: f64) -> f64 {
    m as f64 * (snr - 1.0) / d as f64
}

/// Weak-reconstruction probability of one `d`-parameter source at a given SNR.
pub fn snr_prob(m: usize, d: usize, snr: f64) -> Result<f64> {
    if !(snr >= 1.0) {
        return param_err(format!("SNR {snr} is below 1"));
    }
    if d == 0 || m <= d {
        return param_err(format!("need m > d, got m = {m}, d = {d}"));
    }
    exceedance(snr_lambda(m, d, snr), m - d, 2.0 * (m - d) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityCurve {
    pub abscissa: Vec<f64>,
    pub ordinate: Vec<f64>,
    pub m: usize,
    pub d: usize,
    pub n: usize,
}

pub fn snr_curves(m_list: &[usize], d: usize, snr_grid: &[f64]) -> Result<Vec<ProbabilityCurve>> {
    if snr_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return param_err("SNR grid must be strictly ascending");
    }
    m_list
        .iter()
        .map(|&m| {
            let ordinate = snr_grid.par_iter().map(|&s| snr_prob(m, d, s)).collect::<Result<Vec<f64>>>()?;
            Ok(ProbabilityCurve { abscissa: snr_grid.to_vec(), ordinate, m, d, n: 1 })
        })
        .collect()
}

/// First abscissa where `a − b` changes sign, linearly interpolated.
pub fn crossing(a: &ProbabilityCurve, b: &ProbabilityCurve) -> Option<f64> {
    let diff: Vec<f64> = a.ordinate.iter().zip(&b.ordinate).map(|(x, y)| x - y).collect();
    for i in 1..diff.len() {
        let (d0, d1) = (diff[i - 1], diff[i]);
        if d0 == 0.0 {
            return Some(a.abscissa[i - 1]);
        }
        if d0 * d1 < 0.0 {
            let t = d0 / (d0 - d1);
            return Some(a.abscissa[i - 1] + t * (a.abscissa[i] - a.abscissa[i - 1]));
        }
    }
    None
}

/// Long-format CSV `m,d,snr,p` preceded by `#` comment lines.
pub fn write_curves_csv<W: Write>(mut w: W, curves: &[ProbabilityCurve], meta: &[(String, String)]) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k} = {v}")?;
    }
    writeln!(w, "m,d,snr,p")?;
    for c in curves {
        for (s, p) in c.abscissa.iter().zip(&c.ordinate) {
            writeln!(w, "{},{},{},{}", c.m, c.d, format_real(*s), format_real(*p))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Raster cells that correspond to map points, row-major.
    pub inside: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityMap {
    pub points: Vec<Point>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    pub noise_level: f64,
    /// Per-sensor noise standard deviation used for whitening.
    pub sigma: f64,
    pub raster: Option<Raster>,
}

/// Probability that a unit source at each point is weakly reconstructed.
///
/// Noise is iid with standard deviation `noise_level · reference_rms(geom)`.
/// At each point the block is whitened by the noise alone; a unit source
/// along each right singular direction `v_i` gives `|𝒰_iᵀŷ|² = s_i²`, and the
/// smallest of these is the noncentrality of an `N = 1` weak-reconstruction
/// probability.
pub fn spatial_prob_map(geom: &DiskGeometry, noise_level: f64, points: &[Point]) -> Result<ProbabilityMap> {
    if !(noise_level > 0.0) {
        return param_err("noise level must be positive");
    }
    if let Some(p) = points.iter().find(|p| !geom.contains(**p)) {
        return param_err(format!("point ({}, {}) lies outside the disk", p[0], p[1]));
    }
    let sigma = noise_level * disk::reference_rms(geom)?;
    let m = geom.sensors();
    let cov = CovarianceSpec::new(DMatrix::identity(2, 2), DMatrix::identity(m, m) * (sigma * sigma))?;
    let evals: Vec<(f64, f64)> = points
        .par_iter()
        .map(|&pt| {
            let b = disk::lead_columns(geom, pt)?;
            let model = BlockForwardModel::new(b.clone(), 2)?;
            let wm = whiten_with(&model, &cov, SigmaForm::NoiseOnly)?;
            let f = &wm.factors[0];
            let mut lambda = f64::INFINITY;
            for i in 0..f.rank() {
                let yhat = &wm.sigma_inv_sqrt * &b * f.v.column(i);
                lambda = lambda.min(f.u.column(i).dot(&yhat).powi(2));
            }
            if !lambda.is_finite() {
                lambda = 0.0;
            }
            let k = m - 2;
            Ok((exceedance(lambda, k, 2.0 * k as f64)?, lambda))
        })
        .collect::<Result<_>>()?;
    Ok(ProbabilityMap {
        points: points.to_vec(),
        p: evals.iter().map(|e| e.0).collect(),
        lambda: evals.iter().map(|e| e.1).collect(),
        noise_level,
        sigma,
        raster: None,
    })
}

/// Pixel centres of a `res × res` raster over `[−R, R]²` (row 0 at the top)
/// and which of them lie strictly inside `margin · R`.
pub fn disk_raster(geom: &DiskGeometry, res: usize, margin: f64) -> (Vec<Point>, Vec<bool>) {
    let r = geom.radius;
    let mut pts = Vec::new();
    let mut inside = Vec::with_capacity(res * res);
    for i in 0..res {
        let y = r - (i as f64 + 0.5) * 2.0 * r / res as f64;
        for j in 0..res {
            let x = -r + (j as f64 + 0.5) * 2.0 * r / res as f64;
            let ok = (x * x + y * y).sqrt() < margin * r;
            inside.push(ok);
            if ok {
                pts.push([x, y]);
            }
        }
    }
    (pts, inside)
}

/// [`spatial_prob_map`] on a square raster, restricted to radius `0.95 R`.
pub fn spatial_prob_raster(geom: &DiskGeometry, noise_level: f64, res: usize) -> Result<ProbabilityMap> {
    let (pts, inside) = disk_raster(geom, res, 0.95);
    let mut map = spatial_prob_map(geom, noise_level, &pts)?;
    map.raster = Some(Raster { width: res, height: res, inside });
    Ok(map)
}

impl ProbabilityMap {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# noise_level = {}", format_real(self.noise_level))?;
        writeln!(w, "# sigma = {}", format_real(self.sigma))?;
        writeln!(w, "x,y,p,lambda")?;
        for ((pt, p), l) in self.points.iter().zip(&self.p).zip(&self.lambda) {
            writeln!(w, "{},{},{},{}", format_real(pt[0]), format_real(pt[1]), format_real(*p), format_real(*l))?;
        }
        Ok(())
    }

    /// Raster image with gray `round(255 p)`; cells outside the map are black.
    pub fn write_pgm<W: Write>(&self, w: W) -> Result<()> {
        let r =
            self.raster.as_ref().ok_or_else(|| Error::InvalidParameter("map was not computed on a raster".into()))?;
        let mut vals = Vec::with_capacity(r.inside.len());
        let mut it = self.p.iter();
        for &ok in &r.inside {
            vals.push(if ok { *it.next().expect("one value per inside cell") } else { f64::NAN });
        }
        pgm::write_pgm(w, r.width, r.height, &vals)
    }
}
