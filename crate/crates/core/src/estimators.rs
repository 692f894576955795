//! MNE, sLORETA and the Unbiased Gaussian Estimate (UGE).

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, random_subset, Combinations};
use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg;
use crate::matrix_io::format_real;
use crate::model::{BlockForwardModel, CovarianceSpec};
use crate::rng;
use crate::whitening::{build_sigma, WhitenedModel};

/// Non-negative per-location scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField {
    pub scores: Vec<f64>,
    pub normalized: Vec<f64>,
    pub argmax: usize,
    /// Every index attaining the maximum, ascending.
    pub ties: Vec<usize>,
}

impl ScoreField {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return dim_err("empty score field");
        }
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return param_err("scores must be finite and non-negative");
        }
        let max = scores.iter().copied().fold(0.0, f64::max);
        let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == max).collect();
        let normalized = if max > 0.0 { scores.iter().map(|s| s / max).collect() } else { vec![0.0; scores.len()] };
        Ok(ScoreField { argmax: ties[0], ties, normalized, scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Collapses groups of `group` consecutive entries, keeping each group's maximum.
    pub fn group_max(&self, group: usize) -> Result<ScoreField> {
        if group == 0 || !self.len().is_multiple_of(group) {
            return dim_err("group size must divide the field length");
        }
        ScoreField::new(self.scores.chunks(group).map(|c| c.iter().copied().fold(0.0, f64::max)).collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "block,score,normalized")?;
        for (i, (s, n)) in self.scores.iter().zip(&self.normalized).enumerate() {
            writeln!(w, "{i},{},{}", format_real(*s), format_real(*n))?;
        }
        Ok(())
    }
}

fn solve_sigma(sigma: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol =
        sigma.clone().cholesky().ok_or_else(|| Error::Singular("data covariance has no Cholesky factor".into()))?;
    Ok(chol.solve(rhs))
}

/// Minimum-norm estimate `P Lᵀ Σ^{-1} y` with `Σ = L P Lᵀ + C`.
pub fn mne(model: &BlockForwardModel, cov: &CovarianceSpec, y: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != model.sensors() {
        return dim_err("observation length differs from sensor count");
    }
    let sigma = build_sigma(model, cov)?;
    let v = solve_sigma(&sigma, &DMatrix::from_column_slice(y.len(), 1, y.as_slice()))?;
    Ok(cov.source() * model.entries().transpose() * v.column(0))
}

/// sLORETA scores together with the groups whose variance block was singular.
#[derive(Debug, Clone, PartialEq)]
pub struct SloretaScores {
    pub field: ScoreField,
    pub degenerate: Vec<usize>,
}

/// Standardized MNE power with `Σ = L P Lᵀ + C`.
///
/// `d_eff = 1` scores every column on its own: `(L_iᵀΣ⁻¹y)² / (L_iᵀΣ⁻¹L_i)`.
/// Larger `d_eff` groups that many consecutive columns and scores
/// `x̂_gᵀ M_gg⁻¹ x̂_g` with `M = P Lᵀ Σ⁻¹ L P`; singular `M_gg` are
/// pseudo-inverted and listed in `degenerate`.
pub fn sloreta_scores(
    model: &BlockForwardModel,
    cov: &CovarianceSpec,
    y: &DVector<f64>,
    d_eff: usize,
) -> Result<SloretaScores> {
    let d = model.block_dim();
    if d_eff == 0 || !d.is_multiple_of(d_eff) {
        return param_err(format!("d_eff = {d_eff} does not divide the block size {d}"));
    }
    if y.len() != model.sensors() {
        return dim_err("observation length differs from sensor count");
    }
    let sigma = build_sigma(model, cov)?;
    let l = model.entries();
    let lp = l * cov.source();
    let mut rhs = DMatrix::zeros(l.nrows(), lp.ncols() + 1);
    rhs.columns_mut(0, lp.ncols()).copy_from(&lp);
    rhs.set_column(lp.ncols(), y);
    let solved = solve_sigma(&sigma, &rhs)?;
    let siy = solved.column(lp.ncols()).into_owned();
    let mut degenerate = Vec::new();
    let scores = if d_eff == 1 {
        let sil = solve_sigma(&sigma, l)?;
        (0..l.ncols())
            .map(|i| {
                let num = l.column(i).dot(&siy);
                let den = l.column(i).dot(&sil.column(i));
                if den > 0.0 {
                    num * num / den
                } else {
                    degenerate.push(i);
                    0.0
                }
            })
            .collect()
    } else {
        let xhat = lp.transpose() * &siy;
        let groups = l.ncols() / d_eff;
        let mut out = Vec::with_capacity(groups);
        for g in 0..groups {
            let cols = g * d_eff;
            let lpg = lp.columns(cols, d_eff);
            let mgg = linalg::symmetrize(&(lpg.transpose() * solved.columns(cols, d_eff)));
            let f = linalg::compact_svd(&mgg, linalg::SVD_CUTOFF);
            if f.rank() < d_eff {
                degenerate.push(g);
            }
            let xg = xhat.rows(cols, d_eff).into_owned();
            let proj = f.u.transpose() * &xg;
            out.push(proj.iter().zip(f.s.iter()).map(|(p, s)| p * p / s).sum());
        }
        out
    };
    if !degenerate.is_empty() {
        log::warn!("sLORETA: {} degenerate variance block(s)", degenerate.len());
    }
    Ok(SloretaScores { field: ScoreField::new(scores)?, degenerate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Exhaustive,
    Sampled,
}

/// Controls for [`uge`].
#[derive(Debug, Clone)]
pub struct UgeOptions {
    /// Largest number of index sets evaluated.
    pub budget: usize,
    pub seed: u64,
    /// Optional unnormalized prior over sorted index sets; sets absent from the map get 1.
    pub prior: Option<BTreeMap<Vec<usize>, f64>>,
    /// Draw sets at random even when enumeration fits in the budget.
    pub force_sampling: bool,
}

impl UgeOptions {
    pub fn new(budget: usize, seed: u64) -> Self {
        UgeOptions { budget, seed, prior: None, force_sampling: false }
    }
}

impl Default for UgeOptions {
    fn default() -> Self {
        Self::new(1_000_000, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetWeight {
    pub set: Vec<usize>,
    pub weight: f64,
    pub log_weight: f64,
}

/// Mixture of per-set least-squares fits weighted by their Gaussian evidence.
#[derive(Debug, Clone)]
pub struct MixtureEstimate {
    /// Coefficients in strength coordinates; block `k` uses entries `k·d .. k·d + r_k`.
    pub w_hat: DVector<f64>,
    /// Evaluated sets in lexicographic order with normalized weights.
    pub weights: Vec<SetWeight>,
    pub scores: ScoreField,
    pub sets_evaluated: usize,
    pub sampling_mode: SamplingMode,
    pub underdetermined: bool,
    pub block_dim: usize,
}

impl MixtureEstimate {
    /// The set with the largest weight (lowest set on ties).
    pub fn map_set(&self) -> &SetWeight {
        let mut best = &self.weights[0];
        for w in &self.weights[1..] {
            if w.log_weight > best.log_weight {
                best = w;
            }
        }
        best
    }

    /// Strength coordinates of block `k` (length `r_k`).
    pub fn block_coefficients(&self, wm: &WhitenedModel, k: usize) -> DVector<f64> {
        self.w_hat.rows(k * self.block_dim, wm.rank(k)).into_owned()
    }

    /// Euclidean norm of every block's mixture coefficients.
    pub fn block_norms(&self) -> Vec<f64> {
        self.w_hat.as_slice().chunks(self.block_dim).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }

    /// Physical block coefficients `P_k T_k† ŵ_k`.
    pub fn physical_moment(&self, wm: &WhitenedModel, k: usize) -> Result<DVector<f64>> {
        wm.physical_moment(k, &self.block_coefficients(wm, k))
    }

    /// Sets sorted by descending weight, at most `count` of them.
    pub fn top_sets(&self, count: usize) -> Vec<&SetWeight> {
        let mut v: Vec<&SetWeight> = self.weights.iter().collect();
        v.sort_by(|a, b| b.log_weight.total_cmp(&a.log_weight).then(a.set.cmp(&b.set)));
        v.truncate(count);
        v
    }

    /// Plain-text report: argmax, counts and the ten heaviest sets.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("argmax = {}\n", self.scores.argmax));
        s.push_str(&format!("ties = {:?}\n", self.scores.ties));
        s.push_str(&format!("sets_evaluated = {}\n", self.sets_evaluated));
        let mode = match self.sampling_mode {
            SamplingMode::Exhaustive => "exhaustive",
            SamplingMode::Sampled => "sampled",
        };
        s.push_str(&format!("sampling_mode = \"{mode}\"\n"));
        s.push_str(&format!("underdetermined = {}\n", self.underdetermined));
        s.push_str("[top_sets]\n");
        for w in self.top_sets(10) {
            s.push_str(&format!("{:?} = {}\n", w.set, format_real(w.weight)));
        }
        s
    }
}

fn candidate_sets(n: usize, count: usize, opts: &UgeOptions) -> Result<(Vec<Vec<usize>>, SamplingMode)> {
    let total = binomial(n, count);
    if total <= opts.budget as u128 && !opts.force_sampling {
        return Ok((Combinations::new(n, count).collect(), SamplingMode::Exhaustive));
    }
    let want = (opts.budget as u128).min(total) as usize;
    let mut rng = rng::stream(opts.seed);
    let mut seen = HashSet::with_capacity(want);
    let mut draws = 0usize;
    let cap = opts.budget.saturating_mul(50);
    while seen.len() < want {
        if draws >= cap {
            return Err(Error::SamplingExhausted(format!(
                "{} distinct sets after {draws} draws, {want} requested",
                seen.len()
            )));
        }
        draws += 1;
        seen.insert(random_subset(&mut rng, n, count));
    }
    let mut sets: Vec<Vec<usize>> = seen.into_iter().collect();
    sets.sort_unstable();
    Ok((sets, SamplingMode::Sampled))
}

/// Bayesian model averaging over index sets of `count` blocks.
///
/// For each set `I` the coefficients are `ŵ_I = (Ĉ^{-1/2} U_I)† Ĉ^{-1/2} ŷ`
/// with `Ĉ = Σ^{-1/2} C Σ^{-1/2}`; the log weight is
/// `-½‖Ĉ^{-1/2}(ŷ − U_I ŵ_I)‖² + log π_I`, up to a set-independent constant.
pub fn uge(wm: &WhitenedModel, yhat: &DVector<f64>, count: usize, opts: &UgeOptions) -> Result<MixtureEstimate> {
    let n = wm.blocks();
    let m = wm.sensors();
    let d = wm.block_dim;
    if count == 0 || count > n {
        return param_err(format!("source count {count} outside [1, {n}]"));
    }
    if opts.budget == 0 {
        return param_err("budget must be positive");
    }
    if yhat.len() != m {
        return dim_err("whitened observation has the wrong length");
    }
    let underdetermined = count * d >= m;
    if underdetermined {
        log::warn!("UGE: N·d = {} >= m = {m}, per-set fits are underdetermined", count * d);
    }
    let chat = linalg::symmetrize(&(&wm.sigma_inv_sqrt * &wm.noise * &wm.sigma_inv_sqrt));
    let g = linalg::inv_sqrt_clamped(&chat)?;
    if g.clamped > 0 {
        log::warn!("UGE: clamped {} eigenvalue(s) of the whitened noise covariance", g.clamped);
    }
    let gu = &g.matrix * &wm.cal_u;
    let gy = &g.matrix * yhat;

    let (sets, sampling_mode) = candidate_sets(n, count, opts)?;
    let log_prior = |set: &Vec<usize>| -> f64 {
        match opts.prior.as_ref().and_then(|p| p.get(set)) {
            Some(&p) => p.ln(),
            None => 0.0,
        }
    };
    if let Some(p) = &opts.prior {
        if p.values().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return param_err("prior values must be finite and non-negative");
        }
    }

    let fits: Vec<(DVector<f64>, f64)> = sets
        .par_iter()
        .map(|set| {
            let cols: Vec<usize> = set.iter().flat_map(|&k| wm.block_range(k)).collect();
            if cols.is_empty() {
                return (DVector::zeros(0), -0.5 * gy.norm_squared() + log_prior(set));
            }
            let a = gu.select_columns(cols.iter());
            let w = linalg::lstsq(&a, &gy);
            let r = &gy - &a * &w;
            (w, -0.5 * r.norm_squared() + log_prior(set))
        })
        .collect();

    let max = fits.iter().map(|f| f.1).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Singular("every index set has zero prior or non-finite evidence".into()));
    }
    let raw: Vec<f64> = fits.iter().map(|f| (f.1 - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    let mut w_hat = DVector::zeros(n * d);
    let mut weights = Vec::with_capacity(sets.len());
    for ((set, (w, lw)), r) in sets.into_iter().zip(fits).zip(raw) {
        let h = r / total;
        let mut off = 0;
        for &k in &set {
            let rk = wm.rank(k);
            for i in 0..rk {
                w_hat[k * d + i] += h * w[off + i];
            }
            off += rk;
        }
        weights.push(SetWeight { set, weight: h, log_weight: lw });
    }
    let scores = ScoreField::new(wm.backproject(yhat)?.norms)?;
    Ok(MixtureEstimate {
        w_hat,
        sets_evaluated: weights.len(),
        weights,
        scores,
        sampling_mode,
        underdetermined,
        block_dim: d,
    })
}

/// A located source: position and moment in any dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSource {
    pub position: Vec<f64>,
    pub moment: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationError {
    pub distance: f64,
    /// Angle between estimated and true moments in degrees; NaN if either is zero.
    pub angle_deg: f64,
    /// Index of the matched estimate.
    pub matched: usize,
}

/// For each true source, the distance to the nearest estimate and the moment angle there.
pub fn localization_metrics(estimates: &[PointSource], truths: &[PointSource]) -> Result<Vec<LocalizationError>> {
    if estimates.is_empty() {
        return param_err("no estimated sources");
    }
    truths
        .iter()
        .map(|t| {
            let mut best = (f64::INFINITY, 0);
            for (i, e) in estimates.iter().enumerate() {
                if e.position.len() != t.position.len() {
                    return dim_err("position dimensions differ");
                }
                let dist = distance(&e.position, &t.position);
                if dist < best.0 {
                    best = (dist, i);
                }
            }
            let e = &estimates[best.1];
            if e.moment.len() != t.moment.len() {
                return dim_err("moment dimensions differ");
            }
            Ok(LocalizationError { distance: best.0, angle_deg: angle_deg(&e.moment, &t.moment), matched: best.1 })
        })
        .collect()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Angle between two vectors in degrees.
pub fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return f64::NAN;
    }
    let cross = (na * nb - dot * dot).max(0.0).sqrt();
    cross.atan2(dot).to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SourceConfig;
    use crate::whitening::whiten;
    use proptest::prelude::*;

    fn random(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        DMatrix::from_vec(m, n, rng::gaussian_vec(&mut rng::stream(seed), m * n))
    }

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let b = random(n, n, seed);
        linalg::symmetrize(&(&b * b.transpose() + DMatrix::identity(n, n)))
    }

    #[test]
    fn score_field_ties_and_normalization() {
        let f = ScoreField::new(vec![1.0, 3.0, 0.5, 3.0]).unwrap();
        assert_eq!(f.argmax, 1);
        assert_eq!(f.ties, vec![1, 3]);
        assert_eq!(f.normalized[1], 1.0);
        assert!((f.normalized[2] - 0.5 / 3.0).abs() < 1e-15);
        assert!(ScoreField::new(vec![-1.0]).is_err());
        assert!(ScoreField::new(vec![]).is_err());
        let z = ScoreField::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(z.argmax, 0);
        let g = f.group_max(2).unwrap();
        assert_eq!(g.scores, vec![3.0, 3.0]);
    }

    #[test]
    fn mne_examples() {
        let l = BlockForwardModel::new(DMatrix::identity(3, 3), 1).unwrap();
        let cov = CovarianceSpec::isotropic(3, 3, 1.0).unwrap();
        let y = DVector::from_vec(vec![1.0, -2.0, 4.0]);
        assert!((mne(&l, &cov, &y).unwrap() - &y / 2.0).amax() < 1e-14);
        assert_eq!(mne(&l, &cov, &DVector::zeros(3)).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn mne_matches_normal_equations() {
        let lm = random(5, 8, 1);
        let p = linalg::symmetrize(&DMatrix::from_diagonal(&DVector::from_fn(8, |i, _| 0.5 + i as f64 * 0.1)));
        let c = spd(5, 2);
        let l = BlockForwardModel::new(lm.clone(), 2).unwrap();
        let cov = CovarianceSpec::new(p.clone(), c.clone()).unwrap();
        let y = rng::gaussian_vector(&mut rng::stream(3), 5);
        // argmin ‖y − Lx‖²_{C⁻¹} + ‖x‖²_{P⁻¹}
        let ci = c.clone().try_inverse().unwrap();
        let pi = p.clone().try_inverse().unwrap();
        let normal = lm.transpose() * &ci * &lm + pi;
        let want = normal.lu().solve(&(lm.transpose() * &ci * &y)).unwrap();
        assert!((mne(&l, &cov, &y).unwrap() - want).amax() < 1e-10);
    }

    #[test]
    fn sloreta_classical_recovers_single_column() {
        for seed in 0..20u64 {
            let l = BlockForwardModel::new(random(10, 25, seed), 1).unwrap();
            let cov = CovarianceSpec::isotropic(25, 10, 0.5).unwrap();
            let k = (seed as usize * 7) % 25;
            let y = l.apply(&SourceConfig::single(k, DVector::from_vec(vec![1.3])).unwrap()).unwrap();
            let s = sloreta_scores(&l, &cov, &y, 1).unwrap();
            assert_eq!(s.field.argmax, k);
        }
    }

    #[test]
    fn sloreta_zero_for_orthogonal_block() {
        let mut lm = DMatrix::zeros(4, 4);
        lm[(0, 0)] = 1.0;
        lm[(1, 1)] = 1.0;
        lm[(2, 2)] = 1.0;
        lm[(3, 3)] = 1.0;
        let l = BlockForwardModel::new(lm, 2).unwrap();
        let cov = CovarianceSpec::isotropic(4, 4, 1.0).unwrap();
        let y = DVector::from_vec(vec![1.0, 2.0, 0.0, 0.0]);
        let s = sloreta_scores(&l, &cov, &y, 2).unwrap();
        assert_eq!(s.field.scores[1], 0.0);
        assert!(s.field.scores[0] > 0.0);
        assert!(sloreta_scores(&l, &cov, &y, 3).is_err());
    }

    #[test]
    fn block_sloreta_equals_squared_unbiased_score() {
        let l = BlockForwardModel::new(random(9, 12, 4), 3).unwrap();
        let cov = CovarianceSpec::isotropic(12, 9, 0.3).unwrap();
        let y = rng::gaussian_vector(&mut rng::stream(5), 9);
        let s = sloreta_scores(&l, &cov, &y, 3).unwrap();
        let wm = whiten(&l, &cov).unwrap();
        let bp = wm.backproject(&wm.whiten_vector(&y).unwrap()).unwrap();
        for k in 0..4 {
            let z2 = bp.norms[k] * bp.norms[k];
            assert!((s.field.scores[k] - z2).abs() < 1e-9 * (1.0 + z2));
        }
    }

    #[test]
    fn sloreta_reports_degenerate_blocks() {
        let mut lm = random(6, 4, 6);
        let c = lm.column(0).into_owned();
        lm.set_column(1, &c);
        let l = BlockForwardModel::new(lm, 2).unwrap();
        let cov = CovarianceSpec::isotropic(4, 6, 0.3).unwrap();
        let y = rng::gaussian_vector(&mut rng::stream(7), 6);
        let s = sloreta_scores(&l, &cov, &y, 2).unwrap();
        assert_eq!(s.degenerate, vec![0]);
        assert!(s.field.scores.iter().all(|v| v.is_finite()));
    }

    fn orthogonal_setup(scale: f64) -> (BlockForwardModel, WhitenedModel, DVector<f64>) {
        let q = random(6, 3, 8).qr().q();
        let l = BlockForwardModel::new(q, 1).unwrap();
        let cov = CovarianceSpec::isotropic(3, 6, 1e-2).unwrap();
        let wm = whiten(&l, &cov).unwrap();
        let y = l.apply(&SourceConfig::single(2, DVector::from_vec(vec![scale])).unwrap()).unwrap();
        let yhat = wm.whiten_vector(&y).unwrap();
        (l, wm, yhat)
    }

    #[test]
    fn uge_concentrates_on_true_set() {
        let (_, wm, yhat) = orthogonal_setup(2.0);
        let est = uge(&wm, &yhat, 1, &UgeOptions::new(100, 0)).unwrap();
        assert_eq!(est.sampling_mode, SamplingMode::Exhaustive);
        assert_eq!(est.sets_evaluated, 3);
        let w2 = est.weights.iter().find(|w| w.set == vec![2]).unwrap().weight;
        assert!(w2 >= 1.0 - 1e-6);
        // closed form for orthogonal columns: the fit on {2} is U_2ᵀŷ
        let truth = wm.factors[2].u.column(0).dot(&yhat);
        assert!((est.w_hat[2] - truth * w2).abs() < 1e-9 * truth.abs());
        let lw: Vec<f64> = est.weights.iter().map(|w| w.log_weight).collect();
        for (k, l) in lw.iter().enumerate() {
            // residual of set {k}: ‖G(ŷ − u_k u_kᵀ ŷ)‖², G = Ĉ^{-1/2}
            let chat = &wm.sigma_inv_sqrt * &wm.noise * &wm.sigma_inv_sqrt;
            let g = linalg::inv_sqrt_clamped(&chat).unwrap().matrix;
            let gu = &g * wm.factors[k].u.column(0);
            let gy = &g * &yhat;
            let w = gu.dot(&gy) / gu.norm_squared();
            let r = (&gy - &gu * w).norm_squared();
            assert!((l + 0.5 * r).abs() < 1e-8 * (1.0 + r));
        }
    }

    #[test]
    fn uge_zero_data_is_uniform() {
        let (_, wm, _) = orthogonal_setup(1.0);
        let est = uge(&wm, &DVector::zeros(6), 2, &UgeOptions::default()).unwrap();
        assert_eq!(est.sets_evaluated, 3);
        for w in &est.weights {
            assert!((w.weight - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(est.w_hat, DVector::zeros(3));
    }

    #[test]
    fn sampled_full_budget_matches_exhaustive() {
        let l = BlockForwardModel::new(random(8, 10, 9), 2).unwrap();
        let wm = whiten(&l, &CovarianceSpec::isotropic(10, 8, 0.2).unwrap()).unwrap();
        let yhat = rng::gaussian_vector(&mut rng::stream(10), 8);
        let ex = uge(&wm, &yhat, 2, &UgeOptions::new(10, 1)).unwrap();
        let mut opts = UgeOptions::new(10, 1);
        opts.force_sampling = true;
        let sa = uge(&wm, &yhat, 2, &opts).unwrap();
        assert_eq!(sa.sampling_mode, SamplingMode::Sampled);
        let a: Vec<_> = ex.weights.iter().map(|w| w.set.clone()).collect();
        let b: Vec<_> = sa.weights.iter().map(|w| w.set.clone()).collect();
        assert_eq!(a, b);
        assert!((ex.w_hat - sa.w_hat).amax() < 1e-12);
    }

    #[test]
    fn sampling_respects_budget() {
        let l = BlockForwardModel::new(random(6, 30, 11), 1).unwrap();
        let wm = whiten(&l, &CovarianceSpec::isotropic(30, 6, 0.2).unwrap()).unwrap();
        let yhat = rng::gaussian_vector(&mut rng::stream(12), 6);
        let est = uge(&wm, &yhat, 2, &UgeOptions::new(50, 3)).unwrap();
        assert_eq!(est.sampling_mode, SamplingMode::Sampled);
        assert_eq!(est.sets_evaluated, 50);
        let again = uge(&wm, &yhat, 2, &UgeOptions::new(50, 3)).unwrap();
        assert_eq!(est.w_hat, again.w_hat);
    }

    #[test]
    fn full_support_reproduces_pseudoinverse() {
        let l = BlockForwardModel::new(random(9, 6, 13), 2).unwrap();
        let wm = whiten(&l, &CovarianceSpec::isotropic(6, 9, 0.2).unwrap()).unwrap();
        let yhat = rng::gaussian_vector(&mut rng::stream(14), 9);
        let est = uge(&wm, &yhat, 3, &UgeOptions::default()).unwrap();
        assert_eq!(est.sets_evaluated, 1);
        // white noise in ŷ-space makes the fit an ordinary pseudoinverse
        let chat = &wm.sigma_inv_sqrt * &wm.noise * &wm.sigma_inv_sqrt;
        let g = linalg::inv_sqrt_clamped(&chat).unwrap().matrix;
        let want = linalg::pinv(&(&g * &wm.cal_u), 1e-12) * (&g * &yhat);
        assert!((est.w_hat - want).amax() < 1e-10);
    }

    #[test]
    fn underdetermined_flag_and_prior() {
        let l = BlockForwardModel::new(random(3, 4, 15), 1).unwrap();
        let wm = whiten(&l, &CovarianceSpec::isotropic(4, 3, 0.2).unwrap()).unwrap();
        let yhat = rng::gaussian_vector(&mut rng::stream(16), 3);
        assert!(uge(&wm, &yhat, 3, &UgeOptions::default()).unwrap().underdetermined);
        assert!(!uge(&wm, &yhat, 1, &UgeOptions::default()).unwrap().underdetermined);
        let opts = UgeOptions {
            prior: Some([(vec![0], 0.0), (vec![1], 0.0), (vec![2], 0.0)].into_iter().collect()),
            ..UgeOptions::default()
        };
        let est = uge(&wm, &yhat, 1, &opts).unwrap();
        assert_eq!(est.map_set().set, vec![3]);
        assert!((est.weights[3].weight - 1.0).abs() < 1e-15);
        assert!(uge(&wm, &yhat, 0, &UgeOptions::default()).is_err());
        assert!(uge(&wm, &yhat, 5, &UgeOptions::default()).is_err());
    }

    #[test]
    fn summary_lists_top_sets() {
        let (_, wm, yhat) = orthogonal_setup(2.0);
        let est = uge(&wm, &yhat, 1, &UgeOptions::default()).unwrap();
        let s = est.summary();
        assert!(s.contains("argmax = 2"));
        assert!(s.contains("[2] = "));
        let mut buf = Vec::new();
        est.scores.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }

    #[test]
    fn localization_examples() {
        let t = PointSource { position: vec![0.1, 0.2], moment: vec![1.0, 0.0] };
        let r = localization_metrics(std::slice::from_ref(&t), std::slice::from_ref(&t)).unwrap();
        assert_eq!(r[0].distance, 0.0);
        assert_eq!(r[0].angle_deg, 0.0);
        let flipped = PointSource { position: vec![0.1, 0.2], moment: vec![-2.0, 0.0] };
        let r = localization_metrics(&[flipped], std::slice::from_ref(&t)).unwrap();
        assert!((r[0].angle_deg - 180.0).abs() < 1e-12);
        let off = PointSource { position: vec![0.4, 0.6], moment: vec![0.0, 1.0] };
        let far = PointSource { position: vec![5.0, 5.0], moment: vec![1.0, 0.0] };
        let r = localization_metrics(&[far, off], &[t]).unwrap();
        assert!((r[0].distance - 0.5).abs() < 1e-15);
        assert_eq!(r[0].matched, 1);
        assert!((r[0].angle_deg - 90.0).abs() < 1e-12);
        assert!(localization_metrics(&[], &[]).is_err());
    }

    #[test]
    fn weights_survive_large_m() {
        let m = 1024;
        let l = BlockForwardModel::new(random(m, 4, 17), 1).unwrap();
        let wm = whiten(&l, &CovarianceSpec::isotropic(4, m, 1e-3).unwrap()).unwrap();
        let yhat = rng::gaussian_vector(&mut rng::stream(18), m) * 100.0;
        let est = uge(&wm, &yhat, 2, &UgeOptions::default()).unwrap();
        let sum: f64 = est.weights.iter().map(|w| w.weight).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(est.weights.iter().all(|w| w.weight.is_finite()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn weights_are_a_distribution(seed in any::<u64>(), count in 1usize..3) {
            let l = BlockForwardModel::new(random(7, 12, seed), 2).unwrap();
            let wm = whiten(&l, &CovarianceSpec::isotropic(12, 7, 0.1).unwrap()).unwrap();
            let yhat = rng::gaussian_vector(&mut rng::stream(seed ^ 3), 7) * 30.0;
            let est = uge(&wm, &yhat, count, &UgeOptions::default()).unwrap();
            let sum: f64 = est.weights.iter().map(|w| w.weight).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(est.weights.iter().all(|w| w.weight.is_finite() && w.weight >= 0.0));
        }

        #[test]
        fn scaling_data_scales_fits_and_keeps_argmax(seed in any::<u64>(), c in 0.1f64..10.0) {
            let l = BlockForwardModel::new(random(8, 10, seed), 1).unwrap();
            let wm = whiten(&l, &CovarianceSpec::isotropic(10, 8, 0.1).unwrap()).unwrap();
            let yhat = rng::gaussian_vector(&mut rng::stream(seed ^ 4), 8);
            let a = uge(&wm, &yhat, 1, &UgeOptions::default()).unwrap();
            let b = uge(&wm, &(&yhat * c), 1, &UgeOptions::default()).unwrap();
            prop_assert_eq!(a.scores.argmax, b.scores.argmax);
            // every per-set fit scales by c, so a single-set mixture does too
            let full = uge(&wm, &yhat, 10, &UgeOptions::default()).unwrap();
            let fullc = uge(&wm, &(&yhat * c), 10, &UgeOptions::default()).unwrap();
            prop_assert!((full.w_hat * c - fullc.w_hat).amax() < 1e-9 * c);
        }

    }
}
