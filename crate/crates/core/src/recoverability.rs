//! Exact-reconstruction bounds and a brute-force uniqueness oracle.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{binomial, Combinations};
use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg::{self, SVD_CUTOFF};
use crate::matrix_io::format_real;

/// Largest number of supports `brute_force_unique` will enumerate.
pub const SUPPORT_GUARD: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UniqueBound {
    pub rank: usize,
    pub null_dim: usize,
    pub n_max: usize,
}

/// Largest `N` with `N < (cols − null_dim + 1) / (2d)`, in integers.
fn bound_from_rank(cols: usize, rank: usize, d: usize) -> UniqueBound {
    let null_dim = cols - rank;
    let num = cols - null_dim + 1;
    let den = 2 * d;
    UniqueBound { rank, null_dim, n_max: num.div_ceil(den) - 1 }
}

pub fn unique_bound(u: &DMatrix<f64>, d: usize) -> Result<UniqueBound> {
    if d == 0 || !u.ncols().is_multiple_of(d) {
        return dim_err(format!("{} columns do not split into blocks of {d}", u.ncols()));
    }
    Ok(bound_from_rank(u.ncols(), linalg::numerical_rank(u, SVD_CUTOFF), d))
}

pub fn unique_bound_complex(u: &DMatrix<Complex64>, d: usize) -> Result<UniqueBound> {
    if d == 0 || !u.ncols().is_multiple_of(d) {
        return dim_err(format!("{} columns do not split into blocks of {d}", u.ncols()));
    }
    let s = linalg::complex_singular_values(u);
    Ok(bound_from_rank(u.ncols(), linalg::rank_from_singular_values(&s, SVD_CUTOFF), d))
}

/// Rows `rows` of the unitary `p`-point DFT matrix.
pub fn restricted_fourier(rows: &[usize], p: usize) -> DMatrix<Complex64> {
    let scale = 1.0 / (p as f64).sqrt();
    DMatrix::from_fn(rows.len(), p, |i, j| {
        let phase = -2.0 * PI * ((rows[i] * j) % p) as f64 / p as f64;
        Complex64::from_polar(scale, phase)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coherence {
    pub value: f64,
    /// Largest deviation of an input column norm from 1.
    pub max_norm_deviation: f64,
    /// True when some column norm deviated from 1 by more than 1e-8.
    pub renormalized: bool,
}

/// Largest `|u_iᵀ u_j|`, `i ≠ j`, after normalizing columns.
pub fn coherence(u: &DMatrix<f64>) -> Result<Coherence> {
    let mut cols = Vec::with_capacity(u.ncols());
    let mut dev = 0.0f64;
    for (j, c) in u.column_iter().enumerate() {
        let n = c.norm();
        if n == 0.0 || !n.is_finite() {
            return param_err(format!("column {j} has norm {n}"));
        }
        dev = dev.max((n - 1.0).abs());
        cols.push(c / n);
    }
    let mut value = 0.0f64;
    for i in 0..cols.len() {
        for j in (i + 1)..cols.len() {
            value = value.max(cols[i].dot(&cols[j]).abs());
        }
    }
    let renormalized = dev > 1e-8;
    if renormalized {
        log::info!("coherence: column norms deviate from 1 by up to {dev:e}; normalized");
    }
    Ok(Coherence { value, max_norm_deviation: dev, renormalized })
}

/// `½ρ⁴ − 2ρ² + 1`.
pub fn lemma_threshold(rho: f64) -> f64 {
    let r2 = rho * rho;
    0.5 * r2 * r2 - 2.0 * r2 + 1.0
}

/// `√(4 − ρ²)/(2 − ρ²) + 1`.
pub fn lemma_n_cap(rho: f64) -> f64 {
    let r2 = rho * rho;
    (4.0 - r2).sqrt() / (2.0 - r2) + 1.0
}

/// `(1 − ρ²(N−1)²)/(ρ²(N−1)² + 1)`.
pub fn corollary_threshold(rho: f64, n: usize) -> f64 {
    let k = rho * rho * ((n as f64) - 1.0).powi(2);
    (1.0 - k) / (k + 1.0)
}

/// Pairwise strength ratios `ρ_ij = s_i / s_j`.
pub fn ratios_from_strengths(strengths: &[f64]) -> Result<DMatrix<f64>> {
    if strengths.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return param_err("strengths must be positive");
    }
    let k = strengths.len();
    Ok(DMatrix::from_fn(k, k, |i, j| strengths[i] / strengths[j]))
}

/// `max {ρ_ij ≤ 1 : i ≠ j}` after checking reciprocity.
pub fn rho_hat(ratios: &DMatrix<f64>) -> Result<f64> {
    if !ratios.is_square() {
        return dim_err("ratio matrix must be square");
    }
    let k = ratios.nrows();
    let mut best: Option<f64> = None;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let r = ratios[(i, j)];
            if !(r > 0.0 && r.is_finite()) {
                return param_err(format!("ratio ({i},{j}) = {r} is not positive"));
            }
            if (r * ratios[(j, i)] - 1.0).abs() > 1e-10 {
                return param_err(format!("ratios ({i},{j}) and ({j},{i}) are not reciprocal"));
            }
            if r <= 1.0 {
                best = Some(best.map_or(r, |b: f64| b.max(r)));
            }
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("no off-diagonal ratio is at most 1".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaReport {
    pub rho_hat: f64,
    pub coherence: f64,
    pub lemma_threshold: f64,
    pub n_cap: f64,
    pub satisfied_lemma: bool,
    /// True when the lemma threshold is negative, so no coherence satisfies it.
    pub vacuous_lemma: bool,
    /// Only defined for `N ≥ 3`.
    pub corollary_threshold: Option<f64>,
    pub satisfied_corollary: Option<bool>,
}

pub fn lemma_conditions(u: &DMatrix<f64>, ratios: &DMatrix<f64>, n: usize) -> Result<LemmaReport> {
    let rho = rho_hat(ratios)?;
    let mu = coherence(u)?.value;
    Ok(lemma_report(rho, mu, n))
}

pub fn lemma_report(rho: f64, coherence: f64, n: usize) -> LemmaReport {
    let g = lemma_threshold(rho);
    let cap = lemma_n_cap(rho);
    let vacuous = g < 0.0;
    if vacuous {
        log::info!("lemma threshold {g} is negative at rho_hat = {rho}; condition unsatisfiable");
    }
    let (ct, cs) = if n >= 3 {
        let t = corollary_threshold(rho, n);
        (Some(t), Some(coherence <= t))
    } else {
        (None, None)
    };
    LemmaReport {
        rho_hat: rho,
        coherence,
        lemma_threshold: g,
        n_cap: cap,
        satisfied_lemma: coherence <= g && (n as f64) <= cap,
        vacuous_lemma: vacuous,
        corollary_threshold: ct,
        satisfied_corollary: cs,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimizer {
    pub support: Vec<usize>,
    pub residual: f64,
    pub coefficients: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessOracle {
    pub unique: bool,
    pub minimizers: Vec<Minimizer>,
    pub min_residual: f64,
    pub supports_checked: usize,
}

/// Least squares on every support of `n_sources` blocks; supports within
/// `1e-8 · max(1, ‖y‖)` of the smallest residual are minimizers.
pub fn brute_force_unique(u: &DMatrix<f64>, y: &DVector<f64>, n_sources: usize, d: usize) -> Result<UniquenessOracle> {
    if d == 0 || !u.ncols().is_multiple_of(d) {
        return dim_err("block size must divide the column count");
    }
    if y.len() != u.nrows() {
        return dim_err("observation length differs from row count");
    }
    let n = u.ncols() / d;
    if n_sources == 0 || n_sources > n {
        return param_err(format!("source count {n_sources} outside [1, {n}]"));
    }
    let count = binomial(n, n_sources);
    if count > SUPPORT_GUARD {
        return Err(Error::TooManySupports { count, limit: SUPPORT_GUARD });
    }
    let supports: Vec<Vec<usize>> = Combinations::new(n, n_sources).collect();
    let fits: Vec<(f64, DVector<f64>)> = supports
        .par_iter()
        .map(|s| {
            let cols: Vec<usize> = s.iter().flat_map(|&k| k * d..(k + 1) * d).collect();
            let a = u.select_columns(cols.iter());
            let w = linalg::lstsq(&a, y);
            ((y - &a * &w).norm(), w)
        })
        .collect();
    let min = fits.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-8 * y.norm().max(1.0);
    let minimizers: Vec<Minimizer> = supports
        .into_iter()
        .zip(fits)
        .filter(|(_, f)| f.0 <= min + tol)
        .map(|(support, (residual, coefficients))| Minimizer { support, residual, coefficients })
        .collect();
    let unique = minimizers.len() == 1 && {
        let w = &minimizers[0].coefficients;
        let floor = 1e-8 * w.norm().max(f64::MIN_POSITIVE);
        w.as_slice().chunks(d).all(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt() > floor)
    };
    Ok(UniquenessOracle { unique, minimizers, min_residual: min, supports_checked: count as usize })
}

/// Everything the recoverability analysis reports for one operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub rows: usize,
    pub columns: usize,
    pub block_dim: usize,
    pub rank: usize,
    pub null_dim: usize,
    pub n_max_unique: usize,
    pub coherence: f64,
    pub sources: usize,
    pub lemma: Option<LemmaReport>,
}

impl RecoveryReport {
    /// `ratios` is optional; without it only the rank and coherence parts are filled.
    pub fn compute(u: &DMatrix<f64>, d: usize, n: usize, ratios: Option<&DMatrix<f64>>) -> Result<Self> {
        let b = unique_bound(u, d)?;
        let mu = coherence(u)?.value;
        let lemma = match ratios {
            Some(r) => Some(lemma_report(rho_hat(r)?, mu, n)),
            None => None,
        };
        Ok(RecoveryReport {
            rows: u.nrows(),
            columns: u.ncols(),
            block_dim: d,
            rank: b.rank,
            null_dim: b.null_dim,
            n_max_unique: b.n_max,
            coherence: mu,
            sources: n,
            lemma,
        })
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("rows", self.rows.to_string()),
            ("columns", self.columns.to_string()),
            ("block_dim", self.block_dim.to_string()),
            ("rank", self.rank.to_string()),
            ("null_dim", self.null_dim.to_string()),
            ("n_max_unique", self.n_max_unique.to_string()),
            ("coherence", format_real(self.coherence)),
            ("sources", self.sources.to_string()),
        ];
        if let Some(l) = &self.lemma {
            v.push(("rho_hat", format_real(l.rho_hat)));
            v.push(("lemma_threshold", format_real(l.lemma_threshold)));
            v.push(("lemma_n_cap", format_real(l.n_cap)));
            v.push(("satisfied_lemma", l.satisfied_lemma.to_string()));
            v.push(("vacuous_lemma", l.vacuous_lemma.to_string()));
            if let (Some(t), Some(s)) = (l.corollary_threshold, l.satisfied_corollary) {
                v.push(("corollary_threshold", format_real(t)));
                v.push(("satisfied_corollary", s.to_string()));
            }
        }
        v
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Two-column `key,value` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "key,value")?;
        for (k, v) in self.entries() {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn random(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        DMatrix::from_vec(m, n, rng::gaussian_vec(&mut rng::stream(seed), m * n))
    }

    /// Rank by Gaussian elimination with partial pivoting.
    fn gram_rank(a: &DMatrix<f64>) -> usize {
        let mut m = a.clone();
        let (rows, cols) = m.shape();
        let tol = 1e-10 * m.amax();
        let mut rank = 0;
        for c in 0..cols {
            if rank == rows {
                break;
            }
            let p = (rank..rows).max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs())).unwrap();
            if m[(p, c)].abs() <= tol {
                continue;
            }
            m.swap_rows(p, rank);
            for i in (rank + 1)..rows {
                let f = m[(i, c)] / m[(rank, c)];
                for k in c..cols {
                    m[(i, k)] -= f * m[(rank, k)];
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn fourier_rows_give_half_the_rows() {
        let rows: Vec<usize> = (0..10).collect();
        let f = restricted_fourier(&rows, 21);
        let b = unique_bound_complex(&f, 1).unwrap();
        assert_eq!(b.null_dim, 11);
        assert_eq!(b.n_max, 5);
    }

    #[test]
    fn square_invertible_bound() {
        for (n, d) in [(6usize, 1usize), (6, 2), (6, 3), (7, 1)] {
            let u = random(n, n, n as u64 + d as u64);
            let b = unique_bound(&u, d).unwrap();
            assert_eq!(b.null_dim, 0);
            // largest integer strictly below (n + 1)/(2d)
            let exact = (n + 1) as f64 / (2 * d) as f64;
            let want = if exact.fract() == 0.0 { exact as usize - 1 } else { exact.floor() as usize };
            assert_eq!(b.n_max, want);
        }
    }

    #[test]
    fn duplicated_column_bound() {
        let mut u = random(4, 6, 3);
        let c = u.column(1).into_owned();
        u.set_column(4, &c);
        let b = unique_bound(&u, 1).unwrap();
        assert_eq!(b.rank, gram_rank(&u));
        assert_eq!(b.rank, 4);
        assert_eq!(b.null_dim, 2);
        assert_eq!(b.n_max, 2);
    }

    #[test]
    fn coherence_examples() {
        let q = random(5, 3, 4).qr().q();
        assert!(coherence(&q).unwrap().value < 1e-14);
        let mut u = random(4, 3, 5);
        let c = u.column(0) * 3.0;
        u.set_column(2, &c);
        let r = coherence(&u).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
        assert!(r.renormalized);
        let t = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];
        let eq = DMatrix::from_fn(2, 3, |i, j| if i == 0 { t[j].cos() } else { t[j].sin() });
        assert!((coherence(&eq).unwrap().value - 0.5).abs() < 1e-14);
        assert!(coherence(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert!((lemma_threshold(0.5) - 0.53125).abs() < 1e-15);
        assert!((lemma_n_cap(0.5) - (3.75f64.sqrt() / 1.75 + 1.0)).abs() < 1e-15);
        assert!((lemma_n_cap(0.5) - 2.1066).abs() < 1e-4);
        assert_eq!(lemma_threshold(1.0), -0.5);
        let r = lemma_report(1.0, 0.0, 3);
        assert!(!r.satisfied_lemma && r.vacuous_lemma);
        assert_eq!(r.corollary_threshold, Some(corollary_threshold(1.0, 3)));
        assert!(lemma_report(0.5, 0.1, 2).corollary_threshold.is_none());
    }

    #[test]
    fn rho_hat_from_strengths() {
        let r = ratios_from_strengths(&[2.0, 1.0, 4.0]).unwrap();
        assert_eq!(rho_hat(&r).unwrap(), 0.5);
        let eq = ratios_from_strengths(&[3.0, 3.0]).unwrap();
        assert_eq!(rho_hat(&eq).unwrap(), 1.0);
        let mut bad = r.clone();
        bad[(0, 1)] = 3.0;
        assert!(rho_hat(&bad).is_err());
        assert!(rho_hat(&DMatrix::from_element(1, 1, 1.0)).is_err());
    }

    #[test]
    fn lemma_conditions_use_coherence() {
        let q = random(6, 4, 6).qr().q();
        let r = lemma_conditions(&q, &ratios_from_strengths(&[1.0, 2.0]).unwrap(), 2).unwrap();
        assert!(r.satisfied_lemma);
        assert_eq!(r.rho_hat, 0.5);
    }

    #[test]
    fn oracle_examples() {
        let u = random(6, 9, 7);
        let y = u.column(4).into_owned();
        let r = brute_force_unique(&u, &y, 1, 1).unwrap();
        assert!(r.unique);
        assert_eq!(r.minimizers[0].support, vec![4]);

        let mut u = random(6, 8, 8);
        let c = u.column(2).into_owned();
        u.set_column(6, &c);
        let y = u.column(2) + u.column(5);
        let r = brute_force_unique(&u, &y, 2, 1).unwrap();
        assert!(!r.unique);
        let sup: Vec<_> = r.minimizers.iter().map(|m| m.support.clone()).collect();
        assert!(sup.contains(&vec![2, 5]) && sup.contains(&vec![5, 6]));

        let big = DMatrix::zeros(2, 40);
        assert!(matches!(brute_force_unique(&big, &DVector::zeros(2), 20, 1), Err(Error::TooManySupports { .. })));
    }

    #[test]
    fn report_text_and_csv() {
        let u = random(5, 8, 9);
        let r = RecoveryReport::compute(&u, 1, 3, Some(&ratios_from_strengths(&[1.0, 2.0, 3.0]).unwrap())).unwrap();
        let t = r.to_text();
        assert!(t.contains("n_max_unique = 2"));
        assert!(t.contains("corollary_threshold"));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("key,value\n"));
    }

    #[test]
    fn lemma_threshold_is_strictly_decreasing() {
        let g: Vec<f64> = (1..=1000).map(|i| lemma_threshold(i as f64 / 1000.0)).collect();
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn more_rows_never_lower_the_bound(seed in any::<u64>(), m in 2usize..8, extra in 1usize..4) {
            let u = random(m + extra, 10, seed);
            let top = u.rows(0, m).into_owned();
            prop_assert!(unique_bound(&u, 1).unwrap().n_max >= unique_bound(&top, 1).unwrap().n_max);
            prop_assert!(unique_bound(&u, 2).unwrap().n_max >= unique_bound(&top, 2).unwrap().n_max);
        }

        #[test]
        fn coherence_ignores_signs_and_order(seed in any::<u64>(), flip in 0usize..6, shift in 0usize..6) {
            let u = random(5, 6, seed);
            let base = coherence(&u).unwrap().value;
            let mut v = u.clone();
            v.column_mut(flip).neg_mut();
            let idx: Vec<usize> = (0..6).map(|j| (j + shift) % 6).collect();
            let w = v.select_columns(idx.iter());
            prop_assert!((coherence(&w).unwrap().value - base).abs() < 1e-15);
        }

        #[test]
        fn sparse_signals_below_the_bound_are_unique(seed in any::<u64>()) {
            let u = random(8, 12, seed);
            let b = unique_bound(&u, 1).unwrap();
            let mut r = rng::stream(seed ^ 11);
            for n in 1..=b.n_max {
                let s = crate::combinatorics::random_subset(&mut r, 12, n);
                let mut y = DVector::zeros(8);
                for &k in &s {
                    y += u.column(k) * (1.0 + rng::gaussian_vec(&mut r, 1)[0].abs());
                }
                let o = brute_force_unique(&u, &y, n, 1).unwrap();
                prop_assert!(o.unique);
                prop_assert_eq!(&o.minimizers[0].support, &s);
            }
        }
    }
}
