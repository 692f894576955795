//! Whitened block factors and the unbiased operator.
//!
//! For `Σ = L P Lᵀ + C`, every block is factored as
//! `Σ^{-1/2} L_k P_k = U_k diag(S_k) V_kᵀ` (compact SVD). The unbiased operator
//! is the column concatenation of the `U_k`; block backprojections
//! `z_k = V_k U_kᵀ ŷ` have norms `‖U_kᵀ ŷ‖` that peak at the true block for a
//! noiseless single source.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, CompactSvd, InvSqrt, SVD_CUTOFF};
use crate::matrix_io;
use crate::model::{BlockForwardModel, CovarianceSpec, Observation};

/// Which covariance the whitening uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaForm {
    /// `Σ = L P Lᵀ + C`.
    Full,
    /// `Σ = C`: whitening by the noise alone.
    NoiseOnly,
}

#[derive(Debug, Clone)]
pub struct WhitenedModel {
    pub sigma: DMatrix<f64>,
    pub sigma_inv_sqrt: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    pub factors: Vec<CompactSvd>,
    pub source_blocks: Vec<DMatrix<f64>>,
    pub cal_u: DMatrix<f64>,
    pub block_offsets: Vec<usize>,
    pub block_dim: usize,
    pub clamped_eigenvalues: usize,
    pub form: SigmaForm,
}

/// Per-block backprojection in the original parameter basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Backprojection {
    pub z: Vec<DVector<f64>>,
    pub norms: Vec<f64>,
}

/// `T_k = diag(S_k) V_kᵀ` and `T_k† = V_k diag(1/S_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthMap {
    pub t: DMatrix<f64>,
    pub t_pinv: DMatrix<f64>,
}

pub fn build_sigma(model: &BlockForwardModel, cov: &CovarianceSpec) -> Result<DMatrix<f64>> {
    cov.check_against(model)?;
    let l = model.entries();
    let sigma = linalg::symmetrize(&(l * cov.source() * l.transpose() + cov.noise()));
    linalg::check_spd(&sigma, "data covariance")?;
    Ok(sigma)
}

pub fn whiten(model: &BlockForwardModel, cov: &CovarianceSpec) -> Result<WhitenedModel> {
    whiten_with(model, cov, SigmaForm::Full)
}

pub fn whiten_with(model: &BlockForwardModel, cov: &CovarianceSpec, form: SigmaForm) -> Result<WhitenedModel> {
    cov.check_against(model)?;
    let d = model.block_dim();
    let source_blocks = cov.source_blocks(d)?;
    let sigma = match form {
        SigmaForm::Full => build_sigma(model, cov)?,
        SigmaForm::NoiseOnly => cov.noise().clone(),
    };
    let InvSqrt { matrix: w, clamped, .. } = linalg::inv_sqrt_clamped(&sigma)?;
    if clamped > 0 {
        log::warn!("whitening clamped {clamped} eigenvalue(s) of the data covariance");
    }
    let factors: Vec<CompactSvd> = (0..model.blocks())
        .into_par_iter()
        .map(|k| linalg::compact_svd(&(&w * model.block(k) * &source_blocks[k]), SVD_CUTOFF))
        .collect();
    Ok(assemble(sigma, w, cov.noise().clone(), factors, source_blocks, d, clamped, form))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    sigma: DMatrix<f64>,
    sigma_inv_sqrt: DMatrix<f64>,
    noise: DMatrix<f64>,
    factors: Vec<CompactSvd>,
    source_blocks: Vec<DMatrix<f64>>,
    block_dim: usize,
    clamped_eigenvalues: usize,
    form: SigmaForm,
) -> WhitenedModel {
    let m = sigma.nrows();
    let mut block_offsets = Vec::with_capacity(factors.len() + 1);
    let mut off = 0;
    for f in &factors {
        block_offsets.push(off);
        off += f.rank();
    }
    block_offsets.push(off);
    let mut cal_u = DMatrix::zeros(m, off);
    for (f, &o) in factors.iter().zip(&block_offsets) {
        cal_u.columns_mut(o, f.rank()).copy_from(&f.u);
    }
    WhitenedModel {
        sigma,
        sigma_inv_sqrt,
        noise,
        factors,
        source_blocks,
        cal_u,
        block_offsets,
        block_dim,
        clamped_eigenvalues,
        form,
    }
}

impl WhitenedModel {
    pub fn sensors(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn blocks(&self) -> usize {
        self.factors.len()
    }

    pub fn rank(&self, k: usize) -> usize {
        self.factors[k].rank()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.factors.iter().map(CompactSvd::rank).collect()
    }

    /// Columns of the unbiased operator belonging to block `k`.
    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        self.block_offsets[k]..self.block_offsets[k + 1]
    }

    pub fn whiten_vector(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.sensors() {
            return dim_err(format!("observation of length {} for {} sensors", y.len(), self.sensors()));
        }
        Ok(&self.sigma_inv_sqrt * y)
    }

    pub fn whiten_observation(&self, obs: &Observation) -> Result<DVector<f64>> {
        self.whiten_vector(&obs.y)
    }

    /// `z_k = V_k U_kᵀ ŷ` for every block.
    pub fn backproject(&self, yhat: &DVector<f64>) -> Result<Backprojection> {
        if yhat.len() != self.sensors() {
            return dim_err("whitened observation has the wrong length");
        }
        let mut z = Vec::with_capacity(self.blocks());
        let mut norms = Vec::with_capacity(self.blocks());
        for f in &self.factors {
            let coords = f.u.transpose() * yhat;
            norms.push(coords.norm());
            z.push(&f.v * coords);
        }
        Ok(Backprojection { z, norms })
    }

    pub fn strength_map(&self, k: usize) -> Result<StrengthMap> {
        if k >= self.blocks() {
            return dim_err(format!("block {k} out of range"));
        }
        let f = &self.factors[k];
        let mut t = f.v.transpose();
        let mut t_pinv = f.v.clone();
        for (i, s) in f.s.iter().enumerate() {
            t.row_mut(i).scale_mut(*s);
            t_pinv.column_mut(i).scale_mut(1.0 / s);
        }
        Ok(StrengthMap { t, t_pinv })
    }

    /// `A = [U_1 V_1ᵀ ⋯ U_n V_nᵀ]`, an `m × d·n` matrix.
    pub fn assemble_a(&self) -> DMatrix<f64> {
        let d = self.block_dim;
        let mut a = DMatrix::zeros(self.sensors(), d * self.blocks());
        for (k, f) in self.factors.iter().enumerate() {
            a.columns_mut(k * d, d).copy_from(&(&f.u * f.v.transpose()));
        }
        a
    }

    /// Physical block coefficients `P_k T_k† w_k` from strength coordinates.
    pub fn physical_moment(&self, k: usize, w: &DVector<f64>) -> Result<DVector<f64>> {
        let t = self.strength_map(k)?;
        if w.len() != t.t_pinv.ncols() {
            return dim_err("strength coordinates do not match the block rank");
        }
        Ok(&self.source_blocks[k] * (t.t_pinv * w))
    }

    /// Writes one binary matrix per factor plus `manifest.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        matrix_io::save_bin(dir.join("sigma.bin"), &self.sigma)?;
        matrix_io::save_bin(dir.join("sigma_inv_sqrt.bin"), &self.sigma_inv_sqrt)?;
        matrix_io::save_bin(dir.join("noise.bin"), &self.noise)?;
        for (k, f) in self.factors.iter().enumerate() {
            matrix_io::save_bin(dir.join(format!("block_{k}_u.bin")), &f.u)?;
            matrix_io::save_bin(dir.join(format!("block_{k}_s.bin")), &matrix_io::column(&f.s))?;
            matrix_io::save_bin(dir.join(format!("block_{k}_v.bin")), &f.v)?;
            matrix_io::save_bin(dir.join(format!("block_{k}_p.bin")), &self.source_blocks[k])?;
        }
        let manifest = Manifest {
            sensors: self.sensors(),
            blocks: self.blocks(),
            block_dim: self.block_dim,
            ranks: self.ranks(),
            block_offsets: self.block_offsets.clone(),
            clamped_eigenvalues: self.clamped_eigenvalues,
            form: self.form,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let man: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let sigma = matrix_io::load_bin(dir.join("sigma.bin"))?;
        let w = matrix_io::load_bin(dir.join("sigma_inv_sqrt.bin"))?;
        let noise = matrix_io::load_bin(dir.join("noise.bin"))?;
        let mut factors = Vec::with_capacity(man.blocks);
        let mut source_blocks = Vec::with_capacity(man.blocks);
        for k in 0..man.blocks {
            let s = matrix_io::load_bin(dir.join(format!("block_{k}_s.bin")))?;
            factors.push(CompactSvd {
                u: matrix_io::load_bin(dir.join(format!("block_{k}_u.bin")))?,
                s: DVector::from_column_slice(s.as_slice()),
                v: matrix_io::load_bin(dir.join(format!("block_{k}_v.bin")))?,
            });
            source_blocks.push(matrix_io::load_bin(dir.join(format!("block_{k}_p.bin")))?);
        }
        let wm = assemble(sigma, w, noise, factors, source_blocks, man.block_dim, man.clamped_eigenvalues, man.form);
        if wm.ranks() != man.ranks || wm.block_offsets != man.block_offsets {
            return Err(Error::Parse("manifest disagrees with stored factors".into()));
        }
        Ok(wm)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    sensors: usize,
    blocks: usize,
    block_dim: usize,
    ranks: Vec<usize>,
    block_offsets: Vec<usize>,
    clamped_eigenvalues: usize,
    form: SigmaForm,
}
