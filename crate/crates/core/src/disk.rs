//! Homogeneous conductivity disk with sensors on the upper half of the boundary.
//!
//! The potential of a dipole `p` at `a` is `u(r) = p · ∇_a G(r, a)` with the
//! Neumann Green's function of the disk,
//!
//! `G(r, a) = −(1/2πσ) [ln|r − a| + ln|r − a*| + ln(|a|/R)]`, `a* = R² a / |a|²`.
//!
//! Columns are mean-referenced over the sensors.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::estimators::PointSource;
use crate::model::BlockForwardModel;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskGeometry {
    pub radius: f64,
    pub conductivity: f64,
    pub sensor_angles: Vec<f64>,
    pub source_grid: Vec<Point>,
    pub rings: usize,
    pub spokes: usize,
}

impl Default for DiskGeometry {
    fn default() -> Self {
        DiskGeometry::new(32, 16, 48).expect("default geometry is valid")
    }
}

impl DiskGeometry {
    /// `m` sensors at angles `π i/(m − 1)`; polar grid of `rings × spokes`
    /// points at radii `0.95 R (i + 1)/rings` and angles `2π j/spokes`.
    pub fn new(m: usize, rings: usize, spokes: usize) -> Result<Self> {
        Self::build(1.0, 1.0, m, rings, spokes, 1.0, 0.0)
    }

    /// The same layout shifted by half a cell in radius and angle.
    pub fn offset_grid(&self) -> Result<Self> {
        Self::build(self.radius, self.conductivity, self.sensors(), self.rings, self.spokes, 0.5, 0.5)
    }

    fn build(
        radius: f64,
        conductivity: f64,
        m: usize,
        rings: usize,
        spokes: usize,
        ring_shift: f64,
        spoke_shift: f64,
    ) -> Result<Self> {
        if m < 2 || rings == 0 || spokes == 0 {
            return param_err("need at least 2 sensors and a non-empty grid");
        }
        if !(radius > 0.0 && conductivity > 0.0) {
            return param_err("radius and conductivity must be positive");
        }
        let sensor_angles = (0..m).map(|i| PI * i as f64 / (m - 1) as f64).collect();
        let mut source_grid = Vec::with_capacity(rings * spokes);
        for i in 0..rings {
            let r = 0.95 * radius * (i as f64 + ring_shift) / rings as f64;
            for j in 0..spokes {
                let t = 2.0 * PI * (j as f64 + spoke_shift) / spokes as f64;
                source_grid.push([r * t.cos(), r * t.sin()]);
            }
        }
        Ok(DiskGeometry { radius, conductivity, sensor_angles, source_grid, rings, spokes })
    }

    pub fn sensors(&self) -> usize {
        self.sensor_angles.len()
    }

    pub fn sensor_positions(&self) -> Vec<Point> {
        self.sensor_angles.iter().map(|t| [self.radius * t.cos(), self.radius * t.sin()]).collect()
    }

    pub fn blocks(&self) -> usize {
        self.source_grid.len()
    }

    /// Grid index of ring `i`, spoke `j`.
    pub fn index(&self, ring: usize, spoke: usize) -> usize {
        ring * self.spokes + spoke
    }

    pub fn contains(&self, p: Point) -> bool {
        norm(p) < self.radius
    }

    /// Grid neighbours: the 8 adjacent ring/spoke cells (spokes wrap), with
    /// the innermost ring connected across the centre.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let (nr, nt) = (self.rings as isize, self.spokes as isize);
        let mut out = Vec::with_capacity(self.blocks());
        for i in 0..nr {
            for j in 0..nt {
                let mut v = Vec::new();
                for di in -1..=1 {
                    for dj in -1..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let ii = i + di;
                        if (0..nr).contains(&ii) {
                            let jj = (j + dj).rem_euclid(nt);
                            let k = (ii * nt + jj) as usize;
                            if !v.contains(&k) && k != (i * nt + j) as usize {
                                v.push(k);
                            }
                        }
                    }
                }
                if i == 0 {
                    for jj in 0..nt {
                        let k = jj as usize;
                        if jj != j && !v.contains(&k) {
                            v.push(k);
                        }
                    }
                }
                v.sort_unstable();
                out.push(v);
            }
        }
        out
    }
}

fn norm(p: Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

/// `∇_a G(r, a)` for a field point `r` and source `a` inside the disk.
pub fn green_gradient(geom: &DiskGeometry, r: Point, a: Point) -> Point {
    let k = 1.0 / (2.0 * PI * geom.conductivity);
    let r2 = geom.radius * geom.radius;
    let na2 = a[0] * a[0] + a[1] * a[1];
    let d = [r[0] - a[0], r[1] - a[1]];
    let dd = d[0] * d[0] + d[1] * d[1];
    if na2 < 1e-24 {
        // image at infinity: only r/|r|² + r/R² survives
        return [k * (d[0] / dd + r[0] / r2), k * (d[1] / dd + r[1] / r2)];
    }
    let s = [r2 * a[0] / na2, r2 * a[1] / na2];
    let e = [r[0] - s[0], r[1] - s[1]];
    let ee = e[0] * e[0] + e[1] * e[1];
    let q = [e[0] / ee, e[1] / ee];
    // Jᵀ q with J = ∂a*/∂a = R² (I/|a|² − 2 a aᵀ/|a|⁴), symmetric
    let aq = a[0] * q[0] + a[1] * q[1];
    let jq = [r2 * (q[0] / na2 - 2.0 * a[0] * aq / (na2 * na2)), r2 * (q[1] / na2 - 2.0 * a[1] * aq / (na2 * na2))];
    [-k * (-d[0] / dd - jq[0] + a[0] / na2), -k * (-d[1] / dd - jq[1] + a[1] / na2)]
}

/// Potential at `r` of a dipole with moment `p` at `a` (no referencing).
pub fn dipole_potential(geom: &DiskGeometry, r: Point, a: Point, p: [f64; 2]) -> f64 {
    let g = green_gradient(geom, r, a);
    g[0] * p[0] + g[1] * p[1]
}

/// Mean-referenced sensor potentials of unit x- and y-dipoles at `a` (`m × 2`).
pub fn lead_columns(geom: &DiskGeometry, a: Point) -> Result<DMatrix<f64>> {
    if !geom.contains(a) || !a.iter().all(|v| v.is_finite()) {
        return param_err(format!("source ({}, {}) is not inside the disk", a[0], a[1]));
    }
    let sensors = geom.sensor_positions();
    let m = sensors.len();
    let mut c = DMatrix::zeros(m, 2);
    for (i, s) in sensors.iter().enumerate() {
        let g = green_gradient(geom, *s, a);
        c[(i, 0)] = g[0];
        c[(i, 1)] = g[1];
    }
    for j in 0..2 {
        let mean = c.column(j).mean();
        c.column_mut(j).add_scalar_mut(-mean);
    }
    Ok(c)
}

/// Lead field over the geometry's source grid (`d = 2`).
pub fn disk_lead_field(geom: &DiskGeometry) -> Result<BlockForwardModel> {
    let cols: Vec<DMatrix<f64>> = geom.source_grid.par_iter().map(|&a| lead_columns(geom, a)).collect::<Result<_>>()?;
    let m = geom.sensors();
    let mut l = DMatrix::zeros(m, 2 * cols.len());
    for (k, c) in cols.iter().enumerate() {
        l.columns_mut(2 * k, 2).copy_from(c);
    }
    BlockForwardModel::new(l, 2)
}

/// RMS of the grid lead field; the unit against which noise levels are scaled.
pub fn reference_rms(geom: &DiskGeometry) -> Result<f64> {
    let l = disk_lead_field(geom)?;
    Ok(crate::model::rms(l.entries().as_slice()))
}

/// Mean-referenced sensor data of point sources.
pub fn clean_signal(geom: &DiskGeometry, sources: &[PointSource]) -> Result<DVector<f64>> {
    let mut y = DVector::zeros(geom.sensors());
    for s in sources {
        if s.position.len() != 2 || s.moment.len() != 2 {
            return param_err("disk sources are two-dimensional");
        }
        let c = lead_columns(geom, [s.position[0], s.position[1]])?;
        y += c * DVector::from_column_slice(&s.moment);
    }
    Ok(y)
}

/// Indices whose score is positive and no smaller than any neighbour's.
pub fn local_maxima(scores: &[f64], neighbors: &[Vec<usize>]) -> Vec<usize> {
    (0..scores.len()).filter(|&k| scores[k] > 0.0 && neighbors[k].iter().all(|&q| scores[k] >= scores[q])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioLabel {
    A,
    B,
    C,
}

impl std::str::FromStr for ScenarioLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(ScenarioLabel::A),
            "B" | "b" => Ok(ScenarioLabel::B),
            "C" | "c" => Ok(ScenarioLabel::C),
            _ => param_err(format!("unknown scenario `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskScenario {
    pub label: ScenarioLabel,
    pub sources: Vec<PointSource>,
    /// Cosine similarity of the two sources' sensor signatures, if there are two.
    pub cosine: Option<f64>,
    pub note: String,
}

impl DiskScenario {
    pub fn clean_signal(&self, geom: &DiskGeometry) -> Result<DVector<f64>> {
        clean_signal(geom, &self.sources)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Unit tangential dipole at polar `(rho, phi)`.
pub fn tangential_source(rho: f64, phi: f64) -> PointSource {
    PointSource { position: vec![rho * phi.cos(), rho * phi.sin()], moment: vec![-phi.sin(), phi.cos()] }
}

pub fn signature_cosine(geom: &DiskGeometry, a: &PointSource, b: &PointSource) -> Result<f64> {
    let ya = clean_signal(geom, std::slice::from_ref(a))?;
    let yb = clean_signal(geom, std::slice::from_ref(b))?;
    Ok(ya.dot(&yb) / (ya.norm() * yb.norm()))
}

/// Scenario source layouts.
///
/// * A: tangential dipole at polar `(0.15 R, −π/2)`.
/// * B: two tangential dipoles at `0.9 R` on spoke angles in the sensor half
///   `(0, π)`; among pairs with `|cos| < 0.05` the widest angular separation
///   wins, ties broken by smaller `|cos|`.
/// * C: tangential dipoles at `0.9 R` (angle `π/2`) and `0.25 R`; the deep
///   spoke angle maximizing `|cos|` is used and must exceed 0.5.
pub fn scenario(label: ScenarioLabel, geom: &DiskGeometry) -> Result<DiskScenario> {
    let r = geom.radius;
    let spoke_angles: Vec<f64> = (0..geom.spokes).map(|j| 2.0 * PI * j as f64 / geom.spokes as f64).collect();
    match label {
        ScenarioLabel::A => Ok(DiskScenario {
            label,
            sources: vec![tangential_source(0.15 * r, -PI / 2.0)],
            cosine: None,
            note: "deep tangential source below the centre".into(),
        }),
        ScenarioLabel::B => {
            let upper: Vec<f64> = spoke_angles.iter().copied().filter(|&t| t > 0.0 && t < PI).collect();
            let cands: Vec<PointSource> = upper.iter().map(|&t| tangential_source(0.9 * r, t)).collect();
            let mut best: Option<(f64, f64, usize, usize)> = None;
            for i in 0..cands.len() {
                for j in (i + 1)..cands.len() {
                    let c = signature_cosine(geom, &cands[i], &cands[j])?.abs();
                    if c >= 0.05 {
                        continue;
                    }
                    let sep = (upper[j] - upper[i]).abs();
                    let better = match best {
                        None => true,
                        Some((bs, bc, _, _)) => sep > bs + 1e-12 || ((sep - bs).abs() <= 1e-12 && c < bc),
                    };
                    if better {
                        best = Some((sep, c, i, j));
                    }
                }
            }
            let (_, _, i, j) = best.ok_or_else(|| {
                Error::SearchFailed("no superficial pair with |cos| < 0.05; refine the spokes".into())
            })?;
            let sources = vec![cands[i].clone(), cands[j].clone()];
            let cosine = signature_cosine(geom, &sources[0], &sources[1])?;
            Ok(DiskScenario {
                label,
                sources,
                cosine: Some(cosine),
                note: "superficial tangential pair with near-orthogonal signatures".into(),
            })
        }
        ScenarioLabel::C => {
            let shallow = tangential_source(0.9 * r, PI / 2.0);
            let mut best: Option<(f64, PointSource)> = None;
            for &t in &spoke_angles {
                let deep = tangential_source(0.25 * r, t);
                let c = signature_cosine(geom, &shallow, &deep)?.abs();
                if best.as_ref().is_none_or(|(bc, _)| c > *bc) {
                    best = Some((c, deep));
                }
            }
            let (c, deep) = best.expect("at least one spoke");
            if c <= 0.5 {
                return Err(Error::SearchFailed(format!("best deep partner has |cos| = {c}")));
            }
            let sources = vec![shallow, deep];
            let cosine = signature_cosine(geom, &sources[0], &sources[1])?;
            Ok(DiskScenario {
                label,
                sources,
                cosine: Some(cosine),
                note: "superficial and deep tangential pair with similar signatures".into(),
            })
        }
    }
}
