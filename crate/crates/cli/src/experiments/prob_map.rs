//! Weak-reconstruction probability fields over the disk.

use unbiased_core::disk::DiskGeometry;
use unbiased_core::probability::{spatial_prob_raster, ProbabilityMap};
use unbiased_core::Result;

use crate::config::ProbMapConfig;
use crate::{CliError, Outputs};

pub fn maps(cfg: &ProbMapConfig) -> Result<Vec<ProbabilityMap>> {
    let geom = DiskGeometry::new(cfg.sensors, 16, 48)?;
    cfg.noise_levels.iter().map(|&l| spatial_prob_raster(&geom, l, cfg.resolution)).collect()
}

pub fn run(cfg: &ProbMapConfig, out: &mut Outputs) -> std::result::Result<Vec<String>, CliError> {
    if cfg.noise_levels.is_empty() || cfg.resolution == 0 {
        return Err(CliError::Usage("prob-map: need noise levels and a positive resolution".into()));
    }
    let mut lines = Vec::new();
    for (map, level) in maps(cfg)?.iter().zip(&cfg.noise_levels) {
        let stem = format!("prob_map_{level}");
        out.write(&format!("{stem}.csv"), |w| map.write_csv(w))?;
        out.write(&format!("{stem}.pgm"), |w| map.write_pgm(w))?;
        let sure = map.p.iter().filter(|&&p| p > 0.99).count();
        lines.push(format!("noise {level}: p > 0.99 at {sure}/{} points", map.p.len()));
    }
    Ok(lines)
}
