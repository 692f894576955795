//! Probability against SNR for several sensor counts.

use std::io::Write;

use unbiased_core::matrix_io::format_real;
use unbiased_core::probability::{crossing, snr_curves, write_curves_csv, ProbabilityCurve};
use unbiased_core::Result;

use crate::config::SnrCurvesConfig;
use crate::{CliError, Outputs};

pub fn grid(cfg: &SnrCurvesConfig) -> Vec<f64> {
    let n = cfg.steps;
    (0..n)
        .map(
            |i| {
                if n == 1 {
                    cfg.snr_min
                } else {
                    cfg.snr_min + (cfg.snr_max - cfg.snr_min) * i as f64 / (n - 1) as f64
                }
            },
        )
        .collect()
}

pub fn curves(cfg: &SnrCurvesConfig, d: usize) -> Result<Vec<ProbabilityCurve>> {
    snr_curves(&cfg.sensors, d, &grid(cfg))
}

pub fn run(cfg: &SnrCurvesConfig, out: &mut Outputs) -> std::result::Result<Vec<String>, CliError> {
    if cfg.steps < 2 || cfg.sensors.is_empty() || cfg.block_dims.is_empty() {
        return Err(CliError::Usage("snr-curves: need sensors, block_dims and at least 2 steps".into()));
    }
    let mut lines = Vec::new();
    let mut cross = Vec::new();
    for &d in &cfg.block_dims {
        let c = curves(cfg, d)?;
        let meta = vec![("d".to_string(), d.to_string()), ("sources".to_string(), "1".to_string())];
        out.write(&format!("snr_curves_d{d}.csv"), |w| write_curves_csv(w, &c, &meta))?;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                let x = crossing(&c[i], &c[j]);
                if let (Some(x), true) = (x, i == 0 && j == c.len() - 1) {
                    lines.push(format!("d = {d}: m = {} and m = {} cross at SNR {x:.3}", c[i].m, c[j].m));
                }
                cross.push((d, c[i].m, c[j].m, x));
            }
        }
    }
    out.write("crossings.csv", |w| {
        writeln!(w, "d,m_a,m_b,snr")?;
        for (d, a, b, x) in &cross {
            writeln!(w, "{d},{a},{b},{}", x.map_or_else(|| "nan".to_string(), format_real))?;
        }
        Ok(())
    })?;
    Ok(lines)
}
