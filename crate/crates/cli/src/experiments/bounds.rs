//! Recovery report for a stored matrix.

use unbiased_core::matrix_io::load_any;
use unbiased_core::recoverability::{ratios_from_strengths, RecoveryReport};

use crate::config::BoundsConfig;
use crate::{CliError, Outputs};

pub fn run(cfg: &BoundsConfig, out: &mut Outputs) -> Result<Vec<String>, CliError> {
    if cfg.matrix.as_os_str().is_empty() {
        return Err(CliError::Usage("bounds: `matrix` is required".into()));
    }
    let u = load_any(&cfg.matrix)?;
    let ratios = if cfg.strengths.is_empty() { None } else { Some(ratios_from_strengths(&cfg.strengths)?) };
    let report = RecoveryReport::compute(&u, cfg.block_dim, cfg.sources, ratios.as_ref())?;
    let text = report.to_text();
    out.text("report.txt", &text)?;
    out.write("bounds.csv", |w| report.write_csv(w))?;
    Ok(text.lines().map(str::to_string).collect())
}
