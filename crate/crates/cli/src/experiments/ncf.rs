//! Noncentral F CDF table.

use std::io::Write;

use unbiased_core::matrix_io::format_real;
use unbiased_core::probability::{CdfMethod, NoncentralF};

use crate::config::NcfConfig;
use crate::{CliError, Outputs};

pub fn run(cfg: &NcfConfig, out: &mut Outputs) -> Result<Vec<String>, CliError> {
    let mut rows = Vec::new();
    for &a in &cfg.a {
        for &b in &cfg.b {
            for &l in &cfg.lambda {
                let dist = NoncentralF::new(a, b, l)?;
                for &x in &cfg.x {
                    rows.push((dist, x, dist.cdf_detailed(x)?));
                }
            }
        }
    }
    let approx = rows.iter().filter(|r| r.2.method == CdfMethod::NormalApproximation).count();
    out.write("ncf.csv", |w| {
        writeln!(w, "a,b,lambda,x,cdf,terms,tail_mass,method")?;
        for (d, x, e) in &rows {
            let method = match e.method {
                CdfMethod::Series => "series",
                CdfMethod::NormalApproximation => "normal-approximation",
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{method}",
                format_real(d.a),
                format_real(d.b),
                format_real(d.lambda),
                format_real(*x),
                format_real(e.value),
                e.terms,
                format_real(e.tail_mass)
            )?;
        }
        Ok(())
    })?;
    Ok(vec![format!("{} evaluations, {approx} by normal approximation", rows.len())])
}
