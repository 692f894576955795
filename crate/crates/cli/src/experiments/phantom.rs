//! Shepp-Logan reconstruction from radial Fourier lines.

use std::io::Write;

use unbiased_core::matrix_io::{format_real, write_bin};
use unbiased_core::model::NoiseSpec;
use unbiased_core::phantom::{
    ec_reconstruct, fourier_sample, image_uge, radial_mask, relative_error, shepp_logan, split_bregman_tv,
    sufficient_lines, write_trace_csv, Fft2, ImageGrid, ImageUgeParams,
};
use unbiased_core::rng::derive_seed;

use crate::config::PhantomConfig;
use crate::{CliError, Outputs};

const METHODS: [&str; 3] = ["tv", "uge", "ec"];

fn save_image(out: &mut Outputs, stem: &str, img: &ImageGrid) -> Result<(), CliError> {
    out.write(&format!("{stem}.pgm"), |w| img.write_pgm(w))?;
    out.write(&format!("{stem}.bin"), |w| write_bin(w, &img.to_matrix()))
}

pub fn run(cfg: &PhantomConfig, seed: u64, out: &mut Outputs) -> Result<Vec<String>, CliError> {
    if let Some(m) = cfg.methods.iter().find(|m| !METHODS.contains(&m.as_str())) {
        return Err(CliError::Usage(format!("phantom: unknown method `{m}`")));
    }
    let truth = shepp_logan(cfg.size)?;
    let lines = if cfg.lines == 0 { sufficient_lines(&truth)? } else { cfg.lines };
    let mask = radial_mask(cfg.size, lines)?;
    let noise =
        if cfg.noise_level > 0.0 { NoiseSpec::iid(cfg.noise_level, derive_seed(seed, 0))? } else { NoiseSpec::none() };
    let data = fourier_sample(&truth, &mask, &noise)?;
    save_image(out, "truth", &truth)?;
    let mask_img = ImageGrid::new(cfg.size, mask.weights())?;
    out.write("mask.pgm", |w| mask_img.write_pgm(w))?;
    let zero = data.zero_fill(&Fft2::new(cfg.size))?;
    save_image(out, "zero_fill", &zero)?;

    let mut summary = vec![("zero_fill".to_string(), relative_error(&zero, &truth)?)];
    let mut uge_image = None;
    for method in &cfg.methods {
        let (img, trace) = match method.as_str() {
            "tv" => {
                let r = split_bregman_tv(&data, &cfg.tv, Some(&truth))?;
                (r.image, r.errors)
            }
            "uge" => {
                let params = ImageUgeParams { seed: derive_seed(seed, 1 + cfg.uge.seed), ..cfg.uge };
                let r = image_uge(&data, &params, Some(&truth))?;
                uge_image = Some(r.image.clone());
                (r.image, r.trace)
            }
            _ => {
                let palette = truth.levels();
                let init = uge_image.clone().unwrap_or_else(|| zero.clone());
                let r = ec_reconstruct(&data, &palette, &init, &cfg.ec, Some(&truth))?;
                (r.image, r.errors)
            }
        };
        save_image(out, method, &img)?;
        out.write(&format!("{method}_trace.csv"), |w| write_trace_csv(w, &trace))?;
        summary.push((method.clone(), relative_error(&img, &truth)?));
    }
    out.write("summary.csv", |w| {
        writeln!(w, "# size = {}", cfg.size)?;
        writeln!(w, "# lines = {lines}")?;
        writeln!(w, "# samples = {}", mask.count())?;
        writeln!(w, "# noise_level = {}", format_real(cfg.noise_level))?;
        writeln!(w, "method,relative_error")?;
        for (m, e) in &summary {
            writeln!(w, "{m},{}", format_real(*e))?;
        }
        Ok(())
    })?;
    let mut lines_out = vec![format!(
        "{}x{} phantom, {lines} lines ({} samples), noise {}",
        cfg.size,
        cfg.size,
        mask.count(),
        cfg.noise_level
    )];
    lines_out.extend(summary.iter().map(|(m, e)| format!("{m}: relative error {e:.4}")));
    Ok(lines_out)
}
