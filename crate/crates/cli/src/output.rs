//! Artifact directory with a manifest of everything written.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::{CliError, ExperimentConfig, VERSION};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Creates `name` and hands a buffered writer to `body`.
    pub fn write<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> unbiased_core::Result<()>,
    {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.write(name, |w| Ok(w.write_all(text.as_bytes())?))
    }

    pub(crate) fn write_manifest(&self, config: &ExperimentConfig, wall_time: f64) -> Result<(), CliError> {
        let manifest = serde_json::json!({
            "experiment": config.experiment().name(),
            "version": VERSION,
            "core_version": unbiased_core::VERSION,
            "seed": config.seed,
            "config": config.to_toml(),
            "wall_time_seconds": wall_time,
            "files": self.files,
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(self.dir.join(MANIFEST), text + "\n")?;
        Ok(())
    }
}
