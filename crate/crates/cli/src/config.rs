//! Experiment configuration files (TOML, unknown keys rejected).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unbiased_core::phantom::{EcParams, ImageUgeParams, TvParams};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Disk,
    ProbMap,
    SnrCurves,
    Bounds,
    Phantom,
    Ncf,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Disk,
        Experiment::ProbMap,
        Experiment::SnrCurves,
        Experiment::Bounds,
        Experiment::Phantom,
        Experiment::Ncf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Disk => "disk",
            Experiment::ProbMap => "prob-map",
            Experiment::SnrCurves => "snr-curves",
            Experiment::Bounds => "bounds",
            Experiment::Phantom => "phantom",
            Experiment::Ncf => "ncf",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Experiment::Disk => "scenario trials on the half-sensor disk: UGE, MNE and sLORETA localization",
            Experiment::ProbMap => "weak-reconstruction probability of a unit source over the disk",
            Experiment::SnrCurves => "weak-reconstruction probability against SNR for several sensor counts",
            Experiment::Bounds => "uniqueness and coherence report for a stored matrix",
            Experiment::Phantom => "Shepp-Logan reconstruction from radial Fourier lines (TV, UGE, EC)",
            Experiment::Ncf => "noncentral F CDF on a grid of points",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiskConfig {
    /// One of A, B, C.
    pub scenario: String,
    pub noise_level: f64,
    pub trials: usize,
    pub sensors: usize,
    pub rings: usize,
    pub spokes: usize,
    pub uge_budget: usize,
    /// Run UGE (exhaustive two-source runs are the slow part).
    pub run_uge: bool,
    /// Trial whose score fields are written out.
    pub field_trial: usize,
}

impl Default for DiskConfig {
    fn default() -> Self {
        DiskConfig {
            scenario: "A".into(),
            noise_level: 0.05,
            trials: 100,
            sensors: 32,
            rings: 16,
            spokes: 48,
            uge_budget: 1_000_000,
            run_uge: true,
            field_trial: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbMapConfig {
    pub noise_levels: Vec<f64>,
    /// Raster side; points within 0.95 R are evaluated.
    pub resolution: usize,
    pub sensors: usize,
}

impl Default for ProbMapConfig {
    fn default() -> Self {
        ProbMapConfig { noise_levels: vec![0.05, 0.15], resolution: 61, sensors: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnrCurvesConfig {
    pub sensors: Vec<usize>,
    pub block_dims: Vec<usize>,
    pub snr_min: f64,
    pub snr_max: f64,
    pub steps: usize,
}

impl Default for SnrCurvesConfig {
    fn default() -> Self {
        SnrCurvesConfig {
            sensors: vec![16, 32, 64, 128],
            block_dims: vec![1, 3],
            snr_min: 1.0,
            snr_max: 20.0,
            steps: 381,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    /// Matrix file (`.csv` or `.bin`); relative paths resolve against the config file.
    pub matrix: PathBuf,
    pub block_dim: usize,
    pub sources: usize,
    /// Optional source strengths for the ratio conditions.
    pub strengths: Vec<f64>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig { matrix: PathBuf::new(), block_dim: 1, sources: 1, strengths: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub size: usize,
    /// Radial lines; 0 uses the sufficient count for the phantom.
    pub lines: usize,
    pub noise_level: f64,
    /// Any of `tv`, `uge`, `ec`, in run order.
    pub methods: Vec<String>,
    pub tv: TvParams,
    pub uge: ImageUgeParams,
    pub ec: EcParams,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            size: 64,
            lines: 22,
            noise_level: 0.3,
            methods: vec!["tv".into(), "uge".into(), "ec".into()],
            tv: TvParams::default(),
            uge: ImageUgeParams { samples: 200, ..ImageUgeParams::default() },
            ec: EcParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NcfConfig {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub lambda: Vec<f64>,
    pub x: Vec<f64>,
}

impl Default for NcfConfig {
    fn default() -> Self {
        NcfConfig {
            a: vec![1.0, 5.0],
            b: vec![5.0, 50.0],
            lambda: vec![0.0, 10.0, 100.0],
            x: vec![0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
        }
    }
}

/// Parameters of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Disk(DiskConfig),
    ProbMap(ProbMapConfig),
    SnrCurves(SnrCurvesConfig),
    Bounds(BoundsConfig),
    Phantom(PhantomConfig),
    Ncf(NcfConfig),
}

impl Params {
    pub fn defaults(e: Experiment) -> Params {
        match e {
            Experiment::Disk => Params::Disk(DiskConfig::default()),
            Experiment::ProbMap => Params::ProbMap(ProbMapConfig::default()),
            Experiment::SnrCurves => Params::SnrCurves(SnrCurvesConfig::default()),
            Experiment::Bounds => Params::Bounds(BoundsConfig::default()),
            Experiment::Phantom => Params::Phantom(PhantomConfig::default()),
            Experiment::Ncf => Params::Ncf(NcfConfig::default()),
        }
    }

    pub fn experiment(&self) -> Experiment {
        match self {
            Params::Disk(_) => Experiment::Disk,
            Params::ProbMap(_) => Experiment::ProbMap,
            Params::SnrCurves(_) => Experiment::SnrCurves,
            Params::Bounds(_) => Experiment::Bounds,
            Params::Phantom(_) => Experiment::Phantom,
            Params::Ncf(_) => Experiment::Ncf,
        }
    }

    fn to_value(&self) -> toml::Value {
        let v = match self {
            Params::Disk(c) => toml::Value::try_from(c),
            Params::ProbMap(c) => toml::Value::try_from(c),
            Params::SnrCurves(c) => toml::Value::try_from(c),
            Params::Bounds(c) => toml::Value::try_from(c),
            Params::Phantom(c) => toml::Value::try_from(c),
            Params::Ncf(c) => toml::Value::try_from(c),
        };
        v.expect("parameter tables serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub params: Params,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Experiment,
    #[serde(default)]
    seed: u64,
    output_dir: Option<PathBuf>,
    disk: Option<DiskConfig>,
    #[serde(rename = "prob-map")]
    prob_map: Option<ProbMapConfig>,
    #[serde(rename = "snr-curves")]
    snr_curves: Option<SnrCurvesConfig>,
    bounds: Option<BoundsConfig>,
    phantom: Option<PhantomConfig>,
    ncf: Option<NcfConfig>,
}

impl ExperimentConfig {
    pub fn defaults(e: Experiment) -> Self {
        ExperimentConfig { seed: 0, output_dir: None, params: Params::defaults(e) }
    }

    pub fn experiment(&self) -> Experiment {
        self.params.experiment()
    }

    /// Parses a config; `base` resolves relative paths inside it.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {}", one_line(&e))))?;
        let e = raw.experiment;
        let tables = [
            (Experiment::Disk, raw.disk.is_some()),
            (Experiment::ProbMap, raw.prob_map.is_some()),
            (Experiment::SnrCurves, raw.snr_curves.is_some()),
            (Experiment::Bounds, raw.bounds.is_some()),
            (Experiment::Phantom, raw.phantom.is_some()),
            (Experiment::Ncf, raw.ncf.is_some()),
        ];
        if let Some((other, _)) = tables.iter().find(|(k, present)| *present && *k != e) {
            return Err(CliError::Usage(format!("config: table `{other}` does not belong to experiment `{e}`")));
        }
        let params = match e {
            Experiment::Disk => Params::Disk(raw.disk.unwrap_or_default()),
            Experiment::ProbMap => Params::ProbMap(raw.prob_map.unwrap_or_default()),
            Experiment::SnrCurves => Params::SnrCurves(raw.snr_curves.unwrap_or_default()),
            Experiment::Bounds => {
                let mut b = raw.bounds.unwrap_or_default();
                if let Some(dir) = base {
                    if b.matrix.is_relative() && !b.matrix.as_os_str().is_empty() {
                        b.matrix = dir.join(&b.matrix);
                    }
                }
                Params::Bounds(b)
            }
            Experiment::Phantom => Params::Phantom(raw.phantom.unwrap_or_default()),
            Experiment::Ncf => Params::Ncf(raw.ncf.unwrap_or_default()),
        };
        Ok(ExperimentConfig { seed: raw.seed, output_dir: raw.output_dir, params })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// Canonical TOML echo of the resolved configuration.
    pub fn to_toml(&self) -> String {
        let mut root = toml::Table::new();
        root.insert("experiment".into(), toml::Value::String(self.experiment().name().into()));
        root.insert("seed".into(), toml::Value::Integer(self.seed as i64));
        if let Some(dir) = &self.output_dir {
            root.insert("output_dir".into(), toml::Value::String(dir.display().to_string()));
        }
        root.insert(self.experiment().name().into(), self.params.to_value());
        toml::to_string(&root).expect("config serializes")
    }
}

fn one_line(e: &impl fmt::Display) -> String {
    e.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Key documentation for `describe`.
pub fn key_docs(e: Experiment) -> &'static [(&'static str, &'static str)] {
    match e {
        Experiment::Disk => &[
            ("scenario", "source layout: A (one deep), B (two superficial), C (superficial + deep)"),
            ("noise_level", "iid noise RMS relative to the clean signal RMS"),
            ("trials", "number of seeded noise realizations"),
            ("sensors", "sensors on the upper half boundary"),
            ("rings", "radial rings of the inversion grid"),
            ("spokes", "angular spokes of the inversion grid"),
            ("uge_budget", "largest number of index sets UGE evaluates"),
            ("run_uge", "run UGE; when false its error column is NaN"),
            ("field_trial", "trial whose score fields are written to fields.csv"),
        ],
        Experiment::ProbMap => &[
            ("noise_levels", "noise levels relative to the lead-field RMS, one map each"),
            ("resolution", "raster side; points inside 0.95 R are evaluated"),
            ("sensors", "sensors on the upper half boundary"),
        ],
        Experiment::SnrCurves => &[
            ("sensors", "sensor counts, one curve each"),
            ("block_dims", "parameters per source, one file each"),
            ("snr_min", "first SNR of the grid (at least 1)"),
            ("snr_max", "last SNR of the grid"),
            ("steps", "number of grid points"),
        ],
        Experiment::Bounds => &[
            ("matrix", "matrix file, .csv or .bin, relative to the config file"),
            ("block_dim", "columns per block"),
            ("sources", "number of sources N for the conditions"),
            ("strengths", "optional source strengths for the ratio conditions"),
        ],
        Experiment::Phantom => &[
            ("size", "image side (power of two, at least 16)"),
            ("lines", "radial Fourier lines; 0 picks the sufficient count"),
            ("noise_level", "iid image-domain noise relative to the phantom RMS"),
            ("methods", "reconstructions to run: tv, uge, ec (ec starts from uge when present)"),
            ("tv.mu", "data-fidelity weight"),
            ("tv.lambda", "splitting weight"),
            ("tv.iterations", "outer Bregman iterations"),
            ("tv.inner_tol", "relative-update tolerance of the inner sweeps"),
            ("tv.inner_max", "inner sweeps per outer iteration"),
            ("uge.sigma", "noise standard deviation (unset: from the data)"),
            ("uge.alpha", "derivative prior weight"),
            ("uge.window", "cyclic window side"),
            ("uge.samples", "number of window draws"),
            ("uge.seed", "window offset stream, combined with the run seed"),
            ("uge.cg_tol", "conjugate-gradient relative tolerance"),
            ("uge.cg_max_iter", "conjugate-gradient iteration cap"),
            ("ec.alpha", "coupling of the Fourier update to the projected image"),
            ("ec.beta", "Potts neighbour penalty"),
            ("ec.sweeps", "labelling sweeps per projection"),
            ("ec.iterations", "projection / update rounds"),
            ("ec.sigma", "noise standard deviation (unset: from the data)"),
        ],
        Experiment::Ncf => &[
            ("a", "numerator degrees of freedom"),
            ("b", "denominator degrees of freedom"),
            ("lambda", "noncentralities"),
            ("x", "evaluation points"),
        ],
    }
}

/// Schema listing with defaults for `describe`.
pub fn describe(e: Experiment) -> String {
    let defaults = Params::defaults(e).to_value();
    let mut out = format!("{e}: {}\n\n[{e}]\n", e.summary());
    for (key, doc) in key_docs(e) {
        let mut v = Some(&defaults);
        for part in key.split('.') {
            v = v.and_then(|t| t.get(part));
        }
        let shown = v.map_or_else(|| "(unset)".to_string(), |v| v.to_string());
        out.push_str(&format!("{key} = {shown}  # {doc}\n"));
    }
    out
}
