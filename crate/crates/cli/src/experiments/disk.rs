//! Scenario trials on the half-sensor disk.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use unbiased_core::disk::{self, DiskGeometry, DiskScenario, ScenarioLabel};
use unbiased_core::estimators::{self, localization_metrics, PointSource, UgeOptions};
use unbiased_core::matrix_io::format_real;
use unbiased_core::model::{rms, NoiseSpec};
use unbiased_core::rng::derive_seed;
use unbiased_core::whitening::{whiten, WhitenedModel};
use unbiased_core::{BlockForwardModel, CovarianceSpec, Result};

use crate::config::DiskConfig;
use crate::{CliError, Outputs};

/// Local maxima closer than this (relative to the radius) count as hits.
pub const HIT_RADIUS: f64 = 0.1;

/// Everything shared by the trials of one scenario.
pub struct DiskSetup {
    pub geom: DiskGeometry,
    pub model: BlockForwardModel,
    pub scenario: DiskScenario,
    pub clean: DVector<f64>,
    /// Noise standard deviation per sensor.
    pub sigma: f64,
    pub cov: CovarianceSpec,
    pub wm: WhitenedModel,
    pub neighbors: Vec<Vec<usize>>,
}

/// Synthesizes on the exact source positions, inverts on the polar grid;
/// the source covariance is the identity and the noise covariance `σ² I`
/// with `σ` the RMS of the injected noise.
pub fn setup(cfg: &DiskConfig) -> Result<DiskSetup> {
    let label: ScenarioLabel = cfg.scenario.parse()?;
    let geom = DiskGeometry::new(cfg.sensors, cfg.rings, cfg.spokes)?;
    let scenario = disk::scenario(label, &geom)?;
    let clean = scenario.clean_signal(&geom)?;
    let sigma = cfg.noise_level * rms(clean.as_slice());
    let model = disk::disk_lead_field(&geom)?;
    let m = geom.sensors();
    let cov = CovarianceSpec::new(
        DMatrix::identity(model.parameters(), model.parameters()),
        DMatrix::identity(m, m) * (sigma * sigma),
    )?;
    let wm = whiten(&model, &cov)?;
    let neighbors = geom.neighbors();
    Ok(DiskSetup { geom, model, scenario, clean, sigma, cov, wm, neighbors })
}

/// Per-block score fields of one trial.
#[derive(Debug, Clone)]
pub struct Fields {
    pub uge: Vec<f64>,
    pub mne: Vec<f64>,
    pub sloreta2: Vec<f64>,
    pub sloreta1: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    /// Summed distance from each true source to the nearest estimate.
    pub uge_error: f64,
    pub mne_error: f64,
    pub sloreta_error: f64,
    /// True sources with a block-sLORETA local maximum within the hit radius.
    pub sloreta2_hits: usize,
    /// The same for the column-wise score (block score = larger column).
    pub sloreta1_hits: usize,
}

fn block_norms(x: &DVector<f64>, d: usize) -> Vec<f64> {
    x.as_slice().chunks(d).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

/// The `count` strongest local maxima, topped up with the strongest
/// remaining blocks if there are too few.
fn peaks(scores: &[f64], neighbors: &[Vec<usize>], count: usize) -> Vec<usize> {
    let mut maxima = disk::local_maxima(scores, neighbors);
    maxima.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    maxima.truncate(count);
    if maxima.len() < count {
        let mut rest: Vec<usize> = (0..scores.len()).filter(|k| !maxima.contains(k)).collect();
        rest.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        maxima.extend(rest.into_iter().take(count - maxima.len()));
    }
    maxima
}

fn located(setup: &DiskSetup, blocks: &[usize], x: &DVector<f64>) -> Vec<PointSource> {
    blocks
        .iter()
        .map(|&k| PointSource {
            position: setup.geom.source_grid[k].to_vec(),
            moment: x.rows(2 * k, 2).iter().copied().collect(),
        })
        .collect()
}

fn summed_error(setup: &DiskSetup, est: &[PointSource]) -> Result<f64> {
    Ok(localization_metrics(est, &setup.scenario.sources)?.iter().map(|e| e.distance).sum())
}

/// Noisy observation of trial `trial`.
pub fn observe(setup: &DiskSetup, cfg: &DiskConfig, seed: u64, trial: usize) -> Result<DVector<f64>> {
    let positions: Vec<Vec<f64>> = setup.geom.sensor_positions().iter().map(|p| p.to_vec()).collect();
    let noise = NoiseSpec::iid(cfg.noise_level, derive_seed(seed, trial as u64))?;
    Ok(&setup.clean + noise.draw(&setup.clean, &positions)?)
}

/// UGE MAP-set localization error and block norms.
pub fn uge_error(setup: &DiskSetup, cfg: &DiskConfig, seed: u64, y: &DVector<f64>) -> Result<(f64, Vec<f64>)> {
    let yhat = setup.wm.whiten_vector(y)?;
    let n_src = setup.scenario.sources.len();
    let mix = estimators::uge(&setup.wm, &yhat, n_src, &UgeOptions::new(cfg.uge_budget, derive_seed(seed, 1 << 32)))?;
    let map = mix.map_set().set.clone();
    let mut moments = DVector::zeros(setup.model.parameters());
    for &k in &map {
        moments.rows_mut(2 * k, 2).copy_from(&mix.physical_moment(&setup.wm, k)?);
    }
    Ok((summed_error(setup, &located(setup, &map, &moments))?, mix.block_norms()))
}

/// MNE localization error (strongest local maxima of the block norms) and the norms.
pub fn mne_error(setup: &DiskSetup, y: &DVector<f64>) -> Result<(f64, Vec<f64>, DVector<f64>)> {
    let x = estimators::mne(&setup.model, &setup.cov, y)?;
    let norms = block_norms(&x, 2);
    let err = summed_error(setup, &located(setup, &peaks(&norms, &setup.neighbors, setup.scenario.sources.len()), &x))?;
    Ok((err, norms, x))
}

/// Block (`d_eff = 2`) and column-wise (`d_eff = 1`, block score = larger
/// column) sLORETA fields.
pub fn sloreta_fields(setup: &DiskSetup, y: &DVector<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let s2 = estimators::sloreta_scores(&setup.model, &setup.cov, y, 2)?.field.scores;
    let s1 = estimators::sloreta_scores(&setup.model, &setup.cov, y, 1)?.field.group_max(2)?.scores;
    Ok((s2, s1))
}

/// Number of true sources with a local maximum of `scores` within the hit radius.
pub fn hits(setup: &DiskSetup, scores: &[f64]) -> usize {
    let maxima = disk::local_maxima(scores, &setup.neighbors);
    let r = setup.geom.radius;
    setup
        .scenario
        .sources
        .iter()
        .filter(|s| {
            maxima.iter().any(|&k| estimators::distance(&setup.geom.source_grid[k], &s.position) < HIT_RADIUS * r)
        })
        .count()
}

pub fn run_trial(setup: &DiskSetup, cfg: &DiskConfig, seed: u64, trial: usize) -> Result<(TrialOutcome, Fields)> {
    let y = observe(setup, cfg, seed, trial)?;
    let (uge_error, uge) =
        if cfg.run_uge { uge_error(setup, cfg, seed, &y)? } else { (f64::NAN, vec![f64::NAN; setup.geom.blocks()]) };
    let (mne_error, mne, x) = mne_error(setup, &y)?;
    let (s2, s1) = sloreta_fields(setup, &y)?;
    let sloreta_error =
        summed_error(setup, &located(setup, &peaks(&s2, &setup.neighbors, setup.scenario.sources.len()), &x))?;
    let outcome = TrialOutcome {
        trial,
        uge_error,
        mne_error,
        sloreta_error,
        sloreta2_hits: hits(setup, &s2),
        sloreta1_hits: hits(setup, &s1),
    };
    Ok((outcome, Fields { uge, mne, sloreta2: s2, sloreta1: s1 }))
}

/// Runs all trials in parallel; results are in trial order.
pub fn run_trials(setup: &DiskSetup, cfg: &DiskConfig, seed: u64) -> Result<Vec<(TrialOutcome, Fields)>> {
    (0..cfg.trials).into_par_iter().map(|t| run_trial(setup, cfg, seed, t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskTally {
    pub trials: usize,
    pub uge_beats_mne: usize,
    pub sloreta2_all_hit: usize,
    pub sloreta1_missed: usize,
    /// Trials where block sLORETA finds every source and the column-wise score does not.
    pub block_only: usize,
}

pub fn tally(outcomes: &[TrialOutcome], sources: usize) -> DiskTally {
    DiskTally {
        trials: outcomes.len(),
        uge_beats_mne: outcomes.iter().filter(|o| o.uge_error < o.mne_error).count(),
        sloreta2_all_hit: outcomes.iter().filter(|o| o.sloreta2_hits == sources).count(),
        sloreta1_missed: outcomes.iter().filter(|o| o.sloreta1_hits < sources).count(),
        block_only: outcomes.iter().filter(|o| o.sloreta2_hits == sources && o.sloreta1_hits < sources).count(),
    }
}

pub fn run(cfg: &DiskConfig, seed: u64, out: &mut Outputs) -> std::result::Result<Vec<String>, CliError> {
    if cfg.trials == 0 || cfg.field_trial >= cfg.trials {
        return Err(CliError::Usage("disk: need trials > 0 and field_trial < trials".into()));
    }
    let setup = setup(cfg)?;
    let results = run_trials(&setup, cfg, seed)?;
    let outcomes: Vec<TrialOutcome> = results.iter().map(|r| r.0).collect();
    let t = tally(&outcomes, setup.scenario.sources.len());

    out.text("scenario.json", &(setup.scenario.to_json() + "\n"))?;
    out.write("trials.csv", |w| {
        writeln!(w, "# scenario = {}", cfg.scenario)?;
        writeln!(w, "# noise_level = {}", format_real(cfg.noise_level))?;
        writeln!(w, "trial,uge_error,mne_error,sloreta_error,sloreta2_hits,sloreta1_hits")?;
        for o in &outcomes {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                o.trial,
                format_real(o.uge_error),
                format_real(o.mne_error),
                format_real(o.sloreta_error),
                o.sloreta2_hits,
                o.sloreta1_hits
            )?;
        }
        Ok(())
    })?;
    let f = &results[cfg.field_trial].1;
    out.write("fields.csv", |w| {
        writeln!(w, "# trial = {}", cfg.field_trial)?;
        writeln!(w, "block,x,y,uge_norm,mne_norm,sloreta2,sloreta1")?;
        for (k, p) in setup.geom.source_grid.iter().enumerate() {
            writeln!(
                w,
                "{k},{},{},{},{},{},{}",
                format_real(p[0]),
                format_real(p[1]),
                format_real(f.uge[k]),
                format_real(f.mne[k]),
                format_real(f.sloreta2[k]),
                format_real(f.sloreta1[k])
            )?;
        }
        Ok(())
    })?;
    out.write("summary.csv", |w| {
        writeln!(w, "metric,value")?;
        writeln!(w, "trials,{}", t.trials)?;
        writeln!(w, "uge_beats_mne,{}", t.uge_beats_mne)?;
        writeln!(w, "sloreta2_all_hit,{}", t.sloreta2_all_hit)?;
        writeln!(w, "sloreta1_missed,{}", t.sloreta1_missed)?;
        writeln!(w, "block_only,{}", t.block_only)?;
        Ok(())
    })?;
    Ok(vec![
        format!("scenario {} ({} trials, noise {})", cfg.scenario, t.trials, cfg.noise_level),
        format!("UGE error below MNE error in {}/{} trials", t.uge_beats_mne, t.trials),
        format!(
            "block sLORETA found every source in {}/{}; column-wise missed one in {}/{}",
            t.sloreta2_all_hit, t.trials, t.sloreta1_missed, t.trials
        ),
    ])
}
