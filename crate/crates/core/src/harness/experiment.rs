//! Monte Carlo batches, RMSE and parameter sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::protocol::{CycleRecord, DictionaryBank, Engine, TrialResult};
use crate::error::{Error, Result};
use crate::scene::Vec3;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` within the batch tagged `tag`: `base + hash(tag, trial)`.
pub fn trial_seed(base: u64, tag: u64, trial: usize) -> u64 {
    base.wrapping_add(mix(mix(tag) ^ trial as u64))
}

/// Batch tag of a plain run.
pub const RUN_TAG: u64 = 0;

/// Tag of the batch for one sweep value.
pub fn sweep_tag(value: f64) -> u64 {
    value.to_bits()
}

/// `sqrt(mean ‖p̂ − p‖²)` over every (trial, user) pair of successful trials.
pub fn rmse(trials: &[TrialResult]) -> Option<f64> {
    let errors: Vec<f64> = trials
        .iter()
        .filter(|t| t.succeeded())
        .flat_map(|t| t.final_errors.iter().copied())
        .collect();
    rmse_of(&errors)
}

/// RMSE from final estimates and the true locations.
pub fn rmse_from_estimates(estimates: &[Vec<Vec3>], truth: &[Vec3]) -> Option<f64> {
    let errors: Vec<f64> = estimates
        .iter()
        .flat_map(|per_user| per_user.iter().zip(truth).map(|(p, q)| (p - q).norm()))
        .collect();
    rmse_of(&errors)
}

fn rmse_of(errors: &[f64]) -> Option<f64> {
    if errors.is_empty() {
        return None;
    }
    Some((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Mean final-cycle CRB over users and successful trials; singular entries
/// are skipped.
pub fn mean_crb(trials: &[TrialResult]) -> Option<f64> {
    let v: Vec<f64> = trials
        .iter()
        .filter(|t| t.succeeded())
        .flat_map(|t| t.final_crb.iter().flatten().copied())
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub trials: Vec<TrialResult>,
    pub records: Option<Vec<Vec<CycleRecord>>>,
}

impl BatchOutcome {
    pub fn rmse(&self) -> Option<f64> {
        rmse(&self.trials)
    }

    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| !t.succeeded()).count()
    }
}

/// Runs `config.trials` independent trials in parallel; results are in
/// trial order.
pub fn run_batch(engine: &Engine, base_seed: u64, tag: u64, keep_records: bool) -> BatchOutcome {
    let n = engine.scenario.config.trials;
    let results: Vec<(TrialResult, Vec<CycleRecord>)> = (0..n)
        .into_par_iter()
        .map(|t| engine.run_trial(t, trial_seed(base_seed, tag, t)))
        .collect();
    let (trials, records): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    BatchOutcome { trials, records: keep_records.then_some(records) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Snr,
    Cycles,
    NumRis,
}

impl SweepAxis {
    /// Copy of `base` with the axis set to `value`. The RIS-count axis keeps
    /// half of the surfaces selected (rounded up).
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("sweep value {v} must be a positive integer")))
            }
        };
        match self {
            SweepAxis::Snr => cfg.snr_db = value,
            SweepAxis::Cycles => cfg.cycles = as_count(value)?,
            SweepAxis::NumRis => {
                let m = as_count(value)?;
                cfg.active_ris = Some(m);
                cfg.selection_count = m.div_ceil(2);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub rmse_m: Option<f64>,
    pub mean_crb: Option<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// One batch per value, in input order. Each batch uses trial seeds derived
/// from `config.seed` and the value.
pub fn sweep(config: &ScenarioConfig, axis: SweepAxis, values: &[f64], bank: &DictionaryBank) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&v| {
            let cfg = axis.apply(config, v)?;
            let engine = Engine::new(cfg.build()?, bank)?;
            let out = run_batch(&engine, cfg.seed, sweep_tag(v), false);
            Ok(SweepRow {
                axis_value: v,
                rmse_m: out.rmse(),
                mean_crb: mean_crb(&out.trials),
                trials: out.trials.iter().filter(|t| t.succeeded()).count(),
                seed: cfg.seed,
            })
        })
        .collect()
}

/// CSV with header `axis_value,rmse_m,mean_crb,trials,seed`.
pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
