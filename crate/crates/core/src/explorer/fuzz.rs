//! Seeded random exploration: random transaction sequences with a random
//! choice source. Every consumed choice is logged, so each run replays in
//! exhaustive mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::ChoiceSource;
use crate::explorer::report::{Collector, FrameStats, Report};
use crate::explorer::run::{record_with, Recording, RunError};
use crate::model::ModelConfig;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuzzConfig {
    pub model: ModelConfig,
    pub max_txs: usize,
    pub seed: u64,
    pub iterations: u64,
    pub max_reported_violations: usize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig { model: ModelConfig::default(), max_txs: 3, seed: 0, iterations: 1000, max_reported_violations: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FuzzError {
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("max_txs must be at least 1")]
    NoTransactions,
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// SplitMix64 finalizer; decorrelates per-iteration seeds.
fn mix(seed: u64, i: u64) -> u64 {
    let mut z = seed.wrapping_add(i.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One random run: a sequence of 1..=max_txs transactions.
pub fn fuzz_one(cfg: &FuzzConfig, iteration: u64) -> Result<Recording, RunError> {
    let all = cfg.model.transactions();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, iteration));
    let n = rng.random_range(1..=cfg.max_txs);
    let txs: Vec<_> = (0..n).map(|_| all[rng.random_range(0..all.len())].clone()).collect();
    record_with(&cfg.model, &txs, ChoiceSource::random(rng.random()))
}

pub fn fuzz(cfg: &FuzzConfig, workers: usize) -> Result<Report, FuzzError> {
    if cfg.iterations == 0 {
        return Err(FuzzError::NoIterations);
    }
    if cfg.max_txs == 0 {
        return Err(FuzzError::NoTransactions);
    }
    cfg.model.validate().map_err(RunError::from)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| FuzzError::Pool(e.to_string()))?;

    let mut stats = FrameStats::default();
    let mut violations = Collector::new(cfg.max_reported_violations);
    const BATCH: u64 = 1024;
    let mut start = 0;
    while start < cfg.iterations {
        let end = (start + BATCH).min(cfg.iterations);
        let runs: Vec<Result<Recording, RunError>> =
            pool.install(|| (start..end).into_par_iter().map(|i| fuzz_one(cfg, i)).collect());
        for run in runs {
            let run = run?;
            for (tx, frames) in run.trace.transactions.iter().zip(run.trace.executing_frames_per_transaction()) {
                stats.record(frames as u64, tx.gas.0);
            }
            if let Some(sig) = run.signature {
                if violations.note(sig) {
                    violations.add_trace(sig, run.trace);
                }
            }
        }
        start = end;
    }

    Ok(Report {
        mode: "fuzz".to_string(),
        config: serde_json::to_value(cfg).expect("config serializes"),
        states: None,
        iterations: Some(cfg.iterations),
        branches: stats.branches,
        frames_total: stats.frames_total,
        max_frames_per_tx: stats.max_frames_per_tx,
        frame_bound_exceeded: stats.frame_bound_exceeded,
        coverage: None,
        violation_count: violations.count,
        violations: violations.into_classes(),
        complete: true,
    })
}
