//! Snapshot study: USPA against the exhaustive grid oracle on random
//! geometries, one slot per trial, multipliers at zero.
//!
//! Each trial draws user weights uniformly in `[0, 1)` (normalised to sum to
//! one) and distances uniformly in the configured range, then one channel
//! realisation.

use std::time::Instant;

use noma_core::channel::{stream_rng, FadingChannel, UserProfile, TRIAL_STREAM};
use noma_core::oracle::grid_q2;
use noma_core::rate::{rates, weighted_sum, Allocation};
use noma_core::uspa::{uspa_allocate, EffectiveWeights};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::{median_u64, worker_pool, Result};

/// One row of `gap.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTrial {
    pub trial: u32,
    pub wsr_uspa: f64,
    pub wsr_oracle: f64,
    pub n_sel_uspa: usize,
    pub n_sel_oracle: usize,
    pub t_uspa_ns: u64,
    pub t_oracle_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub trials: Vec<GapTrial>,
    /// Mean of `wsr_oracle - wsr_uspa`, bits/s/Hz.
    pub mean_abs_gap: f64,
    /// Mean of `(wsr_oracle - wsr_uspa) / wsr_oracle`.
    pub mean_rel_gap: f64,
    pub max_rel_gap: f64,
    /// Mean of `max(0, wsr_oracle - wsr_uspa) / max(wsr_oracle, wsr_uspa)`.
    /// At coarse resolutions the grid often lands below USPA, which drags
    /// the signed gap negative; this is USPA's shortfall against the best
    /// value either method found.
    pub mean_rel_shortfall: f64,
    /// Fraction of trials where the grid oracle found a strictly better value.
    pub oracle_better_fraction: f64,
    /// `hist[k]` counts trials with `k` users selected.
    pub hist_uspa: Vec<usize>,
    pub hist_oracle: Vec<usize>,
    pub median_t_uspa_ns: u64,
    pub median_t_oracle_ns: u64,
    /// Grid oracle over USPA median call time. The oracle is a brute-force
    /// grid search, so this is not comparable to an interior-point solver.
    pub timing_ratio_oracle_over_uspa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapOptions {
    /// When false the timing columns are written as zero, which makes the
    /// CSV reproducible byte for byte.
    pub record_timing: bool,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self { record_timing: true }
    }
}

/// Random users for trial `trial`: weights and distances come from the
/// trial's own stream.
pub fn trial_users(cfg: &ScenarioConfig, trial: u32) -> (Vec<UserProfile>, Vec<f64>) {
    let spec = &cfg.gap;
    let mut rng = stream_rng(cfg.fading.rng_seed, trial, TRIAL_STREAM);
    let raw: Vec<f64> = (0..spec.n_users).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = if total > 0.0 {
        raw.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / spec.n_users as f64; spec.n_users]
    };
    let users = weights
        .iter()
        .enumerate()
        .map(|(id, &weight)| UserProfile {
            id,
            weight,
            min_avg_rate: 0.0,
            distance_m: rng.random_range(spec.distance_min_m..=spec.distance_max_m),
            noise_power: spec.noise_power,
        })
        .collect();
    (users, weights)
}

fn timed<T>(record: bool, f: impl FnOnce() -> T) -> (T, u64) {
    if record {
        let start = Instant::now();
        let out = f();
        (out, start.elapsed().as_nanos() as u64)
    } else {
        (f(), 0)
    }
}

fn run_trial(cfg: &ScenarioConfig, trial: u32, opts: GapOptions) -> Result<GapTrial> {
    let (users, weights) = trial_users(cfg, trial);
    let mut channel = FadingChannel::new(&users, &cfg.fading, trial)?;
    let state = channel.next_slot()?;
    let effective = EffectiveWeights::new(weights.clone())?;

    let (uspa, t_uspa_ns) = timed(opts.record_timing, || uspa_allocate(&state, &effective, cfg.pmax));
    let uspa: Allocation = uspa?;
    let (oracle, t_oracle_ns) = timed(opts.record_timing, || grid_q2(&state, &effective, cfg.pmax, &cfg.grid));
    let oracle = oracle?.allocation;

    let wsr = |a: &Allocation| -> Result<f64> { Ok(weighted_sum(&rates(a, &state)?, &weights)?) };
    Ok(GapTrial {
        trial,
        wsr_uspa: wsr(&uspa)?,
        wsr_oracle: wsr(&oracle)?,
        n_sel_uspa: uspa.num_selected(),
        n_sel_oracle: oracle.num_selected(),
        t_uspa_ns,
        t_oracle_ns,
    })
}

/// Runs `n_trials` independent snapshots on the worker pool.
pub fn run_gap_study(cfg: &ScenarioConfig, n_trials: u32, opts: GapOptions) -> Result<GapReport> {
    let pool = worker_pool()?;
    let trials: Vec<GapTrial> = pool.install(|| {
        (0..n_trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, t, opts))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(summarize(trials, cfg.gap.n_users))
}

pub fn summarize(trials: Vec<GapTrial>, n_users: usize) -> GapReport {
    let n = trials.len().max(1) as f64;
    let mut hist_uspa = vec![0; n_users + 1];
    let mut hist_oracle = vec![0; n_users + 1];
    let (mut abs_sum, mut rel_sum, mut max_rel, mut better) = (0.0, 0.0, f64::NEG_INFINITY, 0usize);
    let mut shortfall_sum = 0.0;
    for t in &trials {
        let gap = t.wsr_oracle - t.wsr_uspa;
        let rel = if t.wsr_oracle > 0.0 { gap / t.wsr_oracle } else { 0.0 };
        abs_sum += gap;
        rel_sum += rel;
        max_rel = max_rel.max(rel);
        if gap > 0.0 {
            better += 1;
            shortfall_sum += gap / t.wsr_oracle;
        }
        hist_uspa[t.n_sel_uspa.min(n_users)] += 1;
        hist_oracle[t.n_sel_oracle.min(n_users)] += 1;
    }
    let t_uspa: Vec<u64> = trials.iter().map(|t| t.t_uspa_ns).collect();
    let t_oracle: Vec<u64> = trials.iter().map(|t| t.t_oracle_ns).collect();
    let (median_t_uspa_ns, median_t_oracle_ns) = (median_u64(&t_uspa), median_u64(&t_oracle));
    GapReport {
        mean_abs_gap: abs_sum / n,
        mean_rel_gap: rel_sum / n,
        max_rel_gap: if trials.is_empty() { 0.0 } else { max_rel },
        mean_rel_shortfall: shortfall_sum / n,
        oracle_better_fraction: better as f64 / n,
        hist_uspa,
        hist_oracle,
        median_t_uspa_ns,
        median_t_oracle_ns,
        timing_ratio_oracle_over_uspa: if median_t_uspa_ns > 0 {
            median_t_oracle_ns as f64 / median_t_uspa_ns as f64
        } else {
            0.0
        },
        trials,
    }
}
