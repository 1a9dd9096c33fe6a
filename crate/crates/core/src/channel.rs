//! Block-fading channel generation.
//!
//! Each user sees a large-scale attenuation (3GPP-style distance path loss plus
//! lognormal shadowing) and, per slot, an independent Rayleigh small-scale
//! coefficient with unit mean power. The scheduler only ever needs the
//! noise-to-channel ratio `ncr = noise_power / |h|^2`.
//!
//! Randomness is drawn from per-user ChaCha streams keyed by
//! `(seed, trial, user)`, so a user's trace does not depend on how many other
//! users share the scenario.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Stream id reserved for per-trial draws that do not belong to a user.
pub const TRIAL_STREAM: u32 = u32::MAX;

/// Static per-user parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub id: usize,
    /// Weight in the long-run weighted sum rate.
    pub weight: f64,
    /// Minimum long-run average rate, bits/s/Hz.
    pub min_avg_rate: f64,
    /// Distance to the base station, metres.
    pub distance_m: f64,
    /// Receiver noise power, watts.
    pub noise_power: f64,
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "user {}: weight must be finite and nonnegative, got {}",
                self.id, self.weight
            )));
        }
        if !(self.min_avg_rate.is_finite() && self.min_avg_rate >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "user {}: minimum average rate must be finite and nonnegative, got {}",
                self.id, self.min_avg_rate
            )));
        }
        if !(self.distance_m.is_finite() && self.distance_m > 0.0) {
            return Err(Error::InvalidInput(format!(
                "user {}: distance must be positive, got {}",
                self.id, self.distance_m
            )));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(Error::InvalidInput(format!(
                "user {}: noise power must be positive, got {}",
                self.id, self.noise_power
            )));
        }
        Ok(())
    }
}

/// Checks a whole user set: ids match positions, each profile is valid and at
/// least one weight is positive.
pub fn validate_profiles(profiles: &[UserProfile]) -> Result<()> {
    if profiles.is_empty() {
        return Err(Error::InvalidInput("at least one user is required".into()));
    }
    for (i, p) in profiles.iter().enumerate() {
        if p.id != i {
            return Err(Error::InvalidInput(format!(
                "user at position {i} has id {}",
                p.id
            )));
        }
        p.validate()?;
    }
    if !profiles.iter().any(|p| p.weight > 0.0) {
        return Err(Error::InvalidInput("at least one weight must be positive".into()));
    }
    Ok(())
}

/// When the lognormal shadowing term is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShadowingMode {
    /// Drawn once per trial together with the path loss.
    #[default]
    PerTrial,
    /// Redrawn every slot along with the small-scale fading.
    PerSlot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FadingParams {
    /// Path loss at 1 km, dB.
    pub pathloss_const_db: f64,
    /// Path loss slope, dB per decade of distance.
    pub pathloss_slope_db: f64,
    /// Standard deviation of the lognormal shadowing, dB.
    pub shadowing_sigma_db: f64,
    pub shadowing: ShadowingMode,
    pub rng_seed: u64,
}

impl Default for FadingParams {
    fn default() -> Self {
        Self {
            pathloss_const_db: 128.1,
            pathloss_slope_db: 37.6,
            shadowing_sigma_db: 8.0,
            shadowing: ShadowingMode::PerTrial,
            rng_seed: 0,
        }
    }
}

impl FadingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.shadowing_sigma_db.is_finite() && self.shadowing_sigma_db >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "shadowing standard deviation must be nonnegative, got {}",
                self.shadowing_sigma_db
            )));
        }
        if !self.pathloss_const_db.is_finite() || !self.pathloss_slope_db.is_finite() {
            return Err(Error::InvalidInput("path loss parameters must be finite".into()));
        }
        Ok(())
    }

    /// Deterministic path loss in dB at `distance_m` metres.
    pub fn pathloss_db(&self, distance_m: f64) -> f64 {
        self.pathloss_const_db + self.pathloss_slope_db * (distance_m / 1000.0).log10()
    }
}

/// Channel realisation for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub slot: u64,
    /// `|h_i|^2` per user.
    pub gain: Vec<f64>,
    /// Noise-to-channel ratio `noise_power / |h_i|^2` per user, watts.
    pub ncr: Vec<f64>,
}

impl ChannelState {
    pub fn new(slot: u64, gain: Vec<f64>, noise_power: &[f64]) -> Result<Self> {
        if gain.len() != noise_power.len() {
            return Err(Error::DimensionMismatch {
                what: "noise power",
                got: noise_power.len(),
                expected: gain.len(),
            });
        }
        let ncr: Vec<f64> = gain.iter().zip(noise_power).map(|(g, s)| s / g).collect();
        if let Some(i) = ncr.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "user {i}: NCR {} is not finite and positive",
                ncr[i]
            )));
        }
        Ok(Self { slot, gain, ncr })
    }

    /// Builds a state directly from NCRs, with unit channel gain (so the NCR is
    /// also the noise power).
    pub fn from_ncr(slot: u64, ncr: Vec<f64>) -> Result<Self> {
        let gain = vec![1.0; ncr.len()];
        Self::new(slot, gain, &ncr)
    }

    pub fn num_users(&self) -> usize {
        self.ncr.len()
    }
}

/// Independent stream for `(seed, trial, stream)`.
pub fn stream_rng(seed: u64, trial: u32, stream: u32) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(trial) << 32) | u64::from(stream));
    rng
}

/// Draws the linear large-scale power attenuation for one user.
///
/// One standard normal is always consumed, even when shadowing is disabled, so
/// that streams stay aligned across configurations.
pub fn draw_large_scale<R: Rng + ?Sized>(
    profile: &UserProfile,
    params: &FadingParams,
    rng: &mut R,
) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    large_scale_from_normal(profile.distance_m, params, z)
}

/// Attenuation for a given standard-normal shadowing draw `z`.
pub fn large_scale_from_normal(distance_m: f64, params: &FadingParams, z: f64) -> f64 {
    let loss_db = params.pathloss_db(distance_m) + params.shadowing_sigma_db * z;
    10f64.powf(-loss_db / 10.0)
}

/// `|g|^2` for a unit-variance circularly-symmetric complex Gaussian `g`,
/// i.e. an Exponential(1) variate. Exact zeros are redrawn.
pub fn draw_small_scale<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    loop {
        let re: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
        let im: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
        let g = re * re + im * im;
        if g > 0.0 {
            return g;
        }
    }
}

/// Draws one slot: each user's gain is its large-scale attenuation times a
/// fresh small-scale draw from that user's own stream.
pub fn draw_slot<R: Rng>(
    slot: u64,
    profiles: &[UserProfile],
    large_scale: &[f64],
    streams: &mut [R],
) -> Result<ChannelState> {
    if large_scale.len() != profiles.len() {
        return Err(Error::DimensionMismatch {
            what: "large-scale attenuation",
            got: large_scale.len(),
            expected: profiles.len(),
        });
    }
    if streams.len() != profiles.len() {
        return Err(Error::DimensionMismatch {
            what: "random streams",
            got: streams.len(),
            expected: profiles.len(),
        });
    }
    let gain = large_scale
        .iter()
        .zip(streams.iter_mut())
        .map(|(l, rng)| l * draw_small_scale(rng))
        .collect();
    let noise: Vec<f64> = profiles.iter().map(|p| p.noise_power).collect();
    ChannelState::new(slot, gain, &noise)
}

/// Stateful per-trial channel generator.
#[derive(Debug, Clone)]
pub struct FadingChannel {
    profiles: Vec<UserProfile>,
    params: FadingParams,
    large_scale: Vec<f64>,
    streams: Vec<ChaCha12Rng>,
    slot: u64,
}

impl FadingChannel {
    pub fn new(profiles: &[UserProfile], params: &FadingParams, trial: u32) -> Result<Self> {
        params.validate()?;
        for p in profiles {
            p.validate()?;
        }
        let mut streams: Vec<ChaCha12Rng> = profiles
            .iter()
            .map(|p| stream_rng(params.rng_seed, trial, p.id as u32))
            .collect();
        let large_scale = profiles
            .iter()
            .zip(streams.iter_mut())
            .map(|(p, rng)| draw_large_scale(p, params, rng))
            .collect();
        Ok(Self {
            profiles: profiles.to_vec(),
            params: params.clone(),
            large_scale,
            streams,
            slot: 0,
        })
    }

    pub fn large_scale(&self) -> &[f64] {
        &self.large_scale
    }

    /// Advances to the next slot (the first call yields slot 1).
    pub fn next_slot(&mut self) -> Result<ChannelState> {
        self.slot += 1;
        if self.params.shadowing == ShadowingMode::PerSlot {
            for (i, p) in self.profiles.iter().enumerate() {
                self.large_scale[i] = draw_large_scale(p, &self.params, &mut self.streams[i]);
            }
        }
        draw_slot(self.slot, &self.profiles, &self.large_scale, &mut self.streams)
    }
}
