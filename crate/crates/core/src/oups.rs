//! Opportunistic user and power scheduling (OUPS).
//!
//! Minimum average rate requirements are dualised. Each slot the scheduler
//! solves the instantaneous problem with effective weights `w_i + lambda_i`
//! and then moves the multipliers along the stochastic subgradient:
//!
//! ```text
//! lambda_i <- max(0, lambda_i - step_t * (R_i(t) - Rbar_i))
//! ```
//!
//! A user falling short of its requirement gains weight; a user above it
//! loses weight until its multiplier hits zero.

use std::time::Instant;

use crate::baselines::oma_allocate;
use crate::channel::{ChannelState, FadingChannel, FadingParams, UserProfile};
use crate::oracle::{grid_q2, GridSpec};
use crate::rate::{rates, weighted_sum, Allocation, RateVector};
use crate::uspa::{uspa_allocate, EffectiveWeights};
use crate::{Error, Result};

/// Lagrange multipliers and running rate totals.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    lambda: Vec<f64>,
    slots: u64,
    cum_rate: Vec<f64>,
}

impl DualState {
    /// All multipliers start at zero.
    pub fn new(num_users: usize) -> Self {
        Self {
            lambda: vec![0.0; num_users],
            slots: 0,
            cum_rate: vec![0.0; num_users],
        }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Number of slots folded in so far.
    pub fn slots(&self) -> u64 {
        self.slots
    }

    pub fn cum_rates(&self) -> &[f64] {
        &self.cum_rate
    }

    /// `cum_rate / slots`; zeros before the first slot.
    pub fn avg_rates(&self) -> Vec<f64> {
        if self.slots == 0 {
            return vec![0.0; self.cum_rate.len()];
        }
        let t = self.slots as f64;
        self.cum_rate.iter().map(|c| c / t).collect()
    }
}

/// Step size sequence for the multiplier update.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    /// `zeta0 / t`.
    Harmonic { zeta0: f64 },
    Constant { zeta: f64 },
    /// Explicit per-slot values; slots past the end reuse the last value.
    Custom(Vec<f64>),
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Harmonic { zeta0: 1.0 }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            StepSchedule::Harmonic { zeta0 } if !(zeta0.is_finite() && *zeta0 > 0.0) => Err(
                Error::InvalidInput(format!("harmonic zeta0 must be positive, got {zeta0}")),
            ),
            StepSchedule::Constant { zeta } if !ok(*zeta) => Err(Error::InvalidInput(format!(
                "constant step must be nonnegative, got {zeta}"
            ))),
            StepSchedule::Custom(values) if values.is_empty() || !values.iter().all(|&v| ok(v)) => {
                Err(Error::InvalidInput(
                    "custom steps must be a nonempty list of nonnegative values".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Step for slot `t` (1-based).
    pub fn step(&self, t: u64) -> f64 {
        let t = t.max(1);
        match self {
            StepSchedule::Harmonic { zeta0 } => zeta0 / t as f64,
            StepSchedule::Constant { zeta } => *zeta,
            StepSchedule::Custom(values) => {
                let idx = usize::try_from(t - 1).unwrap_or(usize::MAX).min(values.len() - 1);
                values[idx]
            }
        }
    }
}

/// `w_i + lambda_i`.
pub fn effective_weights(profiles: &[UserProfile], dual: &DualState) -> Result<EffectiveWeights> {
    let w: Vec<f64> = profiles.iter().map(|p| p.weight).collect();
    EffectiveWeights::combine(&w, dual.lambda())
}

/// Projected stochastic subgradient step on the multipliers, plus the
/// running-rate bookkeeping.
pub fn dual_update(
    dual: &DualState,
    realized: &RateVector,
    requirements: &[f64],
    step: f64,
) -> Result<DualState> {
    let n = dual.lambda.len();
    if realized.0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "realized rates",
            got: realized.0.len(),
            expected: n,
        });
    }
    if requirements.len() != n {
        return Err(Error::DimensionMismatch {
            what: "rate requirements",
            got: requirements.len(),
            expected: n,
        });
    }
    if !(step.is_finite() && step >= 0.0) {
        return Err(Error::InvalidInput(format!("step must be nonnegative, got {step}")));
    }
    let lambda = dual
        .lambda
        .iter()
        .zip(&realized.0)
        .zip(requirements)
        .map(|((l, r), rbar)| (l - step * (r - rbar)).max(0.0))
        .collect();
    let cum_rate = dual.cum_rate.iter().zip(&realized.0).map(|(c, r)| c + r).collect();
    Ok(DualState {
        lambda,
        slots: dual.slots + 1,
        cum_rate,
    })
}

/// Per-slot allocation strategy plugged into the scheduler.
pub trait Allocator: Send + Sync {
    fn name(&self) -> &'static str;

    fn allocate(
        &self,
        channel: &ChannelState,
        weights: &EffectiveWeights,
        pmax: f64,
    ) -> Result<Allocation>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UspaAllocator;

impl Allocator for UspaAllocator {
    fn name(&self) -> &'static str {
        "uspa"
    }

    fn allocate(&self, channel: &ChannelState, weights: &EffectiveWeights, pmax: f64) -> Result<Allocation> {
        uspa_allocate(channel, weights, pmax)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleAllocator(pub GridSpec);

impl Allocator for OracleAllocator {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn allocate(&self, channel: &ChannelState, weights: &EffectiveWeights, pmax: f64) -> Result<Allocation> {
        Ok(grid_q2(channel, weights, pmax, &self.0)?.allocation)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OmaAllocator;

impl Allocator for OmaAllocator {
    fn name(&self) -> &'static str {
        "oma"
    }

    fn allocate(&self, channel: &ChannelState, weights: &EffectiveWeights, pmax: f64) -> Result<Allocation> {
        oma_allocate(channel, weights, pmax)
    }
}

/// Everything needed to simulate one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub users: Vec<UserProfile>,
    /// Power budget, watts.
    pub pmax: f64,
    pub fading: FadingParams,
    pub slots: u64,
    pub step: StepSchedule,
    pub trial: u32,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        crate::channel::validate_profiles(&self.users)?;
        self.fading.validate()?;
        self.step.validate()?;
        if !(self.pmax > 0.0 && self.pmax.is_finite()) {
            return Err(Error::InvalidInput(format!("power budget must be positive, got {}", self.pmax)));
        }
        if self.slots == 0 {
            return Err(Error::InvalidInput("at least one slot is required".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.weight).collect()
    }

    pub fn requirements(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.min_avg_rate).collect()
    }
}

/// One scheduled slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub trial: u32,
    pub slot: u64,
    pub selected: Vec<usize>,
    pub powers: Vec<f64>,
    pub rates: Vec<f64>,
    /// Multipliers that produced this slot's decision.
    pub lambda: Vec<f64>,
    /// Weighted sum rate with the static weights.
    pub wsr: f64,
}

/// Receives every slot of a run, in order.
pub trait SlotSink {
    fn record(&mut self, record: &SlotRecord) -> Result<()>;
}

impl SlotSink for () {
    fn record(&mut self, _: &SlotRecord) -> Result<()> {
        Ok(())
    }
}

impl SlotSink for Vec<SlotRecord> {
    fn record(&mut self, record: &SlotRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Running averages after `slot` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub slot: u64,
    pub avg_rates: Vec<f64>,
    /// Multipliers after the update at `slot`.
    pub lambda: Vec<f64>,
    pub avg_wsr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub slots: u64,
    pub avg_wsr: f64,
    pub avg_rates: Vec<f64>,
    /// `avg_rate_i - Rbar_i`.
    pub qos_slack: Vec<f64>,
    pub final_lambda: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    /// Median wall-clock time of one allocator call.
    pub median_alloc_ns: u64,
}

/// Powers of ten up to `slots`, plus `slots` itself.
pub fn checkpoint_slots(slots: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut t = 1u64;
    while t <= slots {
        out.push(t);
        match t.checked_mul(10) {
            Some(next) => t = next,
            None => break,
        }
    }
    if out.last() != Some(&slots) && slots > 0 {
        out.push(slots);
    }
    out
}

/// Outcome of a single scheduled slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub allocation: Allocation,
    pub rates: RateVector,
    pub wsr: f64,
    pub alloc_ns: u64,
}

/// Slot-by-slot scheduler state, for callers that supply their own channels.
#[derive(Debug, Clone)]
pub struct Scheduler {
    users: Vec<UserProfile>,
    weights: Vec<f64>,
    requirements: Vec<f64>,
    pmax: f64,
    step: StepSchedule,
    dual: DualState,
}

impl Scheduler {
    pub fn new(users: &[UserProfile], pmax: f64, step: StepSchedule) -> Self {
        Self {
            weights: users.iter().map(|u| u.weight).collect(),
            requirements: users.iter().map(|u| u.min_avg_rate).collect(),
            dual: DualState::new(users.len()),
            users: users.to_vec(),
            pmax,
            step,
        }
    }

    pub fn dual(&self) -> &DualState {
        &self.dual
    }

    /// Allocates for `channel`, then updates the multipliers.
    pub fn step(&mut self, channel: &ChannelState, allocator: &dyn Allocator) -> Result<SlotOutcome> {
        let weights = effective_weights(&self.users, &self.dual)?;
        let start = Instant::now();
        let allocation = allocator.allocate(channel, &weights, self.pmax)?;
        let alloc_ns = start.elapsed().as_nanos() as u64;
        let realized = rates(&allocation, channel)?;
        if let Some(user) = realized.0.iter().position(|r| !r.is_finite()) {
            return Err(Error::NonFiniteRate {
                user,
                slot: channel.slot,
            });
        }
        let wsr = weighted_sum(&realized, &self.weights)?;
        let t = self.dual.slots() + 1;
        self.dual = dual_update(&self.dual, &realized, &self.requirements, self.step.step(t))?;
        Ok(SlotOutcome {
            allocation,
            rates: realized,
            wsr,
            alloc_ns,
        })
    }
}

/// Runs one trial of `scenario` with `allocator`, streaming every slot to
/// `sink`.
pub fn run(scenario: &Scenario, allocator: &dyn Allocator, sink: &mut dyn SlotSink) -> Result<Summary> {
    scenario.validate()?;
    let mut channel = FadingChannel::new(&scenario.users, &scenario.fading, scenario.trial)?;
    let mut scheduler = Scheduler::new(&scenario.users, scenario.pmax, scenario.step.clone());
    let marks = checkpoint_slots(scenario.slots);
    let mut next_mark = marks.iter().copied().peekable();
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut timings = Vec::with_capacity(scenario.slots as usize);
    let mut cum_wsr = 0.0;

    for _ in 0..scenario.slots {
        let state = channel.next_slot()?;
        let lambda = scheduler.dual().lambda().to_vec();
        let outcome = scheduler.step(&state, allocator)?;
        timings.push(outcome.alloc_ns);
        cum_wsr += outcome.wsr;
        sink.record(&SlotRecord {
            trial: scenario.trial,
            slot: state.slot,
            selected: outcome.allocation.selected_users(),
            powers: outcome.allocation.powers,
            rates: outcome.rates.0,
            lambda,
            wsr: outcome.wsr,
        })?;
        if next_mark.peek() == Some(&state.slot) {
            next_mark.next();
            let dual = scheduler.dual();
            checkpoints.push(Checkpoint {
                slot: state.slot,
                avg_rates: dual.avg_rates(),
                lambda: dual.lambda().to_vec(),
                avg_wsr: cum_wsr / state.slot as f64,
            });
        }
    }

    let dual = scheduler.dual();
    let avg_rates = dual.avg_rates();
    let qos_slack = avg_rates
        .iter()
        .zip(scenario.users.iter())
        .map(|(r, u)| r - u.min_avg_rate)
        .collect();
    timings.sort_unstable();
    Ok(Summary {
        slots: scenario.slots,
        avg_wsr: cum_wsr / scenario.slots as f64,
        avg_rates,
        qos_slack,
        final_lambda: dual.lambda().to_vec(),
        checkpoints,
        median_alloc_ns: timings[timings.len() / 2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(id: usize, distance_m: f64, rbar: f64) -> UserProfile {
        UserProfile {
            id,
            weight: 1.0,
            min_avg_rate: rbar,
            distance_m,
            noise_power: crate::dbm_to_watts(-104.0),
        }
    }

    fn scenario(users: Vec<UserProfile>, slots: u64) -> Scenario {
        Scenario {
            users,
            pmax: crate::dbm_to_watts(43.0),
            fading: FadingParams::default(),
            slots,
            step: StepSchedule::default(),
            trial: 0,
        }
    }

    #[test]
    fn zero_multipliers_give_static_weights() {
        let users = vec![user(0, 50.0, 1.0), user(1, 90.0, 2.0)];
        let w = effective_weights(&users, &DualState::new(2)).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn multipliers_add_to_zero_weights() {
        let mut users = vec![user(0, 50.0, 1.0), user(1, 90.0, 2.0)];
        users.iter_mut().for_each(|u| u.weight = 0.0);
        let dual = DualState {
            lambda: vec![1.0, 2.0],
            slots: 3,
            cum_rate: vec![0.0; 2],
        };
        assert_eq!(effective_weights(&users, &dual).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn satisfied_user_keeps_zero_multiplier() {
        let d = dual_update(&DualState::new(1), &RateVector(vec![3.0]), &[2.0], 1.0).unwrap();
        assert_eq!(d.lambda(), &[0.0]);
        assert_eq!(d.slots(), 1);
        assert_eq!(d.avg_rates(), vec![3.0]);
    }

    #[test]
    fn starved_user_multiplier_grows() {
        let dual = DualState {
            lambda: vec![1.0],
            slots: 0,
            cum_rate: vec![0.0],
        };
        let d = dual_update(&dual, &RateVector(vec![0.0]), &[2.0], 0.5).unwrap();
        assert_eq!(d.lambda(), &[2.0]);
    }

    #[test]
    fn update_rejects_bad_inputs() {
        let dual = DualState::new(2);
        assert!(dual_update(&dual, &RateVector(vec![1.0]), &[0.0, 0.0], 1.0).is_err());
        assert!(dual_update(&dual, &RateVector(vec![1.0, 1.0]), &[0.0], 1.0).is_err());
        assert!(dual_update(&dual, &RateVector(vec![1.0, 1.0]), &[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn harmonic_schedule_is_literal() {
        let s = StepSchedule::Harmonic { zeta0: 1.0 };
        for t in 1..=1000u64 {
            assert_eq!(s.step(t), 1.0 / t as f64);
        }
        let s = StepSchedule::Harmonic { zeta0: 0.3 };
        assert_eq!(s.step(7), 0.3 / 7.0);
    }

    #[test]
    fn custom_schedule_reuses_last_value() {
        let s = StepSchedule::Custom(vec![0.5, 0.25]);
        assert_eq!((s.step(1), s.step(2), s.step(3), s.step(100)), (0.5, 0.25, 0.25, 0.25));
        assert!(StepSchedule::Custom(vec![]).validate().is_err());
        assert!(StepSchedule::Harmonic { zeta0: 0.0 }.validate().is_err());
        assert!(StepSchedule::Constant { zeta: -1.0 }.validate().is_err());
    }

    #[test]
    fn checkpoints() {
        assert_eq!(checkpoint_slots(1), vec![1]);
        assert_eq!(checkpoint_slots(10_000), vec![1, 10, 100, 1000, 10_000]);
        assert_eq!(checkpoint_slots(250), vec![1, 10, 100, 250]);
    }

    #[test]
    fn first_slot_matches_direct_allocation() {
        let users = vec![user(0, 40.0, 2.0), user(1, 200.0, 2.0), user(2, 450.0, 4.0)];
        let sc = scenario(users.clone(), 1);
        let mut log: Vec<SlotRecord> = Vec::new();
        run(&sc, &UspaAllocator, &mut log).unwrap();

        let mut ch = FadingChannel::new(&users, &sc.fading, 0).unwrap();
        let state = ch.next_slot().unwrap();
        let direct = uspa_allocate(&state, &EffectiveWeights::new(vec![1.0; 3]).unwrap(), sc.pmax).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].powers, direct.powers);
        assert_eq!(log[0].lambda, vec![0.0; 3]);
    }

    #[test]
    fn single_user_without_requirement() {
        let sc = scenario(vec![user(0, 100.0, 0.0)], 200);
        let mut log: Vec<SlotRecord> = Vec::new();
        let summary = run(&sc, &UspaAllocator, &mut log).unwrap();
        assert!(log.iter().all(|r| r.lambda == vec![0.0] && r.powers == vec![sc.pmax]));
        assert_eq!(summary.final_lambda, vec![0.0]);
    }

    #[test]
    fn summary_averages_are_exact() {
        let users = vec![user(0, 60.0, 1.0), user(1, 300.0, 3.0)];
        let sc = scenario(users, 500);
        let mut log: Vec<SlotRecord> = Vec::new();
        let summary = run(&sc, &OmaAllocator, &mut log).unwrap();
        for i in 0..2 {
            let total: f64 = log.iter().map(|r| r.rates[i]).sum();
            assert!((summary.avg_rates[i] - total / 500.0).abs() < 1e-12);
        }
        let wsr: f64 = log.iter().map(|r| r.wsr).sum::<f64>() / 500.0;
        assert!((summary.avg_wsr - wsr).abs() < 1e-12);
        assert_eq!(summary.checkpoints.last().unwrap().slot, 500);
        assert!(log.iter().all(|r| r.selected.len() == 1));
    }

    #[test]
    fn runs_are_deterministic_and_multipliers_nonnegative() {
        let users = vec![user(0, 20.0, 2.0), user(1, 260.0, 2.0), user(2, 500.0, 4.0)];
        let sc = scenario(users, 300);
        let mut a: Vec<SlotRecord> = Vec::new();
        let mut b: Vec<SlotRecord> = Vec::new();
        run(&sc, &UspaAllocator, &mut a).unwrap();
        run(&sc, &UspaAllocator, &mut b).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.lambda.iter().all(|&l| l >= 0.0)));
    }

    #[test]
    fn oracle_allocator_runs() {
        let users = vec![user(0, 30.0, 1.0), user(1, 200.0, 1.0)];
        let sc = scenario(users, 5);
        let alloc = OracleAllocator(GridSpec {
            resolution: 51,
            max_subset_size: 2,
        });
        let summary = run(&sc, &alloc, &mut ()).unwrap();
        assert_eq!(summary.slots, 5);
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut sc = scenario(vec![user(0, 30.0, 1.0)], 0);
        assert!(run(&sc, &UspaAllocator, &mut ()).is_err());
        sc.slots = 1;
        sc.pmax = 0.0;
        assert!(run(&sc, &UspaAllocator, &mut ()).is_err());
    }
}
