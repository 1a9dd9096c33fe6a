//! Achievable rates under successive interference cancellation.
//!
//! A selected user decodes and cancels every co-scheduled user whose NCR is at
//! least its own, then treats the users with a strictly smaller NCR as noise:
//!
//! ```text
//! R_i = q_i * log2(1 + p_i / (sum_{j: ncr_j < ncr_i} p_j + ncr_i))
//! ```
//!
//! Exact NCR ties are broken by user index: among equal NCRs the lower index is
//! treated as the weaker user. [`sic_order`] and [`rates`] share that rule.

use std::cmp::Ordering;

use crate::channel::ChannelState;
use crate::{log2_1p, Error, Result};

/// Relative slack allowed on the sum-power budget.
pub const POWER_BUDGET_SLACK: f64 = 1e-9;

/// Per-slot decision: transmit powers and selection flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub powers: Vec<f64>,
    pub selected: Vec<bool>,
}

impl Allocation {
    /// Checks the structural invariants and builds the allocation.
    pub fn new(powers: Vec<f64>, selected: Vec<bool>) -> Result<Self> {
        let alloc = Self { powers, selected };
        alloc.validate()?;
        Ok(alloc)
    }

    /// Selection follows power: a user is selected iff it gets positive power.
    pub fn from_powers(powers: Vec<f64>) -> Self {
        let selected = powers.iter().map(|&p| p > 0.0).collect();
        Self { powers, selected }
    }

    /// All power to one user.
    pub fn single(num_users: usize, user: usize, power: f64) -> Self {
        let mut powers = vec![0.0; num_users];
        powers[user] = power;
        Self::from_powers(powers)
    }

    pub fn num_users(&self) -> usize {
        self.powers.len()
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    pub fn selected_users(&self) -> Vec<usize> {
        self.selected
            .iter()
            .enumerate()
            .filter_map(|(i, &q)| q.then_some(i))
            .collect()
    }

    pub fn num_selected(&self) -> usize {
        self.selected.iter().filter(|&&q| q).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.powers.len() != self.selected.len() {
            return Err(Error::DimensionMismatch {
                what: "selection vector",
                got: self.selected.len(),
                expected: self.powers.len(),
            });
        }
        for (i, (&p, &q)) in self.powers.iter().zip(&self.selected).enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidAllocation(format!(
                    "user {i} has power {p}"
                )));
            }
            if q != (p > 0.0) {
                return Err(Error::InvalidAllocation(format!(
                    "user {i}: selected={q} but power={p}"
                )));
            }
        }
        Ok(())
    }

    /// Structural checks plus `sum(p) <= pmax` up to [`POWER_BUDGET_SLACK`].
    pub fn validate_budget(&self, pmax: f64) -> Result<()> {
        self.validate()?;
        let total = self.total_power();
        if total > pmax * (1.0 + POWER_BUDGET_SLACK) {
            return Err(Error::InvalidAllocation(format!(
                "total power {total} exceeds budget {pmax}"
            )));
        }
        Ok(())
    }
}

/// Per-user rates in bits/s/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector(pub Vec<f64>);

impl RateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[inline]
fn compare_weaker_first(ncr: &[f64], a: usize, b: usize) -> Ordering {
    ncr[b].total_cmp(&ncr[a]).then(a.cmp(&b))
}

/// User indices sorted by strictly decreasing NCR (weakest first, the last
/// entry decodes everyone else); ties by ascending index.
pub fn sic_order(channel: &ChannelState) -> Vec<usize> {
    let mut order: Vec<usize> = (0..channel.num_users()).collect();
    order.sort_unstable_by(|&a, &b| compare_weaker_first(&channel.ncr, a, b));
    order
}

/// Rates achieved by `alloc` on `channel`.
pub fn rates(alloc: &Allocation, channel: &ChannelState) -> Result<RateVector> {
    alloc.validate()?;
    if alloc.num_users() != channel.num_users() {
        return Err(Error::DimensionMismatch {
            what: "allocation",
            got: alloc.num_users(),
            expected: channel.num_users(),
        });
    }
    let mut out = vec![0.0; alloc.num_users()];
    // Walk from the strongest user up, accumulating the power it leaves as
    // interference for everyone weaker.
    let mut interference = 0.0;
    for &i in sic_order(channel).iter().rev() {
        if alloc.selected[i] {
            let p = alloc.powers[i];
            out[i] = log2_1p(p / (interference + channel.ncr[i]));
            interference += p;
        }
    }
    Ok(RateVector(out))
}

/// `sum_i weights_i * rates_i`.
pub fn weighted_sum(rates: &RateVector, weights: &[f64]) -> Result<f64> {
    if rates.0.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            what: "weights",
            got: weights.len(),
            expected: rates.0.len(),
        });
    }
    Ok(rates.0.iter().zip(weights).map(|(r, w)| r * w).sum())
}
