//! Orthogonal multiple access baseline: one user per slot at full power.

use crate::channel::ChannelState;
use crate::rate::Allocation;
use crate::uspa::EffectiveWeights;
use crate::{log2_1p, Error, Result};

/// Selects the user with the highest weighted full-power rate
/// `w_i * log2(1 + pmax / ncr_i)`, lowest index on ties.
pub fn oma_allocate(
    channel: &ChannelState,
    weights: &EffectiveWeights,
    pmax: f64,
) -> Result<Allocation> {
    let n = channel.num_users();
    if n == 0 {
        return Err(Error::InvalidInput("no users".into()));
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            what: "effective weights",
            got: weights.len(),
            expected: n,
        });
    }
    if !(pmax > 0.0 && pmax.is_finite()) {
        return Err(Error::InvalidInput(format!("power budget must be positive, got {pmax}")));
    }
    let w = weights.as_slice();
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, &ncr) in channel.ncr.iter().enumerate() {
        let value = w[i] * log2_1p(pmax / ncr);
        if value > best_value {
            best = i;
            best_value = value;
        }
    }
    Ok(Allocation::single(n, best, pmax))
}
