//! Joint user selection, power allocation and opportunistic scheduling for
//! downlink power-domain NOMA over block-fading channels.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: path loss, lognormal shadowing and Rayleigh block fading,
//!   producing per-slot noise-to-channel ratios (NCRs).
//! - [`rate`]: achievable rates under successive interference cancellation.
//! - [`uspa`]: the linear-time per-slot heuristic (last-SIC-user enumeration
//!   with a closed-form two-user power split).
//! - [`oracle`]: independent reference solvers used for verification.
//! - [`baselines`]: single-user full-power OMA.
//! - [`oups`]: the outer scheduler that turns minimum average rate
//!   requirements into per-slot effective weights via a projected stochastic
//!   subgradient update of the Lagrange multipliers.
//!
//! All quantities are in linear units (watts, bits/s/Hz).

pub mod baselines;
pub mod channel;
mod error;
pub mod oracle;
pub mod oups;
pub mod rate;
pub mod uspa;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Converts a level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a power in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// `log2(1 + x)`, accurate for small `x`.
#[inline]
pub(crate) fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_conversions() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(43.0) - 19.952_623_149_688_8).abs() < 1e-12);
        assert!((dbm_to_watts(-104.0) / 10f64.powf(-13.4) - 1.0).abs() < 1e-12);
        assert!((watts_to_dbm(dbm_to_watts(-17.25)) + 17.25).abs() < 1e-12);
    }
}
