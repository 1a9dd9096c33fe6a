//! Per-slot user selection and power allocation (USPA).
//!
//! For every candidate last-SIC user `k` (the selected user with the smallest
//! NCR, who decodes and removes everyone else), at most one companion is
//! useful: the user with the largest effective weight among those with a
//! larger NCR than `k`. The two-user power split then has a closed form, so
//! evaluating all `k` costs one pass over the users after sorting by NCR.

use crate::channel::ChannelState;
use crate::rate::{sic_order, Allocation};
use crate::{log2_1p, Error, Result};

/// Per-user effective weights `w_i + lambda_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveWeights(Vec<f64>);

impl EffectiveWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "effective weight of user {i} is {}",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    /// `weights + multipliers`, elementwise.
    pub fn combine(weights: &[f64], multipliers: &[f64]) -> Result<Self> {
        if weights.len() != multipliers.len() {
            return Err(Error::DimensionMismatch {
                what: "multipliers",
                got: multipliers.len(),
                expected: weights.len(),
            });
        }
        Self::new(weights.iter().zip(multipliers).map(|(w, l)| w + l).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Same weights multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|w| w * factor).collect())
    }
}

/// The best allocation found for one choice of last-SIC user.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDecision {
    pub last_sic: usize,
    /// `None` only when `last_sic` has the largest NCR of all users.
    pub companion: Option<usize>,
    pub p_last: f64,
    pub p_companion: f64,
    /// Weighted sum rate of the pair, bits/s/Hz.
    pub wsr: f64,
}

impl PairDecision {
    pub fn to_allocation(&self, num_users: usize) -> Allocation {
        let mut powers = vec![0.0; num_users];
        powers[self.last_sic] = self.p_last;
        if let Some(c) = self.companion {
            powers[c] = self.p_companion;
        }
        Allocation::from_powers(powers)
    }
}

/// Companion of the user at position `pos` of a weakest-first SIC order: the
/// highest effective weight among the users before it, lowest index on ties.
pub fn companion(order: &[usize], pos: usize, weights: &EffectiveWeights) -> Option<usize> {
    let w = weights.as_slice();
    order[..pos]
        .iter()
        .copied()
        .reduce(|best, i| if beats(w, i, best) { i } else { best })
}

#[inline]
fn beats(w: &[f64], challenger: usize, incumbent: usize) -> bool {
    w[challenger] > w[incumbent] || (w[challenger] == w[incumbent] && challenger < incumbent)
}

/// Optimal power split between a last-SIC user and its companion under a
/// full-power budget.
///
/// Returns `(p_last, p_companion)` with `p_last + p_companion == pmax`. The
/// last-SIC user must have the strictly smaller NCR.
pub fn two_user_split(
    ncr_last: f64,
    ncr_companion: f64,
    w_last: f64,
    w_companion: f64,
    pmax: f64,
) -> Result<(f64, f64)> {
    if ncr_last.partial_cmp(&ncr_companion) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvalidOrder {
            last: ncr_last,
            companion: ncr_companion,
        });
    }
    if !(ncr_last > 0.0 && ncr_companion.is_finite()) {
        return Err(Error::InvalidInput("NCRs must be finite and positive".into()));
    }
    if !(w_companion > 0.0 && w_companion.is_finite() && w_last >= 0.0 && w_last.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "weights must be finite with a positive companion weight, got ({w_last}, {w_companion})"
        )));
    }
    if !(pmax > 0.0 && pmax.is_finite()) {
        return Err(Error::InvalidInput(format!("power budget must be positive, got {pmax}")));
    }
    Ok(split(ncr_last, ncr_companion, w_last, w_companion, pmax))
}

/// Closed-form split. Also valid for equal NCRs, where the thresholds collapse
/// to 1 and only the two boundary branches can fire.
pub(crate) fn split(ncr_last: f64, ncr_comp: f64, w_last: f64, w_comp: f64, pmax: f64) -> (f64, f64) {
    // Equal weights would zero the interior denominator; the objective is
    // increasing in p_last there.
    if w_last >= w_comp {
        return (pmax, 0.0);
    }
    let ratio = w_last / w_comp;
    let lower = ncr_last / ncr_comp;
    let upper = (pmax + ncr_last) / (pmax + ncr_comp);
    let p_last = if ratio < lower {
        0.0
    } else if ratio >= upper {
        pmax
    } else {
        let p = (w_comp * ncr_last - w_last * ncr_comp) / (w_last - w_comp);
        p.clamp(0.0, pmax)
    };
    (p_last, pmax - p_last)
}

/// Weighted sum rate of a last-SIC user and its companion, the companion
/// being interfered by `p_last`.
pub fn pair_wsr(
    ncr_last: f64,
    ncr_comp: f64,
    w_last: f64,
    w_comp: f64,
    p_last: f64,
    p_comp: f64,
) -> f64 {
    let mut wsr = w_last * log2_1p(p_last / ncr_last);
    if p_comp > 0.0 {
        wsr += w_comp * log2_1p(p_comp / (p_last + ncr_comp));
    }
    wsr
}

fn check_inputs(channel: &ChannelState, weights: &EffectiveWeights, pmax: f64) -> Result<()> {
    if channel.num_users() == 0 {
        return Err(Error::InvalidInput("no users".into()));
    }
    if weights.len() != channel.num_users() {
        return Err(Error::DimensionMismatch {
            what: "effective weights",
            got: weights.len(),
            expected: channel.num_users(),
        });
    }
    if !(pmax > 0.0 && pmax.is_finite()) {
        return Err(Error::InvalidInput(format!("power budget must be positive, got {pmax}")));
    }
    Ok(())
}

/// Evaluates every last-SIC candidate and returns the best pair decision.
///
/// Candidates with equal weighted sum rate resolve to the smaller last-SIC
/// user index.
pub fn uspa_decide(
    channel: &ChannelState,
    weights: &EffectiveWeights,
    pmax: f64,
) -> Result<PairDecision> {
    check_inputs(channel, weights, pmax)?;
    let ncr = &channel.ncr;
    let w = weights.as_slice();

    let mut best: Option<PairDecision> = None;
    // Running argmax of the effective weight over users weaker than `k`.
    let mut leader: Option<usize> = None;
    for k in sic_order(channel) {
        let candidate = match leader {
            None => PairDecision {
                last_sic: k,
                companion: None,
                p_last: pmax,
                p_companion: 0.0,
                wsr: w[k] * log2_1p(pmax / ncr[k]),
            },
            // A weightless companion adds nothing: full power to k.
            Some(c) if w[c] == 0.0 => PairDecision {
                last_sic: k,
                companion: Some(c),
                p_last: pmax,
                p_companion: 0.0,
                wsr: w[k] * log2_1p(pmax / ncr[k]),
            },
            Some(c) => {
                let (p_last, p_comp) = split(ncr[k], ncr[c], w[k], w[c], pmax);
                PairDecision {
                    last_sic: k,
                    companion: Some(c),
                    p_last,
                    p_companion: p_comp,
                    wsr: pair_wsr(ncr[k], ncr[c], w[k], w[c], p_last, p_comp),
                }
            }
        };
        let better = match &best {
            None => true,
            Some(b) => candidate.wsr > b.wsr || (candidate.wsr == b.wsr && k < b.last_sic),
        };
        if better {
            best = Some(candidate);
        }
        leader = match leader {
            Some(c) if !beats(w, k, c) => Some(c),
            _ => Some(k),
        };
    }
    // At least one user was checked above.
    Ok(best.expect("nonempty user set"))
}

/// USPA allocation for one slot.
pub fn uspa_allocate(
    channel: &ChannelState,
    weights: &EffectiveWeights,
    pmax: f64,
) -> Result<Allocation> {
    let decision = uspa_decide(channel, weights, pmax)?;
    Ok(decision.to_allocation(channel.num_users()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::{rates, weighted_sum};
    use proptest::prelude::*;

    fn ew(v: &[f64]) -> EffectiveWeights {
        EffectiveWeights::new(v.to_vec()).unwrap()
    }

    fn state(ncr: &[f64]) -> ChannelState {
        ChannelState::from_ncr(1, ncr.to_vec()).unwrap()
    }

    /// Derivative of the two-user objective in `p_last`, up to the 1/ln 2 factor.
    fn g_prime(p: f64, ncr_last: f64, ncr_comp: f64, w_last: f64, w_comp: f64) -> f64 {
        (w_last / (p + ncr_last) - w_comp / (p + ncr_comp)) / std::f64::consts::LN_2
    }

    #[test]
    fn first_in_order_has_no_companion() {
        let order = [2, 0, 1];
        assert_eq!(companion(&order, 0, &ew(&[0.3, 0.2, 0.9])), None);
    }

    #[test]
    fn companion_is_weight_argmax() {
        // Order positions coincide with indices here.
        let order = [0, 1, 2];
        assert_eq!(companion(&order, 2, &ew(&[0.2, 0.9, 0.5])), Some(1));
        assert_eq!(companion(&order, 1, &ew(&[0.2, 0.9, 0.5])), Some(0));
    }

    #[test]
    fn companion_ties_prefer_lower_index() {
        let order = [3, 1, 2, 0];
        assert_eq!(companion(&order, 3, &ew(&[0.0, 0.5, 0.1, 0.5])), Some(1));
    }

    #[test]
    fn equal_weights_give_all_power_to_last() {
        assert_eq!(two_user_split(0.1, 1.0, 0.5, 0.5, 2.0).unwrap(), (2.0, 0.0));
    }

    #[test]
    fn low_weight_ratio_gives_all_power_to_companion() {
        let (nk, nc) = (0.2, 0.8);
        let c1 = nk / nc;
        let (pk, pc) = two_user_split(nk, nc, 0.5 * c1 * 0.6, 0.6, 3.0).unwrap();
        assert_eq!((pk, pc), (0.0, 3.0));
    }

    #[test]
    fn split_rejects_wrong_order() {
        assert!(matches!(
            two_user_split(1.0, 0.5, 0.4, 0.6, 2.0),
            Err(Error::InvalidOrder { .. })
        ));
        assert!(matches!(
            two_user_split(1.0, 1.0, 0.4, 0.6, 2.0),
            Err(Error::InvalidOrder { .. })
        ));
        assert!(two_user_split(0.1, 1.0, 0.4, 0.0, 2.0).is_err());
        assert!(two_user_split(0.1, 1.0, 0.4, 0.6, 0.0).is_err());
    }

    #[test]
    fn interior_split_reference_instance() {
        // Frozen from a golden-section maximisation of the two-user objective
        // (see `oracle::golden_two_user`).
        let (pk, pc) = two_user_split(0.1, 1.0, 0.4, 0.6, 2.0).unwrap();
        assert!((pk - 1.7).abs() < 1e-12);
        assert!((pk + pc - 2.0).abs() < 1e-15);
        assert!(g_prime(pk, 0.1, 1.0, 0.4, 0.6).abs() < 1e-12);
    }

    #[test]
    fn single_user_gets_full_power() {
        let alloc = uspa_allocate(&state(&[0.7]), &ew(&[0.3]), 5.0).unwrap();
        assert_eq!(alloc.powers, vec![5.0]);
        assert_eq!(alloc.selected, vec![true]);
    }

    #[test]
    fn two_users_equal_weights_pick_best_candidate() {
        // Candidates: user 0 alone (it is the weakest, no companion), or user 1
        // as last SIC user with user 0 as companion. Equal weights push all
        // power to user 1, which also beats user 0 alone.
        let ch = state(&[2.0, 0.5]);
        let d = uspa_decide(&ch, &ew(&[1.0, 1.0]), 4.0).unwrap();
        assert_eq!(d.last_sic, 1);
        assert_eq!(d.companion, Some(0));
        assert_eq!((d.p_last, d.p_companion), (4.0, 0.0));
        let alloc = d.to_allocation(2);
        assert_eq!(alloc.selected, vec![false, true]);
        assert!((d.wsr - (1.0f64 + 8.0).log2()).abs() < 1e-14);
    }

    #[test]
    fn two_users_interior_case() {
        let ch = state(&[1.0, 0.1]);
        let d = uspa_decide(&ch, &ew(&[0.6, 0.4]), 2.0).unwrap();
        // user 0 alone: 0.6*log2(3); pair with p_last = 1.7: 0.4*log2(18) + 0.6*log2(3/2.7)
        let alone = 0.6 * 3f64.log2();
        let pair = 0.4 * 18f64.log2() + 0.6 * (3.0f64 / 2.7).log2();
        assert!(pair > alone);
        assert_eq!(d.last_sic, 1);
        assert!((d.p_last - 1.7).abs() < 1e-12);
        assert!((d.wsr - pair).abs() < 1e-12);
    }

    #[test]
    fn weightless_companion_is_ignored() {
        let ch = state(&[1.0, 0.1]);
        let d = uspa_decide(&ch, &ew(&[0.0, 0.4]), 2.0).unwrap();
        assert_eq!(d.last_sic, 1);
        assert_eq!((d.p_last, d.p_companion), (2.0, 0.0));
    }

    #[test]
    fn decision_wsr_matches_rate_model() {
        let ch = state(&[0.9, 0.05, 0.3, 2.0]);
        let weights = ew(&[0.4, 0.1, 0.3, 0.2]);
        let d = uspa_decide(&ch, &weights, 10.0).unwrap();
        let alloc = d.to_allocation(4);
        let r = rates(&alloc, &ch).unwrap();
        let wsr = weighted_sum(&r, weights.as_slice()).unwrap();
        assert!((wsr - d.wsr).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(uspa_allocate(&state(&[1.0, 2.0]), &ew(&[1.0]), 1.0).is_err());
        assert!(uspa_allocate(&state(&[1.0]), &ew(&[1.0]), -1.0).is_err());
        assert!(EffectiveWeights::new(vec![f64::NAN]).is_err());
        assert!(EffectiveWeights::new(vec![-0.1]).is_err());
    }

    fn ncr_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..1.0, n).prop_map(|v| v.into_iter().map(|e| 10f64.powf(e)).collect())
    }

    fn weight_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![1 => Just(0.0), 9 => 0.0f64..1.0], n)
    }

    proptest! {
        #[test]
        fn companion_matches_linear_scan(
            ncr in ncr_strategy(8),
            w in weight_strategy(8),
        ) {
            let ch = state(&ncr);
            let weights = ew(&w);
            let order = sic_order(&ch);
            for pos in 0..8 {
                let mut expected: Option<usize> = None;
                for &i in &order[..pos] {
                    expected = match expected {
                        None => Some(i),
                        Some(b) if w[i] > w[b] || (w[i] == w[b] && i < b) => Some(i),
                        keep => keep,
                    };
                }
                prop_assert_eq!(companion(&order, pos, &weights), expected);
            }
        }

        #[test]
        fn at_most_two_selected_and_budget_met(
            ncr in ncr_strategy(7),
            w in weight_strategy(7),
            pmax in 0.1f64..100.0,
        ) {
            let alloc = uspa_allocate(&state(&ncr), &ew(&w), pmax).unwrap();
            prop_assert!(alloc.num_selected() <= 2);
            prop_assert!(alloc.num_selected() >= 1);
            alloc.validate_budget(pmax).unwrap();
            for (p, q) in alloc.powers.iter().zip(&alloc.selected) {
                prop_assert_eq!(*q, *p > 0.0);
            }
        }

        #[test]
        fn beats_every_single_user_point(
            ncr in ncr_strategy(6),
            w in weight_strategy(6),
            pmax in 0.1f64..100.0,
        ) {
            let d = uspa_decide(&state(&ncr), &ew(&w), pmax).unwrap();
            for i in 0..6 {
                let single = w[i] * (1.0 + pmax / ncr[i]).log2();
                prop_assert!(d.wsr >= single * (1.0 - 1e-12));
            }
        }

        #[test]
        fn invariant_to_weight_scaling(
            ncr in ncr_strategy(6),
            w in weight_strategy(6),
            factor in prop_oneof![Just(2.0), Just(0.5), Just(8.0), Just(0.25)],
        ) {
            let ch = state(&ncr);
            let weights = ew(&w);
            let a = uspa_allocate(&ch, &weights, 3.0).unwrap();
            let b = uspa_allocate(&ch, &weights.scaled(factor).unwrap(), 3.0).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn interior_branch_is_stationary(
            lo in -3.0f64..1.0,
            gap in 0.01f64..2.0,
            w_last in 0.01f64..1.0,
            w_comp in 0.01f64..1.0,
            pmax in 0.1f64..100.0,
        ) {
            let nk = 10f64.powf(lo);
            let nc = 10f64.powf(lo + gap);
            let (pk, _) = two_user_split(nk, nc, w_last, w_comp, pmax).unwrap();
            if pk > 0.0 && pk < pmax {
                prop_assert!(g_prime(pk, nk, nc, w_last, w_comp).abs() <= 1e-9);
            }
        }
    }
}
