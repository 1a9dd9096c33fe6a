//! Reference solvers used to check USPA. Neither shares code with the
//! closed-form path it verifies.
//!
//! - [`golden_two_user`] maximises the two-user objective numerically.
//! - [`grid_q2`] brute-forces the per-slot problem: every user subset of
//!   bounded size, with powers on a uniform grid over the full-power simplex.

use crate::channel::ChannelState;
use crate::rate::{sic_order, Allocation};
use crate::uspa::EffectiveWeights;
use crate::{Error, Result};

/// Largest instance [`grid_q2`] accepts.
pub const MAX_ORACLE_USERS: usize = 6;

/// Discretisation for [`grid_q2`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    /// Grid points per simplex axis (`resolution - 1` power quanta of
    /// `pmax / (resolution - 1)` each).
    pub resolution: usize,
    pub max_subset_size: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            resolution: 1001,
            max_subset_size: 3,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::InvalidInput(format!(
                "grid resolution must be at least 2, got {}",
                self.resolution
            )));
        }
        if self.max_subset_size < 1 {
            return Err(Error::InvalidInput("max subset size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Two-user objective as a function of the last-SIC user's power, with the
/// companion taking the rest of the budget.
pub fn two_user_objective(
    p_last: f64,
    ncr_last: f64,
    ncr_comp: f64,
    w_last: f64,
    w_comp: f64,
    pmax: f64,
) -> f64 {
    (w_comp * ((pmax + ncr_comp) / (p_last + ncr_comp)).ln()
        + w_last * ((p_last + ncr_last) / ncr_last).ln())
        / std::f64::consts::LN_2
}

/// Golden-section maximiser of [`two_user_objective`] over `[0, pmax]`.
///
/// The objective's derivative has a linear numerator, so it changes sign at
/// most once; the endpoints are settled by the derivative sign and the
/// interior by golden-section search down to a bracket of `1e-10 * pmax`.
pub fn golden_two_user(
    ncr_last: f64,
    ncr_comp: f64,
    w_last: f64,
    w_comp: f64,
    pmax: f64,
) -> Result<f64> {
    if ncr_last.partial_cmp(&ncr_comp) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvalidOrder {
            last: ncr_last,
            companion: ncr_comp,
        });
    }
    if !(pmax > 0.0 && pmax.is_finite()) {
        return Err(Error::InvalidInput(format!("power budget must be positive, got {pmax}")));
    }
    let slope = |p: f64| w_last / (p + ncr_last) - w_comp / (p + ncr_comp);
    if slope(0.0) <= 0.0 {
        return Ok(0.0);
    }
    if slope(pmax) >= 0.0 {
        return Ok(pmax);
    }

    // g(x) - g(y) without forming g: both log ratios are taken relative to 1,
    // so the comparison stays exact when x and y are close.
    let diff = |x: f64, y: f64| {
        w_comp * ((y - x) / (x + ncr_comp)).ln_1p() + w_last * ((x - y) / (y + ncr_last)).ln_1p()
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let tol = 1e-10 * pmax;
    let (mut a, mut b) = (0.0, pmax);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    while b - a > tol {
        if diff(c, d) > 0.0 {
            b = d;
            d = c;
            c = b - inv_phi * (b - a);
        } else {
            a = c;
            c = d;
            d = a + inv_phi * (b - a);
        }
    }
    Ok(0.5 * (a + b))
}

/// Best allocation found by exhaustive search, and its weighted sum rate.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub allocation: Allocation,
    pub wsr: f64,
}

struct GridSearch<'a> {
    subset: Vec<usize>,
    tables: &'a [Vec<f64>],
    weights: &'a [f64],
    counts: Vec<usize>,
    best_value: f64,
    best_users: Vec<usize>,
    best_counts: Vec<usize>,
}

impl GridSearch<'_> {
    /// `remaining` quanta are shared by `subset[depth..]`; `value` is the
    /// objective (in nats) of the users already fixed.
    fn descend(&mut self, depth: usize, remaining: usize, value: f64) {
        let user = self.subset[depth];
        let tables = self.tables;
        let table = &tables[user];
        let w = self.weights[user];
        if depth + 1 == self.subset.len() {
            self.counts[depth] = remaining;
            let total = value + w * (table[remaining] - table[0]);
            if total > self.best_value {
                self.best_value = total;
                self.best_users.clear();
                self.best_users.extend_from_slice(&self.subset);
                self.best_counts.clear();
                self.best_counts.extend_from_slice(&self.counts);
            }
            return;
        }
        let top = w * table[remaining];
        for n in 0..=remaining {
            self.counts[depth] = n;
            let rest = remaining - n;
            self.descend(depth + 1, rest, value + top - w * table[rest]);
        }
    }
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Exhaustive per-slot search over user subsets and a full-power power grid.
///
/// Every subset of exactly `min(max_subset_size, N)` users is enumerated with
/// all nonnegative integer splits of `resolution - 1` power quanta; splits
/// with zeros cover the smaller subsets.
pub fn grid_q2(
    channel: &ChannelState,
    weights: &EffectiveWeights,
    pmax: f64,
    spec: &GridSpec,
) -> Result<OracleSolution> {
    spec.validate()?;
    let n = channel.num_users();
    if n == 0 {
        return Err(Error::InvalidInput("no users".into()));
    }
    if n > MAX_ORACLE_USERS {
        return Err(Error::TooLargeInstance {
            users: n,
            limit: MAX_ORACLE_USERS,
        });
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

    let steps = spec.resolution - 1;
    let quantum = pmax / steps as f64;
    // tables[u][m] = ln(m * quantum + ncr_u)
    let tables: Vec<Vec<f64>> = channel
        .ncr
        .iter()
        .map(|&v| (0..=steps).map(|m| (m as f64 * quantum + v).ln()).collect())
        .collect();

    // Subsets drawn from the weakest-first order keep that order internally,
    // so position `d` is interfered by positions `d + 1..`.
    let order = sic_order(channel);
    let size = spec.max_subset_size.min(n);
    let mut search = GridSearch {
        subset: Vec::new(),
        tables: &tables,
        weights: weights.as_slice(),
        counts: vec![0; size],
        best_value: f64::NEG_INFINITY,
        best_users: Vec::new(),
        best_counts: Vec::new(),
    };
    for subset in combinations(&order, size) {
        search.subset = subset;
        search.descend(0, steps, 0.0);
    }

    let mut powers = vec![0.0; n];
    for (&u, &c) in search.best_users.iter().zip(&search.best_counts) {
        powers[u] = c as f64 * quantum;
    }
    Ok(OracleSolution {
        allocation: Allocation::from_powers(powers),
        wsr: search.best_value / std::f64::consts::LN_2,
    })
}
