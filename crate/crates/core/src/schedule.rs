//! Block-count schedule `m_k = floor(e^(alpha k))` and the admissible range
//! of `alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest block count representable exactly in an `f64`.
const MAX_BLOCK_COUNT: f64 = 9_007_199_254_740_992.0;

pub fn block_count(alpha: f64, k: usize) -> Result<u64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let value = (alpha * k as f64).exp();
    if value > MAX_BLOCK_COUNT {
        return Err(Error::ScheduleOverflow { value });
    }
    Ok((value.floor() as u64).max(1))
}

/// Admissible exponents for the block-count schedule.
///
/// The chain-of-infinite-order result needs `c > 18 ln(1/delta)` and
/// `alpha` in `(5 ln(1/delta), c - ln(1/delta))`; the Markov result needs
/// `alpha > 5 ln(1/delta_underbar)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityWindow {
    pub lower: f64,
    #[serde(with = "crate::harness::report::extended_f64")]
    pub upper: f64,
    pub infinite_order_condition_ok: bool,
    pub markov_lower: f64,
}

impl AdmissibilityWindow {
    pub fn is_nonempty(&self) -> bool {
        self.upper > self.lower
    }

    pub fn contains(&self, alpha: f64) -> bool {
        alpha > self.lower && alpha < self.upper
    }
}

pub fn alpha_window(delta: f64, c: f64, delta_underbar: f64) -> Result<AdmissibilityWindow> {
    for (name, v) in [("delta", delta), ("delta_underbar", delta_underbar)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1], got {v}")));
        }
    }
    if c.is_nan() {
        return Err(Error::InvalidArgument("c is NaN".into()));
    }
    let log_inv = (1.0 / delta).ln();
    Ok(AdmissibilityWindow {
        lower: 5.0 * log_inv,
        upper: c - log_inv,
        infinite_order_condition_ok: c > 18.0 * log_inv,
        markov_lower: 5.0 * (1.0 / delta_underbar).ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_counts() {
        assert_eq!(block_count(1.0, 2).unwrap(), 7);
        assert_eq!(block_count(2.0, 3).unwrap(), 403);
        assert_eq!(block_count(1e-12, 5).unwrap(), 1);
        assert!(matches!(block_count(40.0, 1), Err(Error::ScheduleOverflow { .. })));
        assert!(block_count(0.0, 1).is_err());
        assert!(block_count(1.0, 0).is_err());
    }

    #[test]
    fn windows() {
        let w = alpha_window(0.45, 15.0, 0.45).unwrap();
        assert!((w.lower - 3.99254).abs() < 1e-5);
        assert!((w.upper - 14.20149).abs() < 1e-5);
        assert!(w.infinite_order_condition_ok);
        assert!(!alpha_window(0.5, 10.0, 0.5).unwrap().infinite_order_condition_ok);
        assert!((alpha_window(0.5, 10.0, 0.2).unwrap().markov_lower - 8.04719).abs() < 1e-5);
        let inf = alpha_window(0.3, f64::INFINITY, 0.3).unwrap();
        assert!(inf.infinite_order_condition_ok && inf.upper.is_infinite() && inf.is_nonempty());
        assert!(alpha_window(0.0, 1.0, 0.5).is_err());
    }
}
