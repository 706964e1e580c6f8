//! Discounting.

/// Net present value of per-period cashflows; period 0 is undiscounted.
pub fn npv(cashflows: &[f64], discount_rate_per_period: f64) -> f64 {
    let base = 1.0 + discount_rate_per_period;
    cashflows
        .iter()
        .enumerate()
        .map(|(t, cf)| cf / base.powi(t as i32))
        .sum()
}

/// Discount factor `1 / (1 + rate)^period`.
pub fn discount_factor(period: usize, discount_rate_per_period: f64) -> f64 {
    1.0 / (1.0 + discount_rate_per_period).powi(period as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_plain_sum() {
        assert_eq!(npv(&[10.0, 20.0, -5.0], 0.0), 25.0);
    }

    #[test]
    fn single_term_discount() {
        assert!((npv(&[0.0, 110.0], 0.10) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn period_zero_is_undiscounted() {
        for rate in [0.0, 0.05, 0.5, 3.0] {
            assert_eq!(npv(&[100.0], rate), 100.0);
        }
    }

    #[test]
    fn empty_cashflows() {
        assert_eq!(npv(&[], 0.1), 0.0);
    }
}
