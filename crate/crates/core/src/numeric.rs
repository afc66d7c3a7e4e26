//! Small numerical helpers shared across modules.

use std::cmp::Ordering;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.extend(values);
    acc.value()
}

/// Sum that does not depend on the order of its inputs: values are sorted by
/// total order before compensated accumulation.
pub fn order_invariant_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    compensated_sum(values.iter().copied())
}

/// Average ranks (1-based). `descending` gives rank 1 to the largest value.
/// Ties share the mean of the positions they occupy.
pub fn average_ranks(values: &[f64], descending: bool) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let o = values[a].total_cmp(&values[b]);
        if descending {
            o.reverse()
        } else {
            o
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks on ties. Returns NaN when
/// either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman inputs must have equal length");
    let rx = average_ranks(x, false);
    let ry = average_ranks(y, false);
    pearson(&rx, &ry)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Formats a float like C's `%.17g`: 17 significant digits, trailing zeros
/// trimmed. The output parses back to the identical `f64`.
pub fn format_g17(value: f64) -> String {
    if value == 0.0 {
        return if value.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !value.is_finite() {
        return format!("{value}");
    }
    let sci = format!("{:.16e}", value);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };
    if (-4..17).contains(&exp) {
        let (int_part, frac_part) = if exp >= 0 {
            let split = exp as usize + 1;
            (digits[..split].to_string(), digits[split..].to_string())
        } else {
            ("0".to_string(), format!("{}{}", "0".repeat((-exp - 1) as usize), digits))
        };
        let frac = frac_part.trim_end_matches('0');
        if frac.is_empty() {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{frac}")
        }
    } else {
        let frac = digits[1..].trim_end_matches('0');
        let head = &digits[..1];
        if frac.is_empty() {
            format!("{sign}{head}e{exp}")
        } else {
            format!("{sign}{head}.{frac}e{exp}")
        }
    }
}

/// Total order on names used to break ties deterministically.
pub fn cmp_then_name(a: (f64, &str), b: (f64, &str)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks_descending_with_ties() {
        let r = average_ranks(&[0.1, 0.5, 0.5, 0.0], true);
        assert_eq!(r, vec![3.0, 1.5, 1.5, 4.0]);
        let r = average_ranks(&[3.0, 1.0, 2.0], false);
        assert_eq!(r, vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn compensated_beats_naive_on_cancellation() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
    }

    #[test]
    fn g17_examples() {
        assert_eq!(format_g17(0.0135), "0.0135");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(12.0), "12");
        assert_eq!(format_g17(-1.5), "-1.5");
        assert_eq!(format_g17(1e-7), "9.9999999999999995e-8");
        assert_eq!(format_g17(1e20), "1e20");
    }

    #[test]
    fn spearman_perfect_and_reversed() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn g17_round_trips(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let back: f64 = format_g17(v).parse().unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }

        #[test]
        fn rank_sum_is_triangular(values in prop::collection::vec(-3i32..3, 1..40)) {
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            let n = v.len() as f64;
            let s: f64 = average_ranks(&v, true).iter().sum();
            prop_assert_eq!(s, n * (n + 1.0) / 2.0);
        }
    }
}
