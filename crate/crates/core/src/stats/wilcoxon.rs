use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::numeric::average_ranks;

/// Largest effective sample size for which the exact null distribution is
/// computed.
pub const EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WilcoxonMode {
    Exact,
    NormalApprox,
    /// Exact up to `EXACT_LIMIT` non-zero differences, normal beyond.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// min(W+, W-).
    pub statistic: f64,
    pub w_plus: f64,
    /// Two-sided.
    pub p_value: f64,
    pub n_effective: usize,
    /// Set when every difference was zero; the p-value is then 1.
    pub all_zero: bool,
    pub exact: bool,
}

/// Wilcoxon signed-rank test on paired differences.
///
/// Zero differences are discarded, the remaining magnitudes receive average
/// ranks, and the two-sided p-value is P(min(W+, W-) <= observed) under the
/// null of symmetric signs. The exact distribution is the subset-sum
/// distribution of the doubled ranks (integers even with ties), which counts
/// the same 2^n sign assignments an explicit enumeration would.
pub fn wilcoxon_signed_rank(differences: &[f64], mode: WilcoxonMode) -> Result<WilcoxonResult> {
    if differences.is_empty() {
        return Err(Error::BadSample("at least one difference is required".into()));
    }
    if let Some(v) = differences.iter().find(|v| !v.is_finite()) {
        return Err(Error::BadSample(format!("non-finite difference {v}")));
    }
    let nonzero: Vec<f64> = differences.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            w_plus: 0.0,
            p_value: 1.0,
            n_effective: 0,
            all_zero: true,
            exact: true,
        });
    }
    let magnitudes: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&magnitudes, false);
    // doubled average ranks are always integers
    let doubled: Vec<u64> = ranks.iter().map(|r| (r * 2.0).round() as u64).collect();
    let w_plus2: u64 = nonzero.iter().zip(&doubled).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total2 = (n * (n + 1)) as u64;
    let w_min2 = w_plus2.min(total2 - w_plus2);

    let exact = match mode {
        WilcoxonMode::Exact => {
            if n > EXACT_LIMIT {
                return Err(Error::BadSample(format!(
                    "exact mode supports at most {EXACT_LIMIT} non-zero differences, got {n}"
                )));
            }
            true
        }
        WilcoxonMode::NormalApprox => false,
        WilcoxonMode::Auto => n <= EXACT_LIMIT,
    };

    let p_value = if exact { exact_p(&doubled, w_min2) } else { normal_p(n, &magnitudes, w_min2 as f64 / 2.0) };
    Ok(WilcoxonResult {
        statistic: w_min2 as f64 / 2.0,
        w_plus: w_plus2 as f64 / 2.0,
        p_value: p_value.clamp(0.0, 1.0),
        n_effective: n,
        all_zero: false,
        exact,
    })
}

fn exact_p(doubled: &[u64], w_min2: u64) -> f64 {
    let total: usize = doubled.iter().sum::<u64>() as usize;
    // counts[s] = number of sign assignments whose doubled W+ equals s
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let extreme: f64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as u64).min(total as u64 - *s as u64) <= w_min2)
        .map(|(_, c)| c)
        .sum();
    extreme / 2f64.powi(doubled.len() as i32)
}

fn normal_p(n: usize, magnitudes: &[f64], w: f64) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2)
}
