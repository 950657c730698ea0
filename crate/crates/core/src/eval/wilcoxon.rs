//! Two-sided Wilcoxon signed-rank test.
//!
//! Zero differences are dropped before ranking and tied absolute differences
//! share their average rank. Up to [`EXACT_MAX_N`] non-zero pairs the null
//! distribution of W+ is enumerated exactly (dynamic programming over
//! doubled ranks, so tie-averaged half ranks stay integral). Above that a
//! normal approximation with continuity correction and tie-corrected
//! variance is used, evaluated in log space so extreme tails do not
//! underflow.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

pub const EXACT_MAX_N: usize = 25;
pub const MIN_PAIRS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum WilcoxonError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Number of pairs with a non-zero difference.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Two-sided p-value. Clamped below at the smallest positive normal
    /// double; `log10_p` keeps the true magnitude.
    pub p_value: f64,
    pub log10_p: f64,
    pub method: WilcoxonMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
}

/// Signed ranks of the non-zero differences `a[i] - b[i]`, as doubled
/// (integer) ranks paired with the sign of the difference.
pub fn doubled_signed_ranks(a: &[f64], b: &[f64]) -> Result<Vec<(u32, bool)>, WilcoxonError> {
    if a.len() != b.len() {
        return Err(WilcoxonError::LengthMismatch(a.len(), b.len()));
    }
    let mut diffs: Vec<f64> = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        if d.is_nan() {
            return Err(WilcoxonError::Degenerate("NaN in input".into()));
        }
        if d != 0.0 {
            diffs.push(d);
        }
    }
    if diffs.is_empty() {
        return Err(WilcoxonError::Degenerate("all differences are zero".into()));
    }
    if diffs.len() < MIN_PAIRS {
        return Err(WilcoxonError::Degenerate(format!(
            "only {} non-zero differences, need at least {MIN_PAIRS}",
            diffs.len()
        )));
    }
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut ranks = vec![(0u32, false); diffs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && diffs[order[end + 1]].abs() == diffs[order[start]].abs() {
            end += 1;
        }
        // 1-based ranks start+1..=end+1; their mean doubled is start+end+2.
        let doubled = (start + end + 2) as u32;
        for &k in &order[start..=end] {
            ranks[k] = (doubled, diffs[k] > 0.0);
        }
        start = end + 1;
    }
    Ok(ranks)
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, WilcoxonError> {
    let ranks = doubled_signed_ranks(a, b)?;
    let n = ranks.len();
    let total2: u64 = ranks.iter().map(|&(r, _)| r as u64).sum();
    let plus2: u64 = ranks.iter().filter(|r| r.1).map(|&(r, _)| r as u64).sum();
    let w_plus = plus2 as f64 / 2.0;
    let w_minus = (total2 - plus2) as f64 / 2.0;

    if n <= EXACT_MAX_N {
        let p = exact_two_sided(&ranks, plus2);
        return Ok(WilcoxonResult {
            n,
            w_plus,
            w_minus,
            p_value: p,
            log10_p: p.log10(),
            method: WilcoxonMethod::Exact,
            z: None,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted: Vec<u32> = ranks.iter().map(|r| r.0).collect();
    sorted.sort_unstable();
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let dev = ((w_plus - mean).abs() - 0.5).max(0.0);
    let z = dev / var.sqrt();
    let ln_p = (std::f64::consts::LN_2 + ln_normal_sf(z)).min(0.0);
    Ok(WilcoxonResult {
        n,
        w_plus,
        w_minus,
        p_value: ln_p.exp().max(f64::MIN_POSITIVE),
        log10_p: ln_p / std::f64::consts::LN_10,
        method: WilcoxonMethod::NormalApprox,
        z: Some(z),
    })
}

/// Exact two-sided p from the sign-flip distribution of the doubled W+.
fn exact_two_sided(ranks: &[(u32, bool)], observed2: u64) -> f64 {
    let total: usize = ranks.iter().map(|r| r.0 as usize).sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &(r, _) in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    let observed = observed2 as usize;
    let le: u64 = counts[..=observed].iter().sum();
    let ge: u64 = counts[observed..].iter().sum();
    let all = 2f64.powi(ranks.len() as i32);
    (2.0 * le.min(ge) as f64 / all).min(1.0)
}

/// Natural log of the standard normal upper tail `P(Z > z)` for `z >= 0`.
pub fn ln_normal_sf(z: f64) -> f64 {
    if z < 8.0 {
        return (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln();
    }
    // Laplace continued fraction: Q(z) = phi(z) / (z + 1/(z + 2/(z + ...))).
    let mut tail = z;
    for k in (1..=200).rev() {
        tail = z + k as f64 / tail;
    }
    let ln_phi = -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
    ln_phi - tail.ln()
}
