//! Instance-level quantities: gaps, the tolerated exchange count
//! `t(ε, K)`, the boundary floors `Ψ_t` / `Ψ_t^ε`, the two hardness sums,
//! and aggregate regret.
//!
//! All functions accept means in any order and work on a stably sorted
//! (descending) copy, so rank `i` below means the `i`-th best arm. Vectors in
//! the results are indexed by rank, 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, BanditError, Result};

/// Stable descending sort; equal means keep their original order.
pub fn sorted_desc(means: &[f64]) -> Vec<f64> {
    let mut sorted = means.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        Err(BanditError::InvalidK { k, n })
    } else {
        Ok(())
    }
}

fn gaps_sorted(s: &[f64], k: usize) -> Vec<f64> {
    s.iter()
        .enumerate()
        .map(|(i, &x)| if i < k { x - s[k] } else { s[k - 1] - x })
        .collect()
}

/// Gap of every arm relative to the top-`k` boundary, by rank.
///
/// Top arms measure against the `(k+1)`-th mean, the rest against the
/// `k`-th. Requires `1 <= k < n`.
pub fn gaps(means: &[f64], k: usize) -> Result<Vec<f64>> {
    check_k(means.len(), k)?;
    Ok(gaps_sorted(&sorted_desc(means), k))
}

/// 1-based index `K + t + 1`, clamped to `n`.
fn tail_index(n: usize, k: usize, t: usize) -> (usize, bool) {
    let idx = k + t + 1;
    if idx > n {
        (n, true)
    } else {
        (idx, false)
    }
}

fn exchange_ok(g: &[f64], k: usize, eps: f64, t: usize) -> bool {
    let budget = k as f64 * eps;
    let (tail, _) = tail_index(g.len(), k, t);
    g[k - t - 1] * t as f64 <= budget && g[tail - 1] * t as f64 <= budget
}

/// Largest `t` in `0..k` such that both `Δ_{K-t}·t` and `Δ_{K+t+1}·t` stay
/// within `Kε`. Both products are non-decreasing in `t`, so the feasible
/// set is a prefix and a binary search finds its end.
fn t_from_gaps(g: &[f64], k: usize, eps: f64) -> usize {
    // t = 0 is always feasible; the answer lies in [lo, hi).
    let (mut lo, mut hi) = (0, k);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if exchange_ok(g, k, eps, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn t_of(means: &[f64], k: usize, epsilon: f64) -> Result<usize> {
    check_k(means.len(), k)?;
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(BanditError::InvalidParameter {
            name: "epsilon",
            value: epsilon,
            reason: "must be non-negative",
        });
    }
    let g = gaps(means, k)?;
    Ok(t_from_gaps(&g, k, epsilon))
}

/// `(Ψ_t, Ψ_t^ε)` for `t = t(ε, K)`.
pub fn psi_quantities(means: &[f64], k: usize, epsilon: f64) -> Result<(f64, f64)> {
    let report = hardness(means, k, epsilon)?;
    Ok((report.psi_t, report.psi_t_eps))
}

/// Everything that characterises how hard an instance is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardnessReport {
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    /// Gaps by rank.
    pub gaps: Vec<f64>,
    pub t: usize,
    pub psi_t: f64,
    pub psi_t_eps: f64,
    #[serde(rename = "H_t_eps")]
    pub h_t_eps: f64,
    #[serde(rename = "H_0_eps")]
    pub h_0_eps: f64,
    /// `K + t + 1` exceeded `n` and was clamped to `n`.
    pub tail_index_clamped: bool,
}

/// `min(Δ^{-2}, cap^{-2})`, with a zero gap taking the capped value.
fn capped_inv_sq(gap: f64, cap: f64) -> f64 {
    if gap <= cap {
        cap.powi(-2)
    } else {
        gap.powi(-2)
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn hardness(means: &[f64], k: usize, epsilon: f64) -> Result<HardnessReport> {
    check_k(means.len(), k)?;
    check_positive("epsilon", epsilon)?;
    let n = means.len();
    let g = gaps_sorted(&sorted_desc(means), k);
    let t = t_from_gaps(&g, k, epsilon);
    let (tail, clamped) = tail_index(n, k, t);
    let psi_t = g[k - t - 1].min(g[tail - 1]);
    let psi_t_eps = psi_t.max(epsilon);
    let h_t_eps = compensated_sum(g.iter().map(|&d| capped_inv_sq(d, psi_t_eps)));
    let h_0_eps = compensated_sum(g.iter().map(|&d| capped_inv_sq(d, epsilon)));
    Ok(HardnessReport {
        n,
        k,
        epsilon,
        gaps: g,
        t,
        psi_t,
        psi_t_eps,
        h_t_eps,
        h_0_eps,
        tail_index_clamped: clamped,
    })
}

fn validate_selection(n: usize, k: usize, selected: &[usize]) -> Result<()> {
    if selected.len() != k {
        return Err(BanditError::SelectionSize {
            got: selected.len(),
            expected: k,
        });
    }
    let mut seen = vec![false; n];
    for &arm in selected {
        if arm >= n {
            return Err(BanditError::ArmOutOfRange { arm, n });
        }
        if std::mem::replace(&mut seen[arm], true) {
            return Err(BanditError::DuplicateArm(arm));
        }
    }
    Ok(())
}

/// Average shortfall of the selected arms against the true top `k`.
///
/// `selected` holds indices into `means` (ranks, when `means` is sorted).
/// Both groups are compared rank by rank after sorting, so every term is
/// non-negative and an exact top-`k` selection scores exactly zero.
pub fn aggregate_regret(means: &[f64], k: usize, selected: &[usize]) -> Result<f64> {
    let n = means.len();
    if k == 0 || k > n {
        return Err(BanditError::InvalidK { k, n });
    }
    validate_selection(n, k, selected)?;
    let best = sorted_desc(means);
    let chosen = sorted_desc(&selected.iter().map(|&i| means[i]).collect::<Vec<_>>());
    let shortfall = compensated_sum(best.iter().zip(&chosen).map(|(b, c)| b - c));
    Ok((shortfall / k as f64).max(0.0))
}

/// Success predicate: regret at most `epsilon` (inclusive).
pub fn is_eps_top_k(means: &[f64], k: usize, epsilon: f64, selected: &[usize]) -> Result<bool> {
    Ok(aggregate_regret(means, k, selected)? <= epsilon)
}
