//! Fixed-budget comparison algorithms.

use crate::env::{ArmSampler, EmpiricalState};
use crate::error::{BanditError, Result};
use crate::selection::{sort_by_score_desc, top_by_score, PullLedger, SelectionResult};

/// Constant `c` in the confidence radius of [`cb_accept_reject_topk`].
pub const CB_RADIUS_CONSTANT: f64 = 4.0;

fn check_budget<S: ArmSampler + ?Sized>(env: &S, k: usize, budget: u64) -> Result<usize> {
    let n = env.n_arms();
    if k == 0 || k > n {
        return Err(BanditError::InvalidK { k, n });
    }
    if budget < n as u64 {
        return Err(BanditError::BudgetTooSmall { budget, n });
    }
    Ok(n)
}

/// Pulls every arm `⌊budget/n⌋` times and returns the top-`K` empirical means.
pub fn uniform_topk<S: ArmSampler + ?Sized>(env: &mut S, k: usize, budget: u64) -> Result<SelectionResult> {
    let n = check_budget(env, k, budget)?;
    let ledger = PullLedger::open(env);
    let per_arm = budget / n as u64;
    let mut scored = Vec::with_capacity(n);
    for arm in 0..n {
        scored.push((arm, env.pull_batch(arm, per_arm)? as f64 / per_arm as f64));
    }
    let selected = top_by_score(scored, k);
    Ok(ledger.close(env, selected, 1, Vec::new(), Vec::new()))
}

/// Confidence-bound accept/reject selection under a pull budget.
///
/// A stand-in for published confidence-bound top-K methods, not a
/// reimplementation of any of them. After one pull per arm it repeatedly
/// doubles the pulls of the undecided arm whose interval
/// `θ̃_i ± sqrt(ln(c n T²) / (2 m_i))` overlaps the empirical top-`K̃`
/// boundary the most. An arm is accepted once its lower bound clears every
/// upper bound below the boundary and rejected once its upper bound falls
/// under every lower bound above it. When the budget runs out the remaining
/// slots go to the best undecided empirical means.
pub fn cb_accept_reject_topk<S: ArmSampler + ?Sized>(env: &mut S, k: usize, budget: u64) -> Result<SelectionResult> {
    let n = check_budget(env, k, budget)?;
    let ledger = PullLedger::open(env);
    let log_term = (CB_RADIUS_CONSTANT * n as f64 * (budget as f64).powi(2)).ln();
    let mut stats = EmpiricalState::new(n);
    for arm in 0..n {
        stats.pull(env, arm, 1)?;
    }
    let mut left = budget - n as u64;
    let mut undecided: Vec<usize> = (0..n).collect();
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    let radius = |stats: &EmpiricalState, arm: usize| (log_term / (2.0 * stats.count(arm) as f64)).sqrt();
    let mut iterations = 0usize;

    loop {
        let k_rem = k - accepted.len();
        if k_rem == 0 || undecided.len() <= k_rem {
            break;
        }
        let mut ranked: Vec<(usize, f64)> = undecided.iter().map(|&a| (a, stats.mean(a).unwrap_or(0.5))).collect();
        sort_by_score_desc(&mut ranked);
        let (upper_set, lower_set) = ranked.split_at(k_rem);
        let min_lcb_top = upper_set
            .iter()
            .map(|&(a, m)| m - radius(&stats, a))
            .fold(f64::INFINITY, f64::min);
        let max_ucb_rest = lower_set
            .iter()
            .map(|&(a, m)| m + radius(&stats, a))
            .fold(f64::NEG_INFINITY, f64::max);

        let newly_accepted: Vec<usize> = upper_set
            .iter()
            .filter(|&&(a, m)| m - radius(&stats, a) > max_ucb_rest)
            .map(|&(a, _)| a)
            .collect();
        let newly_rejected: Vec<usize> = lower_set
            .iter()
            .filter(|&&(a, m)| m + radius(&stats, a) < min_lcb_top)
            .map(|&(a, _)| a)
            .collect();
        if !newly_accepted.is_empty() || !newly_rejected.is_empty() {
            undecided.retain(|a| !newly_accepted.contains(a) && !newly_rejected.contains(a));
            accepted.extend(newly_accepted);
            rejected.extend(newly_rejected);
            continue;
        }
        if left == 0 {
            break;
        }

        let boundary = (upper_set[k_rem - 1].1 + lower_set[0].1) / 2.0;
        let (target, _) = ranked
            .iter()
            .map(|&(a, m)| (a, (m - boundary).abs() - radius(&stats, a)))
            .fold((usize::MAX, f64::INFINITY), |best, cur| {
                if cur.1 < best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                    cur
                } else {
                    best
                }
            });
        let m = stats.count(target).min(left);
        stats.pull(env, target, m)?;
        left -= m;
        iterations += 1;
    }

    let k_rem = k - accepted.len();
    let scored = undecided.iter().map(|&a| (a, stats.mean(a).unwrap_or(0.5))).collect();
    let mut selected = accepted.clone();
    selected.extend(top_by_score(scored, k_rem));
    Ok(ledger.close(env, selected, iterations, accepted, rejected))
}
