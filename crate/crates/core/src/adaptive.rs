//! Round-based accept/reject selection of ε-top-K arms.
//!
//! Every round pulls all undecided arms equally, ranks them by the fresh
//! empirical means of that round, and then repeatedly commits the arm that is
//! farthest from the current top-`K̃` boundary (`K̃ = K - |A|`) as long as its
//! distance exceeds the round threshold. In the fixed-confidence form the
//! rounds stop once `2·Δ·K̃ ≤ εK`; the fixed-budget form keeps going until
//! the pull budget runs out.

use serde::{Deserialize, Serialize};

use crate::env::ArmSampler;
use crate::error::{check_positive, check_unit_interval_open, BanditError, Result};
use crate::selection::{ceil_pulls, sort_by_score_desc, top_by_score, PullLedger, SelectionResult};

/// Confidence-width schedule across rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapSchedule {
    /// `Δ_r = 2^{-r}`; commit when the boundary distance exceeds `2Δ_r`.
    #[default]
    Halving,
    /// `Δ_r = 1.01^{-r}`; commit when the boundary distance exceeds `Δ_r / 3`.
    /// Grows per-round pulls smoothly and commits more aggressively. It
    /// carries no correctness guarantee at the stated confidence.
    Smooth,
}

impl GapSchedule {
    pub fn gap(self, round: u32) -> f64 {
        match self {
            GapSchedule::Halving => 0.5f64.powi(round as i32),
            GapSchedule::Smooth => 1.01f64.powi(-(round as i32)),
        }
    }

    fn commit_threshold(self, gap: f64) -> f64 {
        match self {
            GapSchedule::Halving => 2.0 * gap,
            GapSchedule::Smooth => gap / 3.0,
        }
    }
}

/// What happened in one pulling round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub gap: f64,
    pub pulls_per_arm: u64,
    /// `(arm, empirical mean)` for every arm pulled this round.
    pub means: Vec<(usize, f64)>,
    /// False when the budget ran out before every undecided arm was pulled.
    pub complete: bool,
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRun {
    pub result: SelectionResult,
    pub trace: Vec<RoundRecord>,
}

#[derive(Debug, Clone, Copy)]
enum StopRule {
    Guard { epsilon: f64 },
    Budget(u64),
}

/// Configuration of the accept/reject algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveTopK {
    pub k: usize,
    pub delta: f64,
    pub schedule: GapSchedule,
}

impl AdaptiveTopK {
    pub fn new(k: usize, delta: f64) -> Result<Self> {
        check_unit_interval_open("delta", delta)?;
        Ok(Self {
            k,
            delta,
            schedule: GapSchedule::Halving,
        })
    }

    pub fn with_schedule(mut self, schedule: GapSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    /// Per-arm pulls in round `r` over `n` arms: `⌈Δ_r^{-2} ln(2 n r² / δ)⌉`.
    pub fn pulls_in_round(&self, n: usize, round: u32) -> u64 {
        let gap = self.schedule.gap(round);
        let r = round as f64;
        ceil_pulls(gap.powi(-2) * (2.0 * n as f64 * r * r / self.delta).ln())
    }

    /// Fixed-confidence run: returns ε-top-K arms with probability at least `1 - δ`.
    pub fn run<S: ArmSampler + ?Sized>(&self, env: &mut S, epsilon: f64) -> Result<AdaptiveRun> {
        check_positive("epsilon", epsilon)?;
        self.execute(env, StopRule::Guard { epsilon })
    }

    /// Fixed-budget run: never pulls more than `budget` times in total.
    pub fn run_fixed_budget<S: ArmSampler + ?Sized>(&self, env: &mut S, budget: u64) -> Result<AdaptiveRun> {
        if budget == 0 {
            return Err(BanditError::BudgetTooSmall {
                budget,
                n: env.n_arms(),
            });
        }
        self.execute(env, StopRule::Budget(budget))
    }

    fn execute<S: ArmSampler + ?Sized>(&self, env: &mut S, stop: StopRule) -> Result<AdaptiveRun> {
        let n = env.n_arms();
        let k = self.k;
        if k > n {
            return Err(BanditError::InvalidK { k, n });
        }
        let ledger = PullLedger::open(env);
        let trivial = k == 0
            || k == n
            || matches!(stop, StopRule::Guard { epsilon } if epsilon >= 1.0);
        if trivial {
            let result = ledger.close(env, (0..k).collect(), 0, Vec::new(), Vec::new());
            return Ok(AdaptiveRun {
                result,
                trace: Vec::new(),
            });
        }

        let mut budget_left = match stop {
            StopRule::Budget(b) => b,
            StopRule::Guard { .. } => u64::MAX,
        };
        if let StopRule::Budget(b) = stop {
            if self.pulls_in_round(n, 1).saturating_mul(n as u64) > b {
                return uniform_fallback(env, &ledger, k, b);
            }
        }

        let mut undecided: Vec<usize> = (0..n).collect();
        let mut accepted: Vec<usize> = Vec::new();
        let mut rejected: Vec<usize> = Vec::new();
        // Most recent empirical mean of every arm.
        let mut latest: Vec<f64> = vec![f64::NAN; n];
        let mut trace = Vec::new();
        let mut rounds_completed = 0usize;
        let mut gap = 1.0f64;
        let mut round = 0u32;

        loop {
            let k_rem = k - accepted.len();
            if k_rem == 0 || undecided.len() <= k_rem {
                break;
            }
            if let StopRule::Guard { epsilon } = stop {
                if 2.0 * gap * k_rem as f64 <= epsilon * k as f64 {
                    break;
                }
            }
            round += 1;
            let round_gap = self.schedule.gap(round);
            let m = self.pulls_in_round(n, round);

            let mut pulled = Vec::with_capacity(undecided.len());
            for &arm in &undecided {
                if budget_left < m {
                    break;
                }
                let sum = env.pull_batch(arm, m)?;
                budget_left -= m;
                let mean = sum as f64 / m as f64;
                latest[arm] = mean;
                pulled.push((arm, mean));
            }
            let complete = pulled.len() == undecided.len();
            let mut record = RoundRecord {
                round,
                gap: round_gap,
                pulls_per_arm: m,
                means: pulled,
                complete,
                accepted: Vec::new(),
                rejected: Vec::new(),
            };
            if !complete {
                trace.push(record);
                break;
            }
            rounds_completed += 1;

            let mut ranked = record.means.clone();
            sort_by_score_desc(&mut ranked);
            let (acc, rej) = commit_extremes(&ranked, k_rem, self.schedule.commit_threshold(round_gap));
            record.accepted = acc.clone();
            record.rejected = rej.clone();
            undecided.retain(|a| !acc.contains(a) && !rej.contains(a));
            accepted.extend(acc);
            rejected.extend(rej);
            debug_assert_eq!(undecided.len() + accepted.len() + rejected.len(), n);
            trace.push(record);
            gap = round_gap;
        }

        let k_rem = k - accepted.len();
        let scored = undecided.iter().map(|&a| (a, latest[a])).collect();
        let mut selected = accepted.clone();
        selected.extend(top_by_score(scored, k_rem));
        let result = ledger.close(env, selected, rounds_completed, accepted, rejected);
        Ok(AdaptiveRun { result, trace })
    }
}

/// Inner accept/reject loop over arms ranked by empirical mean (descending).
///
/// The boundary distance `max(θ̃_i − θ̃_a, θ̃_b − θ̃_i)`, with `θ̃_b` and `θ̃_a`
/// the `K̃`-th and `(K̃+1)`-th largest means, peaks at the current best or
/// worst arm. Removing the best arm (and decrementing `K̃`) or the worst arm
/// leaves `θ̃_a` and `θ̃_b` unchanged, so both stay fixed for the whole loop.
pub(crate) fn commit_extremes(ranked: &[(usize, f64)], k_rem: usize, threshold: f64) -> (Vec<usize>, Vec<usize>) {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    if k_rem == 0 || ranked.len() <= k_rem {
        return (accepted, rejected);
    }
    let theta_b = ranked[k_rem - 1].1;
    let theta_a = ranked[k_rem].1;
    // Worst arms first, lower index first among equal means.
    let mut ascending = ranked.to_vec();
    ascending.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    let mut removed = vec![false; ranked.len()];
    let position: std::collections::HashMap<usize, usize> =
        ranked.iter().enumerate().map(|(i, &(arm, _))| (arm, i)).collect();
    let (mut top, mut bottom) = (0usize, 0usize);
    let mut remaining = ranked.len();
    let mut k_left = k_rem;
    while k_left > 0 && remaining > k_left {
        while removed[top] {
            top += 1;
        }
        while removed[position[&ascending[bottom].0]] {
            bottom += 1;
        }
        let (top_arm, top_mean) = ranked[top];
        let (bottom_arm, bottom_mean) = ascending[bottom];
        let d_top = top_mean - theta_a;
        let d_bottom = theta_b - bottom_mean;
        let take_top = d_top > d_bottom || (d_top == d_bottom && top_arm < bottom_arm);
        let best = if take_top { d_top } else { d_bottom };
        if best <= threshold {
            break;
        }
        if take_top {
            accepted.push(top_arm);
            removed[top] = true;
            k_left -= 1;
        } else {
            rejected.push(bottom_arm);
            removed[position[&bottom_arm]] = true;
        }
        remaining -= 1;
    }
    (accepted, rejected)
}

/// Used when the first round does not fit in the budget: pull every arm
/// `⌊budget/n⌋` times (or the first `budget` arms once) and rank. Arms that
/// were never pulled are scored at 0.5.
fn uniform_fallback<S: ArmSampler + ?Sized>(
    env: &mut S,
    ledger: &PullLedger,
    k: usize,
    budget: u64,
) -> Result<AdaptiveRun> {
    let n = env.n_arms();
    let per_arm = budget / n as u64;
    let mut scored = Vec::with_capacity(n);
    for arm in 0..n {
        let m = if per_arm > 0 {
            per_arm
        } else if (arm as u64) < budget {
            1
        } else {
            0
        };
        let mean = if m > 0 {
            env.pull_batch(arm, m)? as f64 / m as f64
        } else {
            0.5
        };
        scored.push((arm, mean));
    }
    let selected = top_by_score(scored, k);
    let result = ledger.close(env, selected, 0, Vec::new(), Vec::new());
    Ok(AdaptiveRun {
        result,
        trace: Vec::new(),
    })
}

pub fn adaptive_topk<S: ArmSampler + ?Sized>(env: &mut S, k: usize, epsilon: f64, delta: f64) -> Result<SelectionResult> {
    Ok(AdaptiveTopK::new(k, delta)?.run(env, epsilon)?.result)
}

pub fn adaptive_topk_fixed_budget<S: ArmSampler + ?Sized>(
    env: &mut S,
    k: usize,
    delta: f64,
    budget: u64,
) -> Result<SelectionResult> {
    Ok(AdaptiveTopK::new(k, delta)?.run_fixed_budget(env, budget)?.result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ArmEnvironment;
    use crate::hardness::is_eps_top_k;
    use crate::instances::{gen_two_group, gen_uniform};
    use proptest::prelude::*;

    /// Direct transcription of the inner loop: recompute every arm's boundary
    /// distance after each removal.
    fn commit_naive(ranked: &[(usize, f64)], k_rem: usize, threshold: f64) -> (Vec<usize>, Vec<usize>) {
        let mut s: Vec<(usize, f64)> = ranked.to_vec();
        let mut k_left = k_rem;
        let (mut acc, mut rej) = (Vec::new(), Vec::new());
        loop {
            if k_left == 0 || s.len() <= k_left {
                break;
            }
            let mut by_mean = s.clone();
            sort_by_score_desc(&mut by_mean);
            let b = by_mean[k_left - 1].1;
            let a = by_mean[k_left].1;
            let (x, dx) = s
                .iter()
                .map(|&(arm, m)| (arm, (m - a).max(b - m)))
                .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| {
                    if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                        cur
                    } else {
                        best
                    }
                });
            if dx <= threshold {
                break;
            }
            let mx = s.iter().find(|p| p.0 == x).unwrap().1;
            if mx > a {
                acc.push(x);
                k_left -= 1;
            } else {
                rej.push(x);
            }
            s.retain(|p| p.0 != x);
        }
        acc.sort_unstable();
        rej.sort_unstable();
        (acc, rej)
    }

    proptest! {
        #[test]
        fn fast_inner_loop_matches_naive(
            raw in proptest::collection::vec(0u32..20, 2..40),
            kfrac in 0.0f64..1.0,
            threshold in 0.0f64..0.6,
        ) {
            let mut ranked: Vec<(usize, f64)> = raw.iter().enumerate().map(|(i, &v)| (i, v as f64 / 20.0)).collect();
            sort_by_score_desc(&mut ranked);
            let k_rem = 1 + ((kfrac * ranked.len() as f64) as usize).min(ranked.len() - 1);
            let (mut acc, mut rej) = commit_extremes(&ranked, k_rem, threshold);
            acc.sort_unstable();
            rej.sort_unstable();
            prop_assert_eq!((acc, rej), commit_naive(&ranked, k_rem, threshold));
        }
    }

    #[test]
    fn k_equal_n_returns_everything_without_pulls() {
        let mut env = ArmEnvironment::from_means(&[0.2, 0.9, 0.4], 1).unwrap();
        let r = adaptive_topk(&mut env, 3, 0.01, 0.1).unwrap();
        assert_eq!(r.selected, vec![0, 1, 2]);
        assert_eq!(r.total_pulls, 0);
    }

    #[test]
    fn large_epsilon_short_circuits() {
        let mut env = ArmEnvironment::from_means(&[0.2, 0.9, 0.4], 1).unwrap();
        let r = adaptive_topk(&mut env, 2, 1.0, 0.1).unwrap();
        assert_eq!(r.selected.len(), 2);
        assert_eq!(r.total_pulls, 0);
    }

    #[test]
    fn invalid_parameters() {
        let mut env = ArmEnvironment::from_means(&[0.2, 0.9], 1).unwrap();
        assert!(adaptive_topk(&mut env, 3, 0.1, 0.1).is_err());
        assert!(adaptive_topk(&mut env, 1, 0.0, 0.1).is_err());
        assert!(adaptive_topk(&mut env, 1, 0.1, 0.0).is_err());
        assert!(adaptive_topk_fixed_budget(&mut env, 1, 0.1, 0).is_err());
    }

    #[test]
    fn round_pull_counts_follow_schedule() {
        let means = gen_uniform(30).unwrap();
        let mut env = ArmEnvironment::from_means(&means, 3).unwrap();
        let alg = AdaptiveTopK::new(10, 0.1).unwrap();
        let run = alg.run(&mut env, 0.05).unwrap();
        assert!(!run.trace.is_empty());
        let mut expected_total = 0;
        for rec in &run.trace {
            let r = rec.round as f64;
            let want = (4f64.powi(rec.round as i32) * (2.0 * 30.0 * r * r / 0.1).ln()).ceil() as u64;
            assert_eq!(rec.pulls_per_arm, want);
            expected_total += want * rec.means.len() as u64;
        }
        assert_eq!(run.result.total_pulls, expected_total);
        assert_eq!(run.result.total_pulls, env.total_pulls());
        assert_eq!(run.result.per_arm_pulls, env.pull_counts());
    }

    #[test]
    fn partition_is_consistent() {
        let means = gen_two_group(40, 8).unwrap();
        for seed in 0..20 {
            let mut env = ArmEnvironment::from_means(&means, seed).unwrap();
            let r = adaptive_topk(&mut env, 8, 0.05, 0.1).unwrap();
            assert_eq!(r.selected.len(), 8);
            assert!(r.accepted_early.iter().all(|a| r.selected.contains(a)));
            assert!(r.rejected.iter().all(|a| !r.selected.contains(a)));
        }
    }

    #[test]
    fn deterministic_arm_is_found() {
        let mut means = vec![0.0; 10];
        means[6] = 1.0;
        let mut hits = 0;
        for seed in 0..200 {
            let mut env = ArmEnvironment::from_means(&means, seed).unwrap();
            let r = adaptive_topk(&mut env, 1, 0.1, 0.1).unwrap();
            hits += (r.selected == vec![6]) as usize;
        }
        assert!(hits >= 180, "{hits}");
    }

    #[test]
    fn empirical_event_implies_correct_commitments() {
        // Distinct means so that top-K membership is unambiguous.
        let means: Vec<f64> = (0..24).map(|i| 0.95 - 0.037 * i as f64).collect();
        let k = 9;
        let mut checked = 0;
        for seed in 0..60 {
            let mut env = ArmEnvironment::from_means(&means, seed).unwrap();
            let run = AdaptiveTopK::new(k, 0.2).unwrap().run(&mut env, 0.02).unwrap();
            let event = run.trace.iter().all(|rec| {
                rec.means
                    .iter()
                    .all(|&(arm, m)| (m - means[arm]).abs() < 0.5f64.powi(rec.round as i32))
            });
            if !event {
                continue;
            }
            checked += 1;
            assert!(run.result.accepted_early.iter().all(|&a| a < k), "seed {seed}");
            assert!(run.result.rejected.iter().all(|&a| a >= k), "seed {seed}");
            assert!(is_eps_top_k(&means, k, 0.02, &run.result.selected).unwrap());
        }
        assert!(checked > 40);
    }

    #[test]
    fn budget_is_respected() {
        let means = gen_two_group(50, 10).unwrap();
        for budget in [1, 49, 50, 120, 5_000, 40_000, 300_000] {
            let mut env = ArmEnvironment::from_means(&means, budget).unwrap();
            let r = adaptive_topk_fixed_budget(&mut env, 10, 0.01, budget).unwrap();
            assert!(r.total_pulls <= budget, "{budget}");
            assert_eq!(r.selected.len(), 10);
        }
    }

    #[test]
    fn budget_of_n_pulls_each_arm_once() {
        let means = gen_uniform(20).unwrap();
        let mut env = ArmEnvironment::from_means(&means, 8).unwrap();
        let r = adaptive_topk_fixed_budget(&mut env, 5, 0.01, 20).unwrap();
        assert_eq!(r.per_arm_pulls, vec![1; 20]);
    }

    #[test]
    fn huge_budget_finishes() {
        let means = gen_two_group(30, 10).unwrap();
        let mut env = ArmEnvironment::from_means(&means, 2).unwrap();
        let r = adaptive_topk_fixed_budget(&mut env, 10, 0.05, u64::MAX).unwrap();
        assert_eq!(r.selected, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn smooth_schedule_runs() {
        let means = gen_two_group(100, 10).unwrap();
        let mut env = ArmEnvironment::from_means(&means, 5).unwrap();
        let alg = AdaptiveTopK::new(10, 0.01).unwrap().with_schedule(GapSchedule::Smooth);
        let run = alg.run_fixed_budget(&mut env, 50_000).unwrap();
        assert!(run.result.total_pulls <= 50_000);
        assert!(run.trace.len() > 1);
    }
}
