//! Result type shared by every selection algorithm, plus small ranking helpers.

use serde::{Deserialize, Serialize};

use crate::env::ArmSampler;

/// The arms an algorithm returned together with its pull accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected arm indices, ascending.
    pub selected: Vec<usize>,
    pub total_pulls: u64,
    pub per_arm_pulls: Vec<u64>,
    pub rounds_completed: usize,
    /// Arms committed as top arms before the final ranking step.
    pub accepted_early: Vec<usize>,
    /// Arms committed as non-top arms.
    pub rejected: Vec<usize>,
}

/// Snapshot of an environment's counters, so that results report only the
/// pulls made by one run.
#[derive(Debug, Clone)]
pub(crate) struct PullLedger {
    start: Vec<u64>,
}

impl PullLedger {
    pub(crate) fn open<S: ArmSampler + ?Sized>(env: &S) -> Self {
        Self {
            start: env.pull_counts().to_vec(),
        }
    }

    pub(crate) fn close<S: ArmSampler + ?Sized>(
        &self,
        env: &S,
        mut selected: Vec<usize>,
        rounds_completed: usize,
        mut accepted_early: Vec<usize>,
        mut rejected: Vec<usize>,
    ) -> SelectionResult {
        let per_arm_pulls: Vec<u64> = env
            .pull_counts()
            .iter()
            .zip(&self.start)
            .map(|(now, then)| now - then)
            .collect();
        selected.sort_unstable();
        accepted_early.sort_unstable();
        rejected.sort_unstable();
        SelectionResult {
            selected,
            total_pulls: per_arm_pulls.iter().sum(),
            per_arm_pulls,
            rounds_completed,
            accepted_early,
            rejected,
        }
    }
}

/// Orders `(arm, score)` pairs by score descending, lower arm index first on ties.
pub(crate) fn sort_by_score_desc(items: &mut [(usize, f64)]) {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// The `count` arms with the largest scores.
pub(crate) fn top_by_score(mut items: Vec<(usize, f64)>, count: usize) -> Vec<usize> {
    sort_by_score_desc(&mut items);
    items.into_iter().take(count).map(|(arm, _)| arm).collect()
}

/// The `count` arms with the smallest scores, lower arm index first on ties.
pub(crate) fn bottom_by_score(mut items: Vec<(usize, f64)>, count: usize) -> Vec<usize> {
    items.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    items.into_iter().take(count).map(|(arm, _)| arm).collect()
}

/// Rounds a real pull count up, saturating at `u64::MAX`.
pub(crate) fn ceil_pulls(x: f64) -> u64 {
    debug_assert!(x >= 0.0);
    // `as` saturates for out-of-range floats.
    (x.ceil() as u64).max(1)
}
