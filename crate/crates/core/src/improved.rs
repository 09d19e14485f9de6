//! The improved ε-top-K algorithm and its subroutines.
//!
//! [`est_kth_arm`] locates an arm whose mean sits near the `K`-th largest one
//! by repeated halving. [`eps_split`] reuses the halving to split a set at a
//! wide gap. [`elim`] and [`reverse_elim`] discard or accept a tenth of a set
//! with few mistakes, and [`opt_mai`] is a uniform-allocation PAC selector
//! used at the boundary. [`ImprovedTopK`] drives them.
//!
//! Real-valued indices are rounded to the nearest integer and clamped into
//! `[1, set size]`, breaking ties toward the larger candidate set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ArmSampler, Complement};
use crate::error::{check_positive, check_unit_interval_open, BanditError, Result};
use crate::selection::{bottom_by_score, ceil_pulls, sort_by_score_desc, top_by_score, PullLedger, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subroutine {
    EstKthArm,
    EpsSplit,
    Elim,
    ReverseElim,
    OptMai,
}

/// One subroutine invocation and the pulls it spent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubroutineCall {
    pub name: Subroutine,
    pub set_size: usize,
    pub k: usize,
    pub phi: f64,
    pub tau: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: f64,
    pub pulls: u64,
    /// Pulls per round, for the halving subroutines; a single entry otherwise.
    pub round_pulls: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SubroutineBudgetLog {
    pub calls: Vec<SubroutineCall>,
}

impl SubroutineBudgetLog {
    pub fn total_pulls(&self) -> u64 {
        self.calls.iter().map(|c| c.pulls).sum()
    }
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

fn round_half_down(x: f64) -> f64 {
    (x - 0.5).ceil()
}

fn clamp_index(x: f64, len: usize) -> usize {
    if x.is_nan() || x < 1.0 {
        return 1;
    }
    (x as usize).clamp(1, len.max(1))
}

fn check_arm_set<S: ArmSampler + ?Sized>(env: &S, arms: &[usize]) -> Result<()> {
    if arms.is_empty() {
        return Err(BanditError::Empty);
    }
    let n = env.n_arms();
    let mut seen = vec![false; n];
    for &a in arms {
        if a >= n {
            return Err(BanditError::ArmOutOfRange { arm: a, n });
        }
        if std::mem::replace(&mut seen[a], true) {
            return Err(BanditError::DuplicateArm(a));
        }
    }
    Ok(())
}

fn pull_all<S: ArmSampler + ?Sized>(env: &mut S, arms: &[usize], m: u64) -> Result<Vec<(usize, f64)>> {
    arms.iter()
        .map(|&a| Ok((a, env.pull_batch(a, m)? as f64 / m as f64)))
        .collect()
}

/// Parameters of one halving round.
#[derive(Debug, Clone, Copy)]
struct RoundParams {
    tau: f64,
    phi: f64,
    delta: f64,
}

impl RoundParams {
    fn first(tau: f64, phi: f64, delta: f64) -> Self {
        Self {
            tau: tau / 4.0,
            phi: phi / 4.0,
            delta: delta / 8.0,
        }
    }

    fn next(self) -> Self {
        Self {
            tau: 0.75 * self.tau,
            phi: 0.75 * self.phi,
            delta: self.delta / 2.0,
        }
    }

    /// `⌈(8/φ_r²) ln(1/(τ_r δ_r δ))⌉`.
    fn pulls(self, delta: f64) -> u64 {
        ceil_pulls(8.0 / (self.phi * self.phi) * (1.0 / (self.tau * self.delta * delta)).ln())
    }
}

struct Halving {
    survivors: Vec<usize>,
    /// `(arm, round eliminated, mean in that round)`.
    eliminated: Vec<(usize, usize, f64)>,
    params: RoundParams,
    round_pulls: Vec<u64>,
}

/// Halves `arms` (keeping at least `target`) until at most `target` remain.
fn halve<S: ArmSampler + ?Sized>(
    env: &mut S,
    arms: &[usize],
    target: usize,
    tau: f64,
    phi: f64,
    delta: f64,
) -> Result<Halving> {
    let mut current = arms.to_vec();
    let mut params = RoundParams::first(tau, phi, delta);
    let mut eliminated = Vec::new();
    let mut round_pulls = Vec::new();
    let mut round = 1;
    while current.len() > target {
        let m = params.pulls(delta);
        let mut scored = pull_all(env, &current, m)?;
        round_pulls.push(m * current.len() as u64);
        let keep = target.max(current.len().div_ceil(2));
        sort_by_score_desc(&mut scored);
        eliminated.extend(scored[keep..].iter().map(|&(a, mean)| (a, round, mean)));
        current = scored[..keep].iter().map(|&(a, _)| a).collect();
        params = params.next();
        round += 1;
    }
    Ok(Halving {
        survivors: current,
        eliminated,
        params,
        round_pulls,
    })
}

fn check_subroutine_params(k: usize, set_size: usize, tau: f64, phi: f64, delta: f64) -> Result<()> {
    if k == 0 || k > set_size {
        return Err(BanditError::InvalidK { k, n: set_size });
    }
    check_unit_interval_open("tau", tau)?;
    check_unit_interval_open("phi", phi)?;
    check_unit_interval_open("delta", delta)
}

/// Output of [`est_kth_arm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KthArm {
    pub arm: usize,
    /// Empirical mean of `arm` from the final pulling round.
    pub estimate: f64,
}

/// Returns an arm whose mean lies in `[θ_K − φ, θ_{(1−τ)K} + φ]` with
/// probability at least `1 − δ`.
///
/// After halving down to at most `K` survivors, the survivors are pulled once
/// more at the final round's accuracy and the output is drawn uniformly from
/// those whose empirical mean is at most the `(1−τ/2)K`-th largest.
pub fn est_kth_arm<S, R>(
    env: &mut S,
    arms: &[usize],
    k: usize,
    tau: f64,
    phi: f64,
    delta: f64,
    rng: &mut R,
) -> Result<(KthArm, SubroutineCall)>
where
    S: ArmSampler + ?Sized,
    R: Rng + ?Sized,
{
    check_arm_set(env, arms)?;
    check_subroutine_params(k, arms.len(), tau, phi, delta)?;
    let mut h = halve(env, arms, k, tau, phi, delta)?;

    let m = h.params.pulls(delta);
    let mut scored = pull_all(env, &h.survivors, m)?;
    h.round_pulls.push(m * scored.len() as u64);
    sort_by_score_desc(&mut scored);
    let idx = clamp_index(round_half_down((1.0 - tau / 2.0) * k as f64), scored.len());
    let cutoff = scored[idx - 1].1;
    let candidates: Vec<(usize, f64)> = scored.into_iter().filter(|&(_, mean)| mean <= cutoff).collect();
    let (arm, estimate) = candidates[rng.random_range(0..candidates.len())];

    let call = SubroutineCall {
        name: Subroutine::EstKthArm,
        set_size: arms.len(),
        k,
        phi,
        tau: Some(tau),
        gamma: None,
        delta,
        pulls: h.round_pulls.iter().sum(),
        round_pulls: h.round_pulls,
    };
    Ok((KthArm { arm, estimate }, call))
}

/// Returns `K` arms with aggregate regret at most `2τ` with probability at
/// least `1 − δ`, provided `θ_{(1−τ)K} − θ_{(1+τ)K+1} ≥ φ`.
///
/// Halves down to `(1−τ)K` survivors and fills up to `K` with the arms that
/// were eliminated last (higher empirical mean first).
pub fn eps_split<S: ArmSampler + ?Sized>(
    env: &mut S,
    arms: &[usize],
    k: usize,
    tau: f64,
    phi: f64,
    delta: f64,
) -> Result<(Vec<usize>, SubroutineCall)> {
    check_arm_set(env, arms)?;
    check_subroutine_params(k, arms.len(), tau, phi, delta)?;
    let target = round_half_up((1.0 - tau) * k as f64);
    if target < 1.0 {
        return Err(BanditError::InvalidParameter {
            name: "tau",
            value: tau,
            reason: "(1 - tau) K rounds below one arm",
        });
    }
    let h = halve(env, arms, target as usize, tau, phi, delta)?;
    let mut selected = h.survivors;
    let mut rest = h.eliminated;
    rest.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0)));
    let fill = k.saturating_sub(selected.len());
    selected.extend(rest.iter().take(fill).map(|&(a, _, _)| a));
    let call = SubroutineCall {
        name: Subroutine::EpsSplit,
        set_size: arms.len(),
        k,
        phi,
        tau: Some(tau),
        gamma: None,
        delta,
        pulls: h.round_pulls.iter().sum(),
        round_pulls: h.round_pulls,
    };
    Ok((selected, call))
}

/// Per-arm pulls of [`elim`] and [`reverse_elim`]: `⌈(2/φ²) ln(4/(γδ))⌉`.
///
/// This is the smallest count for which Hoeffding's inequality gives
/// `Pr[|θ̃ − θ| ≥ φ/2] ≤ γδ/2`.
pub fn elim_pulls_per_arm(gamma: f64, phi: f64, delta: f64) -> u64 {
    ceil_pulls(2.0 / (phi * phi) * (4.0 / (gamma * delta)).ln())
}

fn elim_common<S: ArmSampler + ?Sized>(
    env: &mut S,
    arms: &[usize],
    k: usize,
    gamma: f64,
    phi: f64,
    delta: f64,
    reverse: bool,
) -> Result<(Vec<usize>, SubroutineCall)> {
    check_arm_set(env, arms)?;
    if k == 0 || k > arms.len() {
        return Err(BanditError::InvalidK { k, n: arms.len() });
    }
    check_unit_interval_open("gamma", gamma)?;
    check_unit_interval_open("phi", phi)?;
    check_unit_interval_open("delta", delta)?;
    let m = elim_pulls_per_arm(gamma, phi, delta);
    let scored = pull_all(env, arms, m)?;
    let size = arms.len().div_ceil(10);
    let chosen = if reverse {
        top_by_score(scored, size)
    } else {
        bottom_by_score(scored, size)
    };
    let pulls = m * arms.len() as u64;
    let call = SubroutineCall {
        name: if reverse { Subroutine::ReverseElim } else { Subroutine::Elim },
        set_size: arms.len(),
        k,
        phi,
        tau: None,
        gamma: Some(gamma),
        delta,
        pulls,
        round_pulls: vec![pulls],
    };
    Ok((chosen, call))
}

/// The `⌈|S|/10⌉` arms with the smallest empirical means. At most `γK` of
/// them are top-`K` arms with probability `1 − δ` when
/// `θ_K − θ_{(|S|+K)/2} ≥ φ` and `K ≤ 2|S|/3`.
pub fn elim<S: ArmSampler + ?Sized>(
    env: &mut S,
    arms: &[usize],
    k: usize,
    gamma: f64,
    phi: f64,
    delta: f64,
) -> Result<(Vec<usize>, SubroutineCall)> {
    elim_common(env, arms, k, gamma, phi, delta, false)
}

/// The `⌈|S|/10⌉` arms with the largest empirical means. At most `γK` of
/// them are bottom-`(|S|−K)` arms with probability `1 − δ` when
/// `θ_{K/2} − θ_K ≥ φ` and `K ≥ |S|/3`.
pub fn reverse_elim<S: ArmSampler + ?Sized>(
    env: &mut S,
    arms: &[usize],
    k: usize,
    gamma: f64,
    phi: f64,
    delta: f64,
) -> Result<(Vec<usize>, SubroutineCall)> {
    elim_common(env, arms, k, gamma, phi, delta, true)
}

/// Per-arm pulls of [`opt_mai`]: `⌈(2/ε²) ln(2|S|/δ)⌉`.
pub fn opt_mai_pulls_per_arm(set_size: usize, epsilon: f64, delta: f64) -> u64 {
    ceil_pulls(2.0 / (epsilon * epsilon) * (2.0 * set_size as f64 / delta).ln())
}

/// ε-top-K selection with probability `1 − δ` by uniform allocation.
///
/// Every arm is estimated within `ε/2` simultaneously (Hoeffding plus a union
/// bound), which is enough for the top-`K` empirical means to have regret at
/// most `ε`. It costs an extra `log |S|` factor over the optimal
/// instance-independent selector but honours the same success contract.
pub fn opt_mai<S: ArmSampler + ?Sized>(
    env: &mut S,
    arms: &[usize],
    k: usize,
    epsilon: f64,
    delta: f64,
) -> Result<(Vec<usize>, SubroutineCall)> {
    check_arm_set(env, arms)?;
    if k == 0 || k > arms.len() {
        return Err(BanditError::InvalidK { k, n: arms.len() });
    }
    check_positive("epsilon", epsilon)?;
    check_unit_interval_open("delta", delta)?;
    let mut call = SubroutineCall {
        name: Subroutine::OptMai,
        set_size: arms.len(),
        k,
        phi: epsilon,
        tau: None,
        gamma: None,
        delta,
        pulls: 0,
        round_pulls: vec![0],
    };
    if k == arms.len() || epsilon >= 1.0 {
        return Ok((arms[..k].to_vec(), call));
    }
    let m = opt_mai_pulls_per_arm(arms.len(), epsilon, delta);
    let scored = pull_all(env, arms, m)?;
    call.pulls = m * arms.len() as u64;
    call.round_pulls = vec![call.pulls];
    Ok((top_by_score(scored, k), call))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovedRun {
    pub result: SelectionResult,
    pub log: SubroutineBudgetLog,
}

/// Configuration of the improved algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovedTopK {
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
}

impl ImprovedTopK {
    pub fn new(k: usize, epsilon: f64, delta: f64) -> Result<Self> {
        check_positive("epsilon", epsilon)?;
        check_unit_interval_open("delta", delta)?;
        Ok(Self { k, epsilon, delta })
    }

    /// Runs on `env`. Uses `rng` for the randomized choice inside the
    /// `K`-th arm estimator; rewards come from `env` only.
    pub fn run<S, R>(&self, env: &mut S, rng: &mut R) -> Result<ImprovedRun>
    where
        S: ArmSampler + ?Sized,
        R: Rng + ?Sized,
    {
        let n = env.n_arms();
        let k = self.k;
        if k > n {
            return Err(BanditError::InvalidK { k, n });
        }
        let ledger = PullLedger::open(env);
        let mut log = SubroutineBudgetLog::default();
        if k == 0 || k == n || self.epsilon >= 1.0 {
            let result = ledger.close(env, (0..k).collect(), 0, Vec::new(), Vec::new());
            return Ok(ImprovedRun { result, log });
        }
        if 2 * k > n {
            // Find the ε-bottom-(n−K) arms as the top arms of the complemented
            // rewards and report the rest.
            let mut flipped = Complement::new(&mut *env);
            let inner = self.core(&mut flipped, n - k, rng, &mut log)?;
            let bottom = inner.selected;
            let selected = (0..n).filter(|a| !bottom.contains(a)).collect();
            let result = ledger.close(env, selected, inner.rounds, inner.rejected, inner.accepted);
            return Ok(ImprovedRun { result, log });
        }
        let out = self.core(env, k, rng, &mut log)?;
        let result = ledger.close(env, out.selected, out.rounds, out.accepted, out.rejected);
        Ok(ImprovedRun { result, log })
    }

    fn core<S, R>(&self, env: &mut S, k: usize, rng: &mut R, log: &mut SubroutineBudgetLog) -> Result<CoreOutcome>
    where
        S: ArmSampler + ?Sized,
        R: Rng + ?Sized,
    {
        let n = env.n_arms();
        let (eps, delta) = (self.epsilon, self.delta);
        let kf = k as f64;
        let k_low = (1.0 - eps * eps) * kf;
        let k_high = (1.0 + eps * eps) * kf + 1.0;

        let mut undecided: Vec<usize> = (0..n).collect();
        let mut accepted: Vec<usize> = Vec::new();
        // Rejected arms in rejection order, so the latest rejections come last.
        let mut rejected: Vec<usize> = Vec::new();
        let mut r = 1u32;
        let mut r_phi = 1i32;

        let finish = |mut selected: Vec<usize>, rejected: &[usize], accepted: Vec<usize>, r: u32| {
            let missing = k.saturating_sub(selected.len());
            selected.extend(rejected.iter().rev().filter(|a| !selected.contains(a)).take(missing).copied().collect::<Vec<_>>());
            CoreOutcome {
                selected,
                accepted,
                rejected: rejected.to_vec(),
                rounds: r as usize - 1,
            }
        };

        loop {
            let k_rem = k - accepted.len();
            if k_rem == 0 || undecided.len() <= k_rem {
                let mut selected = accepted.clone();
                selected.extend(&undecided);
                return Ok(finish(selected, &rejected, accepted, r));
            }
            let s_len = undecided.len();
            let rem = k_rem as f64;
            let a_len = accepted.len() as f64;
            let tau = eps * eps / (100.0 * (r as f64).powi(2));

            r_phi -= 1;
            let phi = loop {
                r_phi += 1;
                let phi = 0.5f64.powi(r_phi);
                let d = delta / (100.0 * (r as f64 + r_phi as f64).powi(2));
                let mut estimate = |target: f64, log: &mut SubroutineBudgetLog| -> Result<f64> {
                    let kk = clamp_index(round_half_up(target), s_len);
                    let (out, call) = est_kth_arm(env, &undecided, kk, tau, phi, d, rng)?;
                    log.calls.push(call);
                    Ok(out.estimate)
                };
                let theta_k_plus = estimate(k_high - a_len, log)?;
                let theta_k_minus = estimate(k_low - a_len, log)?;
                let theta_plus = estimate((s_len as f64 + rem) / 2.0, log)?;
                let theta_minus = estimate(rem / 2.0, log)?;

                let done = 10.0 * rem * phi < kf * eps
                    || theta_k_minus - theta_k_plus > 3.0 * phi
                    || (rem <= s_len as f64 / 2.0 && theta_k_plus - theta_plus > 3.0 * phi)
                    || (rem > s_len as f64 / 2.0
                        && theta_k_plus - theta_plus > 3.0 * phi
                        && theta_minus - theta_k_minus > 3.0 * phi);
                if done {
                    break (phi, theta_k_minus - theta_k_plus > 3.0 * phi);
                }
            };
            let (phi, split) = phi;

            if 10.0 * rem * phi < kf * eps {
                let (chosen, call) = opt_mai(env, &undecided, k_rem, phi, delta / 100.0)?;
                log.calls.push(call);
                let mut selected = accepted.clone();
                selected.extend(chosen);
                return Ok(finish(selected, &rejected, accepted, r));
            }
            if split {
                let ratio = (k_high - k_low) / rem;
                let usable = ratio < 1.0 && round_half_up((1.0 - ratio) * rem) >= 1.0;
                let (chosen, call) = if usable {
                    eps_split(env, &undecided, k_rem, ratio, phi, delta / 100.0)?
                } else {
                    opt_mai(env, &undecided, k_rem, phi, delta / 100.0)?
                };
                log.calls.push(call);
                let mut selected = accepted.clone();
                selected.extend(chosen);
                return Ok(finish(selected, &rejected, accepted, r));
            }

            let gamma = tau;
            let d = delta / (100.0 * (r as f64).powi(2));
            let (u, call) = elim(env, &undecided, k_rem, gamma, phi, d)?;
            log.calls.push(call);
            let v = if rem > s_len as f64 / 2.0 {
                let (v, call) = reverse_elim(env, &undecided, k_rem, gamma, phi, d)?;
                log.calls.push(call);
                v
            } else {
                Vec::new()
            };
            r += 1;
            undecided.retain(|a| !u.contains(a) && !v.contains(a));
            accepted.extend(v);
            rejected.extend(u);
            debug_assert_eq!(undecided.len() + accepted.len() + rejected.len(), n);
        }
    }
}

struct CoreOutcome {
    selected: Vec<usize>,
    accepted: Vec<usize>,
    rejected: Vec<usize>,
    rounds: usize,
}

pub fn improved_topk<S, R>(env: &mut S, k: usize, epsilon: f64, delta: f64, rng: &mut R) -> Result<SelectionResult>
where
    S: ArmSampler + ?Sized,
    R: Rng + ?Sized,
{
    Ok(ImprovedTopK::new(k, epsilon, delta)?.run(env, rng)?.result)
}
