//! Coin-tossing lower-bound machinery.
//!
//! A coin is `(0.5+η)`- or `(0.5−η)`-biased and a solver may answer
//! "unknown" with probability at most 0.9. [`optimal_coin_error`] evaluates
//! the exact error of the optimal symmetric threshold strategy after `m`
//! tosses. [`reduction_run`] turns any ε-top-K selector into a coin solver by
//! hiding the coin among `n` planted arms.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ArmEnvironment, ArmSampler};
use crate::error::{check_positive, BanditError, Result};

/// Largest toss count accepted by [`optimal_coin_error`].
pub const MAX_TOSSES: u64 = 10_000_000;

/// Probability mass the solver may spend on "unknown".
pub const GIVE_UP_MASS: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoinValue {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoinAnswer {
    Plus,
    Minus,
    Unknown,
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta < 0.5 {
        Ok(())
    } else {
        Err(BanditError::InvalidParameter {
            name: "eta",
            value: eta,
            reason: "must lie in (0, 0.5)",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoinTossingInstance {
    pub eta: f64,
    pub hidden: CoinValue,
    pub seed: u64,
}

impl CoinTossingInstance {
    pub fn new(eta: f64, hidden: CoinValue, seed: u64) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self { eta, hidden, seed })
    }

    /// Head probability of the coin.
    pub fn bias(&self) -> f64 {
        match self.hidden {
            CoinValue::Plus => 0.5 + self.eta,
            CoinValue::Minus => 0.5 - self.eta,
        }
    }
}

/// `n` arms, `K = n/2` of them planted at `0.5+η`, the rest at `0.5−η`, and
/// the arm at `special` replaced by the coin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardBanditInstance {
    pub n: usize,
    pub k: usize,
    pub eta: f64,
    /// Planted high arms, ascending.
    pub planted: Vec<usize>,
    pub special: usize,
    pub coin: CoinTossingInstance,
}

impl HardBanditInstance {
    /// Value of every arm except the coin, which the reduction knows.
    pub fn known_value(&self, arm: usize) -> f64 {
        if self.planted.binary_search(&arm).is_ok() {
            0.5 + self.eta
        } else {
            0.5 - self.eta
        }
    }

    /// Realized arm means, coin included.
    pub fn means(&self) -> Vec<f64> {
        (0..self.n)
            .map(|a| if a == self.special { self.coin.bias() } else { self.known_value(a) })
            .collect()
    }

    pub fn high_count(&self) -> usize {
        self.means().iter().filter(|&&m| m > 0.5).count()
    }
}

/// Builds the hard instance from a seed. `hidden` fixes the coin's value.
pub fn make_hard_instance(n: usize, eta: f64, hidden: CoinValue, seed: u64) -> Result<HardBanditInstance> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(BanditError::InvalidParameter {
            name: "n",
            value: n as f64,
            reason: "must be even and at least 2",
        });
    }
    let coin = CoinTossingInstance::new(eta, hidden, seed)?;
    let k = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planted = sample(&mut rng, n, k).into_vec();
    planted.sort_unstable();
    let special = rng.random_range(0..n);
    Ok(HardBanditInstance {
        n,
        k,
        eta,
        planted,
        special,
        coin,
    })
}

/// Environment that refuses to toss one arm beyond a cap.
#[derive(Debug)]
pub struct CappedArm<S> {
    inner: S,
    arm: usize,
    cap: u64,
}

impl<S: ArmSampler> CappedArm<S> {
    pub fn new(inner: S, arm: usize, cap: u64) -> Self {
        Self { inner, arm, cap }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: ArmSampler> ArmSampler for CappedArm<S> {
    fn n_arms(&self) -> usize {
        self.inner.n_arms()
    }

    fn pull_batch(&mut self, arm: usize, m: u64) -> Result<u64> {
        if arm == self.arm && self.inner.pull_counts()[arm].saturating_add(m) > self.cap {
            return Err(BanditError::PullCapExceeded { arm });
        }
        self.inner.pull_batch(arm, m)
    }

    fn pull_counts(&self) -> &[u64] {
        self.inner.pull_counts()
    }

    fn total_pulls(&self) -> u64 {
        self.inner.total_pulls()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub n: usize,
    pub eta: f64,
    /// Target error of the coin solver; the selector runs at `η/4 · ε`.
    pub epsilon: f64,
    /// Pull count `C` of the selector; the coin may be tossed `⌊20C/n⌋` times.
    pub pull_cap: u64,
    /// Lower bound required on `εK`.
    pub c_k: f64,
}

impl ReductionConfig {
    pub fn new(n: usize, eta: f64, epsilon: f64, pull_cap: u64) -> Self {
        Self {
            n,
            eta,
            epsilon,
            pull_cap,
            c_k: 4.0,
        }
    }

    pub fn selector_epsilon(&self) -> f64 {
        self.eta / 4.0 * self.epsilon
    }

    pub fn coin_toss_cap(&self) -> u64 {
        (20u128 * self.pull_cap as u128 / self.n as u128).min(u64::MAX as u128) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionOutcome {
    pub answer: CoinAnswer,
    pub hidden: CoinValue,
    pub tosses_on_coin: u64,
    pub total_pulls: u64,
    pub gave_up: bool,
    /// `None` when the run gave up before verification.
    pub verified: Option<bool>,
}

impl ReductionOutcome {
    pub fn is_correct(&self) -> bool {
        matches!(
            (self.answer, self.hidden),
            (CoinAnswer::Plus, CoinValue::Plus) | (CoinAnswer::Minus, CoinValue::Minus)
        )
    }
}

/// Solves one coin instance with a top-K selector.
///
/// `selector(env, K, ε')` must return `K` arms. The run gives up when the coin
/// would be tossed more than `⌊20C/n⌋` times or when the returned set fails
/// the check `ρ ≥ (0.5+η) − (ε' + 2η/K)`, where `ρ` averages the known values
/// over the returned arms other than the coin. An empty average passes.
pub fn reduction_run<F>(mut selector: F, cfg: &ReductionConfig, hidden: CoinValue, seed: u64) -> Result<ReductionOutcome>
where
    F: FnMut(&mut dyn ArmSampler, usize, f64) -> Result<Vec<usize>>,
{
    check_positive("epsilon", cfg.epsilon)?;
    let inst = make_hard_instance(cfg.n, cfg.eta, hidden, seed)?;
    if cfg.epsilon * (inst.k as f64) < cfg.c_k {
        return Err(BanditError::Config(format!(
            "epsilon * K = {} is below the required constant {}",
            cfg.epsilon * inst.k as f64,
            cfg.c_k
        )));
    }
    let eps_prime = cfg.selector_epsilon();
    let env = ArmEnvironment::from_means(&inst.means(), seed.wrapping_add(0x9e37_79b9_7f4a_7c15))?;
    let mut capped = CappedArm::new(env, inst.special, cfg.coin_toss_cap());
    let returned = selector(&mut capped, inst.k, eps_prime);
    let tosses_on_coin = capped.pull_counts()[inst.special];
    let total_pulls = capped.total_pulls();
    let mut outcome = ReductionOutcome {
        answer: CoinAnswer::Unknown,
        hidden,
        tosses_on_coin,
        total_pulls,
        gave_up: false,
        verified: None,
    };
    let chosen = match returned {
        Ok(chosen) => chosen,
        Err(BanditError::PullCapExceeded { .. }) => {
            outcome.gave_up = true;
            return Ok(outcome);
        }
        Err(e) => return Err(e),
    };
    if chosen.len() != inst.k {
        return Err(BanditError::SelectionSize {
            got: chosen.len(),
            expected: inst.k,
        });
    }
    let others: Vec<f64> = chosen
        .iter()
        .filter(|&&a| a != inst.special)
        .map(|&a| inst.known_value(a))
        .collect();
    let passed = others.is_empty() || {
        let rho = others.iter().sum::<f64>() / others.len() as f64;
        rho >= (0.5 + cfg.eta) - (eps_prime + 2.0 * cfg.eta / inst.k as f64)
    };
    outcome.verified = Some(passed);
    if passed {
        outcome.answer = if chosen.contains(&inst.special) {
            CoinAnswer::Plus
        } else {
            CoinAnswer::Minus
        };
    }
    Ok(outcome)
}

#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `ln Pr[B = x]` for `B ~ Binomial(m, p)`, `x = 0..=m`.
fn binomial_log_pmf(m: u64, p: f64) -> Vec<f64> {
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut out = Vec::with_capacity(m as usize + 1);
    let mut log_choose = Neumaier::default();
    for x in 0..=m {
        if x > 0 {
            log_choose.add(((m - x + 1) as f64).ln());
            log_choose.add(-(x as f64).ln());
        }
        out.push(log_choose.value() + x as f64 * lp + (m - x) as f64 * lq);
    }
    out
}

/// Exact error of the optimal threshold strategy for `m` tosses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoinError {
    pub m: u64,
    pub eta: f64,
    /// Half-width of the give-up window `[0.5m − t, 0.5m + t]`.
    pub t: u64,
    /// Give-up probability with window `t` (at most 0.9).
    pub give_up_mass: f64,
    /// Give-up probability with window `t + 1` (above 0.9).
    pub next_give_up_mass: f64,
    pub error: f64,
    pub ln_error: f64,
}

/// Exact error probability of the optimal strategy after `m` tosses.
///
/// The strategy answers "unknown" when the head count lies in
/// `[0.5m − t, 0.5m + t]`, with `t` the largest integer keeping that mass at
/// most 0.9 under the `(0.5−η)` coin. The error is
/// `Pr_{0.5−η}[heads > 0.5m + t]`, computed from log-space binomial terms.
pub fn optimal_coin_error(m: u64, eta: f64) -> Result<CoinError> {
    coin_error_under(m, eta, CoinValue::Minus)
}

/// Same strategy, error measured under either coin value. Both values give
/// the same number by symmetry.
pub fn coin_error_under(m: u64, eta: f64, hidden: CoinValue) -> Result<CoinError> {
    check_eta(eta)?;
    if m == 0 {
        return Err(BanditError::ZeroPulls);
    }
    if m > MAX_TOSSES {
        return Err(BanditError::TooLarge(format!("{m} tosses exceeds the limit of {MAX_TOSSES}")));
    }
    let p = match hidden {
        CoinValue::Minus => 0.5 - eta,
        CoinValue::Plus => 0.5 + eta,
    };
    let log_pmf = binomial_log_pmf(m, p);
    let mut acc = Neumaier::default();
    let mut cdf = Vec::with_capacity(log_pmf.len());
    for &l in &log_pmf {
        acc.add(l.exp());
        cdf.push(acc.value());
    }
    let half = m as f64 / 2.0;
    // Head counts inside [0.5m - t, 0.5m + t] as an index range.
    let window = |t: u64| -> (i64, i64) {
        let lo = (half - t as f64).ceil() as i64;
        let hi = (half + t as f64).floor() as i64;
        (lo.max(0), hi.min(m as i64))
    };
    let mass = |t: u64| -> f64 {
        let (lo, hi) = window(t);
        if lo > hi {
            return 0.0;
        }
        let below = if lo == 0 { 0.0 } else { cdf[lo as usize - 1] };
        (cdf[hi as usize] - below).max(0.0)
    };
    let mut t = 0u64;
    while mass(t + 1) <= GIVE_UP_MASS {
        t += 1;
    }
    let give_up_mass = mass(t);
    let next_give_up_mass = mass(t + 1);
    debug_assert!(give_up_mass <= GIVE_UP_MASS && next_give_up_mass > GIVE_UP_MASS);

    let (lo, hi) = window(t);
    let tail: &[f64] = match hidden {
        CoinValue::Minus => &log_pmf[(hi + 1).min(m as i64 + 1) as usize..],
        CoinValue::Plus => &log_pmf[..lo.max(0) as usize],
    };
    let ln_error = log_sum_exp(tail);
    Ok(CoinError {
        m,
        eta,
        t,
        give_up_mass,
        next_give_up_mass,
        error: ln_error.exp(),
        ln_error,
    })
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = Neumaier::default();
    for &l in terms {
        acc.add((l - max).exp());
    }
    max + acc.value().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardness::hardness;
    use statrs::distribution::{Binomial, Discrete, DiscreteCDF};

    /// Enumerates all 2^m toss sequences.
    fn brute_force_error(m: u32, eta: f64) -> (u64, f64) {
        let p = 0.5 - eta;
        let mut by_heads = vec![0.0f64; m as usize + 1];
        for mask in 0u64..(1 << m) {
            let h = mask.count_ones() as usize;
            by_heads[h] += p.powi(h as i32) * (1.0 - p).powi((m as usize - h) as i32);
        }
        let half = m as f64 / 2.0;
        let mass = |t: f64| -> f64 {
            (0..=m as usize)
                .filter(|&x| x as f64 >= half - t && x as f64 <= half + t)
                .map(|x| by_heads[x])
                .sum()
        };
        let mut t = 0u64;
        while mass((t + 1) as f64) <= 0.9 {
            t += 1;
        }
        let err = (0..=m as usize).filter(|&x| x as f64 > half + t as f64).map(|x| by_heads[x]).sum();
        (t, err)
    }

    #[test]
    fn matches_enumeration_for_small_m() {
        for m in 1..=14 {
            for eta in [0.05, 0.1, 0.3] {
                let got = optimal_coin_error(m as u64, eta).unwrap();
                let (t, err) = brute_force_error(m, eta);
                assert_eq!(got.t, t, "m={m} eta={eta}");
                assert!((got.error - err).abs() < 1e-12, "m={m}: {} vs {err}", got.error);
            }
        }
    }

    #[test]
    fn single_toss() {
        let e = optimal_coin_error(1, 0.1).unwrap();
        assert_eq!(e.t, 0);
        assert!((e.error - 0.4).abs() < 1e-15);
    }

    #[test]
    fn matches_statrs_for_moderate_m() {
        for m in [101u64, 400, 1500] {
            let e = optimal_coin_error(m, 0.1).unwrap();
            let dist = Binomial::new(0.4, m).unwrap();
            let threshold = (m as f64 / 2.0 + e.t as f64).floor() as u64;
            let tail = dist.sf(threshold);
            assert!((e.error - tail).abs() <= 1e-9 * tail.max(1e-300), "m={m}: {} vs {tail}", e.error);
            let lo = (m as f64 / 2.0 - e.t as f64).ceil() as u64;
            let window: f64 = (lo..=threshold).map(|x| dist.pmf(x)).sum();
            assert!((window - e.give_up_mass).abs() < 1e-9);
        }
    }

    #[test]
    fn window_is_maximal() {
        for m in [1u64, 2, 7, 100, 999, 5000, 100_000] {
            let e = optimal_coin_error(m, 0.1).unwrap();
            assert!(e.give_up_mass <= 0.9, "{e:?}");
            assert!(e.next_give_up_mass > 0.9, "{e:?}");
            assert!(e.ln_error.is_finite());
            assert!(m > 5000 || e.error > 0.0);
        }
    }

    #[test]
    fn symmetric_in_hidden_value() {
        for m in [1u64, 10, 333, 2000] {
            let a = coin_error_under(m, 0.1, CoinValue::Minus).unwrap();
            let b = coin_error_under(m, 0.1, CoinValue::Plus).unwrap();
            assert_eq!(a.t, b.t);
            assert!((a.ln_error - b.ln_error).abs() < 1e-9, "{a:?} {b:?}");
        }
    }

    #[test]
    fn decays_with_m() {
        let e100 = optimal_coin_error(100, 0.1).unwrap();
        let e400 = optimal_coin_error(400, 0.1).unwrap();
        assert!(e400.error < e100.error);
        let big = optimal_coin_error(1_000_000, 0.1).unwrap();
        assert!(big.ln_error.is_finite() && big.ln_error < -1000.0);
    }

    #[test]
    fn coin_error_rejects_bad_input() {
        assert!(optimal_coin_error(0, 0.1).is_err());
        assert!(optimal_coin_error(10, 0.5).is_err());
        assert!(optimal_coin_error(MAX_TOSSES + 1, 0.1).is_err());
    }

    #[test]
    fn hard_instance_cases() {
        assert!(make_hard_instance(3, 0.1, CoinValue::Plus, 0).is_err());
        assert!(make_hard_instance(4, 0.6, CoinValue::Plus, 0).is_err());
        for seed in 0..200 {
            for hidden in [CoinValue::Plus, CoinValue::Minus] {
                let inst = make_hard_instance(2, 0.1, hidden, seed).unwrap();
                let special_planted = inst.planted.contains(&inst.special);
                let expect = match (hidden, special_planted) {
                    (CoinValue::Plus, false) => 2,
                    (CoinValue::Minus, true) => 0,
                    _ => 1,
                };
                assert_eq!(inst.high_count(), expect);
                let inst = make_hard_instance(40, 0.1, hidden, seed).unwrap();
                assert_eq!(inst.planted.len(), 20);
                assert!((19..=21).contains(&inst.high_count()));
            }
        }
    }

    #[test]
    fn hard_instance_hardness_scale() {
        let inst = make_hard_instance(100, 0.1, CoinValue::Plus, 5).unwrap();
        let rep = hardness(&inst.means(), inst.k, 0.05).unwrap();
        assert!(rep.gaps.iter().all(|&g| g.abs() < 1e-12 || (g - 0.2).abs() < 1e-12));
        let scale = 100.0 / 0.01;
        assert!(rep.h_t_eps >= 0.1 * scale && rep.h_t_eps <= 10.0 * scale, "{}", rep.h_t_eps);
    }

    fn oracle_selector(means: Vec<f64>) -> impl FnMut(&mut dyn ArmSampler, usize, f64) -> Result<Vec<usize>> {
        move |_, k, _| {
            let mut idx: Vec<usize> = (0..means.len()).collect();
            idx.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
            Ok(idx[..k].to_vec())
        }
    }

    #[test]
    fn perfect_selector_answers_plus() {
        let cfg = ReductionConfig::new(10, 0.1, 1.0, 1000);
        for seed in 0..100 {
            let inst = make_hard_instance(10, 0.1, CoinValue::Plus, seed).unwrap();
            if !inst.planted.contains(&inst.special) {
                continue;
            }
            let out = reduction_run(oracle_selector(inst.means()), &cfg, CoinValue::Plus, seed).unwrap();
            assert_eq!(out.answer, CoinAnswer::Plus);
            return;
        }
        panic!("no seed planted the coin");
    }

    #[test]
    fn zero_cap_gives_up() {
        let cfg = ReductionConfig::new(10, 0.1, 1.0, 0);
        let sel = |env: &mut dyn ArmSampler, k: usize, _eps: f64| -> Result<Vec<usize>> {
            for a in 0..env.n_arms() {
                env.pull_batch(a, 1)?;
            }
            Ok((0..k).collect())
        };
        let out = reduction_run(sel, &cfg, CoinValue::Minus, 3).unwrap();
        assert_eq!(out.answer, CoinAnswer::Unknown);
        assert!(out.gave_up);
        assert_eq!(out.tosses_on_coin, 0);
    }

    #[test]
    fn coin_tosses_counted_and_capped() {
        let cfg = ReductionConfig::new(10, 0.1, 1.0, 30);
        assert_eq!(cfg.coin_toss_cap(), 60);
        let sel = |env: &mut dyn ArmSampler, k: usize, _eps: f64| -> Result<Vec<usize>> {
            for a in 0..env.n_arms() {
                env.pull_batch(a, 25)?;
                env.pull_batch(a, 25)?;
            }
            Ok((0..k).collect())
        };
        let out = reduction_run(sel, &cfg, CoinValue::Plus, 11).unwrap();
        assert_eq!(out.tosses_on_coin, 50);
        assert!(!out.gave_up);
        let greedy = |env: &mut dyn ArmSampler, k: usize, _eps: f64| -> Result<Vec<usize>> {
            for a in 0..env.n_arms() {
                env.pull_batch(a, 61)?;
            }
            Ok((0..k).collect())
        };
        let out = reduction_run(greedy, &cfg, CoinValue::Plus, 11).unwrap();
        assert!(out.gave_up);
    }

    #[test]
    fn small_epsilon_k_rejected() {
        let cfg = ReductionConfig::new(10, 0.1, 0.5, 100);
        let sel = |_: &mut dyn ArmSampler, k: usize, _: f64| -> Result<Vec<usize>> { Ok((0..k).collect()) };
        assert!(matches!(reduction_run(sel, &cfg, CoinValue::Plus, 0), Err(BanditError::Config(_))));
    }
}
