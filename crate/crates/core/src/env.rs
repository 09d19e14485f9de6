//! Stochastic arm environments.
//!
//! Every algorithm in this crate observes rewards only through the
//! [`ArmSampler`] trait. The concrete [`ArmEnvironment`] draws Bernoulli
//! rewards from a seeded ChaCha stream and keeps exact per-arm pull counters.
//! A batch of `m` pulls on one arm is drawn as a single `Binomial(m, θ)`
//! variate, which has the same distribution as the sum of `m` i.i.d.
//! Bernoulli rewards.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_unit_interval_open, BanditError, Result};

/// Ground-truth problem description: arm means plus the target `K`, tolerance
/// `epsilon` and confidence `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    means: Vec<f64>,
    k: usize,
    epsilon: f64,
    delta: f64,
}

impl Instance {
    pub fn new(means: Vec<f64>, k: usize, epsilon: f64, delta: f64) -> Result<Self> {
        validate_means(&means)?;
        if k == 0 || k > means.len() {
            return Err(BanditError::InvalidK { k, n: means.len() });
        }
        check_positive("epsilon", epsilon)?;
        check_unit_interval_open("delta", delta)?;
        Ok(Self {
            means,
            k,
            epsilon,
            delta,
        })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn n(&self) -> usize {
        self.means.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

pub(crate) fn validate_means(means: &[f64]) -> Result<()> {
    if means.is_empty() {
        return Err(BanditError::Empty);
    }
    for (index, &value) in means.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(BanditError::MeanOutOfRange { index, value });
        }
    }
    Ok(())
}

/// The sampling oracle seen by algorithms.
pub trait ArmSampler {
    fn n_arms(&self) -> usize;

    /// Pulls `arm` exactly `m` times and returns the sum of the rewards.
    fn pull_batch(&mut self, arm: usize, m: u64) -> Result<u64>;

    /// Pulls charged to each arm since construction.
    fn pull_counts(&self) -> &[u64];

    fn total_pulls(&self) -> u64 {
        self.pull_counts().iter().sum()
    }
}

impl<S: ArmSampler + ?Sized> ArmSampler for &mut S {
    fn n_arms(&self) -> usize {
        (**self).n_arms()
    }

    fn pull_batch(&mut self, arm: usize, m: u64) -> Result<u64> {
        (**self).pull_batch(arm, m)
    }

    fn pull_counts(&self) -> &[u64] {
        (**self).pull_counts()
    }

    fn total_pulls(&self) -> u64 {
        (**self).total_pulls()
    }
}

/// Kind of reward distribution attached to every arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    #[default]
    Bernoulli,
}

/// Seeded Bernoulli environment with exact pull accounting.
///
/// Single-threaded: run one environment per trial.
#[derive(Debug, Clone)]
pub struct ArmEnvironment {
    means: Vec<f64>,
    seed: u64,
    rng: ChaCha8Rng,
    pull_counts: Vec<u64>,
    total: u64,
    reward_kind: RewardKind,
}

impl ArmEnvironment {
    pub fn new(instance: &Instance, seed: u64) -> Self {
        Self::build(instance.means().to_vec(), seed)
    }

    /// Builds an environment directly from a mean vector.
    pub fn from_means(means: &[f64], seed: u64) -> Result<Self> {
        validate_means(means)?;
        Ok(Self::build(means.to_vec(), seed))
    }

    fn build(means: Vec<f64>, seed: u64) -> Self {
        let n = means.len();
        Self {
            means,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pull_counts: vec![0; n],
            total: 0,
            reward_kind: RewardKind::Bernoulli,
        }
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn reward_kind(&self) -> RewardKind {
        self.reward_kind
    }
}

impl ArmSampler for ArmEnvironment {
    fn n_arms(&self) -> usize {
        self.means.len()
    }

    fn pull_batch(&mut self, arm: usize, m: u64) -> Result<u64> {
        let n = self.means.len();
        let theta = *self
            .means
            .get(arm)
            .ok_or(BanditError::ArmOutOfRange { arm, n })?;
        if m == 0 {
            return Err(BanditError::ZeroPulls);
        }
        // Binomial::new only fails for p outside [0, 1], which validate_means rules out.
        let sum = Binomial::new(m, theta)
            .map(|dist| dist.sample(&mut self.rng))
            .map_err(|_| BanditError::MeanOutOfRange {
                index: arm,
                value: theta,
            })?;
        self.pull_counts[arm] += m;
        self.total += m;
        Ok(sum)
    }

    fn pull_counts(&self) -> &[u64] {
        &self.pull_counts
    }

    fn total_pulls(&self) -> u64 {
        self.total
    }
}

/// Presents an environment with every reward `x` replaced by `1 - x`.
///
/// Identifying the top arms of the complemented environment identifies the
/// bottom arms of the original one.
#[derive(Debug)]
pub struct Complement<S> {
    inner: S,
}

impl<S: ArmSampler> Complement<S> {
    pub fn new(inner: S) -> Self {
        Self { inner }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: ArmSampler> ArmSampler for Complement<S> {
    fn n_arms(&self) -> usize {
        self.inner.n_arms()
    }

    fn pull_batch(&mut self, arm: usize, m: u64) -> Result<u64> {
        let sum = self.inner.pull_batch(arm, m)?;
        Ok(m - sum)
    }

    fn pull_counts(&self) -> &[u64] {
        self.inner.pull_counts()
    }

    fn total_pulls(&self) -> u64 {
        self.inner.total_pulls()
    }
}

/// Running per-arm reward counts and sums.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmpiricalState {
    counts: Vec<u64>,
    sums: Vec<u64>,
}

impl EmpiricalState {
    pub fn new(n: usize) -> Self {
        Self {
            counts: vec![0; n],
            sums: vec![0; n],
        }
    }

    pub fn record(&mut self, arm: usize, pulls: u64, reward_sum: u64) {
        debug_assert!(reward_sum <= pulls);
        self.counts[arm] += pulls;
        self.sums[arm] += reward_sum;
    }

    /// Pulls `arm` `m` times through `env` and records the outcome.
    pub fn pull<S: ArmSampler + ?Sized>(&mut self, env: &mut S, arm: usize, m: u64) -> Result<()> {
        let sum = env.pull_batch(arm, m)?;
        self.record(arm, m, sum);
        Ok(())
    }

    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    pub fn sum(&self, arm: usize) -> u64 {
        self.sums[arm]
    }

    /// Empirical mean, defined once the arm has been pulled.
    pub fn mean(&self, arm: usize) -> Option<f64> {
        match self.counts[arm] {
            0 => None,
            c => Some(self.sums[arm] as f64 / c as f64),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(means: &[f64], seed: u64) -> ArmEnvironment {
        ArmEnvironment::from_means(means, seed).unwrap()
    }

    #[test]
    fn zero_mean_arm_never_pays() {
        let mut e = env(&[0.0, 0.5], 1);
        assert_eq!(e.pull_batch(0, 100).unwrap(), 0);
    }

    #[test]
    fn unit_mean_arm_always_pays() {
        let mut e = env(&[1.0], 9);
        assert_eq!(e.pull_batch(0, 57).unwrap(), 57);
    }

    #[test]
    fn large_batch_concentrates() {
        for seed in 0..5 {
            let mut e = env(&[0.5], seed);
            let m = 1_000_000;
            let frac = e.pull_batch(0, m).unwrap() as f64 / m as f64;
            assert!((0.497..=0.503).contains(&frac), "seed {seed}: {frac}");
        }
    }

    #[test]
    fn totals_are_additive() {
        let mut e = env(&[0.3, 0.6, 0.9], 4);
        assert_eq!(e.total_pulls(), 0);
        e.pull_batch(0, 3).unwrap();
        e.pull_batch(2, 4).unwrap();
        assert_eq!(e.total_pulls(), 7);
        assert_eq!(e.pull_counts(), &[3, 0, 4]);
    }

    #[test]
    fn rejects_bad_requests() {
        let mut e = env(&[0.3, 0.6], 4);
        assert_eq!(
            e.pull_batch(2, 1),
            Err(BanditError::ArmOutOfRange { arm: 2, n: 2 })
        );
        assert_eq!(e.pull_batch(0, 0), Err(BanditError::ZeroPulls));
        assert_eq!(e.total_pulls(), 0);
    }

    #[test]
    fn rejects_bad_means() {
        assert!(matches!(
            ArmEnvironment::from_means(&[0.2, 1.5], 0),
            Err(BanditError::MeanOutOfRange { index: 1, .. })
        ));
        assert_eq!(ArmEnvironment::from_means(&[], 0).unwrap_err(), BanditError::Empty);
    }

    #[test]
    fn instance_validation() {
        assert!(Instance::new(vec![0.5, 0.4], 2, 0.1, 0.1).is_ok());
        assert!(matches!(
            Instance::new(vec![0.5, 0.4], 3, 0.1, 0.1),
            Err(BanditError::InvalidK { .. })
        ));
        assert!(Instance::new(vec![0.5, 0.4], 0, 0.1, 0.1).is_err());
        assert!(Instance::new(vec![0.5, 0.4], 1, 0.0, 0.1).is_err());
        assert!(Instance::new(vec![0.5, 0.4], 1, 0.1, 1.0).is_err());
    }

    #[test]
    fn same_seed_same_history() {
        let means = [0.1, 0.5, 0.77];
        let mut a = env(&means, 42);
        let mut b = env(&means, 42);
        for (arm, m) in [(0, 10), (2, 1000), (1, 7), (2, 3)] {
            assert_eq!(a.pull_batch(arm, m).unwrap(), b.pull_batch(arm, m).unwrap());
        }
        assert_eq!(a.pull_counts(), b.pull_counts());
    }

    #[test]
    fn complement_flips_rewards() {
        let mut plain = env(&[0.3, 0.8], 5);
        let mut flipped = Complement::new(env(&[0.3, 0.8], 5));
        for arm in [0, 1, 1, 0] {
            let a = plain.pull_batch(arm, 50).unwrap();
            let b = flipped.pull_batch(arm, 50).unwrap();
            assert_eq!(a + b, 50);
        }
        assert_eq!(flipped.pull_counts(), plain.pull_counts());
    }

    #[test]
    fn empirical_state_means() {
        let mut st = EmpiricalState::new(2);
        assert_eq!(st.mean(0), None);
        st.record(0, 4, 1);
        st.record(0, 4, 3);
        assert_eq!(st.mean(0), Some(0.5));
        assert_eq!(st.count(0), 8);
        assert_eq!(st.sum(0), 4);
    }

    /// Pearson statistic of `counts` against `pmf`, pooling cells with expected
    /// count below 5. Returns `(statistic, degrees of freedom)`.
    fn chi_square(counts: &[u64], pmf: &[f64]) -> (f64, f64) {
        let total: u64 = counts.iter().sum();
        let (mut stat, mut cells) = (0.0, 0usize);
        let (mut obs, mut exp) = (0.0, 0.0);
        for (c, p) in counts.iter().zip(pmf) {
            obs += *c as f64;
            exp += p * total as f64;
            if exp >= 5.0 {
                stat += (obs - exp).powi(2) / exp;
                cells += 1;
                obs = 0.0;
                exp = 0.0;
            }
        }
        if exp > 0.0 {
            stat += (obs - exp).powi(2) / exp.max(1e-12);
            cells += 1;
        }
        (stat, (cells - 1) as f64)
    }

    #[test]
    fn batches_and_single_pulls_follow_the_binomial() {
        use statrs::distribution::{Binomial as Oracle, ChiSquared, ContinuousCDF, Discrete};
        let (theta, m) = (0.3, 20u64);
        let oracle = Oracle::new(theta, m).unwrap();
        let pmf: Vec<f64> = (0..=m).map(|x| oracle.pmf(x)).collect();
        let mut batched = vec![0u64; m as usize + 1];
        let mut single = vec![0u64; m as usize + 1];
        for seed in 0..100_000u64 {
            let mut e = env(&[theta], seed);
            batched[e.pull_batch(0, m).unwrap() as usize] += 1;
            let s: u64 = (0..m).map(|_| e.pull_batch(0, 1).unwrap()).sum();
            single[s as usize] += 1;
        }
        for counts in [&batched, &single] {
            let (stat, dof) = chi_square(counts, &pmf);
            let p_value = ChiSquared::new(dof).unwrap().sf(stat);
            assert!(p_value > 0.001, "chi2 = {stat}, dof = {dof}, p = {p_value}");
        }
    }
}
