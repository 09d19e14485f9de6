//! Adaptive ε-top-K arm identification for stochastic multi-armed bandits.
//!
//! The crate contains the instance hardness measures, two PAC selection
//! algorithms ([`adaptive`] and [`improved`]), comparison baselines, the
//! coin-tossing lower-bound machinery and a seeded experiment harness.

pub mod adaptive;
pub mod baselines;
pub mod env;
pub mod error;
pub mod experiment;
pub mod hardness;
pub mod improved;
pub mod instances;
pub mod lowerbound;
pub mod selection;

pub use adaptive::{adaptive_topk, adaptive_topk_fixed_budget, AdaptiveRun, AdaptiveTopK, GapSchedule, RoundRecord};
pub use baselines::{cb_accept_reject_topk, uniform_topk};
pub use env::{ArmEnvironment, ArmSampler, Complement, EmpiricalState, Instance, RewardKind};
pub use error::{BanditError, Result};
pub use improved::{est_kth_arm, eps_split, elim, reverse_elim, opt_mai, improved_topk, ImprovedRun, ImprovedTopK, KthArm, Subroutine, SubroutineBudgetLog, SubroutineCall};
pub use experiment::{run_experiment, Algorithm, ExperimentConfig, ExperimentReport, InstanceSpec, ReportRow};
pub use hardness::{aggregate_regret, gaps, hardness, is_eps_top_k, psi_quantities, t_of, HardnessReport};
pub use instances::{check_c_spread, format_means, gen_synthetic_p, gen_two_group, gen_uniform, load_means, parse_means};
pub use lowerbound::{coin_error_under, make_hard_instance, optimal_coin_error, reduction_run, CappedArm, CoinAnswer, CoinError, CoinTossingInstance, CoinValue, HardBanditInstance, ReductionConfig, ReductionOutcome};
pub use selection::SelectionResult;
