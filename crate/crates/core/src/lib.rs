//! Markov-chain ("basketball") generalizations of discrete count
//! distributions.
//!
//! A two-state scoring chain with parameters `r1`, `r2` is stopped after a
//! parent-distributed number of steps `N`; the number of team-1 goals is the
//! generalized count. The family keeps the exact mean `r1 E(N) / (r1 + r2)`
//! while allowing both under- and overdispersion relative to the parent.
//!
//! * [`model`]: chain and parent types, mean, exact variance, regimes
//! * [`pmf`]: exact pmf by recursion, brute-force oracle, mode counting
//! * [`analytic`]: closed-form `p_0`, `p_1`, zero modification
//! * [`fast`]: `O(m - i)` single probabilities for likelihoods
//! * [`symbolic`]: exact small-`N` tables
//! * [`renewal`]: interval laws, moments and the normal approximation
//! * [`sampler`]: random variates
//! * [`inference`]: likelihood, regression fits, dispersion bounds

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod fast;
pub mod inference;
pub mod model;
pub mod pmf;
pub mod renewal;
pub mod sampler;
pub mod symbolic;

pub use error::{Error, Result};
pub use model::{BDist, ChainParams, ParentDist, Regime};
pub use pmf::PmfVector;
