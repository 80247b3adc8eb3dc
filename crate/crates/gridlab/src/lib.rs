//! An exact-and-neural laboratory for studying how a policy's own trajectory
//! distribution can make narrow state representations look Markov when they
//! are not — and how training policy gradients on advantages instead of raw
//! Q-values removes the resulting out-of-trajectory brittleness.
//!
//! The crate pairs three small gridworld tasks (each with a train variant and
//! a perturbed eval variant) with:
//!
//! - an exact tabular solver for values, visitation distributions,
//!   representation-conditioned advantages, and Markov/confounding
//!   diagnostics ([`solver`]);
//! - a from-scratch feedforward policy/value network with exact
//!   backpropagation ([`nn`]);
//! - on-policy trainers (vanilla policy gradient and a minimal clipped
//!   surrogate variant) that can score actions by either raw empirical
//!   returns or advantage estimates ([`trainers`]);
//! - probes measuring how much a trained policy's output depends on state
//!   factors it should ignore ([`analysis`]).

pub mod acceptance;
pub mod analysis;
pub mod config;
pub mod envs;
pub mod fmdp;
pub mod nn;
pub mod rollout;
pub mod runner;
pub mod trainers;
pub mod solver;
pub mod util;
