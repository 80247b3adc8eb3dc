//! Exact tabular machinery: policy evaluation, optimal values, visitation
//! distributions, representation-conditioned advantages and their
//! decomposition identity, Markov/confounding diagnostics, and the calibrated
//! summary table for the corridor task.

pub mod advantage;
pub mod checks;
pub mod exploration_table;
pub mod visitation;

use thiserror::Error;

use crate::fmdp::{PolicyTable, TabularFmdp};

pub use advantage::{
    advantage_under_phi, markov_residual, q_under_phi, identity_residual, v_under_phi,
    AdvantageDecomposition,
};
pub use checks::{confounding_check, markov_check, ConfoundingWitness, MarkovViolation};
pub use exploration_table::{check_table, reference, exploration_table, RowVerdict, ExplorationTable, ExplorationRow};
pub use visitation::{
    cond_state_dist, visitation_exact, visitation_monte_carlo, VisitationDist, VisitationMode,
};

const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("gamma = {0} outside (0, 1]")]
    BadGamma(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTol(f64),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("gamma = 1 requires an episodic MDP (worst-case termination probability {0} < 1)")]
    NotEpisodic(f64),
    #[error("p_star = {0} outside [1/|A|, 1] = [{1}, 1]")]
    PStarOutOfRange(f64, f64),
    #[error("unvisited abstraction class")]
    UnvisitedClass,
    #[error("degenerate class: p(s,a|phi) = 1, the decomposition identity is vacuous")]
    DegenerateClass,
    #[error("representation is not Markov (violations: {0})")]
    NotMarkov(usize),
}

/// Q and V tables for one evaluated policy at discount `gamma`.
#[derive(Debug, Clone)]
pub struct ValueTables {
    pub q: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub gamma: f64,
}

fn check_gamma_tol(gamma: f64, tol: f64) -> Result<(), SolverError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(SolverError::BadGamma(gamma));
    }
    if !(tol > 0.0) {
        return Err(SolverError::BadTol(tol));
    }
    Ok(())
}

/// Worst-case probability of having terminated within `horizon` steps,
/// minimized over all policies, from states reachable under any action
/// sequence. Gamma = 1 is sound only when this is 1.
fn worst_case_termination_prob(mdp: &TabularFmdp) -> f64 {
    let n = mdp.num_states();
    // States reachable from the initial support under arbitrary actions.
    let mut reachable = vec![false; n];
    let mut frontier: Vec<usize> =
        (0..n).filter(|&s| mdp.initial_dist[s] > 0.0).collect();
    for &s in &frontier {
        reachable[s] = true;
    }
    while let Some(s) = frontier.pop() {
        for a in 0..mdp.num_actions {
            for (j, &p) in mdp.transition[s][a].iter().enumerate() {
                if p > 0.0 && !reachable[j] {
                    reachable[j] = true;
                    frontier.push(j);
                }
            }
        }
    }
    // DP over "probability of being absorbed within k more steps".
    let mut prob: Vec<f64> = (0..n).map(|s| if mdp.terminal[s] { 1.0 } else { 0.0 }).collect();
    for _ in 0..mdp.horizon {
        let mut next = prob.clone();
        for s in 0..n {
            if mdp.terminal[s] {
                continue;
            }
            next[s] = (0..mdp.num_actions)
                .map(|a| {
                    mdp.transition[s][a]
                        .iter()
                        .zip(&prob)
                        .map(|(&t, &m)| t * m)
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
        }
        prob = next;
    }
    (0..n)
        .filter(|&s| reachable[s] && !mdp.terminal[s])
        .map(|s| prob[s])
        .fold(1.0, f64::min)
}

/// Evaluates `policy` exactly: iterates the Bellman expectation operator to
/// sup-norm `tol`, then derives Q from the fixed point and re-derives V from
/// Q so that V(s) = Σ_a π(a|s) Q(s,a) holds to machine precision.
pub fn policy_evaluation(
    mdp: &TabularFmdp,
    policy: &PolicyTable,
    gamma: f64,
    tol: f64,
) -> Result<ValueTables, SolverError> {
    check_gamma_tol(gamma, tol)?;
    if gamma == 1.0 {
        let p = worst_case_termination_prob(mdp);
        if p < 1.0 - 1e-12 {
            return Err(SolverError::NotEpisodic(p));
        }
    }
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let mut next = vec![0.0; n];
        for s in 0..n {
            if mdp.terminal[s] {
                continue;
            }
            next[s] = (0..mdp.num_actions)
                .map(|a| {
                    policy.prob(s, a) * backup(mdp, &v, gamma, s, a)
                })
                .sum();
        }
        residual = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual <= tol {
            let q = q_from_v(mdp, &v, gamma);
            let v = (0..n)
                .map(|s| (0..mdp.num_actions).map(|a| policy.prob(s, a) * q[s][a]).sum())
                .collect();
            return Ok(ValueTables { q, v, gamma });
        }
    }
    Err(SolverError::NoConvergence { residual, iterations: MAX_ITERATIONS })
}

fn backup(mdp: &TabularFmdp, v: &[f64], gamma: f64, s: usize, a: usize) -> f64 {
    mdp.reward[s][a]
        + gamma
            * mdp.transition[s][a]
                .iter()
                .zip(v)
                .map(|(&t, &val)| t * val)
                .sum::<f64>()
}

fn q_from_v(mdp: &TabularFmdp, v: &[f64], gamma: f64) -> Vec<Vec<f64>> {
    (0..mdp.num_states())
        .map(|s| {
            (0..mdp.num_actions)
                .map(|a| if mdp.terminal[s] { 0.0 } else { backup(mdp, v, gamma, s, a) })
                .collect()
        })
        .collect()
}

/// Value iteration. Returns the optimal tables and the greedy deterministic
/// policy, breaking Q-value ties toward the lower action index.
pub fn optimal_values(
    mdp: &TabularFmdp,
    gamma: f64,
    tol: f64,
) -> Result<(ValueTables, PolicyTable), SolverError> {
    check_gamma_tol(gamma, tol)?;
    if gamma == 1.0 {
        let p = worst_case_termination_prob(mdp);
        if p < 1.0 - 1e-12 {
            return Err(SolverError::NotEpisodic(p));
        }
    }
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let mut next = vec![0.0; n];
        for s in 0..n {
            if mdp.terminal[s] {
                continue;
            }
            next[s] = (0..mdp.num_actions)
                .map(|a| backup(mdp, &v, gamma, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
        }
        residual = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual <= tol {
            let q = q_from_v(mdp, &v, gamma);
            let mut probs = vec![vec![0.0; mdp.num_actions]; n];
            let v = (0..n)
                .map(|s| {
                    // Strict > keeps the first (lowest-index) maximizer.
                    let best = (1..mdp.num_actions)
                        .fold(0, |best, a| if q[s][a] > q[s][best] { a } else { best });
                    probs[s][best] = 1.0;
                    q[s][best]
                })
                .collect();
            return Ok((ValueTables { q, v, gamma }, PolicyTable { probs }));
        }
    }
    Err(SolverError::NoConvergence { residual, iterations: MAX_ITERATIONS })
}

/// Softens a deterministic policy: the preferred action keeps probability
/// `p_star`, the remainder is spread uniformly over the other actions.
pub fn epsilon_optimal_policy(
    greedy: &PolicyTable,
    p_star: f64,
) -> Result<PolicyTable, SolverError> {
    let num_actions = greedy.probs[0].len();
    let floor = 1.0 / num_actions as f64;
    if !(p_star >= floor - 1e-12 && p_star <= 1.0 + 1e-12) {
        return Err(SolverError::PStarOutOfRange(p_star, floor));
    }
    let rest = if num_actions > 1 { (1.0 - p_star) / (num_actions - 1) as f64 } else { 0.0 };
    let probs = greedy
        .probs
        .iter()
        .map(|row| {
            let best = (1..num_actions).fold(0, |b, a| if row[a] > row[b] { a } else { b });
            (0..num_actions).map(|a| if a == best { p_star } else { rest }).collect()
        })
        .collect();
    Ok(PolicyTable { probs })
}
