//! Representation-conditioned values and advantages, and the exact
//! decomposition identity that explains why advantages shrink wherever the
//! visitation distribution concentrates.
//!
//! For a representation Φ and policy π, the class value is the
//! visitation-weighted average V^π(Φ(s)) = Σ_{s'∈class} P^π(s'|Φ(s)) V^π(s'),
//! and the advantage against it factors exactly as
//!
//!   Q^π(s,a) − V^π(Φ(s)) = (1 − p)·(Q^π(s,a) − Q̃),   p = P^π(s|Φ(s))·π(a|s),
//!
//! where Q̃ averages Q over every *other* (state, action) pair of the class,
//! weighted by visitation × policy and renormalized by 1 − p.

use crate::fmdp::{FactoredState, PolicyTable, StateRepresentation, TabularFmdp};
use crate::solver::checks::markov_check;
use crate::solver::visitation::{cond_state_dist, VisitationDist};
use crate::solver::{SolverError, ValueTables};

/// p(s,a|Φ) at or above this is treated as the degenerate single-pair class.
const DEGENERATE_EPS: f64 = 1e-12;
/// Tolerance for the Markov precondition of `markov_residual`.
const MARKOV_TOL: f64 = 1e-9;

/// All terms of the advantage decomposition at one (state, action) pair.
#[derive(Debug, Clone)]
pub struct AdvantageDecomposition {
    /// A^π_Φ(s,a) = Q^π(s,a) − V^π(Φ(s)).
    pub a_phi: f64,
    /// P^π(s,a|Φ(s)) = P^π(s|Φ(s)) · π(a|s).
    pub p_sa_given_phi: f64,
    pub q_sa: f64,
    /// Renormalized class average of Q excluding (s,a); equals `q_sa` as a
    /// sentinel in the degenerate case, where it is mathematically undefined.
    pub q_tilde: f64,
    /// V^π(Φ(s)).
    pub v_phi: f64,
    /// True when p(s,a|Φ) = 1, making the identity vacuous (0 = 0).
    pub degenerate: bool,
}

impl AdvantageDecomposition {
    /// Right-hand side of the identity: (1 − p)(q − q̃).
    pub fn recompose(&self) -> f64 {
        (1.0 - self.p_sa_given_phi) * (self.q_sa - self.q_tilde)
    }
}

/// Class-conditional expectation of V^π at `s`'s class.
pub fn v_under_phi(
    values: &ValueTables,
    dist: &VisitationDist,
    phi: &StateRepresentation,
    s: &FactoredState,
    mdp: &TabularFmdp,
) -> Result<f64, SolverError> {
    let weights = cond_state_dist(dist, phi, s, mdp)?;
    Ok(weights.iter().map(|&(m, w)| w * values.v[m]).sum())
}

/// Class-conditional expectation of Q^π(·, a) at `s`'s class.
pub fn q_under_phi(
    values: &ValueTables,
    dist: &VisitationDist,
    phi: &StateRepresentation,
    s: &FactoredState,
    a: usize,
    mdp: &TabularFmdp,
) -> Result<f64, SolverError> {
    let weights = cond_state_dist(dist, phi, s, mdp)?;
    Ok(weights.iter().map(|&(m, w)| w * values.q[m][a]).sum())
}

/// Computes A^π_Φ(s,a) together with every term of its decomposition.
///
/// `q_tilde` is assembled from the explicit double sum over the class's other
/// (state, action) pairs — not back-solved from the identity — so checking
/// the identity afterwards is meaningful.
pub fn advantage_under_phi(
    values: &ValueTables,
    dist: &VisitationDist,
    policy: &PolicyTable,
    phi: &StateRepresentation,
    s: &FactoredState,
    a: usize,
    mdp: &TabularFmdp,
) -> Result<AdvantageDecomposition, SolverError> {
    let weights = cond_state_dist(dist, phi, s, mdp)?;
    let s_idx = mdp.index_of(s);
    let w_s = weights
        .iter()
        .find(|&&(m, _)| m == s_idx)
        .map(|&(_, w)| w)
        .unwrap_or(0.0);
    let p = w_s * policy.prob(s_idx, a);

    let v_phi: f64 = weights.iter().map(|&(m, w)| w * values.v[m]).sum();
    let q_sa = values.q[s_idx][a];

    if p >= 1.0 - DEGENERATE_EPS {
        // The class collapses onto (s,a): the advantage is exactly zero and
        // there is no "rest of the class" to average over.
        return Ok(AdvantageDecomposition {
            a_phi: 0.0,
            p_sa_given_phi: p.min(1.0),
            q_sa,
            q_tilde: q_sa,
            v_phi,
            degenerate: true,
        });
    }

    let mut excluded_sum = 0.0;
    for &(m, w) in &weights {
        for b in 0..mdp.num_actions {
            if m == s_idx && b == a {
                continue;
            }
            excluded_sum += w * policy.prob(m, b) * values.q[m][b];
        }
    }
    let q_tilde = excluded_sum / (1.0 - p);

    Ok(AdvantageDecomposition {
        a_phi: q_sa - v_phi,
        p_sa_given_phi: p,
        q_sa,
        q_tilde,
        v_phi,
        degenerate: false,
    })
}

/// Residual of the decomposition identity; ≤ 1e-10 whenever the inputs come
/// from a converged evaluation. Errors on the vacuous degenerate case.
pub fn identity_residual(decomp: &AdvantageDecomposition) -> Result<f64, SolverError> {
    if decomp.degenerate {
        return Err(SolverError::DegenerateClass);
    }
    Ok(((decomp.q_sa - decomp.v_phi) - decomp.recompose()).abs())
}

/// Residual of the per-state specialization for Markov representations,
/// where the visitation weights drop out:
/// A^π(s,a) = (1 − π(a|s))·(Q^π(s,a) − Q̃^π(s,¬a)).
pub fn markov_residual(
    values: &ValueTables,
    policy: &PolicyTable,
    phi: &StateRepresentation,
    s: &FactoredState,
    a: usize,
    mdp: &TabularFmdp,
) -> Result<f64, SolverError> {
    let (is_markov, violations) = markov_check(mdp, phi, MARKOV_TOL);
    if !is_markov {
        return Err(SolverError::NotMarkov(violations.len()));
    }
    let s_idx = mdp.index_of(s);
    let p = policy.prob(s_idx, a);
    let advantage = values.q[s_idx][a] - values.v[s_idx];
    if p >= 1.0 - DEGENERATE_EPS {
        // Only action taken at s: its advantage must itself be zero.
        return Ok(advantage.abs());
    }
    let q_tilde: f64 = (0..mdp.num_actions)
        .filter(|&b| b != a)
        .map(|b| policy.prob(s_idx, b) / (1.0 - p) * values.q[s_idx][b])
        .sum();
    Ok((advantage - (1.0 - p) * (values.q[s_idx][a] - q_tilde)).abs())
}
