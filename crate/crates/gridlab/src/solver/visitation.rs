//! Per-episode state-visitation distributions, exact and sampled, plus
//! conditioning on a state representation's equivalence classes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fmdp::{FactoredState, PolicyTable, StateRepresentation, TabularFmdp};
use crate::solver::SolverError;
use crate::util::sample_categorical;

/// How a visitation distribution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisitationMode {
    ExactEpisodic,
    MonteCarlo,
}

impl VisitationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            VisitationMode::ExactEpisodic => "exact_episodic",
            VisitationMode::MonteCarlo => "monte_carlo",
        }
    }
}

/// Expected share of per-episode visits each non-terminal state receives.
#[derive(Debug, Clone)]
pub struct VisitationDist {
    pub d: Vec<f64>,
    pub mode: VisitationMode,
}

/// Residual initial-distribution mass below which forward propagation stops.
const MASS_EPSILON: f64 = 1e-15;
/// Safety cap on propagation steps / episode length for non-terminating
/// policies; visits beyond it are negligible for any terminating policy.
const STEP_CAP: usize = 100_000;

/// Computes visitation exactly: pushes the initial distribution through the
/// policy-mixed transition matrix, accumulating mass at every non-terminal
/// decision point and dropping mass the moment it is absorbed, until the
/// surviving mass is negligible. No sampling, no horizon truncation.
pub fn visitation_exact(mdp: &TabularFmdp, policy: &PolicyTable) -> VisitationDist {
    let n = mdp.num_states();
    // T^π(s'|s) = Σ_a π(a|s) T(s'|s,a), rows for non-terminal states only.
    let t_pi: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (0..n)
                .map(|j| {
                    (0..mdp.num_actions)
                        .map(|a| policy.prob(s, a) * mdp.transition[s][a][j])
                        .sum()
                })
                .collect()
        })
        .collect();

    let mut mass: Vec<f64> = mdp
        .initial_dist
        .iter()
        .zip(&mdp.terminal)
        .map(|(&p, &term)| if term { 0.0 } else { p })
        .collect();
    let mut counts = vec![0.0; n];
    for _ in 0..STEP_CAP {
        let total: f64 = mass.iter().sum();
        if total < MASS_EPSILON {
            break;
        }
        for (c, &m) in counts.iter_mut().zip(&mass) {
            *c += m;
        }
        let mut next = vec![0.0; n];
        for s in 0..n {
            if mass[s] == 0.0 {
                continue;
            }
            for (j, &t) in t_pi[s].iter().enumerate() {
                if t > 0.0 && !mdp.terminal[j] {
                    next[j] += mass[s] * t;
                }
            }
        }
        mass = next;
    }
    let total: f64 = counts.iter().sum();
    VisitationDist {
        d: counts.iter().map(|c| c / total).collect(),
        mode: VisitationMode::ExactEpisodic,
    }
}

/// Estimates visitation by rolling out complete episodes (to natural
/// termination) and counting state-visit frequencies. Seeded, reproducible.
pub fn visitation_monte_carlo(
    mdp: &TabularFmdp,
    policy: &PolicyTable,
    episodes: usize,
    seed: u64,
) -> VisitationDist {
    assert!(episodes >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0.0; mdp.num_states()];
    for _ in 0..episodes {
        let mut s = sample_categorical(&mut rng, &mdp.initial_dist);
        for _ in 0..STEP_CAP {
            if mdp.terminal[s] {
                break;
            }
            counts[s] += 1.0;
            let a = sample_categorical(&mut rng, &policy.probs[s]);
            s = sample_categorical(&mut rng, &mdp.transition[s][a]);
        }
    }
    let total: f64 = counts.iter().sum();
    VisitationDist {
        d: counts.iter().map(|c| c / total).collect(),
        mode: VisitationMode::MonteCarlo,
    }
}

/// Restricts `dist` to the equivalence class of `s` under `phi` and
/// renormalizes. Returns `(state index, probability)` for every class member
/// in enumeration order; errors if the class was never visited.
pub fn cond_state_dist(
    dist: &VisitationDist,
    phi: &StateRepresentation,
    s: &FactoredState,
    mdp: &TabularFmdp,
) -> Result<Vec<(usize, f64)>, SolverError> {
    let class = phi.equivalence_class(s, mdp).expect("state belongs to the mdp");
    let mass: f64 = class.iter().map(|&m| dist.d[m]).sum();
    if mass <= 0.0 {
        return Err(SolverError::UnvisitedClass);
    }
    Ok(class.into_iter().map(|m| (m, dist.d[m] / mass)).collect())
}
