//! Structural diagnostics for state representations: is a projection Markov
//! (lossless for rewards and class dynamics), and does a given policy induce
//! spurious class-level statistics (confounding)?

use crate::fmdp::{PolicyTable, StateRepresentation, TabularFmdp};
use crate::solver::visitation::visitation_exact;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Reward,
    Transition,
}

/// One way a representation fails to be Markov: within `class_key`, under
/// `action`, the reward (or the class-to-class transition distribution)
/// depends on which member state the agent actually occupies.
#[derive(Debug, Clone)]
pub struct MarkovViolation {
    pub class_key: Vec<usize>,
    pub action: usize,
    pub kind: ViolationKind,
    pub deviation: f64,
}

/// Checks whether `phi` is Markov for `mdp`: per class and action, member
/// states must agree on the immediate reward and on the distribution over
/// successor *classes*, to within `tol`.
pub fn markov_check(
    mdp: &TabularFmdp,
    phi: &StateRepresentation,
    tol: f64,
) -> (bool, Vec<MarkovViolation>) {
    let partition = phi.partition(mdp).expect("representation fits the mdp");
    let mut class_of = vec![0usize; mdp.num_states()];
    for (c, (_, members)) in partition.iter().enumerate() {
        for &m in members {
            class_of[m] = c;
        }
    }
    let num_classes = partition.len();
    let mut violations = Vec::new();

    for (key, members) in &partition {
        for a in 0..mdp.num_actions {
            let reward_spread = spread(members.iter().map(|&m| mdp.reward[m][a]));
            if reward_spread > tol {
                violations.push(MarkovViolation {
                    class_key: key.clone(),
                    action: a,
                    kind: ViolationKind::Reward,
                    deviation: reward_spread,
                });
            }
            // Distribution over successor classes, per member.
            let class_rows: Vec<Vec<f64>> = members
                .iter()
                .map(|&m| {
                    let mut row = vec![0.0; num_classes];
                    for (j, &p) in mdp.transition[m][a].iter().enumerate() {
                        row[class_of[j]] += p;
                    }
                    row
                })
                .collect();
            let transition_spread = (0..num_classes)
                .map(|c| spread(class_rows.iter().map(|row| row[c])))
                .fold(0.0, f64::max);
            if transition_spread > tol {
                violations.push(MarkovViolation {
                    class_key: key.clone(),
                    action: a,
                    kind: ViolationKind::Transition,
                    deviation: transition_spread,
                });
            }
        }
    }
    (violations.is_empty(), violations)
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    max - min
}

/// One class/action pair whose statistics change when the on-policy state mix
/// is replaced by an intervention that picks class members uniformly.
#[derive(Debug, Clone)]
pub struct ConfoundingWitness {
    pub class_key: Vec<usize>,
    pub action: usize,
    pub reward_gap: f64,
    pub transition_gap: f64,
}

/// Detects policy confounding: for every class the policy actually visits,
/// compares class-conditional rewards and successor-class distributions under
/// the policy's own visitation weights against a do-intervention that samples
/// class members uniformly (over the class's non-terminal members — terminal
/// states are never decision points). Any gap above `tol` is a witness.
pub fn confounding_check(
    mdp: &TabularFmdp,
    policy: &PolicyTable,
    phi: &StateRepresentation,
    tol: f64,
) -> (bool, Vec<ConfoundingWitness>) {
    let dist = visitation_exact(mdp, policy);
    let partition = phi.partition(mdp).expect("representation fits the mdp");
    let mut class_of = vec![0usize; mdp.num_states()];
    for (c, (_, members)) in partition.iter().enumerate() {
        for &m in members {
            class_of[m] = c;
        }
    }
    let num_classes = partition.len();
    let mut witnesses = Vec::new();

    for (key, members) in &partition {
        let mass: f64 = members.iter().map(|&m| dist.d[m]).sum();
        if mass <= 0.0 {
            continue; // the policy never sees this class
        }
        let live: Vec<usize> =
            members.iter().copied().filter(|&m| !mdp.terminal[m]).collect();
        let on_policy: Vec<(usize, f64)> =
            live.iter().map(|&m| (m, dist.d[m] / mass)).collect();
        let uniform: Vec<(usize, f64)> =
            live.iter().map(|&m| (m, 1.0 / live.len() as f64)).collect();

        for a in 0..mdp.num_actions {
            let reward_gap =
                (weighted_reward(mdp, &on_policy, a) - weighted_reward(mdp, &uniform, a)).abs();
            let p_pi = class_transition(mdp, &on_policy, a, &class_of, num_classes);
            let p_do = class_transition(mdp, &uniform, a, &class_of, num_classes);
            let transition_gap = p_pi
                .iter()
                .zip(&p_do)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            if reward_gap > tol || transition_gap > tol {
                witnesses.push(ConfoundingWitness {
                    class_key: key.clone(),
                    action: a,
                    reward_gap,
                    transition_gap,
                });
            }
        }
    }
    (!witnesses.is_empty(), witnesses)
}

fn weighted_reward(mdp: &TabularFmdp, weights: &[(usize, f64)], a: usize) -> f64 {
    weights.iter().map(|&(m, w)| w * mdp.reward[m][a]).sum()
}

fn class_transition(
    mdp: &TabularFmdp,
    weights: &[(usize, f64)],
    a: usize,
    class_of: &[usize],
    num_classes: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; num_classes];
    for &(m, w) in weights {
        for (j, &p) in mdp.transition[m][a].iter().enumerate() {
            out[class_of[j]] += w * p;
        }
    }
    out
}
