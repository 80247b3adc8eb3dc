//! Factored states, tabular MDPs over them, policies, and state-representation
//! projections. Everything downstream (solvers, environments, trainers)
//! consumes these types.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FmdpError {
    #[error("factor domain list is empty")]
    EmptyDomains,
    #[error("factor index {0} out of range (state has {1} factors)")]
    FactorOutOfRange(usize, usize),
    #[error("duplicate factor index {0} in representation")]
    DuplicateFactor(usize),
    #[error("state index {0} out of range ({1} states)")]
    StateOutOfRange(usize, usize),
    #[error("probability row does not sum to 1 (sum = {0})")]
    BadProbabilityRow(f64),
}

/// One state of a factored MDP: an assignment of a value to every factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactoredState {
    pub values: Vec<usize>,
}

impl FactoredState {
    pub fn new(values: Vec<usize>) -> Self {
        FactoredState { values }
    }
}

/// Enumerates every combination of factor values in lexicographic order with
/// the leftmost factor most significant, so `index(⟨2,1,0⟩) = 10` for domains
/// `[3,2,2]`. The index ↔ state bijection is stable across runs.
pub fn enumerate_states(factor_domains: &[usize]) -> Result<Vec<FactoredState>, FmdpError> {
    if factor_domains.is_empty() {
        return Err(FmdpError::EmptyDomains);
    }
    let total: usize = factor_domains.iter().product();
    let mut states = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut values = vec![0usize; factor_domains.len()];
        for (i, &dom) in factor_domains.iter().enumerate().rev() {
            values[i] = idx % dom;
            idx /= dom;
        }
        states.push(FactoredState::new(values));
    }
    Ok(states)
}

/// Inverse of the `enumerate_states` ordering.
pub fn state_index(factor_domains: &[usize], state: &FactoredState) -> usize {
    let mut idx = 0;
    for (v, dom) in state.values.iter().zip(factor_domains) {
        idx = idx * dom + v;
    }
    idx
}

/// An enumerable MDP whose states are factor assignments.
///
/// Terminal states absorb: they self-loop with probability 1 and reward 0, so
/// infinite-horizon Bellman operators and finite-episode rollouts agree.
/// `horizon` is the episode-truncation limit used by rollout collection; the
/// exact dynamics carry no step cap.
#[derive(Debug, Clone)]
pub struct TabularFmdp {
    pub factor_domains: Vec<usize>,
    pub states: Vec<FactoredState>,
    pub num_actions: usize,
    /// transition[s][a] is a probability vector over successor state indices.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// reward[s][a] is the expected immediate reward.
    pub reward: Vec<Vec<f64>>,
    pub terminal: Vec<bool>,
    pub initial_dist: Vec<f64>,
    pub horizon: usize,
}

impl TabularFmdp {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: &FactoredState) -> usize {
        state_index(&self.factor_domains, state)
    }

    /// Checks the structural invariants: stochastic rows, finite rewards,
    /// absorbing terminals, normalized initial distribution.
    pub fn validate(&self) -> Result<(), FmdpError> {
        let n = self.num_states();
        for s in 0..n {
            for a in 0..self.num_actions {
                let row = &self.transition[s][a];
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                    return Err(FmdpError::BadProbabilityRow(sum));
                }
                if !self.reward[s][a].is_finite() {
                    return Err(FmdpError::BadProbabilityRow(f64::NAN));
                }
                if self.terminal[s] && (self.transition[s][a][s] != 1.0 || self.reward[s][a] != 0.0)
                {
                    return Err(FmdpError::BadProbabilityRow(self.transition[s][a][s]));
                }
            }
        }
        let init_sum: f64 = self.initial_dist.iter().sum();
        if (init_sum - 1.0).abs() > 1e-12 {
            return Err(FmdpError::BadProbabilityRow(init_sum));
        }
        Ok(())
    }
}

/// A projection of states onto a subset of factors; states agreeing on every
/// kept factor fall into the same equivalence class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateRepresentation {
    kept_factors: Vec<usize>,
}

impl StateRepresentation {
    /// `kept_factors` may be empty (constant map) or cover every factor
    /// (identity); duplicates are rejected. Indices are stored sorted so two
    /// representations with the same factor set compare equal.
    pub fn new(mut kept_factors: Vec<usize>, num_factors: usize) -> Result<Self, FmdpError> {
        kept_factors.sort_unstable();
        for pair in kept_factors.windows(2) {
            if pair[0] == pair[1] {
                return Err(FmdpError::DuplicateFactor(pair[0]));
            }
        }
        if let Some(&bad) = kept_factors.iter().find(|&&f| f >= num_factors) {
            return Err(FmdpError::FactorOutOfRange(bad, num_factors));
        }
        Ok(StateRepresentation { kept_factors })
    }

    pub fn identity(num_factors: usize) -> Self {
        StateRepresentation { kept_factors: (0..num_factors).collect() }
    }

    pub fn kept_factors(&self) -> &[usize] {
        &self.kept_factors
    }

    /// Projects a state onto the kept factors. Equal keys ⇔ same class.
    pub fn project(&self, s: &FactoredState) -> Result<Vec<usize>, FmdpError> {
        self.kept_factors
            .iter()
            .map(|&f| {
                s.values
                    .get(f)
                    .copied()
                    .ok_or(FmdpError::FactorOutOfRange(f, s.values.len()))
            })
            .collect()
    }

    /// All state indices agreeing with `s` on the kept factors, including `s`.
    pub fn equivalence_class(
        &self,
        s: &FactoredState,
        mdp: &TabularFmdp,
    ) -> Result<Vec<usize>, FmdpError> {
        let key = self.project(s)?;
        let mut class = Vec::new();
        for (i, other) in mdp.states.iter().enumerate() {
            if self.project(other)? == key {
                class.push(i);
            }
        }
        Ok(class)
    }

    /// Groups every state of `mdp` by projection key.
    pub fn partition(&self, mdp: &TabularFmdp) -> Result<Vec<(Vec<usize>, Vec<usize>)>, FmdpError> {
        let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
        for (i, s) in mdp.states.iter().enumerate() {
            let key = self.project(s)?;
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, members)) => members.push(i),
                None => groups.push((key, vec![i])),
            }
        }
        Ok(groups)
    }
}

/// An exact per-state action distribution.
#[derive(Debug, Clone)]
pub struct PolicyTable {
    pub probs: Vec<Vec<f64>>,
}

impl PolicyTable {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self, FmdpError> {
        for row in &probs {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                return Err(FmdpError::BadProbabilityRow(sum));
            }
        }
        Ok(PolicyTable { probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        PolicyTable { probs: vec![vec![p; num_actions]; num_states] }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    /// True when the policy assigns identical action distributions to every
    /// pair of states in the same equivalence class of `phi`.
    pub fn is_measurable(
        &self,
        phi: &StateRepresentation,
        mdp: &TabularFmdp,
    ) -> Result<bool, FmdpError> {
        for (_, members) in phi.partition(mdp)? {
            let first = &self.probs[members[0]];
            for &m in &members[1..] {
                let row = &self.probs[m];
                if row.iter().zip(first).any(|(x, y)| (x - y).abs() > 1e-12) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_enumerate_single_binary_factor() {
        let states = enumerate_states(&[2]).unwrap();
        assert_eq!(states.len(), 2);
        assert_eq!(states[0].values, vec![0]);
        assert_eq!(states[1].values, vec![1]);
    }

    #[test]
    fn test_enumerate_order_and_index() {
        let states = enumerate_states(&[7, 2]).unwrap();
        assert_eq!(states.len(), 14);
        assert_eq!(states[0].values, vec![0, 0]);
        assert_eq!(states[13].values, vec![6, 1]);

        let states = enumerate_states(&[3, 2, 2]).unwrap();
        assert_eq!(states.len(), 12);
        let target = FactoredState::new(vec![2, 1, 0]);
        assert_eq!(state_index(&[3, 2, 2], &target), 10);
        assert_eq!(states[10], target);
        // Cross-check the full bijection by brute force.
        for (i, s) in states.iter().enumerate() {
            assert_eq!(state_index(&[3, 2, 2], s), i);
        }
    }

    #[test]
    fn test_enumerate_empty_domains_errors() {
        assert_eq!(enumerate_states(&[]).unwrap_err(), FmdpError::EmptyDomains);
    }

    #[test]
    fn test_project_keys() {
        let phi = StateRepresentation::new(vec![0], 2).unwrap();
        let s = FactoredState::new(vec![6, 1]);
        assert_eq!(phi.project(&s).unwrap(), vec![6]);

        let identity = StateRepresentation::identity(2);
        assert_eq!(identity.project(&s).unwrap(), vec![6, 1]);

        let empty = StateRepresentation::new(vec![], 2).unwrap();
        assert_eq!(empty.project(&s).unwrap(), Vec::<usize>::new());
        let t = FactoredState::new(vec![0, 0]);
        assert_eq!(empty.project(&t).unwrap(), empty.project(&s).unwrap());
    }

    #[test]
    fn test_representation_rejects_duplicates_and_bad_indices() {
        assert!(matches!(
            StateRepresentation::new(vec![0, 0], 2),
            Err(FmdpError::DuplicateFactor(0))
        ));
        assert!(matches!(
            StateRepresentation::new(vec![2], 2),
            Err(FmdpError::FactorOutOfRange(2, 2))
        ));
    }

    fn toy_mdp(domains: &[usize]) -> TabularFmdp {
        let states = enumerate_states(domains).unwrap();
        let n = states.len();
        let mut initial = vec![0.0; n];
        initial[0] = 1.0;
        TabularFmdp {
            factor_domains: domains.to_vec(),
            states,
            num_actions: 1,
            transition: (0..n)
                .map(|s| {
                    vec![{
                        let mut row = vec![0.0; n];
                        row[s] = 1.0;
                        row
                    }]
                })
                .collect(),
            reward: vec![vec![0.0]; n],
            terminal: vec![true; n],
            initial_dist: initial,
            horizon: 10,
        }
    }

    #[test]
    fn test_equivalence_classes_partition() {
        let mdp = toy_mdp(&[7, 2]);
        let phi = StateRepresentation::new(vec![0], 2).unwrap();
        let s61 = FactoredState::new(vec![6, 1]);
        let class = phi.equivalence_class(&s61, &mdp).unwrap();
        assert_eq!(class, vec![12, 13]); // ⟨6,0⟩ and ⟨6,1⟩

        let empty = StateRepresentation::new(vec![], 2).unwrap();
        assert_eq!(empty.equivalence_class(&s61, &mdp).unwrap().len(), 14);

        // Classes are disjoint and cover the state set.
        let groups = phi.partition(&mdp).unwrap();
        let mut seen = vec![false; 14];
        for (_, members) in &groups {
            for &m in members {
                assert!(!seen[m]);
                seen[m] = true;
            }
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn test_project_constant_on_class() {
        let mdp = toy_mdp(&[3, 2, 2]);
        let phi = StateRepresentation::new(vec![0, 2], 3).unwrap();
        for s in &mdp.states {
            for &m in &phi.equivalence_class(s, &mdp).unwrap() {
                assert_eq!(phi.project(&mdp.states[m]).unwrap(), phi.project(s).unwrap());
            }
        }
    }

    #[test]
    fn test_policy_table_validation() {
        assert!(PolicyTable::new(vec![vec![0.5, 0.5]]).is_ok());
        assert!(PolicyTable::new(vec![vec![0.6, 0.5]]).is_err());
        let uniform = PolicyTable::uniform(3, 4);
        assert_eq!(uniform.prob(2, 3), 0.25);
    }
}
