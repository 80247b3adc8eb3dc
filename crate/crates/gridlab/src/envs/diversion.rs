//! Fully observable 2-row × 7-column grid with a goal and a trap.
//!
//! The agent starts at the top-left cell. The top-right cell is the goal
//! (+1, terminal), the bottom-right cell is a trap (−1, terminal), and every
//! other move costs −0.01. The optimal route runs straight along the top row,
//! so the bottom row (except for its ends) goes unvisited in training.
//!
//! The eval variant places a diversion on the top cell of column 3: any move
//! that would land there from another cell is deflected to the bottom cell of
//! the same column, pushing the agent onto the unvisited row mid-route.

use crate::envs::tmaze::move_clamped;
use crate::envs::Variant;
use crate::fmdp::{enumerate_states, state_index, FactoredState, TabularFmdp};

const DOMAINS: [usize; 2] = [7, 2];
const STEP_PENALTY: f64 = -0.01;

pub fn build_diversion(variant: Variant) -> TabularFmdp {
    let states = enumerate_states(&DOMAINS).unwrap();
    let n = states.len();
    let num_actions = 4;

    let mut transition = vec![vec![vec![0.0; n]; num_actions]; n];
    let mut reward = vec![vec![0.0; num_actions]; n];
    let mut terminal = vec![false; n];

    for (i, s) in states.iter().enumerate() {
        let (col, row) = (s.values[0], s.values[1]);
        if col == 6 {
            terminal[i] = true;
            for a in 0..num_actions {
                transition[i][a][i] = 1.0;
            }
            continue;
        }
        for a in 0..num_actions {
            let (ncol, mut nrow) = move_clamped(col, row, a, 7);
            // The diversion deflects arrivals at ⟨3, top⟩ to ⟨3, bottom⟩.
            if variant == Variant::Eval && (ncol, nrow) == (3, 0) && (col, row) != (3, 0) {
                nrow = 1;
            }
            let j = state_index(&DOMAINS, &FactoredState::new(vec![ncol, nrow]));
            transition[i][a][j] = 1.0;
            reward[i][a] = if ncol == 6 {
                if nrow == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                STEP_PENALTY
            };
        }
    }

    let mut initial_dist = vec![0.0; n];
    initial_dist[state_index(&DOMAINS, &FactoredState::new(vec![0, 0]))] = 1.0;

    TabularFmdp {
        factor_domains: DOMAINS.to_vec(),
        states,
        num_actions,
        transition,
        reward,
        terminal,
        initial_dist,
        horizon: 50,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::testutil::step;
    use crate::envs::tmaze::{RIGHT, UP};

    fn idx(mdp: &TabularFmdp, col: usize, row: usize) -> usize {
        mdp.index_of(&FactoredState::new(vec![col, row]))
    }

    #[test]
    fn test_structure_valid() {
        for variant in [Variant::Train, Variant::Eval] {
            build_diversion(variant).validate().unwrap();
        }
    }

    #[test]
    fn test_goal_and_trap() {
        let mdp = build_diversion(Variant::Train);
        let (next, r) = step(&mdp, idx(&mdp, 5, 0), RIGHT);
        assert!(mdp.terminal[next]);
        assert_eq!(r, 1.0);
        let (next, r) = step(&mdp, idx(&mdp, 5, 1), RIGHT);
        assert!(mdp.terminal[next]);
        assert_eq!(r, -1.0);
    }

    #[test]
    fn test_eval_diversion_deflects() {
        let mdp = build_diversion(Variant::Eval);
        let (next, r) = step(&mdp, idx(&mdp, 2, 0), RIGHT);
        assert_eq!(mdp.states[next].values, vec![3, 1]);
        assert_eq!(r, -0.01);
        // Approaching from below is deflected straight back down.
        let (next, _) = step(&mdp, idx(&mdp, 3, 1), UP);
        assert_eq!(mdp.states[next].values, vec![3, 1]);
    }

    #[test]
    fn test_train_has_no_diversion() {
        let mdp = build_diversion(Variant::Train);
        let (next, _) = step(&mdp, idx(&mdp, 2, 0), RIGHT);
        assert_eq!(mdp.states[next].values, vec![3, 0]);
    }

    #[test]
    fn test_optimal_train_return() {
        // Six moves straight along the top row.
        let mdp = build_diversion(Variant::Train);
        let mut s = idx(&mdp, 0, 0);
        let mut total = 0.0;
        let mut bottom_row_visits = 0;
        for _ in 0..6 {
            let (next, r) = step(&mdp, s, RIGHT);
            total += r;
            s = next;
            bottom_row_visits += mdp.states[s].values[1];
        }
        assert!(mdp.terminal[s]);
        assert!((total - 0.95).abs() < 1e-12);
        assert_eq!(bottom_row_visits, 0);
    }

    #[test]
    fn test_eval_reroute_return() {
        // The deflection forces a detour through the bottom row: the best
        // route climbs back up before the trap column.
        let mdp = build_diversion(Variant::Eval);
        let mut s = idx(&mdp, 0, 0);
        let mut total = 0.0;
        for &a in &[RIGHT, RIGHT, RIGHT, RIGHT, RIGHT, UP, RIGHT] {
            let (next, r) = step(&mdp, s, a);
            total += r;
            s = next;
        }
        assert!(mdp.terminal[s]);
        assert_eq!(mdp.states[s].values, vec![6, 0]);
        assert!((total - 0.94).abs() < 1e-12);
    }
}
