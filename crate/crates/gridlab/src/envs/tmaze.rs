//! Two-corridor maze with a start-only goal cue.
//!
//! A 2-row × 7-column grid. The agent starts at the top-left cell, where it is
//! shown a binary signal: 0 means the rewarding goal is the top-right cell,
//! 1 means it is the bottom-right cell. The signal is part of the state but
//! leaks into the observation only while the agent stands on the start cell,
//! so solving the task requires remembering it. Entering the rightmost column
//! ends the episode: +1 on the goal matching the signal, −1 on the other one.
//! Every other move costs −0.01.
//!
//! State factors: (column 0..6, row 0..1, signal 0..1, at_start 0..1). The
//! `at_start` bit is 1 only in the two start states and drops to 0 after the
//! first move; it exists so "the cue is visible only at the start" is a
//! function of the state.
//!
//! The eval variant freezes column 3 over: any move that enters column 3 from
//! another column lands on the opposite row (moves within the column behave
//! normally). This diverts trajectories onto cells never seen in training
//! without changing the task.

use crate::envs::Variant;
use crate::fmdp::{enumerate_states, state_index, FactoredState, TabularFmdp};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

const DOMAINS: [usize; 4] = [7, 2, 2, 2];
const STEP_PENALTY: f64 = -0.01;

/// Clamped 4-direction movement on a `cols × 2` grid.
pub(crate) fn move_clamped(col: usize, row: usize, action: usize, cols: usize) -> (usize, usize) {
    match action {
        UP => (col, 0),
        DOWN => (col, 1),
        LEFT => (col.saturating_sub(1), row),
        RIGHT => ((col + 1).min(cols - 1), row),
        _ => unreachable!("action out of range"),
    }
}

pub fn build_frozen_tmaze(variant: Variant) -> TabularFmdp {
    // Deterministic row flip on entering the frozen column.
    build_frozen_tmaze_with_ice(variant, 1.0)
}

/// Same maze, but entering the frozen column flips the row only with
/// probability `flip_prob` (eval variant only; train never flips).
pub fn build_frozen_tmaze_with_ice(variant: Variant, flip_prob: f64) -> TabularFmdp {
    assert!((0.0..=1.0).contains(&flip_prob));
    let states = enumerate_states(&DOMAINS).unwrap();
    let n = states.len();
    let num_actions = 4;

    let mut transition = vec![vec![vec![0.0; n]; num_actions]; n];
    let mut reward = vec![vec![0.0; num_actions]; n];
    let mut terminal = vec![false; n];

    for (i, s) in states.iter().enumerate() {
        let (col, row, signal) = (s.values[0], s.values[1], s.values[2]);
        if col == 6 {
            terminal[i] = true;
            for a in 0..num_actions {
                transition[i][a][i] = 1.0;
            }
            continue;
        }
        for a in 0..num_actions {
            let (ncol, nrow) = move_clamped(col, row, a, 7);
            // Outcomes as (probability, landing row).
            let outcomes: Vec<(f64, usize)> =
                if variant == Variant::Eval && ncol == 3 && col != 3 && flip_prob > 0.0 {
                    if flip_prob == 1.0 {
                        vec![(1.0, 1 - nrow)]
                    } else {
                        vec![(flip_prob, 1 - nrow), (1.0 - flip_prob, nrow)]
                    }
                } else {
                    vec![(1.0, nrow)]
                };
            for (p, lrow) in outcomes {
                let next = FactoredState::new(vec![ncol, lrow, signal, 0]);
                transition[i][a][state_index(&DOMAINS, &next)] += p;
            }
            // Entering the last column pays ±1 (the ice is three columns
            // away, so the landing row there is never randomized),
            // otherwise the step penalty.
            reward[i][a] = if ncol == 6 {
                if nrow == signal {
                    1.0
                } else {
                    -1.0
                }
            } else {
                STEP_PENALTY
            };
        }
    }

    // The signal is drawn uniformly at episode start.
    let mut initial_dist = vec![0.0; n];
    for g in 0..2 {
        initial_dist[state_index(&DOMAINS, &FactoredState::new(vec![0, 0, g, 1]))] = 0.5;
    }

    TabularFmdp {
        factor_domains: DOMAINS.to_vec(),
        states,
        num_actions,
        transition,
        reward,
        terminal,
        initial_dist,
        horizon: 100,
    }
}
