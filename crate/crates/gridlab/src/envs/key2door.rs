//! Corridor task: walk left to grab a key, then walk right and open the door.
//!
//! Locations 1..6 form the walkable corridor. The key sits in an alcove at the
//! left end and is collected automatically the moment the agent arrives at
//! location 1; the door is at location 6 and taking `right` there ends the
//! episode, paying +1 only if the key is held. Location 0 is reserved as the
//! absorbing post-exit state (it also encodes the key alcove in the
//! observation one-hot, which is why the location domain has seven values).
//! Every in-corridor move costs −0.01; the door transition itself is free.
//!
//! The train variant starts at location 2 (one step from the key), so a
//! trained agent's position alone predicts whether the key is already held.
//! The eval variant starts at location 6, breaking that correlation.

use crate::envs::Variant;
use crate::fmdp::{enumerate_states, state_index, FactoredState, TabularFmdp};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

const DOMAINS: [usize; 2] = [7, 2];
const STEP_PENALTY: f64 = -0.01;

pub fn build_key2door(variant: Variant) -> TabularFmdp {
    let states = enumerate_states(&DOMAINS).unwrap();
    let n = states.len();
    let num_actions = 2;

    let mut transition = vec![vec![vec![0.0; n]; num_actions]; n];
    let mut reward = vec![vec![0.0; num_actions]; n];
    let mut terminal = vec![false; n];

    for (i, s) in states.iter().enumerate() {
        let (loc, key) = (s.values[0], s.values[1]);
        if loc == 0 {
            // Post-exit absorbing state (key bit preserved for bookkeeping).
            terminal[i] = true;
            for a in 0..num_actions {
                transition[i][a][i] = 1.0;
            }
            continue;
        }
        for a in 0..num_actions {
            if a == RIGHT && loc == 6 {
                // Opening the door: terminal, +1 only with the key in hand.
                let exit = state_index(&DOMAINS, &FactoredState::new(vec![0, key]));
                transition[i][a][exit] = 1.0;
                reward[i][a] = if key == 1 { 1.0 } else { 0.0 };
                continue;
            }
            let next_loc = match a {
                LEFT => (loc - 1).max(1), // wall at the alcove boundary
                _ => loc + 1,
            };
            // Arriving at location 1 scoops up the key.
            let next_key = if next_loc == 1 { 1 } else { key };
            let j = state_index(&DOMAINS, &FactoredState::new(vec![next_loc, next_key]));
            transition[i][a][j] = 1.0;
            reward[i][a] = STEP_PENALTY;
        }
    }

    let start = match variant {
        Variant::Train => vec![2, 0],
        Variant::Eval => vec![6, 0],
    };
    let mut initial_dist = vec![0.0; n];
    initial_dist[state_index(&DOMAINS, &FactoredState::new(start))] = 1.0;

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
