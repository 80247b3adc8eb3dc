//! Per-step observation encodings and frame stacking.
//!
//! Each environment maps a state to a short binary vector; trainers see the
//! concatenation of the last `obs_stack` such vectors (zero-padded at episode
//! start), oldest frame first.

use crate::envs::{EnvError, EnvName, EnvSpec};
use crate::fmdp::FactoredState;

/// Length of one un-stacked frame for the given environment.
pub fn per_step_len(name: EnvName) -> usize {
    match name {
        EnvName::Key2Door => 8,    // one-hot location ⊕ key bit
        EnvName::FrozenTMaze => 15, // one-hot cell ⊕ signal slot
        EnvName::Diversion => 8,   // one-hot column ⊕ row bit
    }
}

/// Encodes a single state as one binary frame.
pub fn encode_step(name: EnvName, state: &FactoredState) -> Vec<f64> {
    let mut frame = vec![0.0; per_step_len(name)];
    match name {
        EnvName::Key2Door => {
            let (loc, key) = (state.values[0], state.values[1]);
            frame[loc] = 1.0;
            frame[7] = key as f64;
        }
        EnvName::FrozenTMaze => {
            let (col, row, signal, at_start) =
                (state.values[0], state.values[1], state.values[2], state.values[3]);
            frame[row * 7 + col] = 1.0;
            // The signal slot carries the signal value only while the agent
            // still stands on the start cell; everywhere else it reads 0.
            if at_start == 1 {
                frame[14] = signal as f64;
            }
        }
        EnvName::Diversion => {
            let (col, row) = (state.values[0], state.values[1]);
            frame[col] = 1.0;
            frame[7] = row as f64;
        }
    }
    frame
}

/// Concatenates `history` (the previous `obs_stack − 1` frames, oldest first)
/// with the current state's frame.
pub fn encode_observation(
    spec: &EnvSpec,
    state: &FactoredState,
    history: &[Vec<f64>],
) -> Result<Vec<f64>, EnvError> {
    if history.len() != spec.obs_stack - 1 {
        return Err(EnvError::HistoryLength {
            expected: spec.obs_stack - 1,
            got: history.len(),
        });
    }
    let step_len = per_step_len(spec.name);
    let mut out = Vec::with_capacity(spec.obs_stack * step_len);
    for frame in history {
        if frame.len() != step_len {
            return Err(EnvError::HistoryLength { expected: step_len, got: frame.len() });
        }
        out.extend_from_slice(frame);
    }
    out.extend_from_slice(&encode_step(spec.name, state));
    Ok(out)
}

/// Rolling frame buffer used by rollout collection: reset to zeros at episode
/// start, push one frame per step, read the full stack at any time.
#[derive(Debug, Clone)]
pub struct ObsStacker {
    step_len: usize,
    frames: Vec<Vec<f64>>,
}

impl ObsStacker {
    pub fn new(spec: &EnvSpec) -> Self {
        let step_len = per_step_len(spec.name);
        ObsStacker { step_len, frames: vec![vec![0.0; step_len]; spec.obs_stack - 1] }
    }

    /// Clears the history back to zero padding (start of a new episode).
    pub fn reset(&mut self) {
        for frame in &mut self.frames {
            frame.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Returns the stacked observation for `state` given the buffered history.
    pub fn observe(&self, spec: &EnvSpec, state: &FactoredState) -> Vec<f64> {
        encode_observation(spec, state, &self.frames).expect("stacker history is well-formed")
    }

    /// Records `state`'s frame as the most recent history entry.
    pub fn push(&mut self, name: EnvName, state: &FactoredState) {
        if !self.frames.is_empty() {
            self.frames.remove(0);
            self.frames.push(encode_step(name, state));
        }
        debug_assert!(self.frames.iter().all(|f| f.len() == self.step_len));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Variant;

    #[test]
    fn test_key2door_frame() {
        let s = FactoredState::new(vec![6, 1]);
        assert_eq!(
            encode_step(EnvName::Key2Door, &s),
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]
        );
    }

    #[test]
    fn test_diversion_frame() {
        let s = FactoredState::new(vec![4, 1]);
        let frame = encode_step(EnvName::Diversion, &s);
        assert_eq!(frame.len(), 8);
        assert_eq!(frame[4], 1.0);
        assert_eq!(frame[7], 1.0);
        assert_eq!(frame.iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn test_tmaze_signal_only_visible_at_start() {
        // On the start cell the slot mirrors the signal value…
        let on_start = FactoredState::new(vec![0, 0, 1, 1]);
        assert_eq!(encode_step(EnvName::FrozenTMaze, &on_start)[14], 1.0);
        // …and is zeroed everywhere else, even with the same signal drawn.
        let moved = FactoredState::new(vec![1, 0, 1, 0]);
        assert_eq!(encode_step(EnvName::FrozenTMaze, &moved)[14], 0.0);
        let back_home = FactoredState::new(vec![0, 0, 1, 0]);
        assert_eq!(encode_step(EnvName::FrozenTMaze, &back_home)[14], 0.0);
    }

    #[test]
    fn test_tmaze_cell_one_hot() {
        let s = FactoredState::new(vec![4, 1, 0, 0]);
        let frame = encode_step(EnvName::FrozenTMaze, &s);
        assert_eq!(frame.len(), 15);
        assert_eq!(frame[1 * 7 + 4], 1.0);
        assert_eq!(frame.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn test_stacked_episode_start_is_zero_padded() {
        let spec = EnvSpec::new(EnvName::FrozenTMaze, Variant::Train);
        assert_eq!(spec.obs_stack, 30);
        let stacker = ObsStacker::new(&spec);
        let start = FactoredState::new(vec![0, 0, 1, 1]);
        let obs = stacker.observe(&spec, &start);
        assert_eq!(obs.len(), 30 * 15);
        assert!(obs[..29 * 15].iter().all(|&x| x == 0.0));
        assert_eq!(obs[29 * 15 + 14], 1.0);
    }

    #[test]
    fn test_stacker_rolls_frames_oldest_first() {
        let spec = EnvSpec::with_stack(EnvName::Diversion, Variant::Train, 3);
        let mut stacker = ObsStacker::new(&spec);
        let s0 = FactoredState::new(vec![0, 0]);
        let s1 = FactoredState::new(vec![1, 0]);
        let s2 = FactoredState::new(vec![2, 0]);
        stacker.push(EnvName::Diversion, &s0);
        stacker.push(EnvName::Diversion, &s1);
        let obs = stacker.observe(&spec, &s2);
        let mut expected = encode_step(EnvName::Diversion, &s0);
        expected.extend(encode_step(EnvName::Diversion, &s1));
        expected.extend(encode_step(EnvName::Diversion, &s2));
        assert_eq!(obs, expected);
        // After reset the history is zero padding again.
        stacker.reset();
        let obs = stacker.observe(&spec, &s0);
        assert!(obs[..2 * 8].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn test_history_length_mismatch_errors() {
        let spec = EnvSpec::new(EnvName::Key2Door, Variant::Train);
        let s = FactoredState::new(vec![2, 0]);
        let err = encode_observation(&spec, &s, &[vec![0.0; 8]]).unwrap_err();
        assert!(matches!(err, EnvError::HistoryLength { expected: 0, got: 1 }));
    }
}
