//! On-policy experience collection: a persistent environment cursor, fixed
//! -length rollout windows with auto-reset, and the return/advantage targets
//! computed from them.
//!
//! Episodes are never aligned to window boundaries: a window truncates
//! mid-episode and the next window continues where it left off, with the
//! truncated tail's future return estimated by the value head (or zero,
//! per the `Bootstrap` knob). An episode that reaches the environment's
//! horizon is recorded as done and reset, like a natural terminal.

use rand_chacha::ChaCha8Rng;

use crate::envs::{EnvSpec, ObsStacker};
use crate::fmdp::TabularFmdp;
use crate::nn::{NnError, PolicyValueNets};
use crate::util::sample_categorical;

/// How to estimate the return beyond a rollout window's truncated tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bootstrap {
    ValueNet,
    Zero,
}

impl Bootstrap {
    pub fn as_str(self) -> &'static str {
        match self {
            Bootstrap::ValueNet => "value_net",
            Bootstrap::Zero => "zero",
        }
    }
}

impl std::str::FromStr for Bootstrap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "value_net" => Ok(Bootstrap::ValueNet),
            "zero" => Ok(Bootstrap::Zero),
            other => Err(format!("unknown bootstrap mode '{other}'")),
        }
    }
}

/// A live environment position: current state, elapsed episode steps, and
/// the frame history behind the stacked observation.
#[derive(Debug, Clone)]
pub struct EnvCursor {
    spec: EnvSpec,
    mdp: TabularFmdp,
    stacker: ObsStacker,
    state: usize,
    t_in_episode: usize,
}

impl EnvCursor {
    pub fn new(spec: EnvSpec, rng: &mut ChaCha8Rng) -> Self {
        let mdp = spec.build();
        let stacker = ObsStacker::new(&spec);
        let mut cursor = EnvCursor { spec, mdp, stacker, state: 0, t_in_episode: 0 };
        cursor.reset(rng);
        cursor
    }

    /// Starts a fresh episode: samples an initial state and clears history.
    pub fn reset(&mut self, rng: &mut ChaCha8Rng) {
        self.state = sample_categorical(rng, &self.mdp.initial_dist);
        self.t_in_episode = 0;
        self.stacker.reset();
    }

    /// Stacked observation of the current state.
    pub fn obs(&self) -> Vec<f64> {
        self.stacker.observe(&self.spec, &self.mdp.states[self.state])
    }

    /// Takes `action`, returning its reward and whether the episode ended
    /// (terminal state or horizon). The caller decides when to `reset`.
    pub fn step(&mut self, action: usize, rng: &mut ChaCha8Rng) -> (f64, bool) {
        debug_assert!(action < self.mdp.num_actions);
        debug_assert!(!self.mdp.terminal[self.state], "stepping a finished episode");
        let reward = self.mdp.reward[self.state][action];
        let next = sample_categorical(rng, &self.mdp.transition[self.state][action]);
        self.stacker.push(self.spec.name, &self.mdp.states[self.state]);
        self.state = next;
        self.t_in_episode += 1;
        let done = self.mdp.terminal[next] || self.t_in_episode >= self.mdp.horizon;
        (reward, done)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn mdp(&self) -> &TabularFmdp {
        &self.mdp
    }

    /// Factor assignment of the current state.
    pub fn state(&self) -> &crate::fmdp::FactoredState {
        &self.mdp.states[self.state]
    }

    /// Steps taken so far in the current episode.
    pub fn episode_step(&self) -> usize {
        self.t_in_episode
    }

    pub fn num_actions(&self) -> usize {
        self.mdp.num_actions
    }
}

/// One fixed-length window of on-policy experience.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Value estimate of the state after the final step; zero if that step
    /// ended its episode.
    pub bootstrap_value: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Collects exactly `steps` environment steps, resetting on episode ends.
pub fn collect_rollout(
    cursor: &mut EnvCursor,
    nets: &PolicyValueNets,
    steps: usize,
    bootstrap: Bootstrap,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutBuffer, NnError> {
    assert!(steps >= 1);
    let mut buffer = RolloutBuffer {
        obs: Vec::with_capacity(steps),
        actions: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        dones: Vec::with_capacity(steps),
        log_probs: Vec::with_capacity(steps),
        values: Vec::with_capacity(steps),
        bootstrap_value: 0.0,
    };
    for _ in 0..steps {
        let obs = cursor.obs();
        let probs = nets.policy_probs(&obs)?;
        let value = nets.value(&obs)?;
        let action = sample_categorical(rng, &probs);
        let (reward, done) = cursor.step(action, rng);
        buffer.obs.push(obs);
        buffer.actions.push(action);
        buffer.rewards.push(reward);
        buffer.dones.push(done);
        buffer.log_probs.push(probs[action].ln());
        buffer.values.push(value);
        if done {
            cursor.reset(rng);
        }
    }
    if !*buffer.dones.last().unwrap() {
        buffer.bootstrap_value = match bootstrap {
            Bootstrap::ValueNet => nets.value(&cursor.obs())?,
            Bootstrap::Zero => 0.0,
        };
    }
    Ok(buffer)
}

/// Discounted Monte Carlo return-to-go per step, bootstrapping the window's
/// truncated tail.
pub fn compute_q_targets(buffer: &RolloutBuffer, gamma: f64) -> Vec<f64> {
    let n = buffer.len();
    let mut targets = vec![0.0; n];
    let mut future = buffer.bootstrap_value;
    for t in (0..n).rev() {
        if buffer.dones[t] {
            future = 0.0;
        }
        targets[t] = buffer.rewards[t] + gamma * future;
        future = targets[t];
    }
    targets
}

/// Generalized advantage estimates, restarting the recursion at episode
/// boundaries.
pub fn compute_gae(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = buffer.len();
    let mut advantages = vec![0.0; n];
    let mut next_value = buffer.bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        if buffer.dones[t] {
            next_value = 0.0;
            next_adv = 0.0;
        }
        let delta = buffer.rewards[t] + gamma * next_value - buffer.values[t];
        advantages[t] = delta + gamma * lambda * next_adv;
        next_value = buffer.values[t];
        next_adv = advantages[t];
    }
    advantages
}

/// Runs `episodes` full episodes and returns their undiscounted returns.
/// `greedy` takes the argmax action instead of sampling.
pub fn evaluate_policy(
    spec: &EnvSpec,
    nets: &PolicyValueNets,
    episodes: usize,
    greedy: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, NnError> {
    let mut cursor = EnvCursor::new(spec.clone(), rng);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut total = 0.0;
        loop {
            let probs = nets.policy_probs(&cursor.obs())?;
            let action = if greedy { argmax(&probs) } else { sample_categorical(rng, &probs) };
            let (reward, done) = cursor.step(action, rng);
            total += reward;
            if done {
                cursor.reset(rng);
                break;
            }
        }
        returns.push(total);
    }
    Ok(returns)
}

/// Index of the largest entry; ties resolve to the lowest index.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    use crate::envs::{EnvName, Variant};
    use crate::nn::Mlp;

    /// Linear policy over Key2Door observations [one-hot location ⊕ key]:
    /// picks `key0_action` while the key bit is 0, `key1_action` once it
    /// flips. Logit margins of ±1000 make the softmax exactly {0, 1}.
    fn keyed_policy(key0_action: usize, key1_action: usize) -> Mlp {
        let mut policy = Mlp::zeroed(&[8, 2]);
        policy.layers[0].b[key0_action] = 1000.0;
        policy.layers[0].w[7][key0_action] = -2000.0;
        policy.layers[0].w[7][key1_action] = 1000.0;
        policy
    }

    fn nets_with_policy(policy: Mlp, value_bias: f64) -> PolicyValueNets {
        let mut value = Mlp::zeroed(&[8, 1]);
        value.layers[0].b[0] = value_bias;
        PolicyValueNets::Separate { policy, value }
    }

    fn key2door_cursor(variant: Variant, seed: u64) -> (EnvCursor, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cursor = EnvCursor::new(EnvSpec::new(EnvName::Key2Door, variant), &mut rng);
        (cursor, rng)
    }

    #[test]
    fn same_seed_collects_identical_buffers() {
        let nets = PolicyValueNets::new(8, 2, &[16], false, 4);
        let collect = || {
            let (mut cursor, mut rng) = key2door_cursor(Variant::Train, 99);
            collect_rollout(&mut cursor, &nets, 64, Bootstrap::ValueNet, &mut rng).unwrap()
        };
        assert_eq!(collect(), collect());
    }

    #[test]
    fn nonterminating_window_matches_geometric_sum() {
        // Always-left from ⟨2,0⟩ pins the agent against the wall: sixteen
        // −0.01 steps, no terminal, so the first return-to-go is the
        // geometric sum plus the discounted bootstrap value.
        let nets = nets_with_policy(keyed_policy(0, 0), 0.37);
        let (mut cursor, mut rng) = key2door_cursor(Variant::Train, 1);
        let buffer =
            collect_rollout(&mut cursor, &nets, 16, Bootstrap::ValueNet, &mut rng).unwrap();
        assert!(buffer.dones.iter().all(|&d| !d));
        assert_eq!(buffer.bootstrap_value, 0.37);

        let gamma = 0.99;
        let targets = compute_q_targets(&buffer, gamma);
        let geometric: f64 = (0..16).map(|k| -0.01 * gamma.powi(k)).sum();
        let expected = geometric + gamma.powi(16) * 0.37;
        assert!((targets[0] - expected).abs() < 1e-12);

        let (mut cursor, mut rng) = key2door_cursor(Variant::Train, 1);
        let buffer =
            collect_rollout(&mut cursor, &nets, 16, Bootstrap::Zero, &mut rng).unwrap();
        let targets = compute_q_targets(&buffer, gamma);
        assert!((targets[0] - geometric).abs() < 1e-12);
    }

    #[test]
    fn optimal_episode_then_auto_reset() {
        // Grab the key (one step left), then run right to the door: seven
        // steps, six movement penalties, undiscounted return 0.94.
        let nets = nets_with_policy(keyed_policy(0, 1), 0.0);
        let (mut cursor, mut rng) = key2door_cursor(Variant::Train, 7);
        let first_obs = cursor.obs();
        let buffer =
            collect_rollout(&mut cursor, &nets, 10, Bootstrap::ValueNet, &mut rng).unwrap();
        assert_eq!(buffer.dones.iter().position(|&d| d), Some(6));
        let episode_return: f64 = buffer.rewards[..7].iter().sum();
        assert!((episode_return - 0.94).abs() < 1e-12);
        // Auto-reset: step 7 starts a fresh episode at the training start.
        assert_eq!(buffer.obs[7], first_obs);
    }

    #[test]
    fn horizon_caps_episodes_as_done() {
        let nets = nets_with_policy(keyed_policy(0, 0), 0.0);
        let (mut cursor, mut rng) = key2door_cursor(Variant::Train, 3);
        let buffer =
            collect_rollout(&mut cursor, &nets, 128, Bootstrap::ValueNet, &mut rng).unwrap();
        let done_steps: Vec<usize> =
            (0..128).filter(|&t| buffer.dones[t]).collect();
        assert_eq!(done_steps, vec![49, 99]);
        assert_eq!(buffer.obs[50], buffer.obs[0]);
    }

    #[test]
    fn q_targets_handle_terminal_steps() {
        let buffer = RolloutBuffer {
            obs: vec![Vec::new(); 3],
            actions: vec![0; 3],
            rewards: vec![0.5, -0.2, 1.0],
            dones: vec![false, true, true],
            log_probs: vec![0.0; 3],
            values: vec![0.0; 3],
            bootstrap_value: 9.9,
        };
        let gamma = 0.9;
        let targets = compute_q_targets(&buffer, gamma);
        assert!((targets[2] - 1.0).abs() < 1e-15);
        assert!((targets[1] - -0.2).abs() < 1e-15);
        assert!((targets[0] - (0.5 + gamma * -0.2)).abs() < 1e-15);
    }

    fn random_buffer(seed: u64, n: usize) -> RolloutBuffer {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RolloutBuffer {
            obs: vec![Vec::new(); n],
            actions: vec![0; n],
            rewards: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            dones: (0..n).map(|_| rng.gen_bool(0.15)).collect(),
            log_probs: vec![0.0; n],
            values: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            bootstrap_value: 0.3,
        }
    }

    /// Direct Σ (γλ)^k δ_{t+k} evaluation, stopping at episode ends.
    fn gae_oracle(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> Vec<f64> {
        let n = buffer.len();
        (0..n)
            .map(|t| {
                let mut acc = 0.0;
                let mut coef = 1.0;
                for k in t..n {
                    let next_v = if buffer.dones[k] {
                        0.0
                    } else if k + 1 < n {
                        buffer.values[k + 1]
                    } else {
                        buffer.bootstrap_value
                    };
                    acc += coef * (buffer.rewards[k] + gamma * next_v - buffer.values[k]);
                    if buffer.dones[k] {
                        break;
                    }
                    coef *= gamma * lambda;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn gae_matches_brute_force_oracle() {
        let buffer = random_buffer(21, 40);
        for lambda in [0.0, 0.5, 0.95, 1.0] {
            let fast = compute_gae(&buffer, 0.99, lambda);
            let slow = gae_oracle(&buffer, 0.99, lambda);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "λ={lambda}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gae_lambda_zero_is_one_step_td_error() {
        let buffer = random_buffer(22, 25);
        let adv = compute_gae(&buffer, 0.99, 0.0);
        for t in 0..buffer.len() {
            let next_v = if buffer.dones[t] {
                0.0
            } else if t + 1 < buffer.len() {
                buffer.values[t + 1]
            } else {
                buffer.bootstrap_value
            };
            let td = buffer.rewards[t] + 0.99 * next_v - buffer.values[t];
            assert!((adv[t] - td).abs() < 1e-15);
        }
    }

    #[test]
    fn gae_lambda_one_plus_value_is_q_target() {
        let buffer = random_buffer(23, 50);
        let adv = compute_gae(&buffer, 0.99, 1.0);
        let q = compute_q_targets(&buffer, 0.99);
        for t in 0..buffer.len() {
            assert!((adv[t] + buffer.values[t] - q[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluation_reports_undiscounted_returns() {
        let nets = nets_with_policy(keyed_policy(0, 1), 0.0);
        let spec = EnvSpec::new(EnvName::Key2Door, Variant::Train);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let returns = evaluate_policy(&spec, &nets, 10, false, &mut rng).unwrap();
        assert_eq!(returns.len(), 10);
        for r in &returns {
            assert!((r - 0.94).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_evaluation_takes_argmax_with_low_index_ties() {
        // A zeroed policy is uniform, so greedy always picks action 0
        // (left): the agent never reaches the door and the horizon caps the
        // episode at fifty −0.01 steps.
        let nets = PolicyValueNets::Separate {
            policy: Mlp::zeroed(&[8, 2]),
            value: Mlp::zeroed(&[8, 1]),
        };
        let spec = EnvSpec::new(EnvName::Key2Door, Variant::Train);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let returns = evaluate_policy(&spec, &nets, 3, true, &mut rng).unwrap();
        for r in &returns {
            assert!((r - -0.5).abs() < 1e-12);
        }
    }
}
