//! Dense feedforward networks with exact reverse-mode gradients, written
//! directly against `Vec<f64>` — no external ML dependency.
//!
//! Layout: weights are stored input-major (`w[i][j]` connects input unit `i`
//! to output unit `j`), so a forward pass walks contiguous rows and skips
//! zero inputs entirely — the stacked observations here are sparse binary
//! vectors, which makes the wide first layer cheap — and the backward pass
//! writes `dW[i] = x[i]·δ` row-contiguously for the same reason.
//!
//! Hidden activation is tanh; outputs are raw (logits or a scalar). Softmax
//! and losses live with the callers, which hand `backward` the upstream
//! gradient at the output layer.
//!
//! # Checkpoint format
//!
//! Plain text. First line `mlp v1`, second line `widths w0 w1 … wk`, then for
//! each layer a `layer <idx> weight <in> <out>` header followed by `<in>`
//! lines of `<out>` space-separated values, and a `layer <idx> bias <out>`
//! header followed by one such line. Values use Rust's shortest-roundtrip
//! float formatting, so save → load is exact.

use std::fmt::Write as _;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input length {got} does not match network input width {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse: {0}")]
    Parse(String),
}

/// One dense layer; `w[i][j]` maps input `i` to output `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeroed(fan_in: usize, fan_out: usize) -> Self {
        Layer { w: vec![vec![0.0; fan_out]; fan_in], b: vec![0.0; fan_out] }
    }
}

/// Feedforward network parameters: `widths[0]` inputs, tanh hidden layers,
/// `widths.last()` raw outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub layers: Vec<Layer>,
}

/// Per-parameter gradients, shape-identical to the network they came from.
pub type GradientBundle = Vec<Layer>;

/// Scales every gradient entry in place (e.g. by 1/batch for a mean loss).
pub fn scale_grads(grads: &mut GradientBundle, factor: f64) {
    for layer in grads {
        for row in &mut layer.w {
            for g in row {
                *g *= factor;
            }
        }
        for g in &mut layer.b {
            *g *= factor;
        }
    }
}

/// Per-layer activations from a forward pass: post-tanh for hidden layers,
/// raw for the final layer.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds at least one layer")
    }
}

impl Mlp {
    /// Seeded uniform fan-in initialization: weights and biases of each layer
    /// drawn from U(−1/√fan_in, 1/√fan_in).
    pub fn new(widths: &[usize], seed: u64) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound);
                Layer {
                    w: (0..fan_in)
                        .map(|_| (0..fan_out).map(|_| dist.sample(&mut rng)).collect())
                        .collect(),
                    b: (0..fan_out).map(|_| dist.sample(&mut rng)).collect(),
                }
            })
            .collect();
        Mlp { widths: widths.to_vec(), layers }
    }

    /// All-zero parameters (a known-inert reference point: uniform policy,
    /// zero value).
    pub fn zeroed(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2);
        let layers =
            widths.windows(2).map(|pair| Layer::zeroed(pair[0], pair[1])).collect();
        Mlp { widths: widths.to_vec(), layers }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Gradient bundle of the right shapes, all zeros.
    pub fn zero_grads(&self) -> GradientBundle {
        self.widths.windows(2).map(|pair| Layer::zeroed(pair[0], pair[1])).collect()
    }

    fn check_input(&self, obs: &[f64]) -> Result<(), NnError> {
        if obs.len() != self.input_width() {
            return Err(NnError::ShapeMismatch {
                expected: self.input_width(),
                got: obs.len(),
            });
        }
        Ok(())
    }

    /// Runs the network, keeping every layer's activation for `backward`.
    pub fn forward_cached(&self, obs: &[f64]) -> Result<ForwardCache, NnError> {
        self.check_input(obs)?;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let x: &[f64] = if k == 0 { obs } else { &activations[k - 1] };
            let mut z = layer.b.clone();
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &layer.w[i];
                if xi == 1.0 {
                    for (zj, &wj) in z.iter_mut().zip(row) {
                        *zj += wj;
                    }
                } else {
                    for (zj, &wj) in z.iter_mut().zip(row) {
                        *zj += xi * wj;
                    }
                }
            }
            if k + 1 < self.layers.len() {
                for zj in &mut z {
                    *zj = zj.tanh();
                }
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Raw output vector (logits, or a 1-vector for value nets).
    pub fn forward(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_cached(obs)?.output().to_vec())
    }

    /// Exact reverse-mode pass for one sample. `upstream` is ∂loss/∂output;
    /// gradients are ADDED into `grads`, so one bundle accumulates a whole
    /// minibatch.
    pub fn backward(
        &self,
        obs: &[f64],
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut GradientBundle,
    ) {
        assert_eq!(upstream.len(), self.output_width(), "upstream matches output");
        assert_eq!(grads.len(), self.layers.len(), "gradient bundle matches depth");
        let mut delta = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let input: &[f64] = if k == 0 { obs } else { &cache.activations[k - 1] };
            let grad = &mut grads[k];
            for (i, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &mut grad.w[i];
                for (gj, &dj) in row.iter_mut().zip(&delta) {
                    *gj += xi * dj;
                }
            }
            for (gj, &dj) in grad.b.iter_mut().zip(&delta) {
                *gj += dj;
            }
            if k == 0 {
                break;
            }
            // δ for the layer below: W·δ, then through tanh' = 1 − a².
            let layer = &self.layers[k];
            let mut next_delta = vec![0.0; input.len()];
            for (i, di) in next_delta.iter_mut().enumerate() {
                let row = &layer.w[i];
                *di = row.iter().zip(&delta).map(|(&w, &d)| w * d).sum();
            }
            for (di, &ai) in next_delta.iter_mut().zip(input) {
                *di *= 1.0 - ai * ai;
            }
            delta = next_delta;
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Action distribution of a policy network: softmax over its logits.
pub fn forward_policy(params: &Mlp, obs: &[f64]) -> Result<Vec<f64>, NnError> {
    Ok(softmax(&params.forward(obs)?))
}

/// Scalar output of a value network.
pub fn forward_value(params: &Mlp, obs: &[f64]) -> Result<f64, NnError> {
    let out = params.forward(obs)?;
    debug_assert_eq!(out.len(), 1, "value networks end in a single unit");
    Ok(out[0])
}

/// Plain gradient descent: p ← p − lr·g.
pub fn sgd_step(params: &mut Mlp, grads: &GradientBundle, lr: f64) {
    assert!(lr > 0.0);
    for (layer, grad) in params.layers.iter_mut().zip(grads) {
        for (wrow, grow) in layer.w.iter_mut().zip(&grad.w) {
            for (w, &g) in wrow.iter_mut().zip(grow) {
                *w -= lr * g;
            }
        }
        for (b, &g) in layer.b.iter_mut().zip(&grad.b) {
            *b -= lr * g;
        }
    }
}

/// First and second moment estimates for adam, plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: GradientBundle,
    v: GradientBundle,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(params: &Mlp) -> Self {
        AdamState { m: params.zero_grads(), v: params.zero_grads(), t: 0 }
    }
}

/// Adam with (β1, β2, ε) = (0.9, 0.999, 1e-8) and bias correction.
pub fn adam_step(params: &mut Mlp, grads: &GradientBundle, lr: f64, state: &mut AdamState) {
    assert!(lr > 0.0);
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for (k, layer) in params.layers.iter_mut().enumerate() {
        let (grad, m, v) = (&grads[k], &mut state.m[k], &mut state.v[k]);
        for i in 0..layer.w.len() {
            for j in 0..layer.w[i].len() {
                let g = grad.w[i][j];
                m.w[i][j] = ADAM_BETA1 * m.w[i][j] + (1.0 - ADAM_BETA1) * g;
                v.w[i][j] = ADAM_BETA2 * v.w[i][j] + (1.0 - ADAM_BETA2) * g * g;
                layer.w[i][j] -=
                    lr * (m.w[i][j] / bc1) / ((v.w[i][j] / bc2).sqrt() + ADAM_EPS);
            }
        }
        for j in 0..layer.b.len() {
            let g = grad.b[j];
            m.b[j] = ADAM_BETA1 * m.b[j] + (1.0 - ADAM_BETA1) * g;
            v.b[j] = ADAM_BETA2 * v.b[j] + (1.0 - ADAM_BETA2) * g * g;
            layer.b[j] -= lr * (m.b[j] / bc1) / ((v.b[j] / bc2).sqrt() + ADAM_EPS);
        }
    }
}

fn encode_mlp(params: &Mlp, out: &mut String) {
    out.push_str("mlp v1\nwidths");
    for w in &params.widths {
        write!(out, " {w}").unwrap();
    }
    out.push('\n');
    for (k, layer) in params.layers.iter().enumerate() {
        writeln!(out, "layer {k} weight {} {}", layer.w.len(), layer.b.len()).unwrap();
        for row in &layer.w {
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        writeln!(out, "layer {k} bias {}", layer.b.len()).unwrap();
        let line: Vec<String> = layer.b.iter().map(|x| x.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

fn take_line<'a>(lines: &[&'a str], cursor: &mut usize) -> Result<&'a str, NnError> {
    let line = lines
        .get(*cursor)
        .copied()
        .ok_or_else(|| NnError::Parse(format!("truncated at line {}", *cursor + 1)))?;
    *cursor += 1;
    Ok(line)
}

fn parse_floats(line: &str, expected: usize) -> Result<Vec<f64>, NnError> {
    let row: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| NnError::Parse(format!("bad value '{t}'"))))
        .collect::<Result<_, _>>()?;
    if row.len() != expected {
        return Err(NnError::Parse(format!(
            "row has {} values, expected {expected}",
            row.len()
        )));
    }
    Ok(row)
}

fn decode_mlp(lines: &[&str], cursor: &mut usize) -> Result<Mlp, NnError> {
    let magic = take_line(lines, cursor)?;
    if magic != "mlp v1" {
        return Err(NnError::Parse(format!("bad magic line '{magic}'")));
    }
    let widths: Vec<usize> = take_line(lines, cursor)?
        .strip_prefix("widths ")
        .ok_or_else(|| NnError::Parse("missing widths prefix".into()))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| NnError::Parse(format!("bad width '{t}'"))))
        .collect::<Result<_, _>>()?;
    if widths.len() < 2 {
        return Err(NnError::Parse("need at least two widths".into()));
    }
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for (k, pair) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let expect = format!("layer {k} weight {fan_in} {fan_out}");
        let header = take_line(lines, cursor)?;
        if header != expect {
            return Err(NnError::Parse(format!("expected '{expect}', found '{header}'")));
        }
        let mut w = Vec::with_capacity(fan_in);
        for _ in 0..fan_in {
            w.push(parse_floats(take_line(lines, cursor)?, fan_out)?);
        }
        let expect = format!("layer {k} bias {fan_out}");
        let header = take_line(lines, cursor)?;
        if header != expect {
            return Err(NnError::Parse(format!("expected '{expect}', found '{header}'")));
        }
        let b = parse_floats(take_line(lines, cursor)?, fan_out)?;
        layers.push(Layer { w, b });
    }
    Ok(Mlp { widths, layers })
}

/// Writes `params` to `path` in the documented text format.
pub fn save_checkpoint(params: &Mlp, path: &Path) -> Result<(), NnError> {
    let mut out = String::new();
    encode_mlp(params, &mut out);
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a checkpoint produced by `save_checkpoint`.
pub fn load_checkpoint(path: &Path) -> Result<Mlp, NnError> {
    let text = std::fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().collect();
    let mut cursor = 0usize;
    let params = decode_mlp(&lines, &mut cursor)?;
    if cursor != lines.len() {
        return Err(NnError::Parse(format!("trailing data at line {}", cursor + 1)));
    }
    Ok(params)
}

/// Which parameter-update rule a trainer applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    Sgd,
}

impl Optimizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
        }
    }
}

impl std::str::FromStr for Optimizer {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adam" => Ok(Optimizer::Adam),
            "sgd" => Ok(Optimizer::Sgd),
            other => Err(NnError::Parse(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Policy and value heads: either two independent networks, or one network
/// whose outputs are `[logits…, value]` (a shared trunk).
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyValueNets {
    Separate { policy: Mlp, value: Mlp },
    Shared(Mlp),
}

/// Gradients for both heads, mirroring the `PolicyValueNets` layout.
#[derive(Debug, Clone)]
pub enum PvGrads {
    Separate { policy: GradientBundle, value: GradientBundle },
    Shared(GradientBundle),
}

impl PvGrads {
    pub fn scale(&mut self, factor: f64) {
        match self {
            PvGrads::Separate { policy, value } => {
                scale_grads(policy, factor);
                scale_grads(value, factor);
            }
            PvGrads::Shared(grads) => scale_grads(grads, factor),
        }
    }

    /// L2 norm over every weight and bias gradient of both heads.
    pub fn global_norm(&self) -> f64 {
        fn sq(bundle: &GradientBundle) -> f64 {
            bundle
                .iter()
                .map(|layer| {
                    layer.w.iter().flatten().map(|g| g * g).sum::<f64>()
                        + layer.b.iter().map(|g| g * g).sum::<f64>()
                })
                .sum()
        }
        match self {
            PvGrads::Separate { policy, value } => (sq(policy) + sq(value)).sqrt(),
            PvGrads::Shared(grads) => sq(grads).sqrt(),
        }
    }
}

/// Optimizer state for both heads.
#[derive(Debug, Clone)]
pub enum PvAdam {
    Separate { policy: AdamState, value: AdamState },
    Shared(AdamState),
}

/// One differentiable evaluation of both heads on a single observation;
/// feed back to `PolicyValueNets::backward` with the output gradients.
#[derive(Debug, Clone)]
pub struct PvEvaluation {
    pub probs: Vec<f64>,
    pub value: f64,
    caches: PvCaches,
}

#[derive(Debug, Clone)]
enum PvCaches {
    Separate { policy: ForwardCache, value: ForwardCache },
    Shared(ForwardCache),
}

/// Down-scaling applied to the logit head's final layer at construction.
/// Near-zero initial logits make the starting policy near-uniform at every
/// state, so early exploration is unbiased and the first updates adjust the
/// head before reshaping the trunk — standard on-policy initialization.
pub const POLICY_HEAD_GAIN: f64 = 0.01;

/// Scales weights and biases of the final layer's output columns in `cols`.
fn scale_output_columns(net: &mut Mlp, cols: std::ops::Range<usize>, factor: f64) {
    let layer = net.layers.last_mut().expect("at least one layer");
    for row in &mut layer.w {
        for c in cols.clone() {
            row[c] *= factor;
        }
    }
    for c in cols {
        layer.b[c] *= factor;
    }
}

impl PolicyValueNets {
    /// Builds both heads with tanh hidden layers of the given widths. The
    /// separate heads draw from distinct seed streams so they never start
    /// identical. Logit output columns are down-scaled by
    /// [`POLICY_HEAD_GAIN`]; the value output keeps full fan-in scale.
    pub fn new(
        obs_len: usize,
        num_actions: usize,
        hidden: &[usize],
        shared_trunk: bool,
        seed: u64,
    ) -> Self {
        assert!(num_actions >= 2, "need at least two actions");
        let widths = |out: usize| -> Vec<usize> {
            let mut w = Vec::with_capacity(hidden.len() + 2);
            w.push(obs_len);
            w.extend_from_slice(hidden);
            w.push(out);
            w
        };
        if shared_trunk {
            let mut net = Mlp::new(&widths(num_actions + 1), seed);
            scale_output_columns(&mut net, 0..num_actions, POLICY_HEAD_GAIN);
            PolicyValueNets::Shared(net)
        } else {
            let mut policy = Mlp::new(&widths(num_actions), crate::util::mix_seed(seed, 0));
            scale_output_columns(&mut policy, 0..num_actions, POLICY_HEAD_GAIN);
            PolicyValueNets::Separate {
                policy,
                value: Mlp::new(&widths(1), crate::util::mix_seed(seed, 1)),
            }
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            PolicyValueNets::Separate { policy, .. } => policy.output_width(),
            PolicyValueNets::Shared(net) => net.output_width() - 1,
        }
    }

    /// Action distribution only (no gradient bookkeeping).
    pub fn policy_probs(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        match self {
            PolicyValueNets::Separate { policy, .. } => forward_policy(policy, obs),
            PolicyValueNets::Shared(net) => {
                let out = net.forward(obs)?;
                Ok(softmax(&out[..out.len() - 1]))
            }
        }
    }

    /// State-value estimate only (no gradient bookkeeping).
    pub fn value(&self, obs: &[f64]) -> Result<f64, NnError> {
        match self {
            PolicyValueNets::Separate { value, .. } => forward_value(value, obs),
            PolicyValueNets::Shared(net) => {
                Ok(*net.forward(obs)?.last().expect("non-empty output"))
            }
        }
    }

    /// Forward pass of both heads with cached activations for `backward`.
    pub fn evaluate(&self, obs: &[f64]) -> Result<PvEvaluation, NnError> {
        match self {
            PolicyValueNets::Separate { policy, value } => {
                let cache_p = policy.forward_cached(obs)?;
                let cache_v = value.forward_cached(obs)?;
                Ok(PvEvaluation {
                    probs: softmax(cache_p.output()),
                    value: cache_v.output()[0],
                    caches: PvCaches::Separate { policy: cache_p, value: cache_v },
                })
            }
            PolicyValueNets::Shared(net) => {
                let cache = net.forward_cached(obs)?;
                let out = cache.output();
                Ok(PvEvaluation {
                    probs: softmax(&out[..out.len() - 1]),
                    value: *out.last().unwrap(),
                    caches: PvCaches::Shared(cache),
                })
            }
        }
    }

    pub fn zero_grads(&self) -> PvGrads {
        match self {
            PolicyValueNets::Separate { policy, value } => PvGrads::Separate {
                policy: policy.zero_grads(),
                value: value.zero_grads(),
            },
            PolicyValueNets::Shared(net) => PvGrads::Shared(net.zero_grads()),
        }
    }

    /// Accumulates one sample's gradients. `d_logits` is ∂loss/∂logits and
    /// `d_value` is ∂loss/∂value — any loss weighting (e.g. a value-loss
    /// coefficient) must already be folded in by the caller.
    pub fn backward(
        &self,
        obs: &[f64],
        eval: &PvEvaluation,
        d_logits: &[f64],
        d_value: f64,
        grads: &mut PvGrads,
    ) {
        match (self, &eval.caches, grads) {
            (
                PolicyValueNets::Separate { policy, value },
                PvCaches::Separate { policy: cache_p, value: cache_v },
                PvGrads::Separate { policy: gp, value: gv },
            ) => {
                policy.backward(obs, cache_p, d_logits, gp);
                value.backward(obs, cache_v, &[d_value], gv);
            }
            (PolicyValueNets::Shared(net), PvCaches::Shared(cache), PvGrads::Shared(g)) => {
                let mut upstream = Vec::with_capacity(d_logits.len() + 1);
                upstream.extend_from_slice(d_logits);
                upstream.push(d_value);
                net.backward(obs, cache, &upstream, g);
            }
            _ => panic!("mismatched net/cache/grad layouts"),
        }
    }

    pub fn adam_state(&self) -> PvAdam {
        match self {
            PolicyValueNets::Separate { policy, value } => PvAdam::Separate {
                policy: AdamState::new(policy),
                value: AdamState::new(value),
            },
            PolicyValueNets::Shared(net) => PvAdam::Shared(AdamState::new(net)),
        }
    }

    pub fn adam_step(&mut self, grads: &PvGrads, lr: f64, state: &mut PvAdam) {
        match (self, grads, state) {
            (
                PolicyValueNets::Separate { policy, value },
                PvGrads::Separate { policy: gp, value: gv },
                PvAdam::Separate { policy: sp, value: sv },
            ) => {
                adam_step(policy, gp, lr, sp);
                adam_step(value, gv, lr, sv);
            }
            (PolicyValueNets::Shared(net), PvGrads::Shared(g), PvAdam::Shared(s)) => {
                adam_step(net, g, lr, s);
            }
            _ => panic!("mismatched net/grad/state layouts"),
        }
    }

    pub fn sgd_step(&mut self, grads: &PvGrads, lr: f64) {
        match (self, grads) {
            (
                PolicyValueNets::Separate { policy, value },
                PvGrads::Separate { policy: gp, value: gv },
            ) => {
                sgd_step(policy, gp, lr);
                sgd_step(value, gv, lr);
            }
            (PolicyValueNets::Shared(net), PvGrads::Shared(g)) => sgd_step(net, g, lr),
            _ => panic!("mismatched net/grad layouts"),
        }
    }

    /// Writes both heads to one file: a `pvnets <layout>` line followed by
    /// the embedded network blocks.
    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let mut out = String::new();
        match self {
            PolicyValueNets::Separate { policy, value } => {
                out.push_str("pvnets separate\n");
                encode_mlp(policy, &mut out);
                encode_mlp(value, &mut out);
            }
            PolicyValueNets::Shared(net) => {
                out.push_str("pvnets shared\n");
                encode_mlp(net, &mut out);
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads a file produced by `save`.
    pub fn load(path: &Path) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path)?;
        let lines: Vec<&str> = text.lines().collect();
        let mut cursor = 0usize;
        let layout = take_line(&lines, &mut cursor)?;
        let nets = match layout {
            "pvnets separate" => PolicyValueNets::Separate {
                policy: decode_mlp(&lines, &mut cursor)?,
                value: decode_mlp(&lines, &mut cursor)?,
            },
            "pvnets shared" => PolicyValueNets::Shared(decode_mlp(&lines, &mut cursor)?),
            other => return Err(NnError::Parse(format!("bad layout line '{other}'"))),
        };
        if cursor != lines.len() {
            return Err(NnError::Parse(format!("trailing data at line {}", cursor + 1)));
        }
        Ok(nets)
    }
}
