//! Post-hoc probes and aggregation: KL-divergence heatmaps that ask whether
//! a trained policy actually reads a causal factor, and multi-seed curve
//! statistics.
//!
//! The flip probe queries the policy twice per visited cell — once with the
//! observation as seen, once with one factor's bit flipped — and records the
//! KL divergence between the two action distributions. A policy that ignores
//! the factor scores zero; one that conditions on it scores high. The KL
//! direction is fixed as KL(original ‖ flipped) and recorded in metadata.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::envs::{EnvName, EnvSpec};
use crate::nn::{NnError, PolicyValueNets};
use crate::rollout::EnvCursor;
use crate::trainers::EvalPoint;
use crate::util::{mean_se, sample_categorical};

/// Fixed KL orientation used by every probe.
pub const KL_DIRECTION: &str = "KL(original||flipped)";

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("distributions differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("q[{0}] = 0 with p[{0}] > 0: KL undefined (softmax outputs are never zero)")]
    ZeroProbability(usize),
    #[error("factor {factor} of {env} is not flippable")]
    NotFlippable { env: &'static str, factor: usize },
    #[error("misaligned checkpoints: {0}")]
    MisalignedCheckpoints(String),
    #[error("need at least two runs to aggregate, got {0}")]
    TooFewRuns(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Σ p·ln(p/q) in nats. Zero p entries contribute nothing; a zero q entry
/// under positive p is an error.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, AnalysisError> {
    if p.len() != q.len() {
        return Err(AnalysisError::LengthMismatch(p.len(), q.len()));
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(AnalysisError::ZeroProbability(i));
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

/// Which factor a probe may flip in each environment: the bit the paper's
/// causal story hinges on.
pub fn flippable_factor(name: EnvName) -> usize {
    match name {
        EnvName::Key2Door => 1,    // key possession
        EnvName::FrozenTMaze => 2, // goal signal
        EnvName::Diversion => 1,   // row
    }
}

/// Observation indices whose bits flip when `factor` is toggled at episode
/// step `t`. For frame-stacked environments the signal lives only in the
/// start frame, which sits `t` slots back in the stack (and rolls off
/// entirely after `obs_stack` steps — no positions, flip is a no-op).
pub fn flip_positions(
    spec: &EnvSpec,
    factor: usize,
    t: usize,
) -> Result<Vec<usize>, AnalysisError> {
    if factor != flippable_factor(spec.name) {
        return Err(AnalysisError::NotFlippable { env: spec.name.as_str(), factor });
    }
    let frame_len = crate::envs::per_step_len(spec.name);
    match spec.name {
        // The key / row bit is the last slot of every stacked frame.
        EnvName::Key2Door | EnvName::Diversion => Ok((0..spec.obs_stack)
            .map(|k| k * frame_len + frame_len - 1)
            .collect()),
        EnvName::FrozenTMaze => {
            if t >= spec.obs_stack {
                return Ok(Vec::new());
            }
            let start_slot = spec.obs_stack - 1 - t;
            Ok(vec![start_slot * frame_len + frame_len - 1])
        }
    }
}

/// Applies `x → 1 − x` at every flip position for step `t`.
pub fn flip_observation(
    spec: &EnvSpec,
    factor: usize,
    t: usize,
    obs: &mut [f64],
) -> Result<(), AnalysisError> {
    for idx in flip_positions(spec, factor, t)? {
        obs[idx] = 1.0 - obs[idx];
    }
    Ok(())
}

/// One heatmap cell: where the agent stood, at which snapshot, and the mean
/// divergence its policy showed there.
#[derive(Debug, Clone, PartialEq)]
pub struct KlEntry {
    pub checkpoint: usize,
    pub cell: String,
    pub mean_kl: f64,
    pub visits: usize,
}

/// Grid of (cell, checkpoint) → mean KL in nats for one training run.
#[derive(Debug, Clone)]
pub struct KlHeatmap {
    pub env: EnvName,
    pub factor: usize,
    pub direction: &'static str,
    pub entries: Vec<KlEntry>,
}

impl KlHeatmap {
    /// Mean KL at a named cell and checkpoint, if the agent ever stood there.
    pub fn cell_mean(&self, checkpoint: usize, cell: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.checkpoint == checkpoint && e.cell == cell)
            .map(|e| e.mean_kl)
    }

    /// Visit-weighted mean KL across every cell of one checkpoint.
    pub fn checkpoint_mean(&self, checkpoint: usize) -> Option<f64> {
        let mut total = 0.0;
        let mut visits = 0usize;
        for e in self.entries.iter().filter(|e| e.checkpoint == checkpoint) {
            total += e.mean_kl * e.visits as f64;
            visits += e.visits;
        }
        (visits > 0).then(|| total / visits as f64)
    }

    /// Long-format rows `seed,checkpoint,cell,mean_kl,visits` (no header).
    pub fn csv_rows(&self, seed: u64) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{seed},{},{},{:.6},{}\n",
                e.checkpoint, e.cell, e.mean_kl, e.visits
            ));
        }
        out
    }
}

fn cell_label(name: EnvName, state: &crate::fmdp::FactoredState) -> String {
    match name {
        EnvName::Key2Door => format!("L={}", state.values[0]),
        EnvName::FrozenTMaze | EnvName::Diversion => {
            format!("col={};row={}", state.values[0], state.values[1])
        }
    }
}

/// Runs `episodes` stochastic episodes and, at every step, measures
/// KL(π(·|obs) ‖ π(·|obs with `factor` flipped)), averaged per grid cell.
pub fn probe_factor_flip(
    nets: &PolicyValueNets,
    spec: &EnvSpec,
    factor: usize,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<KlEntry>, AnalysisError> {
    // Validate flippability up front so the error fires even if no step runs.
    flip_positions(spec, factor, 0)?;
    let mut cursor = EnvCursor::new(*spec, rng);
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for _ in 0..episodes {
        loop {
            let obs = cursor.obs();
            let probs = nets.policy_probs(&obs)?;
            let mut flipped = obs.clone();
            flip_observation(spec, factor, cursor.episode_step(), &mut flipped)?;
            let flipped_probs = nets.policy_probs(&flipped)?;
            let kl = kl_divergence(&probs, &flipped_probs)?;
            let entry = sums.entry(cell_label(spec.name, cursor.state())).or_insert((0.0, 0));
            entry.0 += kl;
            entry.1 += 1;

            let action = sample_categorical(rng, &probs);
            let (_, done) = cursor.step(action, rng);
            if done {
                cursor.reset(rng);
                break;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(cell, (total, visits))| KlEntry {
            checkpoint: 0,
            cell,
            mean_kl: total / visits as f64,
            visits,
        })
        .collect())
}

/// Probes every snapshot of one training run, labeling entries by the
/// snapshot's step count.
pub fn probe_checkpoints(
    checkpoints: &[(usize, PolicyValueNets)],
    spec: &EnvSpec,
    factor: usize,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<KlHeatmap, AnalysisError> {
    let mut entries = Vec::new();
    for (step, nets) in checkpoints {
        let mut cells = probe_factor_flip(nets, spec, factor, episodes, rng)?;
        for cell in &mut cells {
            cell.checkpoint = *step;
        }
        entries.extend(cells);
    }
    Ok(KlHeatmap { env: spec.name, factor, direction: KL_DIRECTION, entries })
}

/// Aggregate of one curve metric at one step across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub train_mean: f64,
    pub train_se: f64,
    pub eval_mean: f64,
    pub eval_se: f64,
}

/// Per-seed curves plus their across-seed mean ± standard error.
#[derive(Debug, Clone)]
pub struct CurveBundle {
    pub seeds: Vec<Vec<EvalPoint>>,
    pub aggregate: Vec<CurvePoint>,
}

impl CurveBundle {
    /// Aggregate curve as CSV.
    pub fn aggregate_csv(&self) -> String {
        let mut out = format!("{}\n", crate::trainers::CURVE_HEADER);
        for p in &self.aggregate {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                p.step, p.train_mean, p.train_se, p.eval_mean, p.eval_se
            ));
        }
        out
    }

    /// Per-seed curves in long format: `seed_index,step,train_return,eval_return`.
    pub fn per_seed_csv(&self) -> String {
        let mut out = String::from("seed_index,step,train_return,eval_return\n");
        for (i, run) in self.seeds.iter().enumerate() {
            for p in run {
                out.push_str(&format!(
                    "{i},{},{:.6},{:.6}\n",
                    p.step, p.train_mean, p.eval_mean
                ));
            }
        }
        out
    }
}

/// Combines aligned per-seed curves: at each step, the across-seed mean and
/// standard error of the per-seed mean returns.
pub fn aggregate_curves(runs: &[Vec<EvalPoint>]) -> Result<CurveBundle, AnalysisError> {
    if runs.len() < 2 {
        return Err(AnalysisError::TooFewRuns(runs.len()));
    }
    let reference: Vec<usize> = runs[0].iter().map(|p| p.step).collect();
    for (i, run) in runs.iter().enumerate().skip(1) {
        let steps: Vec<usize> = run.iter().map(|p| p.step).collect();
        if steps != reference {
            return Err(AnalysisError::MisalignedCheckpoints(format!(
                "run 0 has steps {reference:?} but run {i} has {steps:?}"
            )));
        }
    }
    let aggregate = (0..reference.len())
        .map(|k| {
            let train: Vec<f64> = runs.iter().map(|r| r[k].train_mean).collect();
            let eval: Vec<f64> = runs.iter().map(|r| r[k].eval_mean).collect();
            let (train_mean, train_se) = mean_se(&train);
            let (eval_mean, eval_se) = mean_se(&eval);
            CurvePoint { step: reference[k], train_mean, train_se, eval_mean, eval_se }
        })
        .collect();
    Ok(CurveBundle { seeds: runs.to_vec(), aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    use crate::envs::Variant;
    use crate::nn::{softmax, Mlp};

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let p = vec![0.2, 0.3, 0.5];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_matches_direct_formula() {
        let p = [0.5, 0.5];
        let q = [0.9, 0.1];
        let expected = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        let kl = kl_divergence(&p, &q).unwrap();
        assert!((kl - expected).abs() < 1e-12);
        assert!((kl - 0.5108).abs() < 1e-4);
    }

    #[test]
    fn kl_is_nonnegative_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let logits_p: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let logits_q: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let kl = kl_divergence(&softmax(&logits_p), &softmax(&logits_q)).unwrap();
            assert!(kl >= -1e-15, "negative KL {kl}");
        }
    }

    #[test]
    fn kl_rejects_zero_target_probability() {
        let err = kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, AnalysisError::ZeroProbability(1)));
        // A zero p entry over a zero q entry is fine: the term vanishes.
        assert!(kl_divergence(&[1.0, 0.0], &[1.0, 0.0]).is_ok());
    }

    #[test]
    fn flips_target_the_factor_bit_in_every_frame() {
        let spec = EnvSpec::new(EnvName::Key2Door, Variant::Eval);
        assert_eq!(flip_positions(&spec, 1, 0).unwrap(), vec![7]);
        assert_eq!(flip_positions(&spec, 1, 17).unwrap(), vec![7]);

        let spec = EnvSpec::new(EnvName::Diversion, Variant::Eval);
        assert_eq!(flip_positions(&spec, 1, 3).unwrap(), vec![7]);
    }

    #[test]
    fn tmaze_flip_follows_the_start_frame_through_the_stack() {
        let spec = EnvSpec::new(EnvName::FrozenTMaze, Variant::Eval);
        // Stack holds 30 frames of 15; the start frame begins as the current
        // frame (slot 29) and recedes one slot per step.
        assert_eq!(flip_positions(&spec, 2, 0).unwrap(), vec![29 * 15 + 14]);
        assert_eq!(flip_positions(&spec, 2, 3).unwrap(), vec![26 * 15 + 14]);
        assert_eq!(flip_positions(&spec, 2, 29).unwrap(), vec![14]);
        // Once the start frame rolls off, the flip has nothing to touch.
        assert_eq!(flip_positions(&spec, 2, 30).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn unflippable_factors_error() {
        let spec = EnvSpec::new(EnvName::Key2Door, Variant::Eval);
        assert!(matches!(
            flip_positions(&spec, 0, 0),
            Err(AnalysisError::NotFlippable { factor: 0, .. })
        ));
    }

    #[test]
    fn double_flip_restores_the_observation() {
        let spec = EnvSpec::new(EnvName::FrozenTMaze, Variant::Eval);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cursor = EnvCursor::new(spec, &mut rng);
        let original = cursor.obs();
        let mut twice = original.clone();
        flip_observation(&spec, 2, 0, &mut twice).unwrap();
        assert_ne!(twice, original);
        flip_observation(&spec, 2, 0, &mut twice).unwrap();
        assert_eq!(twice, original);
    }

    #[test]
    fn untrained_net_shows_zero_divergence_everywhere() {
        let nets = PolicyValueNets::Separate {
            policy: Mlp::zeroed(&[8, 2]),
            value: Mlp::zeroed(&[8, 1]),
        };
        let spec = EnvSpec::new(EnvName::Key2Door, Variant::Eval);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let entries = probe_factor_flip(&nets, &spec, 1, 20, &mut rng).unwrap();
        assert!(!entries.is_empty());
        for e in &entries {
            assert_eq!(e.mean_kl, 0.0, "cell {} diverged", e.cell);
        }
    }

    #[test]
    fn probe_buckets_by_grid_cell_and_counts_visits() {
        // A random net on the deterministic eval corridor: the start cell
        // is visited exactly once per episode.
        let nets = PolicyValueNets::new(8, 2, &[8], false, 6);
        let spec = EnvSpec::new(EnvName::Key2Door, Variant::Eval);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let entries = probe_factor_flip(&nets, &spec, 1, 10, &mut rng).unwrap();
        let start = entries.iter().find(|e| e.cell == "L=6").expect("start cell probed");
        assert!(start.visits >= 10);
        assert!(start.mean_kl >= 0.0);
    }

    #[test]
    fn checkpoint_probe_labels_entries_by_step() {
        let nets = PolicyValueNets::new(8, 2, &[8], false, 8);
        let snapshots = vec![(1000usize, nets.clone()), (2000usize, nets)];
        let spec = EnvSpec::new(EnvName::Key2Door, Variant::Eval);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let heatmap = probe_checkpoints(&snapshots, &spec, 1, 5, &mut rng).unwrap();
        assert_eq!(heatmap.direction, KL_DIRECTION);
        assert!(heatmap.entries.iter().any(|e| e.checkpoint == 1000));
        assert!(heatmap.entries.iter().any(|e| e.checkpoint == 2000));
        assert!(heatmap.checkpoint_mean(1000).is_some());
        assert!(heatmap.cell_mean(1000, "L=6").is_some());
    }

    fn fake_run(values: &[(usize, f64, f64)]) -> Vec<EvalPoint> {
        values
            .iter()
            .map(|&(step, train, eval)| EvalPoint {
                step,
                train_mean: train,
                train_se: 0.0,
                eval_mean: eval,
                eval_se: 0.0,
            })
            .collect()
    }

    #[test]
    fn identical_runs_aggregate_with_zero_se() {
        let run = fake_run(&[(100, 0.5, 0.2), (200, 0.8, 0.6)]);
        let bundle = aggregate_curves(&[run.clone(), run]).unwrap();
        for p in &bundle.aggregate {
            assert_eq!(p.train_se, 0.0);
            assert_eq!(p.eval_se, 0.0);
        }
    }

    #[test]
    fn two_point_aggregate_matches_hand_formula() {
        let a = fake_run(&[(100, 0.0, 0.0)]);
        let b = fake_run(&[(100, 1.0, 1.0)]);
        let bundle = aggregate_curves(&[a, b]).unwrap();
        assert_eq!(bundle.aggregate.len(), 1);
        let p = &bundle.aggregate[0];
        assert!((p.train_mean - 0.5).abs() < 1e-15);
        assert!((p.train_se - 0.5).abs() < 1e-15);
        assert!((p.eval_mean - 0.5).abs() < 1e-15);
        assert!((p.eval_se - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ten_runs_match_independent_recomputation() {
        let runs: Vec<Vec<EvalPoint>> = (0..10)
            .map(|i| fake_run(&[(50, i as f64, 2.0 * i as f64)]))
            .collect();
        let bundle = aggregate_curves(&runs).unwrap();
        // Second implementation: explicit mean and ddof-1 SE.
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mean = xs.iter().sum::<f64>() / 10.0;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 9.0;
        let se = var.sqrt() / 10.0_f64.sqrt();
        let p = &bundle.aggregate[0];
        assert!((p.train_mean - mean).abs() < 1e-12);
        assert!((p.train_se - se).abs() < 1e-12);
        assert!((p.eval_mean - 2.0 * mean).abs() < 1e-12);
        assert!((p.eval_se - 2.0 * se).abs() < 1e-12);
    }

    #[test]
    fn misaligned_or_lonely_runs_are_rejected() {
        let a = fake_run(&[(100, 0.0, 0.0), (200, 0.0, 0.0)]);
        let b = fake_run(&[(100, 1.0, 1.0), (300, 1.0, 1.0)]);
        assert!(matches!(
            aggregate_curves(&[a.clone(), b]),
            Err(AnalysisError::MisalignedCheckpoints(_))
        ));
        assert!(matches!(aggregate_curves(&[a]), Err(AnalysisError::TooFewRuns(1))));
    }

    #[test]
    fn csv_shapes_are_stable() {
        let run = fake_run(&[(100, 0.5, 0.2)]);
        let bundle = aggregate_curves(&[run.clone(), run]).unwrap();
        let agg = bundle.aggregate_csv();
        assert!(agg.starts_with(
            "step,train_return_mean,train_return_se,eval_return_mean,eval_return_se\n"
        ));
        assert_eq!(agg.lines().count(), 2);
        let per_seed = bundle.per_seed_csv();
        assert!(per_seed.starts_with("seed_index,step,train_return,eval_return\n"));
        assert_eq!(per_seed.lines().count(), 3);

        let heatmap = KlHeatmap {
            env: EnvName::Key2Door,
            factor: 1,
            direction: KL_DIRECTION,
            entries: vec![KlEntry {
                checkpoint: 1000,
                cell: "L=6".to_string(),
                mean_kl: 0.25,
                visits: 10,
            }],
        };
        assert_eq!(heatmap.csv_rows(3), "3,1000,L=6,0.250000,10\n");
    }
}
