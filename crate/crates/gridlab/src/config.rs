//! Flat `key=value` experiment configs.
//!
//! One key per line; `#` starts a comment, blank lines and `[section]`
//! headers are skipped (sections are purely organizational — keys are
//! globally unique). Unknown keys, duplicates, and malformed values are
//! rejected with a line/field diagnostic so a typo never silently runs the
//! wrong experiment.

use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::envs::EnvName;
use crate::trainers::TrainerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got '{text}'")]
    BadLine { line: usize, text: String },
    #[error("line {line}: key '{key}': {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}' (first set on line {first})")]
    DuplicateKey { line: usize, key: String, first: usize },
    #[error("missing required key 'experiment'")]
    MissingExperiment,
}

/// Which reproduction the runner executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Exact-solver table of Q/A/P columns across exploration rates.
    ExplorationTable,
    /// Q-value vs advantage training curves, both signals × all seeds.
    QVsA,
    /// Advantage normalization on vs off.
    Normalization,
    /// Batch-size sweep for the q_value signal.
    BatchSize,
    /// Train both signals, snapshot, and probe factor-flip KL per cell.
    KlProbe,
    /// Monte-Carlo validation of the advantage identity on random policies.
    IdentityCheck,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::ExplorationTable => "exploration_table",
            Experiment::QVsA => "qvsa",
            Experiment::Normalization => "normalization",
            Experiment::BatchSize => "batchsize",
            Experiment::KlProbe => "kl_probe",
            Experiment::IdentityCheck => "identity_check",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exploration_table" => Ok(Experiment::ExplorationTable),
            "qvsa" => Ok(Experiment::QVsA),
            "normalization" => Ok(Experiment::Normalization),
            "batchsize" => Ok(Experiment::BatchSize),
            "kl_probe" => Ok(Experiment::KlProbe),
            "identity_check" => Ok(Experiment::IdentityCheck),
            other => Err(format!(
                "unknown experiment '{other}' (expected exploration_table, qvsa, normalization, \
                 batchsize, kl_probe, or identity_check)"
            )),
        }
    }
}

/// A fully resolved experiment: what to run, where, and with which knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub env: EnvName,
    /// Seeds run independently and aggregated; distinct by construction.
    pub seeds: Vec<u64>,
    /// Per-run training knobs; `seed` is overwritten per seed at run time.
    pub trainer: TrainerConfig,
    /// Artifact directory, joined under the output root if relative.
    pub output_dir: PathBuf,
    /// Sweep values for the batchsize experiment.
    pub batch_sizes: Vec<usize>,
    /// Episodes per checkpoint when probing factor-flip KL.
    pub probe_episodes: usize,
}

impl ExperimentConfig {
    /// Baseline for an experiment type before any file overrides: fills the
    /// defaults the reproduction relies on (seeds 0..9, probe checkpoints,
    /// the q_value signal for the batch sweep).
    pub fn preset(experiment: Experiment, env: EnvName) -> Self {
        let mut trainer = TrainerConfig::default();
        match experiment {
            Experiment::BatchSize => {
                trainer.signal = crate::trainers::Signal::QValue;
            }
            Experiment::KlProbe => {
                (trainer.checkpoint_steps, trainer.total_steps) = match env {
                    EnvName::Diversion => (vec![3_000, 10_000, 20_000], 20_000),
                    _ => (vec![10_000, 50_000, 100_000], 100_000),
                };
            }
            _ => {}
        }
        ExperimentConfig {
            experiment,
            env,
            seeds: (0..10).collect(),
            trainer,
            output_dir: PathBuf::from(experiment.as_str()),
            batch_sizes: vec![32, 128, 512],
            probe_episodes: 100,
        }
    }

    /// Parses the flat key=value text, layering overrides onto the preset.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(usize, &str, &str)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let trimmed = stripped.trim();
            if trimmed.is_empty() || (trimmed.starts_with('[') && trimmed.ends_with(']')) {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| ConfigError::BadLine { line, text: trimmed.to_string() })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::BadLine { line, text: trimmed.to_string() });
            }
            if let Some(&(first, _, _)) = entries.iter().find(|&&(_, k, _)| k == key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                    first,
                });
            }
            entries.push((line, key, value));
        }

        let lookup = |name: &str| {
            entries.iter().find(|&&(_, k, _)| k == name).map(|&(line, _, v)| (line, v))
        };
        let (exp_line, exp_value) = lookup("experiment").ok_or(ConfigError::MissingExperiment)?;
        let experiment = parse_field(exp_line, "experiment", exp_value)?;
        let env = match lookup("env") {
            Some((line, value)) => parse_field(line, "env", value)?,
            None => EnvName::Key2Door,
        };

        let mut cfg = ExperimentConfig::preset(experiment, env);
        for &(line, key, value) in &entries {
            cfg.apply(line, key, value)?;
        }
        if cfg.seeds.is_empty() {
            let (line, _) = lookup("seeds").expect("empty seeds only via override");
            return Err(bad(line, "seeds", "need at least one seed"));
        }
        Ok(cfg)
    }

    fn apply(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let t = &mut self.trainer;
        match key {
            "experiment" | "env" => {} // resolved before the preset
            "seeds" => self.seeds = parse_seed_list(line, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "batch_sizes" => {
                self.batch_sizes = parse_list(line, key, value)?;
                if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
                    return Err(bad(line, key, "need at least one nonzero batch size"));
                }
            }
            "probe_episodes" => {
                self.probe_episodes = parse_field(line, key, value)?;
                if self.probe_episodes == 0 {
                    return Err(bad(line, key, "must be at least 1"));
                }
            }
            "algo" => t.algo = parse_field(line, key, value)?,
            "signal" => t.signal = parse_field(line, key, value)?,
            "normalize_advantage" => t.normalize_advantage = parse_field(line, key, value)?,
            "rollout_steps" => t.rollout_steps = parse_field(line, key, value)?,
            "batch_size" => t.batch_size = parse_field(line, key, value)?,
            "epochs" => t.epochs = parse_field(line, key, value)?,
            "lr" => t.lr = parse_field(line, key, value)?,
            "gamma" => t.gamma = parse_field(line, key, value)?,
            "gae_lambda" => t.gae_lambda = parse_field(line, key, value)?,
            "entropy_coef" => t.entropy_coef = parse_field(line, key, value)?,
            "clip_range" => t.clip_range = parse_field(line, key, value)?,
            "value_coef" => t.value_coef = parse_field(line, key, value)?,
            "total_steps" => t.total_steps = parse_field(line, key, value)?,
            "eval_interval" => t.eval_interval = parse_field(line, key, value)?,
            "optimizer" => t.optimizer = parse_field(line, key, value)?,
            "eval_greedy" => t.eval_greedy = parse_field(line, key, value)?,
            "bootstrap" => t.bootstrap = parse_field(line, key, value)?,
            "shared_trunk" => t.shared_trunk = parse_field(line, key, value)?,
            "eval_episodes" => t.eval_episodes = parse_field(line, key, value)?,
            "max_grad_norm" => t.max_grad_norm = parse_field(line, key, value)?,
            "checkpoint_steps" => t.checkpoint_steps = parse_list(line, key, value)?,
            "seed" => {
                return Err(bad(line, key, "runs are seeded from the 'seeds' list"));
            }
            _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
        }
        Ok(())
    }

    /// Resolved config as the same key=value text, for artifact headers.
    /// The per-run `seed` line is replaced by the seeds list.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("experiment={}\n", self.experiment.as_str()));
        out.push_str(&format!("env={}\n", self.env.as_str()));
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!("seeds={}\n", seeds.join(",")));
        out.push_str(&format!("output_dir={}\n", self.output_dir.display()));
        let batches: Vec<String> = self.batch_sizes.iter().map(|b| b.to_string()).collect();
        out.push_str(&format!("batch_sizes={}\n", batches.join(",")));
        out.push_str(&format!("probe_episodes={}\n", self.probe_episodes));
        for line in self.trainer.to_kv().lines() {
            if !line.starts_with("seed=") {
                out.push_str(line);
                out.push('\n');
            }
        }
        out
    }
}

fn bad(line: usize, key: &str, msg: &str) -> ConfigError {
    ConfigError::BadValue { line, key: key.to_string(), msg: msg.to_string() }
}

fn parse_field<T>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| bad(line, key, &e.to_string()))
}

fn parse_list<T>(line: usize, key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|part| parse_field(line, key, part.trim())).collect()
}

fn parse_seed_list(line: usize, value: &str) -> Result<Vec<u64>, ConfigError> {
    let seeds: Vec<u64> = parse_list(line, "seeds", value)?;
    for (i, s) in seeds.iter().enumerate() {
        if seeds[..i].contains(s) {
            return Err(bad(line, "seeds", &format!("seed {s} listed twice")));
        }
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::Bootstrap;
    use crate::trainers::{Algo, Signal};

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::parse("experiment=qvsa\n").unwrap();
        assert_eq!(cfg.experiment, Experiment::QVsA);
        assert_eq!(cfg.env, EnvName::Key2Door);
        assert_eq!(cfg.seeds, (0..10).collect::<Vec<u64>>());
        assert_eq!(cfg.output_dir, PathBuf::from("qvsa"));
        assert_eq!(cfg.trainer, TrainerConfig::default());
        assert_eq!(cfg.batch_sizes, vec![32, 128, 512]);
        assert_eq!(cfg.probe_episodes, 100);
    }

    #[test]
    fn comments_sections_and_spacing_are_tolerated() {
        let text = "\n# a comment\n[run]\n  experiment = qvsa  # trailing\n\n  env = diversion\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.experiment, Experiment::QVsA);
        assert_eq!(cfg.env, EnvName::Diversion);
    }

    #[test]
    fn overrides_reach_the_trainer() {
        let text = "experiment=qvsa\nenv=frozen_tmaze\nalgo=reinforce\nsignal=q_value\n\
                    lr=0.01\ntotal_steps=5000\nseeds=3,4\nnormalize_advantage=true\n\
                    bootstrap=zero\ncheckpoint_steps=100,200\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.env, EnvName::FrozenTMaze);
        assert_eq!(cfg.trainer.algo, Algo::Reinforce);
        assert_eq!(cfg.trainer.signal, Signal::QValue);
        assert_eq!(cfg.trainer.lr, 0.01);
        assert_eq!(cfg.trainer.total_steps, 5000);
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert!(cfg.trainer.normalize_advantage);
        assert_eq!(cfg.trainer.bootstrap, Bootstrap::Zero);
        assert_eq!(cfg.trainer.checkpoint_steps, vec![100, 200]);
    }

    #[test]
    fn kl_probe_presets_follow_the_environment() {
        let cfg = ExperimentConfig::parse("experiment=kl_probe\n").unwrap();
        assert_eq!(cfg.trainer.checkpoint_steps, vec![10_000, 50_000, 100_000]);
        assert_eq!(cfg.trainer.total_steps, 100_000);

        let cfg = ExperimentConfig::parse("experiment=kl_probe\nenv=diversion\n").unwrap();
        assert_eq!(cfg.trainer.checkpoint_steps, vec![3_000, 10_000, 20_000]);
        assert_eq!(cfg.trainer.total_steps, 20_000);

        // Env resolves before presets even when listed after the experiment,
        // and explicit overrides still win.
        let text = "experiment=kl_probe\ncheckpoint_steps=7\nenv=diversion\ntotal_steps=9\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.trainer.checkpoint_steps, vec![7]);
        assert_eq!(cfg.trainer.total_steps, 9);
    }

    #[test]
    fn batchsize_preset_uses_the_q_signal() {
        let cfg = ExperimentConfig::parse("experiment=batchsize\n").unwrap();
        assert_eq!(cfg.trainer.signal, Signal::QValue);
        assert_eq!(cfg.batch_sizes, vec![32, 128, 512]);
        let cfg =
            ExperimentConfig::parse("experiment=batchsize\nbatch_sizes=8,16\n").unwrap();
        assert_eq!(cfg.batch_sizes, vec![8, 16]);
    }

    #[test]
    fn diagnostics_carry_line_and_key() {
        let err = ExperimentConfig::parse("experiment=qvsa\nwat\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadLine { line: 2, .. }), "{err}");

        let err = ExperimentConfig::parse("experiment=qvsa\nlr=fast\n").unwrap_err();
        match err {
            ConfigError::BadValue { line, ref key, .. } => {
                assert_eq!((line, key.as_str()), (2, "lr"));
            }
            other => panic!("unexpected error {other}"),
        }

        let err = ExperimentConfig::parse("experiment=qvsa\nlearning_rate=0.1\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 2, .. }), "{err}");

        let err = ExperimentConfig::parse("experiment=qvsa\nlr=0.1\nlr=0.2\n").unwrap_err();
        assert!(
            matches!(err, ConfigError::DuplicateKey { line: 3, first: 2, .. }),
            "{err}"
        );

        let err = ExperimentConfig::parse("env=key2door\n").unwrap_err();
        assert!(matches!(err, ConfigError::MissingExperiment), "{err}");

        let err = ExperimentConfig::parse("experiment=qvsa\nseed=5\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 2, .. }), "{err}");

        let err = ExperimentConfig::parse("experiment=qvsa\nseeds=1,1\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 2, .. }), "{err}");

        let err = ExperimentConfig::parse("experiment=qvsa\nseeds=\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 2, .. }), "{err}");
    }

    #[test]
    fn echo_round_trips_through_the_parser() {
        let text = "experiment=kl_probe\nenv=diversion\nseeds=1,2,3\nlr=0.005\n\
                    shared_trunk=true\noutput_dir=out/probe\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let reparsed = ExperimentConfig::parse(&cfg.echo()).unwrap();
        assert_eq!(cfg, reparsed);
        assert!(!cfg.echo().contains("\nseed="));
    }
}
