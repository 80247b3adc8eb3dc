//! Experiment orchestration: expands a config into seeded training jobs,
//! schedules them across a worker pool, and writes every artifact with the
//! resolved config embedded as a header comment.
//!
//! Reruns are byte-identical and resumable: each (arm, seed) job leaves a
//! completion marker next to its CSVs, finished jobs are skipped, and
//! aggregates are always recomputed from the per-seed files on disk — so a
//! fresh run, a resumed run, and a no-op rerun all emit the same bytes.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{
    aggregate_curves, flippable_factor, probe_checkpoints, AnalysisError, KlEntry, KlHeatmap,
    KL_DIRECTION,
};
use crate::config::{Experiment, ExperimentConfig};
use crate::envs::{
    build_diversion, build_frozen_tmaze, build_key2door, EnvName, EnvSpec, Variant,
};
use crate::fmdp::{StateRepresentation, TabularFmdp};
use crate::solver::{
    advantage_under_phi, check_table, epsilon_optimal_policy, optimal_values,
    policy_evaluation, exploration_table, visitation_exact, SolverError,
};
use crate::trainers::{
    train, EvalPoint, Signal, TrainError, TrainerConfig, TrainingRun, CURVE_HEADER,
};
use crate::util::{mean_se, mix_seed};

/// Column header of per-seed KL probe CSVs.
pub const KL_HEADER: &str = "seed,checkpoint,cell,mean_kl,visits";
/// Identity residual the Monte-Carlo decomposition check must stay under.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Random (policy, representation) pairs drawn per environment.
pub const IDENTITY_PAIRS: usize = 100;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {msg}")]
    BadArtifact { path: PathBuf, line: usize, msg: String },
    #[error(
        "{path} was produced by a different config; point output_dir somewhere fresh \
         or delete the old artifacts"
    )]
    ConfigMismatch { path: PathBuf },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// What a finished experiment reports: one human-readable line per summary
/// item, and whether every check embedded in the experiment passed.
#[derive(Debug)]
pub struct RunReport {
    pub lines: Vec<String>,
    pub passed: bool,
}

/// Probe cell whose KL the summaries track: the eval-variant start cell,
/// visited in every probe episode by construction.
pub fn witness_cell(env: EnvName) -> &'static str {
    match env {
        EnvName::Key2Door => "L=6",
        EnvName::FrozenTMaze | EnvName::Diversion => "col=0;row=0",
    }
}

fn build_env(name: EnvName, variant: Variant) -> TabularFmdp {
    match name {
        EnvName::Key2Door => build_key2door(variant),
        EnvName::FrozenTMaze => build_frozen_tmaze(variant),
        EnvName::Diversion => build_diversion(variant),
    }
}

/// Runs one experiment, writing artifacts under `out_root/cfg.output_dir`
/// (or just `cfg.output_dir` when it is absolute). `workers` caps how many
/// training jobs run concurrently.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_root: &Path,
    workers: usize,
) -> Result<RunReport, RunnerError> {
    let dir = if cfg.output_dir.is_absolute() {
        cfg.output_dir.clone()
    } else {
        out_root.join(&cfg.output_dir)
    };
    fs::create_dir_all(&dir).map_err(|source| RunnerError::Io { path: dir.clone(), source })?;
    guard_config(&dir, cfg)?;

    match cfg.experiment {
        Experiment::ExplorationTable => run_exploration_table(cfg, &dir),
        Experiment::IdentityCheck => run_identity_check(cfg, &dir),
        Experiment::QVsA | Experiment::Normalization | Experiment::BatchSize => {
            run_curves(cfg, &dir, workers)
        }
        Experiment::KlProbe => run_kl_probe(cfg, &dir, workers),
    }
}

/// Refuses to mix artifacts from different configs in one directory; writes
/// the resolved config on first contact.
fn guard_config(dir: &Path, cfg: &ExperimentConfig) -> Result<(), RunnerError> {
    let path = dir.join("config.txt");
    let echo = cfg.echo();
    if path.exists() {
        let existing = read_file(&path)?;
        if existing != echo {
            return Err(RunnerError::ConfigMismatch { path });
        }
    } else {
        write_file(&path, &echo)?;
    }
    Ok(())
}

fn header(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    for line in cfg.echo().lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, content: &str) -> Result<(), RunnerError> {
    fs::write(path, content)
        .map_err(|source| RunnerError::Io { path: path.to_path_buf(), source })
}

fn read_file(path: &Path) -> Result<String, RunnerError> {
    fs::read_to_string(path)
        .map_err(|source| RunnerError::Io { path: path.to_path_buf(), source })
}

// ---------------------------------------------------------------------------
// exploration_table

fn run_exploration_table(cfg: &ExperimentConfig, dir: &Path) -> Result<RunReport, RunnerError> {
    let table = exploration_table(cfg.trainer.gamma)?;
    let verdicts = check_table(&table);

    let mut csv = header(cfg);
    csv.push_str(&format!("# gamma={}\n", table.gamma));
    csv.push_str(
        "p_star,q_nokey_left,q_nokey_right,q_key_left,q_key_right,\
         a_nokey_left,a_nokey_right,a_key_left,a_key_right,p_nokey,p_key,\
         max_q_err,max_a_err,max_p_err,verdict\n",
    );
    let mut lines = Vec::new();
    for (row, v) in table.rows.iter().zip(&verdicts) {
        let cells: Vec<String> = row
            .q
            .iter()
            .chain(&row.a)
            .chain(&row.p)
            .map(|x| format!("{x:.6}"))
            .collect();
        csv.push_str(&format!(
            "{:.1},{},{:.6},{:.6},{:.6},{}\n",
            row.p_star,
            cells.join(","),
            v.max_q_err,
            v.max_a_err,
            v.max_p_err,
            if v.pass { "pass" } else { "fail" },
        ));
        lines.push(format!(
            "exploration_table p*={:.1}: max|dq|={:.4} max|da|={:.4} max|dp|={:.4} — {}",
            v.p_star,
            v.max_q_err,
            v.max_a_err,
            v.max_p_err,
            if v.pass { "pass" } else { "FAIL" },
        ));
    }
    write_file(&dir.join("exploration_table.csv"), &csv)?;

    let passed = verdicts.iter().all(|v| v.pass);
    lines.push(format!(
        "exploration_table: {}/{} rows within tolerance (gamma={})",
        verdicts.iter().filter(|v| v.pass).count(),
        verdicts.len(),
        table.gamma,
    ));
    Ok(RunReport { lines, passed })
}

// ---------------------------------------------------------------------------
// identity_check

/// Worst identity residual over the visited (state, action) pairs of randomly
/// drawn (ε-greedy policy, factor-subset representation) pairs.
pub fn identity_residual_sweep(
    name: EnvName,
    gamma: f64,
    pairs: usize,
    seed: u64,
) -> Result<(f64, usize), SolverError> {
    let mdp = build_env(name, Variant::Train);
    let num_factors = mdp.factor_domains.len();
    let (_, greedy) = optimal_values(&mdp, gamma, 1e-12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut max_residual = 0.0_f64;
    let mut visited_pairs = 0usize;
    for _ in 0..pairs {
        let p_star = rng.gen_range(0.5..0.95);
        let mut kept: Vec<usize> = Vec::new();
        while kept.is_empty() {
            kept = (0..num_factors).filter(|_| rng.gen_bool(0.5)).collect();
        }
        let phi = StateRepresentation::new(kept, num_factors)
            .expect("factor indices come from the domain list");
        let policy = epsilon_optimal_policy(&greedy, p_star)?;
        let values = policy_evaluation(&mdp, &policy, gamma, 1e-12)?;
        let dist = visitation_exact(&mdp, &policy);

        for s_idx in 0..mdp.num_states() {
            if dist.d[s_idx] <= 0.0 {
                continue;
            }
            let state = &mdp.states[s_idx];
            for a in 0..mdp.num_actions {
                if policy.prob(s_idx, a) <= 0.0 {
                    continue;
                }
                let d = advantage_under_phi(&values, &dist, &policy, &phi, state, a, &mdp)?;
                max_residual = max_residual.max((d.a_phi - d.recompose()).abs());
                visited_pairs += 1;
            }
        }
    }
    Ok((max_residual, visited_pairs))
}

fn run_identity_check(cfg: &ExperimentConfig, dir: &Path) -> Result<RunReport, RunnerError> {
    let base_seed = cfg.seeds[0];
    let mut csv = header(cfg);
    csv.push_str("env,pairs,visited_pairs,max_residual,tolerance,verdict\n");
    let mut lines = Vec::new();
    let mut passed = true;
    for (k, name) in [EnvName::Key2Door, EnvName::FrozenTMaze, EnvName::Diversion]
        .into_iter()
        .enumerate()
    {
        let (max_residual, visited) = identity_residual_sweep(
            name,
            cfg.trainer.gamma,
            IDENTITY_PAIRS,
            mix_seed(base_seed, k as u64),
        )?;
        let ok = max_residual <= IDENTITY_TOL;
        passed &= ok;
        csv.push_str(&format!(
            "{},{},{},{:e},{:e},{}\n",
            name.as_str(),
            IDENTITY_PAIRS,
            visited,
            max_residual,
            IDENTITY_TOL,
            if ok { "pass" } else { "fail" },
        ));
        lines.push(format!(
            "identity {}: max residual {:.3e} over {} visited pairs from {} draws — {}",
            name.as_str(),
            max_residual,
            visited,
            IDENTITY_PAIRS,
            if ok { "pass" } else { "FAIL" },
        ));
    }
    write_file(&dir.join("identity_check.csv"), &csv)?;
    Ok(RunReport { lines, passed })
}

// ---------------------------------------------------------------------------
// training experiments

/// One independently trained variant of the experiment (a curve on the final
/// plot): its file label plus the trainer overrides that define it.
struct Arm {
    label: String,
    trainer: TrainerConfig,
}

fn arms_for(cfg: &ExperimentConfig) -> Vec<Arm> {
    let base = &cfg.trainer;
    match cfg.experiment {
        Experiment::QVsA | Experiment::KlProbe => [Signal::Advantage, Signal::QValue]
            .into_iter()
            .map(|signal| Arm {
                label: signal.as_str().to_string(),
                trainer: TrainerConfig { signal, ..base.clone() },
            })
            .collect(),
        Experiment::Normalization => [("norm_off", false), ("norm_on", true)]
            .into_iter()
            .map(|(label, normalize_advantage)| Arm {
                label: label.to_string(),
                trainer: TrainerConfig { normalize_advantage, ..base.clone() },
            })
            .collect(),
        // One arm per batch size; the rollout window is the batch, so every
        // update consumes exactly one fresh on-policy batch.
        Experiment::BatchSize => cfg
            .batch_sizes
            .iter()
            .map(|&b| Arm {
                label: format!("batch{b}"),
                trainer: TrainerConfig {
                    batch_size: b,
                    rollout_steps: b,
                    ..base.clone()
                },
            })
            .collect(),
        Experiment::ExplorationTable | Experiment::IdentityCheck => Vec::new(),
    }
}

fn curve_path(dir: &Path, arm: &str, seed: u64) -> PathBuf {
    dir.join(format!("{arm}_seed{seed}.csv"))
}

fn kl_path(dir: &Path, arm: &str, seed: u64) -> PathBuf {
    dir.join(format!("{arm}_seed{seed}_kl.csv"))
}

fn marker_path(dir: &Path, arm: &str, seed: u64) -> PathBuf {
    dir.join(format!("{arm}_seed{seed}.done"))
}

struct JobOutput {
    run: TrainingRun,
    heatmap: Option<KlHeatmap>,
}

/// Trains every (arm, seed) pair that lacks a completion marker, fanning the
/// jobs over `workers` threads, and writes artifacts in deterministic order.
fn run_training_jobs(
    cfg: &ExperimentConfig,
    dir: &Path,
    arms: &[Arm],
    workers: usize,
    probe: bool,
) -> Result<(), RunnerError> {
    struct Job {
        arm_idx: usize,
        seed: u64,
        trainer: TrainerConfig,
    }
    let mut jobs = Vec::new();
    for (arm_idx, arm) in arms.iter().enumerate() {
        for &seed in &cfg.seeds {
            if marker_path(dir, &arm.label, seed).exists() {
                continue;
            }
            let trainer = TrainerConfig { seed, ..arm.trainer.clone() };
            jobs.push(Job { arm_idx, seed, trainer });
        }
    }
    if jobs.is_empty() {
        return Ok(());
    }

    let env = cfg.env;
    let probe_episodes = cfg.probe_episodes;
    let next_job = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<JobOutput, RunnerError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());

    let worker = |_: usize| loop {
        let idx = next_job.fetch_add(1, Ordering::Relaxed);
        if idx >= jobs.len() {
            return;
        }
        let job = &jobs[idx];
        let output = train(env, &job.trainer).map_err(RunnerError::from).and_then(|run| {
            let heatmap = if probe {
                // A dedicated stream per seed keeps the probe independent of
                // the training streams and of other seeds.
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(job.seed, 4));
                let spec = EnvSpec::new(env, Variant::Eval);
                Some(probe_checkpoints(
                    &run.checkpoints,
                    &spec,
                    flippable_factor(env),
                    probe_episodes,
                    &mut rng,
                )?)
            } else {
                None
            };
            Ok(JobOutput { run, heatmap })
        });
        results.lock().expect("no poisoned lock: workers do not panic")[idx] = Some(output);
    };

    let threads = workers.clamp(1, jobs.len());
    std::thread::scope(|scope| {
        for t in 0..threads {
            scope.spawn(move || worker(t));
        }
    });

    let outputs = results.into_inner().expect("workers finished");
    for (job, output) in jobs.iter().zip(outputs) {
        let output = output.expect("every job index was claimed")?;
        let arm = &arms[job.arm_idx].label;
        let mut csv = header(cfg);
        csv.push_str(&format!("# seed={}\n", job.seed));
        csv.push_str(&output.run.to_csv());
        write_file(&curve_path(dir, arm, job.seed), &csv)?;
        if let Some(heatmap) = &output.heatmap {
            let mut csv = header(cfg);
            csv.push_str(&format!(
                "# seed={} factor={} direction={}\n",
                job.seed, heatmap.factor, heatmap.direction
            ));
            csv.push_str(KL_HEADER);
            csv.push('\n');
            csv.push_str(&heatmap.csv_rows(job.seed));
            write_file(&kl_path(dir, arm, job.seed), &csv)?;
        }
        write_file(&marker_path(dir, arm, job.seed), "done\n")?;
    }
    Ok(())
}

fn data_lines(path: &Path) -> Result<Vec<(usize, String)>, RunnerError> {
    Ok(read_file(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

fn bad(path: &Path, line: usize, msg: impl Into<String>) -> RunnerError {
    RunnerError::BadArtifact { path: path.to_path_buf(), line, msg: msg.into() }
}

fn parse_cell<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    field: &str,
    text: &str,
) -> Result<T, RunnerError> {
    text.parse().map_err(|_| bad(path, line, format!("bad {field}: '{text}'")))
}

/// Reads one per-seed curve CSV back as evaluation points.
pub fn parse_curve_csv(path: &Path) -> Result<Vec<EvalPoint>, RunnerError> {
    let lines = data_lines(path)?;
    let Some(((hline, htext), rows)) = lines.split_first() else {
        return Err(bad(path, 1, "empty artifact"));
    };
    if htext != CURVE_HEADER {
        return Err(bad(path, *hline, format!("expected curve header, got '{htext}'")));
    }
    rows.iter()
        .map(|(lno, row)| {
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != 5 {
                return Err(bad(path, *lno, format!("expected 5 columns, got {}", fields.len())));
            }
            Ok(EvalPoint {
                step: parse_cell(path, *lno, "step", fields[0])?,
                train_mean: parse_cell(path, *lno, "train_return_mean", fields[1])?,
                train_se: parse_cell(path, *lno, "train_return_se", fields[2])?,
                eval_mean: parse_cell(path, *lno, "eval_return_mean", fields[3])?,
                eval_se: parse_cell(path, *lno, "eval_return_se", fields[4])?,
            })
        })
        .collect()
}

/// Reads one per-seed KL probe CSV back as heatmap entries.
pub fn parse_kl_csv(path: &Path) -> Result<Vec<KlEntry>, RunnerError> {
    let lines = data_lines(path)?;
    let Some(((hline, htext), rows)) = lines.split_first() else {
        return Err(bad(path, 1, "empty artifact"));
    };
    if htext != KL_HEADER {
        return Err(bad(path, *hline, format!("expected KL header, got '{htext}'")));
    }
    rows.iter()
        .map(|(lno, row)| {
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != 5 {
                return Err(bad(path, *lno, format!("expected 5 columns, got {}", fields.len())));
            }
            Ok(KlEntry {
                checkpoint: parse_cell(path, *lno, "checkpoint", fields[1])?,
                cell: fields[2].to_string(),
                mean_kl: parse_cell(path, *lno, "mean_kl", fields[3])?,
                visits: parse_cell(path, *lno, "visits", fields[4])?,
            })
        })
        .collect()
}

/// Final-point summary of one arm: across-seed mean ± SE at the last
/// evaluation step.
struct ArmSummary {
    label: String,
    step: usize,
    train_mean: f64,
    train_se: f64,
    eval_mean: f64,
    eval_se: f64,
}

fn summarize_arm(
    cfg: &ExperimentConfig,
    dir: &Path,
    label: &str,
) -> Result<(Vec<Vec<EvalPoint>>, ArmSummary), RunnerError> {
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let path = curve_path(dir, label, seed);
        let points = parse_curve_csv(&path)?;
        if points.is_empty() {
            return Err(bad(&path, 1, "curve has no evaluation points"));
        }
        runs.push(points);
    }
    let finals: Vec<&EvalPoint> = runs.iter().map(|r| r.last().expect("checked")).collect();
    let step = finals[0].step;
    let (train_mean, train_se) = mean_se(&finals.iter().map(|p| p.train_mean).collect::<Vec<_>>());
    let (eval_mean, eval_se) = mean_se(&finals.iter().map(|p| p.eval_mean).collect::<Vec<_>>());
    Ok((
        runs,
        ArmSummary { label: label.to_string(), step, train_mean, train_se, eval_mean, eval_se },
    ))
}

fn write_curve_artifacts(
    cfg: &ExperimentConfig,
    dir: &Path,
    arms: &[Arm],
) -> Result<(Vec<String>, Vec<ArmSummary>), RunnerError> {
    let mut lines = Vec::new();
    let mut summaries = Vec::new();
    for arm in arms {
        let (runs, summary) = summarize_arm(cfg, dir, &arm.label)?;
        if runs.len() >= 2 {
            let bundle = aggregate_curves(&runs)?;
            let mut csv = header(cfg);
            csv.push_str(&bundle.aggregate_csv());
            write_file(&dir.join(format!("{}_curve.csv", arm.label)), &csv)?;
        }
        lines.push(format!(
            "{} {} {}: final step {} train {:.3}±{:.3} eval {:.3}±{:.3} ({} seeds)",
            cfg.experiment.as_str(),
            cfg.env.as_str(),
            summary.label,
            summary.step,
            summary.train_mean,
            summary.train_se,
            summary.eval_mean,
            summary.eval_se,
            cfg.seeds.len(),
        ));
        summaries.push(summary);
    }

    let mut csv = header(cfg);
    csv.push_str("arm,step,train_return_mean,train_return_se,eval_return_mean,eval_return_se\n");
    for s in &summaries {
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            s.label, s.step, s.train_mean, s.train_se, s.eval_mean, s.eval_se
        ));
    }
    write_file(&dir.join("summary.csv"), &csv)?;
    Ok((lines, summaries))
}

fn run_curves(
    cfg: &ExperimentConfig,
    dir: &Path,
    workers: usize,
) -> Result<RunReport, RunnerError> {
    let arms = arms_for(cfg);
    run_training_jobs(cfg, dir, &arms, workers, false)?;
    let (lines, _) = write_curve_artifacts(cfg, dir, &arms)?;
    Ok(RunReport { lines, passed: true })
}

// ---------------------------------------------------------------------------
// kl_probe

/// Across-seed KL statistics of one (arm, checkpoint): at the witness cell
/// and visit-weighted over all probed cells.
pub struct KlCheckpointSummary {
    pub signal: String,
    pub checkpoint: usize,
    pub witness_mean: f64,
    pub witness_se: f64,
    pub overall_mean: f64,
    pub overall_se: f64,
}

fn summarize_kl(
    cfg: &ExperimentConfig,
    dir: &Path,
    label: &str,
) -> Result<Vec<KlCheckpointSummary>, RunnerError> {
    let witness = witness_cell(cfg.env);
    // heatmap per seed, in seed order
    let mut per_seed: Vec<KlHeatmap> = Vec::new();
    for &seed in &cfg.seeds {
        let path = kl_path(dir, label, seed);
        let entries = parse_kl_csv(&path)?;
        per_seed.push(KlHeatmap {
            env: cfg.env,
            factor: flippable_factor(cfg.env),
            direction: KL_DIRECTION,
            entries,
        });
    }
    let mut summaries = Vec::new();
    for &checkpoint in &cfg.trainer.checkpoint_steps {
        let mut witness_vals = Vec::new();
        let mut overall_vals = Vec::new();
        for (heatmap, &seed) in per_seed.iter().zip(&cfg.seeds) {
            let path = kl_path(dir, label, seed);
            let w = heatmap.cell_mean(checkpoint, witness).ok_or_else(|| {
                bad(&path, 1, format!("checkpoint {checkpoint} has no '{witness}' cell"))
            })?;
            let o = heatmap.checkpoint_mean(checkpoint).ok_or_else(|| {
                bad(&path, 1, format!("checkpoint {checkpoint} has no entries"))
            })?;
            witness_vals.push(w);
            overall_vals.push(o);
        }
        let (witness_mean, witness_se) = mean_se(&witness_vals);
        let (overall_mean, overall_se) = mean_se(&overall_vals);
        summaries.push(KlCheckpointSummary {
            signal: label.to_string(),
            checkpoint,
            witness_mean,
            witness_se,
            overall_mean,
            overall_se,
        });
    }
    Ok(summaries)
}

fn run_kl_probe(
    cfg: &ExperimentConfig,
    dir: &Path,
    workers: usize,
) -> Result<RunReport, RunnerError> {
    let arms = arms_for(cfg);
    run_training_jobs(cfg, dir, &arms, workers, true)?;
    let (mut lines, _) = write_curve_artifacts(cfg, dir, &arms)?;

    // Combined long-format heatmap across arms and seeds.
    let mut combined = header(cfg);
    combined.push_str("signal,");
    combined.push_str(KL_HEADER);
    combined.push('\n');
    for arm in &arms {
        for &seed in &cfg.seeds {
            for (lno, row) in data_lines(&kl_path(dir, &arm.label, seed))?.iter().skip(1) {
                let _ = lno;
                combined.push_str(&format!("{},{row}\n", arm.label));
            }
        }
    }
    write_file(&dir.join("kl_heatmap.csv"), &combined)?;

    let witness = witness_cell(cfg.env);
    let mut csv = header(cfg);
    csv.push_str(&format!("# witness_cell={witness} direction={KL_DIRECTION}\n"));
    csv.push_str(
        "signal,checkpoint,witness_kl_mean,witness_kl_se,overall_kl_mean,overall_kl_se\n",
    );
    for arm in &arms {
        for s in summarize_kl(cfg, dir, &arm.label)? {
            csv.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}\n",
                s.signal, s.checkpoint, s.witness_mean, s.witness_se, s.overall_mean, s.overall_se
            ));
            lines.push(format!(
                "kl_probe {} {} @{}k: KL[{}]={:.4}±{:.4} overall={:.4}±{:.4}",
                cfg.env.as_str(),
                s.signal,
                s.checkpoint / 1000,
                witness,
                s.witness_mean,
                s.witness_se,
                s.overall_mean,
                s.overall_se,
            ));
        }
    }
    write_file(&dir.join("kl_summary.csv"), &csv)?;
    Ok(RunReport { lines, passed: true })
}
