//! The full check suite: every claim the reproduction stands on, each run at
//! its stated tolerance. Shared by `lab check` and the acceptance test
//! target so both report the identical verdicts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::envs::{EnvName, EnvSpec, Variant};
use crate::fmdp::{PolicyTable, StateRepresentation};
use crate::nn::Mlp;
use crate::runner::{
    identity_residual_sweep, parse_curve_csv, parse_kl_csv, run_experiment, witness_cell,
    IDENTITY_PAIRS, IDENTITY_TOL,
};
use crate::solver::{
    check_table, confounding_check, epsilon_optimal_policy, exploration_table, markov_check,
    markov_residual, optimal_values, policy_evaluation, visitation_exact,
};
use crate::trainers::{
    exact_tabular_gradient, exact_values_for, sampled_gradient_covariance_trace, Signal,
};
use crate::util::mean_se;

/// One criterion's verdict: pass/fail plus supporting detail lines, or an
/// error if the check could not run at all.
#[derive(Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub detail: Vec<String>,
    pub outcome: Result<bool, String>,
}

/// Eval-variant return the advantage signal must reach (and the floor both
/// signals must clear on the training variant).
pub const GOOD_RETURN: f64 = 0.5;
/// Eval-variant return the raw-return signal must stay at or below.
pub const HABIT_RETURN: f64 = 0.0;
/// Witness-cell KL multiple required of advantage-trained over
/// return-trained policies at the final checkpoint.
pub const KL_RATIO: f64 = 5.0;
/// Fraction of its first-checkpoint KL that the return-trained signal KL
/// must fall under by the middle checkpoint (the "habit locks in" claim).
pub const KL_COLLAPSE: f64 = 0.25;
/// Relative error allowed between analytic and central-difference gradients.
pub const GRAD_TOL: f64 = 1e-4;
/// Exact-gradient agreement tolerance for the baseline-invariance check.
pub const INVARIANCE_TOL: f64 = 1e-10;

const ALL_ENVS: [EnvName; 3] = [EnvName::Key2Door, EnvName::FrozenTMaze, EnvName::Diversion];

/// Runs every acceptance criterion, training (or resuming) shared artifacts
/// under `root`. Returns one result per criterion, in order.
pub fn run_all(root: &Path, workers: usize) -> Vec<(&'static str, Result<bool, String>)> {
    run_all_detailed(root, workers)
        .into_iter()
        .map(|r| (r.name, r.outcome))
        .collect()
}

/// Same as [`run_all`] but keeps the per-criterion detail lines.
pub fn run_all_detailed(root: &Path, workers: usize) -> Vec<CheckResult> {
    let lab = Lab { root, workers };
    vec![
        wrap("exploration_table", check_exploration_table(&lab)),
        wrap("advantage_identity", check_advantage_identity()),
        wrap("markov_collapse", check_markov_collapse()),
        wrap("confounding_witness", check_confounding_witness()),
        wrap("gradient_check", check_gradients()),
        wrap("baseline_invariance", check_baseline_invariance()),
        wrap("generalization_gap", check_generalization_gap(&lab)),
        wrap("normalization_ablation", check_normalization(&lab)),
        wrap("batch_size_ablation", check_batch_size(&lab)),
        wrap("representation_probe", check_representation_probe(&lab)),
        wrap("determinism", check_determinism(&lab)),
    ]
}

type CheckOutcome = Result<(bool, Vec<String>), String>;

fn wrap(name: &'static str, outcome: CheckOutcome) -> CheckResult {
    match outcome {
        Ok((passed, detail)) => CheckResult { name, detail, outcome: Ok(passed) },
        Err(e) => CheckResult { name, detail: Vec::new(), outcome: Err(e) },
    }
}

/// Where experiments run and how many worker threads they may use.
struct Lab<'a> {
    root: &'a Path,
    workers: usize,
}

impl Lab<'_> {
    /// Parses a config and runs (or resumes) its experiment, returning the
    /// resolved config, its artifact directory, and the run's report lines.
    fn ensure(&self, text: &str) -> Result<(ExperimentConfig, PathBuf, Vec<String>), String> {
        let cfg = ExperimentConfig::parse(text).map_err(|e| e.to_string())?;
        let report = run_experiment(&cfg, self.root, self.workers).map_err(|e| e.to_string())?;
        let dir = if cfg.output_dir.is_absolute() {
            cfg.output_dir.clone()
        } else {
            self.root.join(&cfg.output_dir)
        };
        Ok((cfg, dir, report.lines))
    }
}

// ---------------------------------------------------------------------------
// 1. exploration_table

fn check_exploration_table(lab: &Lab) -> CheckOutcome {
    let mut detail = Vec::new();

    // The narrative hyperparameters say 0.99, but the published reference
    // cells only match undiscounted returns; both tables are regenerated and
    // the calibration is recorded alongside the verdict.
    let stated = exploration_table(0.99).map_err(|e| e.to_string())?;
    let stated_pass = check_table(&stated).iter().all(|v| v.pass);
    detail.push(format!(
        "gamma=0.99 (stated): {}",
        if stated_pass { "matches reference cells" } else { "does not match reference cells" }
    ));

    let (_, dir, lines) = lab.ensure("experiment=exploration_table\ngamma=1\n")?;
    let calibrated = exploration_table(1.0).map_err(|e| e.to_string())?;
    let verdicts = check_table(&calibrated);
    let pass = verdicts.iter().all(|v| v.pass);
    detail.push("gamma=1.0 (calibrated): regenerated all 40 cells".to_string());
    detail.extend(lines);
    detail.push(format!("artifact: {}", dir.join("exploration_table.csv").display()));
    Ok((pass && !stated_pass, detail))
}

// ---------------------------------------------------------------------------
// 2. advantage_identity

fn check_advantage_identity() -> CheckOutcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for env in ALL_ENVS {
        let (max_residual, visited) =
            identity_residual_sweep(env, 0.99, IDENTITY_PAIRS, 7).map_err(|e| e.to_string())?;
        let ok = max_residual <= IDENTITY_TOL && visited > 0;
        pass &= ok;
        detail.push(format!(
            "{}: {} random (policy, representation) pairs, {} visited pairs, \
             max residual {:.2e} (tol {:.0e}) — {}",
            env.as_str(),
            IDENTITY_PAIRS,
            visited,
            max_residual,
            IDENTITY_TOL,
            verdict(ok),
        ));
    }
    Ok((pass, detail))
}

// ---------------------------------------------------------------------------
// 3. markov_collapse

/// Every factor subset that passes the Markov check must collapse cleanly:
/// Q^π and V^π constant within each class, and the class-level advantage
/// residual at zero, under a spread of policies.
fn check_markov_collapse() -> CheckOutcome {
    let solver_tol = 1e-9;
    let mut detail = Vec::new();
    let mut pass = true;

    for env in ALL_ENVS {
        let mdp = EnvSpec::new(env, Variant::Train).build();
        let num_factors = mdp.factor_domains.len();
        let (_, greedy) = optimal_values(&mdp, 0.99, 1e-12).map_err(|e| e.to_string())?;
        let policies = policy_set(&mdp, &greedy, env as u64)?;

        let mut markov_phis = 0usize;
        let mut worst_spread = 0.0_f64;
        let mut worst_residual = 0.0_f64;
        for kept in factor_subsets(num_factors) {
            let phi = StateRepresentation::new(kept.clone(), num_factors)
                .map_err(|e| e.to_string())?;
            let (is_markov, _) = markov_check(&mdp, &phi, 1e-9);
            if !is_markov {
                continue;
            }
            markov_phis += 1;
            let partition = phi.partition(&mdp).map_err(|e| e.to_string())?;
            for policy in &policies {
                let values =
                    policy_evaluation(&mdp, policy, 0.99, 1e-12).map_err(|e| e.to_string())?;
                for (_, members) in &partition {
                    let live: Vec<usize> =
                        members.iter().copied().filter(|&m| !mdp.terminal[m]).collect();
                    for a in 0..mdp.num_actions {
                        let qs: Vec<f64> = live.iter().map(|&m| values.q[m][a]).collect();
                        worst_spread = worst_spread.max(spread(&qs));
                    }
                    let vs: Vec<f64> = live.iter().map(|&m| values.v[m]).collect();
                    worst_spread = worst_spread.max(spread(&vs));
                    for &m in &live {
                        for a in 0..mdp.num_actions {
                            if policy.prob(m, a) <= 0.0 {
                                continue;
                            }
                            let r = markov_residual(
                                &values,
                                policy,
                                &phi,
                                &mdp.states[m],
                                a,
                                &mdp,
                            )
                            .map_err(|e| e.to_string())?;
                            worst_residual = worst_residual.max(r);
                        }
                    }
                }
            }
        }
        let ok = worst_spread <= solver_tol && worst_residual <= IDENTITY_TOL && markov_phis > 0;
        pass &= ok;
        detail.push(format!(
            "{}: {} Markov representation(s) × {} policies — class spread {:.2e} \
             (tol {:.0e}), residual {:.2e} (tol {:.0e}) — {}",
            env.as_str(),
            markov_phis,
            policies.len(),
            worst_spread,
            solver_tol,
            worst_residual,
            IDENTITY_TOL,
            verdict(ok),
        ));
    }
    Ok((pass, detail))
}

fn spread(xs: &[f64]) -> f64 {
    match xs.iter().cloned().reduce(f64::min).zip(xs.iter().cloned().reduce(f64::max)) {
        Some((lo, hi)) => hi - lo,
        None => 0.0,
    }
}

fn factor_subsets(num_factors: usize) -> Vec<Vec<usize>> {
    (1..(1usize << num_factors))
        .map(|mask| (0..num_factors).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

fn policy_set(
    mdp: &crate::fmdp::TabularFmdp,
    greedy: &PolicyTable,
    salt: u64,
) -> Result<Vec<PolicyTable>, String> {
    let mut policies = vec![
        PolicyTable::uniform(mdp.num_states(), mdp.num_actions),
        epsilon_optimal_policy(greedy, 0.7).map_err(|e| e.to_string())?,
        epsilon_optimal_policy(greedy, 0.9).map_err(|e| e.to_string())?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE5 + salt);
    for _ in 0..2 {
        let probs: Vec<Vec<f64>> = (0..mdp.num_states())
            .map(|_| {
                let raw: Vec<f64> = (0..mdp.num_actions).map(|_| rng.gen_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / total).collect()
            })
            .collect();
        policies.push(PolicyTable::new(probs).map_err(|e| e.to_string())?);
    }
    Ok(policies)
}

// ---------------------------------------------------------------------------
// 4. confounding_witness

fn check_confounding_witness() -> CheckOutcome {
    let mdp = EnvSpec::new(EnvName::Key2Door, Variant::Train).build();
    let (_, greedy) = optimal_values(&mdp, 0.99, 1e-12).map_err(|e| e.to_string())?;
    let location_only = StateRepresentation::new(vec![0], 2).map_err(|e| e.to_string())?;
    let identity = StateRepresentation::identity(2);
    let tol = 1e-6;
    let mut detail = Vec::new();

    // The location-only representation under the optimal policy must be
    // flagged, with the door cell (location 6, action right) as a witness:
    // on-policy the door always pays +1 there, under the do-intervention it
    // pays +1 or 0 depending on the hidden key bit.
    let (flagged, witnesses) = confounding_check(&mdp, &greedy, &location_only, tol);
    let door_witness = witnesses
        .iter()
        .find(|w| w.class_key == vec![6] && w.action == crate::envs::key2door::RIGHT);
    let mut pass = flagged && door_witness.is_some();
    match door_witness {
        Some(w) => detail.push(format!(
            "location-only Φ, optimal policy: flagged with witness (L=6, right), \
             reward gap {:.3}, transition gap {:.3}",
            w.reward_gap, w.transition_gap
        )),
        None => detail.push(format!(
            "location-only Φ, optimal policy: flagged={flagged}, no (L=6, right) witness \
             among {} witnesses",
            witnesses.len()
        )),
    }

    // The identity representation is never confounded, whatever the policy.
    let uniform = PolicyTable::uniform(mdp.num_states(), mdp.num_actions);
    let eps = epsilon_optimal_policy(&greedy, 0.7).map_err(|e| e.to_string())?;
    for (label, policy) in
        [("optimal", &greedy), ("uniform", &uniform), ("eps-optimal 0.7", &eps)]
    {
        let (id_flagged, _) = confounding_check(&mdp, policy, &identity, tol);
        pass &= !id_flagged;
        detail.push(format!(
            "identity Φ, {label} policy: {}",
            if id_flagged { "flagged (unexpected)" } else { "not flagged" }
        ));
    }
    Ok((pass, detail))
}

// ---------------------------------------------------------------------------
// 5. gradient_check

/// Central finite differences against the analytic backward pass, at every
/// observation width the trainers actually feed the networks.
fn check_gradients() -> CheckOutcome {
    // (input width, output width, hidden) — every logit head and value head
    // the trainers instantiate, including the 30-frame stacked maze input.
    let shapes: [(usize, usize, &[usize]); 5] = [
        (8, 2, &[16, 8]),
        (8, 4, &[16, 8]),
        (8, 1, &[16, 8]),
        (450, 4, &[8, 4]),
        (450, 1, &[8, 4]),
    ];
    let draws = 100;
    let mut detail = Vec::new();
    let mut pass = true;
    for (idx, (input, output, hidden)) in shapes.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6AD + idx as u64);
        let mut worst = 0.0_f64;
        for draw in 0..draws {
            let mut widths = vec![input];
            widths.extend_from_slice(hidden);
            widths.push(output);
            let net = Mlp::new(&widths, 1000 + (idx * draws + draw) as u64);
            let obs: Vec<f64> = (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let upstream: Vec<f64> = (0..output).map(|_| rng.gen_range(-1.0..1.0)).collect();
            worst = worst.max(finite_difference_max_rel_err(&net, &obs, &upstream));
        }
        let ok = worst <= GRAD_TOL;
        pass &= ok;
        detail.push(format!(
            "width {input}→{output} (hidden {hidden:?}): max rel err {:.2e} over {draws} draws \
             (tol {:.0e}) — {}",
            worst,
            GRAD_TOL,
            verdict(ok),
        ));
    }
    Ok((pass, detail))
}

/// Worst relative disagreement between backprop and central differences on
/// the scalar loss Σ upstream·output, over every weight and bias.
fn finite_difference_max_rel_err(net: &Mlp, obs: &[f64], upstream: &[f64]) -> f64 {
    let loss = |net: &Mlp| -> f64 {
        net.forward(obs)
            .expect("matching input width")
            .iter()
            .zip(upstream)
            .map(|(o, u)| o * u)
            .sum()
    };
    let cache = net.forward_cached(obs).expect("matching input width");
    let mut grads = net.zero_grads();
    net.backward(obs, &cache, upstream, &mut grads);

    let h = 1e-5;
    let mut perturbed = net.clone();
    let mut worst = 0.0_f64;
    for l in 0..net.layers.len() {
        for i in 0..net.layers[l].w.len() {
            for j in 0..net.layers[l].w[i].len() {
                perturbed.layers[l].w[i][j] = net.layers[l].w[i][j] + h;
                let up = loss(&perturbed);
                perturbed.layers[l].w[i][j] = net.layers[l].w[i][j] - h;
                let down = loss(&perturbed);
                perturbed.layers[l].w[i][j] = net.layers[l].w[i][j];
                let fd = (up - down) / (2.0 * h);
                let an = grads[l].w[i][j];
                worst = worst.max((an - fd).abs() / (an.abs() + fd.abs()).max(1e-8));
            }
        }
        for j in 0..net.layers[l].b.len() {
            perturbed.layers[l].b[j] = net.layers[l].b[j] + h;
            let up = loss(&perturbed);
            perturbed.layers[l].b[j] = net.layers[l].b[j] - h;
            let down = loss(&perturbed);
            perturbed.layers[l].b[j] = net.layers[l].b[j];
            let fd = (up - down) / (2.0 * h);
            let an = grads[l].b[j];
            worst = worst.max((an - fd).abs() / (an.abs() + fd.abs()).max(1e-8));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// 6. baseline_invariance

/// Subtracting the state-value baseline must leave the exact policy gradient
/// untouched while shrinking the sampled-gradient covariance.
fn check_baseline_invariance() -> CheckOutcome {
    let gamma = 0.99;
    let mut detail = Vec::new();
    let mut pass = true;

    for env in ALL_ENVS {
        let mdp = EnvSpec::new(env, Variant::Train).build();
        let (_, greedy) = optimal_values(&mdp, gamma, 1e-12).map_err(|e| e.to_string())?;
        let policy = epsilon_optimal_policy(&greedy, 0.8).map_err(|e| e.to_string())?;
        let values = exact_values_for(env, Variant::Train, &policy, gamma)
            .map_err(|e| e.to_string())?;
        let weights = visitation_exact(&mdp, &policy).d;

        let advantage: Vec<Vec<f64>> = values
            .q
            .iter()
            .zip(&values.v)
            .map(|(row, v)| row.iter().map(|q| q - v).collect())
            .collect();
        let grad_q = exact_tabular_gradient(&weights, &policy, &values.q);
        let grad_a = exact_tabular_gradient(&weights, &policy, &advantage);
        let max_gap = grad_q
            .iter()
            .flatten()
            .zip(grad_a.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let exact_ok = max_gap <= INVARIANCE_TOL;

        let trace_q = sampled_gradient_covariance_trace(
            env,
            Variant::Train,
            &policy,
            &values,
            Signal::QValue,
            1000,
            32,
            gamma,
            97,
        );
        let trace_a = sampled_gradient_covariance_trace(
            env,
            Variant::Train,
            &policy,
            &values,
            Signal::Advantage,
            1000,
            32,
            gamma,
            97,
        );
        let variance_ok = if env == EnvName::Key2Door {
            trace_a < trace_q
        } else {
            trace_a <= trace_q
        };
        pass &= exact_ok && variance_ok;
        detail.push(format!(
            "{}: exact gradient gap {:.2e} (tol {:.0e}); covariance trace \
             baseline {:.4} vs raw {:.4} — {}",
            env.as_str(),
            max_gap,
            INVARIANCE_TOL,
            trace_a,
            trace_q,
            verdict(exact_ok && variance_ok),
        ));
    }
    Ok((pass, detail))
}

// ---------------------------------------------------------------------------
// 7. generalization_gap

/// Both trainers, all three environments: the advantage signal must
/// generalize to the held-out variant while the raw-return signal must not,
/// and both must solve the training variant. Across-seed means.
fn check_generalization_gap(lab: &Lab) -> CheckOutcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for (algo, env, text) in curve_experiments() {
        let (cfg, dir, _) = lab.ensure(text)?;
        let adv = arm_final(&dir, "advantage", &cfg.seeds)?;
        let q = arm_final(&dir, "q_value", &cfg.seeds)?;
        let (adv_eval, adv_eval_se) = mean_se(&adv.eval);
        let (q_eval, q_eval_se) = mean_se(&q.eval);
        let (adv_train, _) = mean_se(&adv.train);
        let (q_train, _) = mean_se(&q.train);
        let ok = adv_eval >= GOOD_RETURN
            && q_eval <= HABIT_RETURN
            && adv_train >= GOOD_RETURN
            && q_train >= GOOD_RETURN;
        pass &= ok;
        detail.push(format!(
            "{algo} {}: eval advantage {adv_eval:.3}±{adv_eval_se:.3} (need ≥ {GOOD_RETURN}), \
             raw return {q_eval:.3}±{q_eval_se:.3} (need ≤ {HABIT_RETURN}); \
             train {adv_train:.3}/{q_train:.3} (need ≥ {GOOD_RETURN}) — {}",
            env.as_str(),
            verdict(ok),
        ));
    }
    Ok((pass, detail))
}

/// The six training experiments behind the generalization-gap check; the
/// probe experiment doubles as the PPO curves for the first corridor.
fn curve_experiments() -> [(&'static str, EnvName, &'static str); 6] {
    [
        ("ppo", EnvName::Key2Door, "experiment=kl_probe\nenv=key2door\noutput_dir=k2d_ppo\n"),
        (
            "ppo",
            EnvName::FrozenTMaze,
            "experiment=qvsa\nenv=frozen_tmaze\noutput_dir=tmaze_ppo\n",
        ),
        ("ppo", EnvName::Diversion, "experiment=qvsa\nenv=diversion\noutput_dir=div_ppo\n"),
        (
            "reinforce",
            EnvName::Key2Door,
            "experiment=qvsa\nenv=key2door\nalgo=reinforce\noutput_dir=k2d_reinforce\n",
        ),
        (
            "reinforce",
            EnvName::FrozenTMaze,
            "experiment=qvsa\nenv=frozen_tmaze\nalgo=reinforce\noutput_dir=tmaze_reinforce\n",
        ),
        (
            "reinforce",
            EnvName::Diversion,
            "experiment=qvsa\nenv=diversion\nalgo=reinforce\noutput_dir=div_reinforce\n",
        ),
    ]
}

/// Final-evaluation returns of one arm, one entry per seed.
struct ArmFinal {
    step: usize,
    train: Vec<f64>,
    eval: Vec<f64>,
}

fn arm_final(dir: &Path, label: &str, seeds: &[u64]) -> Result<ArmFinal, String> {
    let mut train = Vec::with_capacity(seeds.len());
    let mut eval = Vec::with_capacity(seeds.len());
    let mut step = 0;
    for &seed in seeds {
        let path = dir.join(format!("{label}_seed{seed}.csv"));
        let points = parse_curve_csv(&path).map_err(|e| e.to_string())?;
        let last = points
            .last()
            .ok_or_else(|| format!("{}: no evaluation points", path.display()))?;
        step = last.step;
        train.push(last.train_mean);
        eval.push(last.eval_mean);
    }
    Ok(ArmFinal { step, train, eval })
}

// ---------------------------------------------------------------------------
// 8. normalization_ablation

fn check_normalization(lab: &Lab) -> CheckOutcome {
    let (cfg, dir, _) =
        lab.ensure("experiment=normalization\nenv=key2door\noutput_dir=k2d_norm\n")?;
    let off = arm_final(&dir, "norm_off", &cfg.seeds)?;
    let on = arm_final(&dir, "norm_on", &cfg.seeds)?;
    let (off_eval, off_se) = mean_se(&off.eval);
    let (on_eval, on_se) = mean_se(&on.eval);
    let (off_train, _) = mean_se(&off.train);
    let pass = on_eval <= HABIT_RETURN && off_eval >= GOOD_RETURN && off_train >= GOOD_RETURN;
    let detail = vec![
        format!(
            "normalized advantages: eval {on_eval:.3}±{on_se:.3} (need ≤ {HABIT_RETURN})"
        ),
        format!(
            "unnormalized advantages: eval {off_eval:.3}±{off_se:.3} (need ≥ {GOOD_RETURN}), \
             train {off_train:.3}"
        ),
        format!("final step {}", off.step),
    ];
    Ok((pass, detail))
}

// ---------------------------------------------------------------------------
// 9. batch_size_ablation

fn check_batch_size(lab: &Lab) -> CheckOutcome {
    let (cfg, dir, _) = lab.ensure("experiment=batchsize\nenv=key2door\noutput_dir=k2d_batch\n")?;
    let mut detail = Vec::new();
    let mut evals = BTreeMap::new();
    for &b in &cfg.batch_sizes {
        let arm = arm_final(&dir, &format!("batch{b}"), &cfg.seeds)?;
        let (eval, se) = mean_se(&arm.eval);
        detail.push(format!("batch {b}: final eval {eval:.3}±{se:.3}"));
        evals.insert(b, eval);
    }
    let (lo, hi) = (evals[&32], evals[&512]);
    let pass = hi > lo;
    detail.push(format!(
        "endpoint comparison: batch 512 ({hi:.3}) {} batch 32 ({lo:.3})",
        if pass { ">" } else { "NOT >" }
    ));
    Ok((pass, detail))
}

// ---------------------------------------------------------------------------
// 10. representation_probe

/// Factor-flip KL heatmaps: at the end of training the advantage-trained
/// policy must still respond to the hidden factor at the held-out start cell
/// far more than the return-trained policy; on the short-horizon corridor
/// the return-trained policy's response must collapse early.
fn check_representation_probe(lab: &Lab) -> CheckOutcome {
    let mut detail = Vec::new();

    let (cfg, dir, _) = lab.ensure("experiment=kl_probe\nenv=key2door\noutput_dir=k2d_ppo\n")?;
    let last = *cfg.trainer.checkpoint_steps.last().expect("probe has checkpoints");
    let witness = witness_cell(cfg.env);
    let adv = witness_kl(&dir, "advantage", &cfg.seeds, last, witness)?;
    let q = witness_kl(&dir, "q_value", &cfg.seeds, last, witness)?;
    let (adv_mean, adv_se) = mean_se(&adv);
    let (q_mean, q_se) = mean_se(&q);
    let ratio = adv_mean / q_mean.max(1e-12);
    let ratio_ok = ratio >= KL_RATIO;
    detail.push(format!(
        "key2door witness {witness} at step {last}: advantage KL {adv_mean:.4}±{adv_se:.4}, \
         raw-return KL {q_mean:.4}±{q_se:.4}, ratio {ratio:.1}× (need ≥ {KL_RATIO}×) — {}",
        verdict(ratio_ok),
    ));

    let (cfg, dir, _) = lab.ensure("experiment=kl_probe\nenv=diversion\noutput_dir=div_kl\n")?;
    let checkpoints = cfg.trainer.checkpoint_steps.clone();
    let early = checkpoints[0];
    let mid = checkpoints[1];
    let q_early = overall_kl(&dir, "q_value", &cfg.seeds, early)?;
    let q_mid = overall_kl(&dir, "q_value", &cfg.seeds, mid)?;
    let (qe_mean, _) = mean_se(&q_early);
    let (qm_mean, _) = mean_se(&q_mid);
    let collapse_ok = qm_mean <= KL_COLLAPSE * qe_mean;
    detail.push(format!(
        "diversion row-bit KL (raw return): {qe_mean:.4} at step {early} → {qm_mean:.4} at \
         step {mid} (need ≤ {KL_COLLAPSE}× the early value) — {}",
        verdict(collapse_ok),
    ));

    Ok((ratio_ok && collapse_ok, detail))
}

/// Per-seed mean KL at one probed cell and checkpoint.
fn witness_kl(
    dir: &Path,
    label: &str,
    seeds: &[u64],
    checkpoint: usize,
    cell: &str,
) -> Result<Vec<f64>, String> {
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let path = dir.join(format!("{label}_seed{seed}_kl.csv"));
        let entries = parse_kl_csv(&path).map_err(|e| e.to_string())?;
        let entry = entries
            .iter()
            .find(|e| e.checkpoint == checkpoint && e.cell == cell)
            .ok_or_else(|| {
                format!("{}: no cell '{cell}' at checkpoint {checkpoint}", path.display())
            })?;
        out.push(entry.mean_kl);
    }
    Ok(out)
}

/// Per-seed visit-weighted mean KL over all probed cells at one checkpoint.
fn overall_kl(
    dir: &Path,
    label: &str,
    seeds: &[u64],
    checkpoint: usize,
) -> Result<Vec<f64>, String> {
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let path = dir.join(format!("{label}_seed{seed}_kl.csv"));
        let entries = parse_kl_csv(&path).map_err(|e| e.to_string())?;
        let mut weighted = 0.0;
        let mut visits = 0.0;
        for e in entries.iter().filter(|e| e.checkpoint == checkpoint) {
            weighted += e.mean_kl * e.visits as f64;
            visits += e.visits as f64;
        }
        if visits == 0.0 {
            return Err(format!("{}: checkpoint {checkpoint} has no entries", path.display()));
        }
        out.push(weighted / visits);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// 11. determinism

/// Trains a small probe twice — the second time from scratch after removing
/// the completion markers — and demands byte-identical artifacts.
fn check_determinism(lab: &Lab) -> CheckOutcome {
    let text = "experiment=kl_probe\nenv=key2door\nseeds=0,1\ntotal_steps=3000\n\
                checkpoint_steps=1000,3000\neval_interval=1000\nprobe_episodes=20\n\
                output_dir=determinism\n";
    let (_, dir, _) = lab.ensure(text)?;
    let before = csv_bytes(&dir)?;

    for entry in fs::read_dir(&dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|ext| ext == "done") {
            fs::remove_file(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    lab.ensure(text)?;
    let after = csv_bytes(&dir)?;

    let mut pass = before.len() == after.len() && !before.is_empty();
    let mut detail = vec![format!("{} CSV artifacts compared after a full retrain", before.len())];
    for (name, bytes) in &before {
        match after.get(name) {
            Some(other) if other == bytes => {}
            _ => {
                pass = false;
                detail.push(format!("{name}: differs between runs"));
            }
        }
    }
    if pass {
        detail.push("all artifacts byte-identical".to_string());
    }
    Ok((pass, detail))
}

fn csv_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|ext| ext == "csv") {
            let name = path
                .file_name()
                .expect("read_dir yields named files")
                .to_string_lossy()
                .into_owned();
            let bytes = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            out.insert(name, bytes);
        }
    }
    Ok(out)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}
