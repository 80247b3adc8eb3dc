//! Temporary diagnostic: print eval-variant trajectories of trained nets.

use gridlab::envs::{EnvName, EnvSpec, Variant};
use gridlab::rollout::EnvCursor;
use gridlab::trainers::{train, Signal, TrainerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    for signal in [Signal::Advantage, Signal::QValue] {
        let cfg = TrainerConfig { signal, seed: 0, ..TrainerConfig::default() };
        let t0 = std::time::Instant::now();
        let run = train(EnvName::FrozenTMaze, &cfg).expect("training");
        let last = run.points.last().unwrap();
        println!(
            "\n=== {} seed 0: train {:.3} eval {:.3} ({:.0?}) ===",
            signal.as_str(),
            last.train_mean,
            last.eval_mean,
            t0.elapsed()
        );
        let spec = EnvSpec::new(EnvName::FrozenTMaze, Variant::Eval);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut cursor = EnvCursor::new(spec, &mut rng);
        for ep in 0..8 {
            let mut total = 0.0;
            let mut trace = String::new();
            let s = cursor.state();
            let (mut steps, signal_drawn) = (0, s.values[2]);
            trace.push_str(&format!("({},{})", s.values[0], s.values[1]));
            loop {
                let probs = gridlab::nn::PolicyValueNets::policy_probs(&run.nets, &cursor.obs())
                    .expect("policy eval");
                let action = sample(&probs, &mut rng);
                let (r, done) = cursor.step(action, &mut rng);
                total += r;
                steps += 1;
                let s = cursor.state();
                if steps <= 24 {
                    trace.push_str(&format!(
                        " -{}-> ({},{})",
                        ["U", "D", "L", "R"][action],
                        s.values[0],
                        s.values[1]
                    ));
                }
                if done {
                    cursor.reset(&mut rng);
                    break;
                }
            }
            println!(
                "ep{ep} signal={signal_drawn} steps={steps} return={total:+.2}\n    {trace}"
            );
        }
    }
}

fn sample(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    use rand::Rng;
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    probs.len() - 1
}
