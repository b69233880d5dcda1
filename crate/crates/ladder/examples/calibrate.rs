//! Scratch calibration harness (not part of the test suite).
use ladder::agent::{AgentConfig, Trainer};
use ladder::baseline::{BaselineConfig, EcpmPolicy};
use ladder::harness::splitmix64;
use ladder::replay::{fill_from_policy, ExperienceMemory};
use ladder::sim::{oracle_best, oracle_expected_profit, World, WorldConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let batch: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let seeds: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(3);

    for seed in 0..seeds {
        let t0 = Instant::now();
        let mut wcfg = WorldConfig::degenerate(0.10, 0.01, 20.0, 200);
        wcfg.history_max = 3;
        let acfg = AgentConfig {
            batch_size: batch,
            learning_rate: lr,
            imitation_fill: 2000,
            memory_capacity: 10_000,
            i_t: 100,
            snapshot_interval: 50,
            ..AgentConfig::default()
        };
        let mut world = World::new(wcfg.clone(), splitmix64(seed)).unwrap();
        let mut memory = ExperienceMemory::new(acfg.memory_capacity);
        let mut ecpm = EcpmPolicy::new(&BaselineConfig::default(), wcfg.day_length_secs, 200).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0xf111));
        fill_from_policy(&mut memory, &mut world, &mut ecpm, 2000, &mut rng).unwrap();
        let fill_t = t0.elapsed();

        let mut trainer = Trainer::new(acfg, splitmix64(seed ^ 0x1ea4)).unwrap();
        let best = oracle_best(&wcfg).unwrap();
        let mut trng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x57e9));
        let mut probe_world = World::new(wcfg.clone(), splitmix64(seed ^ 0x9a0b)).unwrap();
        let mut pass_at = None;
        let t1 = Instant::now();
        for step in 1..=4000u64 {
            trainer.training_step(&memory, &mut trng).unwrap();
            if step % 50 == 0 {
                let mut ok = true;
                let mut actions = Vec::new();
                for _ in 0..10 {
                    let a = trainer.greedy_probe(&mut probe_world).unwrap();
                    actions.push(a);
                    let profit = oracle_expected_profit(&wcfg, a).unwrap();
                    if (best - profit).abs() > 0.01 { ok = false; }
                }
                if step % 200 == 0 || ok {
                    eprintln!("  seed {seed} step {step}: greedy {:?} ok={ok} ({:.0?}/step)", &actions[..4.min(actions.len())], t1.elapsed() / step as u32);
                }
                if ok { pass_at = Some(step); break; }
            }
        }
        eprintln!("seed {seed}: fill {:?}, pass at {:?}, total {:?}", fill_t, pass_at, t0.elapsed());
    }
}
