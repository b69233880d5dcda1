//! Scratch A/B calibration (not part of the test suite).
use ladder::agent::AgentConfig;
use ladder::baseline::{BaselineConfig, CoefSpan};
use ladder::harness::{run_experiment, Arm, ExperimentConfig};
use ladder::sim::{ClickDelayConfig, CpcModel, PublisherConfig, RivalBidConfig, WorldConfig};

fn ab_config(seed: u64) -> ExperimentConfig {
    let pubs = [
        ("wire", 0.4, 0.040f64, -2.3),
        ("portal", 0.3, 0.045, -2.5),
        ("feed", 0.2, 0.050, -2.7),
        ("forum", 0.1, 0.055, -2.9),
    ];
    let world = WorldConfig {
        publishers: pubs
            .iter()
            .map(|&(id, w, rival_median, bias)| PublisherConfig {
                id: id.to_string(),
                arrival_weight: w,
                rival_bids: RivalBidConfig {
                    mean_log: rival_median.ln(),
                    sigma_log: 0.5,
                    tod_amplitude: 0.0,
                    tod_phase: 0.0,
                },
                base_ctr_bias: bias,
            })
            .collect(),
        user_pool_size: 400,
        catalog_size: 300,
        latent_dim: 8,
        rival_count: 5,
        click_delay: ClickDelayConfig::default(),
        click_window_minutes: 60.0,
        day_length_secs: 86_400,
        auctions_per_day: 8_000,
        history_max: 4,
        history_days: 30,
        history_affinity_candidates: 4,
        cpc: CpcModel::Fixed { cny: 2.0 },
        ctr_override: None,
        conversion_value_rate: 0.1,
        bid_ceiling_fen: 50,
        sku_id_base: 3_133_000,
    };
    ExperimentConfig {
        seed,
        days: 3,
        split_fraction: 0.5,
        split_schedule: None,
        emit_normalized: false,
        world,
        agent: AgentConfig {
            gamma: 0.95,
            epsilon: 0.03,
            bid_ceiling_fen: 50,
            batch_size: 16,
            imitation_fill: 2_500,
            memory_capacity: 20_000,
            snapshot_interval: 50,
            i_t: 200,
            train_every: 12,
            learning_rate: 1e-3,
            ..AgentConfig::default()
        },
        baseline: BaselineConfig {
            smoothing_alpha: 1.0,
            smoothing_beta: 19.0,
            sku_bucket: 100,
            coef_schedule: vec![CoefSpan { start_sec: 0, end_sec: 86_400, coef: 0.5 }],
        },
    }
}

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let mut wins = 0;
    for seed in 0..seeds {
        let t0 = std::time::Instant::now();
        let out = std::env::temp_dir().join(format!("ladder_ab_{seed}"));
        let cfg = ab_config(1000 + seed);
        let art = run_experiment(&cfg, &out, true).unwrap();
        let day = |d: u32, arm: Arm| art.metrics.iter().find(|r| r.day == d && r.arm == arm).unwrap();
        let mut post_l = 0.0;
        let mut post_b = 0.0;
        for d in 0..cfg.days {
            let l = day(d, Arm::Ladder);
            let b = day(d, Arm::Baseline);
            eprintln!(
                "  seed {seed} day {d}: ladder profit {:>10} (won {:>5}, clk {:>4}, q {:.3}) | baseline {:>10} (won {:>5}, clk {:>4})",
                l.profit.to_string(), l.impressions_won, l.clicks, l.mean_q,
                b.profit.to_string(), b.impressions_won, b.clicks
            );
            if d >= 2 {
                post_l += l.profit.to_cny();
                post_b += b.profit.to_cny();
            }
        }
        let win = post_l >= post_b;
        wins += win as u32;
        eprintln!("seed {seed}: post-warmup ladder {post_l:.2} vs baseline {post_b:.2} -> {} ({:?}, {} steps)", if win {"WIN"} else {"LOSS"}, t0.elapsed(), art.training_steps);
    }
    eprintln!("== {wins}/{seeds} seeds won");
}
