use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ladder::agent::{run_deterministic, Trainer};
use ladder::baseline::EcpmPolicy;
use ladder::encoder::EncodedState;
use ladder::harness::{
    export_embeddings, replay_trace, run_experiment, sample_requests, ExperimentConfig,
};
use ladder::qnet::{forward, forward_sparse, load_checkpoint, NetworkParams};
use ladder::replay::ExperienceMemory;
use ladder::sim::World;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

/// Desk-scale RTB lab: GSP auction simulator, character-CNN Q-learning
/// bidder, ECPM baseline, and A/B experiment harness.
#[derive(Parser)]
#[command(name = "ladder", version, about)]
struct Cli {
    /// Experiment config file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-thread round-robin engine with bit-reproducible output.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the A/B experiment: both arms bid, the agent trains online.
    Run,
    /// Train the agent without an A/B split (imitation then
    /// introspection); always deterministic.
    Train {
        /// Override the config's day count.
        #[arg(long)]
        days: Option<u32>,
    },
    /// Recompute per-day metrics from a trace file.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Export hidden-layer embeddings for sampled requests.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Parse and validate a config file.
    ValidateConfig,
    /// Time the dense and sparse forward paths; emits a two-column CSV.
    Bench {
        #[arg(long, default_value_t = 30)]
        iters: usize,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .context("--config <path> is required for this subcommand")?;
    let mut cfg = ExperimentConfig::from_json_file(path)
        .with_context(|| format!("loading config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn cmd_run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let art = run_experiment(&cfg, &cli.out, cli.deterministic)?;
    println!("metrics: {}", art.metrics_path.display());
    if let Some(n) = &art.normalized_path {
        println!("normalized: {}", n.display());
    }
    println!("trace: {}", art.trace_path.display());
    println!("training log: {} ({} steps)", art.training_log_path.display(), art.training_steps);
    println!("checkpoint: {}", art.checkpoint_path.display());
    for row in &art.metrics {
        println!(
            "day {} {:>8}: auctions {:>7} won {:>7} clicks {:>5} profit {}",
            row.day,
            row.arm.label(),
            row.auctions,
            row.impressions_won,
            row.clicks,
            row.profit
        );
    }
    Ok(())
}

fn cmd_train(cli: &Cli, days: Option<u32>) -> Result<()> {
    let cfg = load_config(cli)?;
    let days = days.unwrap_or(cfg.days);
    std::fs::create_dir_all(&cli.out)?;
    let mut world = World::new(cfg.world.clone(), cfg.seed)?;
    let mut trainer = Trainer::new(cfg.agent.clone(), cfg.seed ^ 0x5eed)?;
    let mut memory = ExperienceMemory::new(cfg.agent.memory_capacity);
    let mut ecpm = EcpmPolicy::new(&cfg.baseline, cfg.world.day_length_secs, cfg.world.bid_ceiling_fen)?;

    let log_path = cli.out.join("training_log.csv");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    writeln!(log, "step,loss,mean_q,epsilon,phase")?;
    let epsilon = cfg.agent.epsilon;
    let report = run_deterministic(
        &mut world,
        &mut trainer,
        &mut memory,
        &mut ecpm,
        days,
        cfg.seed,
        |r, phase| {
            let _ = writeln!(
                log,
                "{},{:.9},{:.6},{:.6},{}",
                r.step,
                r.loss,
                r.mean_q,
                epsilon,
                phase.label()
            );
        },
    )?;
    log.flush()?;

    let episodes_path = cli.out.join("episodes.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&episodes_path)?);
    writeln!(
        w,
        "day,auctions,impressions_won,clicks,profit,revenue,expense,mean_q,training_steps"
    )?;
    for e in &report.episodes {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:.6},{}",
            e.day,
            e.auctions,
            e.impressions_won,
            e.clicks,
            e.profit,
            e.revenue,
            e.expense,
            e.mean_q,
            e.training_steps
        )?;
    }
    w.flush()?;

    let ckpt = cli.out.join("agent.ckpt");
    trainer.save_checkpoint(&ckpt)?;
    println!(
        "trained {} steps over {} days ({} transitions stored, final phase {})",
        report.total_steps,
        days,
        report.transitions_stored,
        report.final_phase.label()
    );
    println!("episodes: {}", episodes_path.display());
    println!("training log: {}", log_path.display());
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}

fn cmd_replay(cli: &Cli, trace: &PathBuf) -> Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    let out = cli.out.join("replayed_metrics.csv");
    let rows = replay_trace(trace, &out)?;
    println!("replayed {} metric rows to {}", rows.len(), out.display());
    Ok(())
}

fn cmd_export(cli: &Cli, checkpoint: &PathBuf, count: usize) -> Result<()> {
    let cfg = load_config(cli)?;
    let params = load_checkpoint(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    if params.spec().action_count != cfg.world.action_count() {
        bail!(
            "checkpoint has {} actions but the world's bid grid has {}",
            params.spec().action_count,
            cfg.world.action_count()
        );
    }
    std::fs::create_dir_all(&cli.out)?;
    let mut world = World::new(cfg.world.clone(), cfg.seed)?;
    let requests = sample_requests(&mut world, count)?;
    let path = cli.out.join("embeddings.csv");
    let w = std::io::BufWriter::new(std::fs::File::create(&path)?);
    export_embeddings(&params, &world, &requests, w)?;
    println!("wrote {} embeddings to {}", requests.len(), path.display());
    Ok(())
}

fn cmd_validate(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    println!(
        "config ok: {} publishers, {} days, split {}, {} actions",
        cfg.world.publishers.len(),
        cfg.days,
        cfg.split_fraction,
        cfg.world.action_count()
    );
    Ok(())
}

fn cmd_bench(cli: &Cli, iters: usize) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
    let params = NetworkParams::init_canonical(201, &mut rng)?;
    let alphabet = ladder::encoder::Alphabet::get();
    let text: String = (0..600)
        .map(|_| alphabet.chars()[rng.gen_range(0..alphabet.chars().len())])
        .collect();
    let enc = EncodedState::one_hot(&text);
    let dense = enc.dense();

    forward(&params, &dense)?;
    forward_sparse(&params, enc.sparse_view())?;
    let t0 = Instant::now();
    for _ in 0..iters {
        std::hint::black_box(forward(&params, std::hint::black_box(&dense))?);
    }
    let dense_us = t0.elapsed().as_micros() as f64 / iters as f64;
    let t1 = Instant::now();
    for _ in 0..iters {
        std::hint::black_box(forward_sparse(&params, std::hint::black_box(enc.sparse_view()))?);
    }
    let sparse_us = t1.elapsed().as_micros() as f64 / iters as f64;

    let mut csv = String::new();
    csv.push_str("variant,micros_per_forward\n");
    csv.push_str(&format!("dense,{dense_us:.1}\n"));
    csv.push_str(&format!("sparse,{sparse_us:.1}\n"));
    print!("{csv}");
    std::fs::create_dir_all(&cli.out)?;
    std::fs::write(cli.out.join("bench.csv"), &csv)?;
    eprintln!("speedup: {:.1}x over {iters} iterations", dense_us / sparse_us);
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run => cmd_run(&cli),
        Command::Train { days } => cmd_train(&cli, *days),
        Command::Replay { trace } => cmd_replay(&cli, trace),
        Command::ExportEmbeddings { checkpoint, count } => cmd_export(&cli, checkpoint, *count),
        Command::ValidateConfig => cmd_validate(&cli),
        Command::Bench { iters } => cmd_bench(&cli, *iters),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
