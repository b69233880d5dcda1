//! Deterministic single-owner run loop: serving, observing, and
//! training interleaved on a fixed round-robin schedule.
//!
//! The imitation phase drives the environment with the ECPM policy and
//! stores its transitions; once the configured number of baseline
//! transitions has been stored, the run switches to introspection and
//! the agent's epsilon-greedy policy takes over, feeding its own
//! transitions into the memory. Serving always reads the latest
//! published snapshot, exactly as in the threaded deployment.

use super::{select_action, AgentConfig, AgentError, Phase, PhaseState, StepReport, Trainer};
use crate::baseline::EcpmPolicy;
use crate::encoder::{describe, EncodedState};
use crate::money::Money;
use crate::observer::{PendingAuction, RewardFinalizer};
use crate::policy::{BidContext, BidPolicy};
use crate::replay::{ExperienceMemory, Transition};
use crate::sim::{SimError, World};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Per-day aggregates of the agent's own activity.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeMetrics {
    pub day: u32,
    pub auctions: u64,
    pub impressions_won: u64,
    pub clicks: u64,
    pub profit: Money,
    pub revenue: Money,
    pub expense: Money,
    /// Mean greedy value over agent-served auctions; 0 when none.
    pub mean_q: f64,
    pub training_steps: u64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub episodes: Vec<EpisodeMetrics>,
    pub total_steps: u64,
    pub final_phase: Phase,
    pub transitions_stored: u64,
}

#[derive(Default)]
struct DayAccum {
    auctions: u64,
    impressions_won: u64,
    clicks: u64,
    revenue: Money,
    expense: Money,
    q_sum: f64,
    q_count: u64,
    training_steps: u64,
}

/// Which policy produced a pending auction; decides storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Generator {
    Baseline,
    Agent,
}

/// Run `days` episodes in deterministic mode. `on_step` observes every
/// training step (for logs).
pub fn run_deterministic(
    world: &mut World,
    trainer: &mut Trainer,
    memory: &mut ExperienceMemory,
    ecpm: &mut EcpmPolicy,
    days: u32,
    seed: u64,
    mut on_step: impl FnMut(&StepReport, Phase),
) -> Result<RunReport, AgentError> {
    let cfg: AgentConfig = trainer.config().clone();
    cfg.validate()?;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let slot = trainer.slot();
    let mut phase = PhaseState::new(cfg.imitation_fill);
    let mut finalizer: RewardFinalizer<Generator> =
        RewardFinalizer::new(world.config().click_window_us());
    let mut accum: BTreeMap<u32, DayAccum> = BTreeMap::new();
    let mut stored = 0u64;
    let mut auctions_since_step = 0u64;
    let start_day = world.day();

    let settle = |finals: Vec<crate::observer::FinalizedAuction<Generator>>,
                      memory: &mut ExperienceMemory,
                      ecpm: &mut EcpmPolicy,
                      phase: &mut PhaseState,
                      accum: &mut BTreeMap<u32, DayAccum>,
                      stored: &mut u64|
     -> Result<(), AgentError> {
        for f in finals {
            let acc = accum.entry(f.day).or_default();
            acc.auctions += 1;
            if f.won {
                acc.impressions_won += 1;
                acc.expense += f.expense;
                ecpm.observe_impression(f.publisher, f.sku_id);
                if f.clicked {
                    acc.clicks += 1;
                    acc.revenue += f.income;
                    ecpm.observe_click(f.publisher, f.sku_id);
                }
            }
            match f.tag {
                Generator::Baseline => {
                    memory.store(Transition::from(&f))?;
                    *stored += 1;
                    phase.note_baseline_stored();
                }
                Generator::Agent => {
                    if phase.phase() == Phase::Introspection {
                        memory.store(Transition::from(&f))?;
                        *stored += 1;
                    }
                }
            }
        }
        Ok(())
    };

    for _ in 0..days {
        let mut last_auction_id = None;
        loop {
            let req = match world.next_auction() {
                Ok(r) => r,
                Err(SimError::EpisodeExhausted) => break,
                Err(e) => return Err(e.into()),
            };
            let summary = world.request_summary(&req);
            let desc = describe(&summary);
            let state = EncodedState::one_hot(desc.text());
            let tod = req.timestamp_us - req.day as u64 * world.config().day_length_us();

            let (action, generator, greedy_q) = match phase.phase() {
                Phase::Imitation => {
                    let ctx = BidContext {
                        request: &req,
                        summary: &summary,
                        state: &state,
                        time_of_day_us: tod,
                    };
                    (ecpm.bid(&ctx, &mut rng), Generator::Baseline, None)
                }
                Phase::Introspection => {
                    let snap = slot.latest();
                    debug_assert!(snap.consistent());
                    let sel = select_action(&snap.params, &state, cfg.epsilon, &mut rng)?;
                    (sel.action, Generator::Agent, sel.greedy_q)
                }
            };

            let outcome = world.resolve_auction(&req, action)?;
            let click = world.schedule_click(&req, &outcome);
            last_auction_id = Some(req.auction_id);
            if let Some(q) = greedy_q {
                let acc = accum.entry(req.day).or_default();
                acc.q_sum += q;
                acc.q_count += 1;
            }
            finalizer.push(PendingAuction {
                tag: generator,
                auction_id: req.auction_id,
                state: state.into_positions(),
                action: action as u16,
                publisher: req.publisher_idx,
                sku_id: summary.sku_id,
                day: req.day,
                timestamp_us: req.timestamp_us,
                won: outcome.won,
                expense: outcome.expense,
                bid_click: req.bid_click,
                conversion_value: world.conversion_value(&req),
                click_at_us: click.as_ref().map(|c| c.click_timestamp_us),
            });
            let finals = finalizer.poll(world.now_us());
            settle(finals, memory, ecpm, &mut phase, &mut accum, &mut stored)?;

            auctions_since_step += 1;
            if auctions_since_step >= cfg.train_every && memory.len() >= cfg.batch_size {
                auctions_since_step = 0;
                let report = trainer.training_step(memory, &mut rng)?;
                accum.entry(world.day()).or_default().training_steps += 1;
                on_step(&report, phase.phase());
            }
        }
        if let Some(id) = last_auction_id {
            finalizer.mark_episode_final(id);
        }
        world.reset_day();
    }
    // Settle everything still pending; bookings stay on impression days.
    let finals = finalizer.drain();
    settle(finals, memory, ecpm, &mut phase, &mut accum, &mut stored)?;

    let episodes = (start_day..start_day + days)
        .map(|day| {
            let a = accum.remove(&day).unwrap_or_default();
            EpisodeMetrics {
                day,
                auctions: a.auctions,
                impressions_won: a.impressions_won,
                clicks: a.clicks,
                profit: a.revenue - a.expense,
                revenue: a.revenue,
                expense: a.expense,
                mean_q: if a.q_count > 0 { a.q_sum / a.q_count as f64 } else { 0.0 },
                training_steps: a.training_steps,
            }
        })
        .collect();
    Ok(RunReport {
        episodes,
        total_steps: trainer.steps(),
        final_phase: phase.phase(),
        transitions_stored: stored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::BaselineConfig;
    use crate::sim::WorldConfig;

    fn small_setup(seed: u64) -> (World, Trainer, ExperienceMemory, EcpmPolicy, AgentConfig) {
        let mut wcfg = WorldConfig::degenerate(0.05, 0.05, 10.0, 50);
        wcfg.auctions_per_day = 600;
        // Keep descriptions within the small test net's input length.
        wcfg.history_max = 0;
        wcfg.click_delay = crate::sim::ClickDelayConfig { min_minutes: 1.0, max_minutes: 3.0 };
        wcfg.click_window_minutes = 5.0;
        let acfg = AgentConfig {
            bid_ceiling_fen: 50,
            batch_size: 8,
            imitation_fill: 150,
            memory_capacity: 4000,
            snapshot_interval: 5,
            i_t: 10,
            train_every: 8,
            learning_rate: 1e-3,
            ..AgentConfig::default()
        };
        let world = World::new(wcfg.clone(), seed).unwrap();
        let trainer = small_test_trainer(&acfg, seed);
        let memory = ExperienceMemory::new(acfg.memory_capacity);
        let ecpm = EcpmPolicy::new(&BaselineConfig::default(), wcfg.day_length_secs, 50).unwrap();
        (world, trainer, memory, ecpm, acfg)
    }

    fn small_test_trainer(cfg: &AgentConfig, seed: u64) -> Trainer {
        use crate::qnet::{ConvSpec, NetSpec, NetworkParams};
        let spec = NetSpec {
            input_len: 120,
            input_width: 71,
            convs: vec![
                ConvSpec { kernel: 7, out_ch: 4, pool: 3 },
                ConvSpec { kernel: 5, out_ch: 6, pool: 2 },
            ],
            hidden_dim: 16,
            action_count: cfg.action_count(),
        };
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let params = NetworkParams::init(spec, &mut rng).unwrap();
        Trainer::from_params(cfg.clone(), params)
    }

    #[test]
    fn phases_progress_and_metrics_accumulate() {
        let (mut world, mut trainer, mut memory, mut ecpm, _cfg) = small_setup(5);
        let mut phases = Vec::new();
        let report = run_deterministic(
            &mut world,
            &mut trainer,
            &mut memory,
            &mut ecpm,
            2,
            5,
            |_r, p| phases.push(p),
        )
        .unwrap();
        assert_eq!(report.final_phase, Phase::Introspection);
        assert_eq!(report.episodes.len(), 2);
        assert!(report.total_steps > 0);
        assert!(report.transitions_stored > 150);
        for e in &report.episodes {
            assert!(e.auctions > 0);
            assert_eq!(e.profit, e.revenue - e.expense);
        }
        // Training ran in both phases.
        assert!(phases.contains(&Phase::Imitation));
        assert!(phases.contains(&Phase::Introspection));
    }

    #[test]
    fn deterministic_runs_are_identical() {
        let run = |seed: u64| {
            let (mut world, mut trainer, mut memory, mut ecpm, _cfg) = small_setup(seed);
            let mut losses = Vec::new();
            let report = run_deterministic(
                &mut world,
                &mut trainer,
                &mut memory,
                &mut ecpm,
                2,
                seed,
                |r, _| losses.push(r.loss),
            )
            .unwrap();
            (losses, report)
        };
        let (l1, r1) = run(9);
        let (l2, r2) = run(9);
        assert_eq!(l1, l2, "training losses must be bit-identical");
        assert_eq!(r1.total_steps, r2.total_steps);
        for (a, b) in r1.episodes.iter().zip(&r2.episodes) {
            assert_eq!(a.profit, b.profit);
            assert_eq!(a.clicks, b.clicks);
            assert_eq!(a.mean_q, b.mean_q);
        }
        let (l3, _) = run(10);
        assert_ne!(l1, l3, "different seeds should diverge");
    }
}
