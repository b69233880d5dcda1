//! The training activity: minibatch gradient steps on the live
//! parameters, periodic target syncs, periodic snapshot publication.

use super::{compute_targets, ladder_loss, ladder_loss_grad, AgentConfig, AgentError};
use crate::qnet::{
    backward, forward_sparse, rmsprop_step, Gradients, NetworkParams, OptimizerState, QnetError,
};
use crate::replay::{ExperienceMemory, StochasticTransition};
use crate::sim::World;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use super::snapshot::SnapshotSlot;

/// Outcome of one training step.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub step: u64,
    pub loss: f64,
    /// Mean |y - Q| over the batch and actions.
    pub mean_abs_td: f64,
    /// Mean greedy Q over the batch's base states.
    pub mean_q: f64,
    pub synced_target: bool,
    pub published_snapshot: bool,
}

/// Owns the live parameters, the target copy, and the optimizer; shares
/// serving snapshots through a [`SnapshotSlot`].
pub struct Trainer {
    cfg: AgentConfig,
    params: NetworkParams,
    target: NetworkParams,
    opt: OptimizerState,
    slot: Arc<SnapshotSlot>,
    steps: u64,
}

impl Trainer {
    /// Fresh canonical network; the initial snapshot is published
    /// immediately so serving can start before training does.
    pub fn new(cfg: AgentConfig, seed: u64) -> Result<Trainer, AgentError> {
        cfg.validate()?;
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let params = NetworkParams::init_canonical(cfg.action_count(), &mut rng)?;
        Ok(Self::from_params(cfg, params))
    }

    pub fn from_params(cfg: AgentConfig, params: NetworkParams) -> Trainer {
        let opt = OptimizerState::new(&params, cfg.learning_rate, cfg.rmsprop_rho, cfg.rmsprop_eps);
        let target = params.clone();
        let slot = Arc::new(SnapshotSlot::new(&params));
        Trainer { cfg, params, target, opt, slot, steps: 0 }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn slot(&self) -> Arc<SnapshotSlot> {
        Arc::clone(&self.slot)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn target(&self) -> &NetworkParams {
        &self.target
    }

    /// Sample a minibatch from `memory` and apply one step.
    pub fn training_step(
        &mut self,
        memory: &ExperienceMemory,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepReport, AgentError> {
        let sample = memory.sample_minibatch(
            self.cfg.batch_size,
            self.cfg.pi,
            self.cfg.i_transition_us(),
            rng,
        )?;
        self.apply_batch(&sample.transitions)
    }

    /// One gradient step on an already-sampled batch: multi-action
    /// targets from the target copy, batch-averaged gradients, one
    /// RMSProp update, then the periodic target sync and snapshot
    /// publication.
    pub fn apply_batch(&mut self, batch: &[StochasticTransition]) -> Result<StepReport, AgentError> {
        assert!(!batch.is_empty());
        let targets = compute_targets(batch, &self.target, self.cfg.gamma)?;

        let mut acc = Gradients::zeros_like(&self.params);
        let scale = 1.0 / batch.len() as f64;
        let mut loss_sum = 0.0;
        let mut td_sum = 0.0;
        let mut q_sum = 0.0;
        for (st, y) in batch.iter().zip(&targets) {
            let (q, trace) = forward_sparse(&self.params, &st.state_minus)?;
            loss_sum += ladder_loss(&q.0, y)?;
            td_sum += q.0.iter().zip(y).map(|(q, y)| (y - q).abs()).sum::<f64>() / y.len() as f64;
            q_sum += q.max();
            let dq = ladder_loss_grad(&q.0, y);
            let g = backward(&self.params, &trace, &dq)?;
            acc.add_scaled(&g, scale);
        }
        let loss = loss_sum * scale;
        if !loss.is_finite() {
            return Err(AgentError::Divergence { step: self.steps, loss });
        }
        rmsprop_step(&mut self.params, &mut self.opt, &acc).map_err(|e| match e {
            QnetError::NonFiniteGradient => AgentError::Divergence { step: self.steps, loss },
            other => AgentError::Qnet(other),
        })?;
        self.steps += 1;

        let synced_target = self.steps % self.cfg.i_t == 0;
        if synced_target {
            self.target.clone_from_params(&self.params)?;
        }
        let published_snapshot = self.steps % self.cfg.snapshot_interval == 0;
        if published_snapshot {
            self.slot.publish(&self.params);
        }
        Ok(StepReport {
            step: self.steps,
            loss,
            mean_abs_td: td_sum * scale,
            mean_q: q_sum * scale,
            synced_target,
            published_snapshot,
        })
    }

    /// Write the live parameters and hyperparameters to disk.
    pub fn save_checkpoint(&self, path: &std::path::Path) -> Result<(), AgentError> {
        let hp = serde_json::to_value(&self.cfg).unwrap_or(serde_json::Value::Null);
        crate::qnet::save_checkpoint(&self.params, path, &hp)
            .map_err(|e| AgentError::InvalidConfig(format!("checkpoint: {e}")))
    }

    /// Greedy action of the live parameters on a fresh request drawn
    /// from `world` (diagnostics and convergence probes).
    pub fn greedy_probe(&self, world: &mut World) -> Result<usize, AgentError> {
        use crate::encoder::{describe, EncodedState};
        let req = match world.next_auction() {
            Ok(r) => r,
            Err(crate::sim::SimError::EpisodeExhausted) => {
                world.reset_day();
                world.next_auction()?
            }
            Err(e) => return Err(e.into()),
        };
        let summary = world.request_summary(&req);
        let state = EncodedState::one_hot(describe(&summary).text());
        let (q, _) = forward_sparse(&self.params, state.sparse_view())?;
        Ok(q.greedy())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Money;

    fn small_cfg() -> AgentConfig {
        AgentConfig {
            bid_ceiling_fen: 4,
            batch_size: 4,
            i_t: 1,
            snapshot_interval: 1,
            learning_rate: 1e-3,
            ..AgentConfig::default()
        }
    }

    /// Trainer over a tiny non-canonical net for cheap tests.
    fn small_trainer(cfg: AgentConfig) -> Trainer {
        use crate::qnet::{ConvSpec, NetSpec};
        let spec = NetSpec {
            input_len: 40,
            input_width: 71,
            convs: vec![
                ConvSpec { kernel: 5, out_ch: 4, pool: 2 },
                ConvSpec { kernel: 3, out_ch: 4, pool: 3 },
            ],
            hidden_dim: 8,
            action_count: cfg.action_count(),
        };
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(17);
        let params = NetworkParams::init(spec, &mut rng).unwrap();
        Trainer::from_params(cfg, params)
    }

    fn one_transition(action: u16, reward_cny: f64) -> StochasticTransition {
        StochasticTransition {
            state_minus: vec![(0, 15), (1, 27), (5, 3)],
            action,
            reward: Money::from_cny(reward_cny),
            state_plus: None,
        }
    }

    #[test]
    fn target_syncs_every_i_t_steps() {
        let mut t = small_trainer(AgentConfig { i_t: 1, ..small_cfg() });
        let batch = vec![one_transition(2, 1.0); 4];
        for _ in 0..2 {
            let r = t.apply_batch(&batch).unwrap();
            assert!(r.synced_target);
            assert_eq!(t.target(), t.params());
        }

        let mut t = small_trainer(AgentConfig { i_t: 10, ..small_cfg() });
        let initial_target = t.target().clone();
        for step in 1..=9 {
            let r = t.apply_batch(&batch).unwrap();
            assert_eq!(r.step, step);
            assert!(!r.synced_target);
            assert_eq!(t.target(), &initial_target, "target must hold until step 10");
            assert_ne!(t.target(), t.params());
        }
        let r = t.apply_batch(&batch).unwrap();
        assert!(r.synced_target);
        assert_eq!(t.target(), t.params());
    }

    #[test]
    fn target_is_always_an_exact_past_params_value() {
        let mut t = small_trainer(AgentConfig { i_t: 3, snapshot_interval: 2, ..small_cfg() });
        let batch = vec![one_transition(1, -0.3); 4];
        let mut published: Vec<NetworkParams> = vec![t.params().clone()];
        for _ in 0..9 {
            t.apply_batch(&batch).unwrap();
            published.push(t.params().clone());
        }
        // The target equals one of the historical parameter values, never
        // a blend.
        assert!(published.iter().any(|p| p == t.target()));
    }

    #[test]
    fn snapshot_publication_follows_the_interval() {
        let mut t = small_trainer(AgentConfig { snapshot_interval: 3, ..small_cfg() });
        let batch = vec![one_transition(0, 0.5); 2];
        let slot = t.slot();
        let v0 = slot.latest().version;
        t.apply_batch(&batch).unwrap();
        t.apply_batch(&batch).unwrap();
        assert_eq!(slot.latest().version, v0, "no publication before the interval");
        let r = t.apply_batch(&batch).unwrap();
        assert!(r.published_snapshot);
        assert_eq!(slot.latest().version, t.params().version());
        assert!(slot.latest().consistent());
    }

    #[test]
    fn training_never_mutates_taken_snapshots() {
        let mut t = small_trainer(small_cfg());
        let snap = t.slot().latest();
        let q_before = forward_sparse(&snap.params, &[(0, 3)]).unwrap().0;
        for _ in 0..5 {
            t.apply_batch(&[one_transition(3, 2.0)]).unwrap();
        }
        let q_after = forward_sparse(&snap.params, &[(0, 3)]).unwrap().0;
        assert_eq!(q_before.0, q_after.0);
    }

    #[test]
    fn supervised_regression_reduces_loss() {
        // gamma 0, single repeated transition: plain regression onto the
        // augmented rewards. The loss descends monotonically until it
        // reaches the optimizer's constant-step floor, where it may
        // wiggle by at most one normalized step.
        let cfg = AgentConfig { gamma: 0.0, learning_rate: 1e-3, i_t: 1000, ..small_cfg() };
        let mut t = small_trainer(cfg);
        let batch = vec![one_transition(2, 3.0)];
        let first = t.apply_batch(&batch).unwrap().loss;
        let floor = 1e-2;
        let mut last = first;
        for _ in 0..500 {
            let r = t.apply_batch(&batch).unwrap();
            if last > floor {
                assert!(r.loss <= last + 1e-12, "loss rose {last} -> {} above the floor", r.loss);
            } else {
                assert!(r.loss <= floor, "loss left the convergence floor: {}", r.loss);
            }
            last = r.loss;
        }
        assert!(last < floor, "loss {first} -> {last} after 500 steps");
    }

    #[test]
    fn divergence_is_reported_not_propagated_as_nan() {
        // Non-finite parameters (the end state of a diverged run) must
        // surface as a divergence error, not silently poison training.
        let mut t = small_trainer(small_cfg());
        let out_bias = t.params.layout().out_b.0;
        t.params.update_in_place(|d| d[out_bias] = f64::NAN);
        t.target.clone_from_params(&t.params).unwrap();
        let err = t.apply_batch(&[one_transition(0, 1.0)]).unwrap_err();
        assert!(matches!(err, AgentError::Divergence { .. }), "got {err:?}");
    }
}
