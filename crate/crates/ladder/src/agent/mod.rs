//! The bidding agent: epsilon-greedy serving from immutable parameter
//! snapshots, reward augmentation across the bid grid, bootstrapped
//! multi-action targets, and the mean-squared multi-action loss.
//!
//! Reward augmentation exploits the second-price mechanics: for a
//! settled auction with bid `a_t` and profit `r_t`, every action below
//! `a_t` is assigned reward 0 and every action at or above it is
//! assigned `r_t`. One auction therefore trains all C+1 outputs at once.

mod runner;
mod snapshot;
mod trainer;

pub use runner::{run_deterministic, EpisodeMetrics, RunReport};
pub use snapshot::{Snapshot, SnapshotSlot};
pub use trainer::{StepReport, Trainer};

use crate::baseline::BaselineError;
use crate::encoder::EncodedState;
use crate::money::Money;
use crate::qnet::{forward_sparse, NetworkParams, QnetError};
use crate::replay::{ReplayError, StochasticTransition};
use crate::sim::SimError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Qnet(#[from] QnetError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("q and target vectors differ in length: {q} vs {y}")]
    LengthMismatch { q: usize, y: usize },
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: u64, loss: f64 },
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Discount factor for bootstrapped targets.
    pub gamma: f64,
    /// Exploration probability of the serving policy.
    pub epsilon: f64,
    /// Keep probability of negative-reward transitions when sampling.
    pub pi: f64,
    /// Successor window for stochastic transitions, simulated seconds.
    pub i_transition_secs: f64,
    /// Training steps between target-network syncs.
    pub i_t: u64,
    pub batch_size: usize,
    /// Bid ceiling in fen; the action set is 0..=bid_ceiling_fen.
    pub bid_ceiling_fen: usize,
    /// Training steps between serving-snapshot publications.
    pub snapshot_interval: u64,
    /// Baseline-generated transitions stored before switching from
    /// imitation to introspection.
    pub imitation_fill: usize,
    pub memory_capacity: usize,
    pub learning_rate: f64,
    pub rmsprop_rho: f64,
    pub rmsprop_eps: f64,
    /// Deterministic mode: one training step per this many auctions.
    pub train_every: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.95,
            epsilon: 1e-3,
            pi: 0.6,
            i_transition_secs: 60.0,
            i_t: 200,
            batch_size: 32,
            bid_ceiling_fen: 200,
            snapshot_interval: 100,
            imitation_fill: 50_000,
            memory_capacity: 100_000,
            learning_rate: 1e-4,
            rmsprop_rho: 0.95,
            rmsprop_eps: 1e-8,
            train_every: 4,
        }
    }
}

impl AgentConfig {
    pub fn action_count(&self) -> usize {
        self.bid_ceiling_fen + 1
    }

    pub fn i_transition_us(&self) -> u64 {
        (self.i_transition_secs * 1e6) as u64
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |m: String| Err(AgentError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma {} outside [0,1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return fail(format!("epsilon {} outside [0,1]", self.epsilon));
        }
        if !(self.pi > 0.0 && self.pi <= 1.0) {
            return fail(format!("pi {} outside (0,1]", self.pi));
        }
        if self.i_t < 1 {
            return fail("i_t must be at least 1".into());
        }
        if self.batch_size == 0 || self.snapshot_interval == 0 || self.train_every == 0 {
            return fail("batch size, snapshot interval, and train interval must be positive".into());
        }
        if self.bid_ceiling_fen == 0 {
            return fail("bid ceiling must allow a nonzero bid".into());
        }
        if self.memory_capacity == 0 {
            return fail("memory capacity must be positive".into());
        }
        if self.learning_rate <= 0.0 || self.i_transition_secs <= 0.0 {
            return fail("learning rate and transition window must be positive".into());
        }
        if !(0.0..1.0).contains(&self.rmsprop_rho) || self.rmsprop_eps <= 0.0 {
            return fail("rmsprop parameters are invalid".into());
        }
        Ok(())
    }
}

/// Cold-start schedule: learn from the baseline's data first, then from
/// the agent's own. The switch happens exactly once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Imitation,
    Introspection,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Imitation => "imitation",
            Phase::Introspection => "introspection",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseState {
    phase: Phase,
    baseline_stored: usize,
    threshold: usize,
}

impl PhaseState {
    pub fn new(imitation_fill: usize) -> PhaseState {
        let phase = if imitation_fill == 0 { Phase::Introspection } else { Phase::Imitation };
        PhaseState { phase, baseline_stored: 0, threshold: imitation_fill }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn baseline_stored(&self) -> usize {
        self.baseline_stored
    }

    /// Record one stored baseline transition; returns true on the
    /// imitation -> introspection switch.
    pub fn note_baseline_stored(&mut self) -> bool {
        if self.phase == Phase::Introspection {
            return false;
        }
        self.baseline_stored += 1;
        if self.baseline_stored >= self.threshold {
            self.phase = Phase::Introspection;
            true
        } else {
            false
        }
    }
}

/// The serving decision for one auction.
#[derive(Debug, Clone, Copy)]
pub struct Selection {
    pub action: usize,
    /// Greedy value when the action came from the argmax; None on
    /// random exploration.
    pub greedy_q: Option<f64>,
}

/// Epsilon-greedy action selection against an immutable snapshot. Ties
/// break toward the lowest bid.
pub fn select_action(
    snapshot: &NetworkParams,
    state: &EncodedState,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Selection, AgentError> {
    let actions = snapshot.spec().action_count;
    if epsilon > 0.0 && rng.gen_bool(epsilon.clamp(0.0, 1.0)) {
        return Ok(Selection { action: rng.gen_range(0..actions), greedy_q: None });
    }
    let (q, _) = forward_sparse(snapshot, state.sparse_view())?;
    let action = q.greedy();
    Ok(Selection { action, greedy_q: Some(q.0[action]) })
}

/// Spread one settled reward across the bid grid: zero strictly below
/// the taken action, the observed reward at and above it.
pub fn augment_rewards(action: usize, reward: Money, action_count: usize) -> Vec<f64> {
    debug_assert!(action < action_count);
    let r = reward.to_cny();
    let mut out = vec![0.0; action_count];
    for v in out.iter_mut().skip(action) {
        *v = r;
    }
    out
}

/// Per-action bootstrapped targets for a batch: the augmented reward,
/// plus `gamma * max Q(successor; target)` when a successor exists.
pub fn compute_targets(
    batch: &[StochasticTransition],
    target: &NetworkParams,
    gamma: f64,
) -> Result<Vec<Vec<f64>>, AgentError> {
    let actions = target.spec().action_count;
    let mut out = Vec::with_capacity(batch.len());
    for st in batch {
        let mut y = augment_rewards(st.action as usize, st.reward, actions);
        if let Some(sp) = &st.state_plus {
            let (q, _) = forward_sparse(target, sp)?;
            let boot = gamma * q.max();
            for v in &mut y {
                *v += boot;
            }
        }
        out.push(y);
    }
    Ok(out)
}

/// Mean squared difference over all actions.
pub fn ladder_loss(q: &[f64], y: &[f64]) -> Result<f64, AgentError> {
    if q.len() != y.len() {
        return Err(AgentError::LengthMismatch { q: q.len(), y: y.len() });
    }
    let n = q.len() as f64;
    Ok(q.iter().zip(y).map(|(q, y)| (y - q) * (y - q)).sum::<f64>() / n)
}

/// Gradient of [`ladder_loss`] in the network outputs:
/// `dL/dQ_a = -2 (y_a - Q_a) / (C+1)`.
pub fn ladder_loss_grad(q: &[f64], y: &[f64]) -> Vec<f64> {
    let n = q.len() as f64;
    q.iter().zip(y).map(|(q, y)| -2.0 * (y - q) / n).collect()
}
