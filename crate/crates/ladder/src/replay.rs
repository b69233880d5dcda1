//! The experience memory: a FIFO ring of finalized transitions with
//! stochastic-transition minibatch sampling.
//!
//! Sampling draws a base transition uniformly, keeps negative-reward
//! draws only with probability `pi` (rejection otherwise), and pairs the
//! accepted transition with a successor drawn uniformly from the
//! same-publisher, same-episode window `(t, t + I_transition]`. When the
//! window is empty, or the base transition closed its episode, the
//! successor is the terminal marker.

use crate::money::Money;
use crate::observer::FinalizedAuction;
use crate::policy::{BidContext, BidPolicy};
use crate::sim::{SimError, World};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("transition rewards must be finalized before storage")]
    RewardNotFinal,
    #[error("cannot sample from an empty memory")]
    Empty,
    #[error("pi must be in (0, 1], got {0}")]
    InvalidPi(f64),
    #[error("bad dump line {line}: {err}")]
    BadDump { line: usize, err: String },
    #[error("dump io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One stored experience: state, action, settled reward, and the keys
/// the successor index needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<(u16, u8)>,
    pub action: u16,
    pub reward: Money,
    pub publisher: u32,
    pub day: u32,
    pub timestamp_us: u64,
    /// Last auction of its episode.
    pub terminal: bool,
    pub reward_final: bool,
}

impl<T> From<&FinalizedAuction<T>> for Transition {
    fn from(f: &FinalizedAuction<T>) -> Transition {
        Transition {
            state: f.state.clone(),
            action: f.action,
            reward: f.reward,
            publisher: f.publisher,
            day: f.day,
            timestamp_us: f.timestamp_us,
            terminal: f.terminal,
            reward_final: true,
        }
    }
}

/// A sampled training pair; `state_plus` is `None` at episode ends and
/// empty successor windows.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticTransition {
    pub state_minus: Vec<(u16, u8)>,
    pub action: u16,
    pub reward: Money,
    pub state_plus: Option<Vec<(u16, u8)>>,
}

/// A sampled minibatch plus the rejection-sampling attempt count, for
/// acceptance-rate diagnostics.
#[derive(Debug, Clone)]
pub struct MinibatchSample {
    pub transitions: Vec<StochasticTransition>,
    pub attempts: u64,
}

/// Bounded FIFO memory with a (publisher, day, time) successor index.
#[derive(Debug, Clone)]
pub struct ExperienceMemory {
    capacity: usize,
    base_slot: u64,
    buf: VecDeque<Transition>,
    index: BTreeSet<(u32, u32, u64, u64)>,
}

impl ExperienceMemory {
    pub fn new(capacity: usize) -> ExperienceMemory {
        assert!(capacity > 0, "memory capacity must be positive");
        ExperienceMemory {
            capacity,
            base_slot: 0,
            buf: VecDeque::with_capacity(capacity),
            index: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf.iter()
    }

    fn slot_of(&self, pos: usize) -> u64 {
        self.base_slot + pos as u64
    }

    fn transition_at_slot(&self, slot: u64) -> &Transition {
        &self.buf[(slot - self.base_slot) as usize]
    }

    /// Append a finalized transition, evicting the oldest when full.
    pub fn store(&mut self, t: Transition) -> Result<(), ReplayError> {
        if !t.reward_final {
            return Err(ReplayError::RewardNotFinal);
        }
        if self.buf.len() == self.capacity {
            let old = self.buf.pop_front().expect("capacity is positive");
            let removed =
                self.index.remove(&(old.publisher, old.day, old.timestamp_us, self.base_slot));
            debug_assert!(removed);
            self.base_slot += 1;
        }
        let slot = self.slot_of(self.buf.len());
        self.index.insert((t.publisher, t.day, t.timestamp_us, slot));
        self.buf.push_back(t);
        Ok(())
    }

    /// Look up a stored transition through the publisher index.
    pub fn find(&self, publisher: u32, day: u32, timestamp_us: u64) -> Option<&Transition> {
        self.index
            .range((publisher, day, timestamp_us, 0)..=(publisher, day, timestamp_us, u64::MAX))
            .next()
            .map(|&(_, _, _, slot)| self.transition_at_slot(slot))
    }

    /// Successor slots in `(t, t + window]` for the same publisher and
    /// episode.
    fn successor_slots(&self, t: &Transition, window_us: u64) -> Vec<u64> {
        let lo = (t.publisher, t.day, t.timestamp_us + 1, 0);
        let hi = (t.publisher, t.day, t.timestamp_us.saturating_add(window_us), u64::MAX);
        self.index.range(lo..=hi).map(|&(_, _, _, slot)| slot).collect()
    }

    /// Sample one stochastic transition; returns the pair and how many
    /// uniform draws the rejection loop consumed.
    fn sample_one(
        &self,
        pi: f64,
        window_us: u64,
        rng: &mut ChaCha8Rng,
    ) -> (StochasticTransition, u64) {
        let mut attempts = 0u64;
        loop {
            attempts += 1;
            let pos = rng.gen_range(0..self.buf.len());
            let t = &self.buf[pos];
            if t.reward.is_negative() && !rng.gen_bool(pi) {
                continue;
            }
            let state_plus = if t.terminal {
                None
            } else {
                let slots = self.successor_slots(t, window_us);
                if slots.is_empty() {
                    None
                } else {
                    let pick = slots[rng.gen_range(0..slots.len())];
                    Some(self.transition_at_slot(pick).state.clone())
                }
            };
            return (
                StochasticTransition {
                    state_minus: t.state.clone(),
                    action: t.action,
                    reward: t.reward,
                    state_plus,
                },
                attempts,
            );
        }
    }

    /// Draw a minibatch of stochastic transitions.
    pub fn sample_minibatch(
        &self,
        batch_size: usize,
        pi: f64,
        window_us: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<MinibatchSample, ReplayError> {
        if !(pi > 0.0 && pi <= 1.0) {
            return Err(ReplayError::InvalidPi(pi));
        }
        if self.buf.is_empty() {
            return Err(ReplayError::Empty);
        }
        let mut transitions = Vec::with_capacity(batch_size);
        let mut attempts = 0;
        for _ in 0..batch_size {
            let (st, a) = self.sample_one(pi, window_us, rng);
            attempts += a;
            transitions.push(st);
        }
        Ok(MinibatchSample { transitions, attempts })
    }

    /// Serialize every stored transition as one JSON object per line.
    pub fn dump_jsonl<W: Write>(&self, mut w: W) -> Result<(), ReplayError> {
        for t in &self.buf {
            serde_json::to_writer(&mut w, t).map_err(|e| ReplayError::BadDump {
                line: 0,
                err: e.to_string(),
            })?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Append transitions from a JSONL dump.
    pub fn restore_jsonl<R: BufRead>(&mut self, r: R) -> Result<usize, ReplayError> {
        let mut n = 0;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Transition = serde_json::from_str(&line)
                .map_err(|e| ReplayError::BadDump { line: i + 1, err: e.to_string() })?;
            self.store(t)?;
            n += 1;
        }
        Ok(n)
    }
}

/// Run the environment under `policy`, storing finalized transitions
/// until `count` have been stored. Days roll over as needed; rewards
/// settle through a click-window finalizer, so the stored rewards are
/// final by construction.
pub fn fill_from_policy<P: BidPolicy>(
    memory: &mut ExperienceMemory,
    world: &mut World,
    policy: &mut P,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(), ReplayError> {
    use crate::encoder::{describe, EncodedState};
    use crate::observer::{PendingAuction, RewardFinalizer};

    let mut finalizer: RewardFinalizer<()> = RewardFinalizer::new(world.config().click_window_us());
    let mut stored = 0;
    let mut last_auction_id = None;
    while stored < count {
        let req = match world.next_auction() {
            Ok(r) => r,
            Err(SimError::EpisodeExhausted) => {
                if let Some(id) = last_auction_id {
                    finalizer.mark_episode_final(id);
                }
                world.reset_day();
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let summary = world.request_summary(&req);
        let desc = describe(&summary);
        let state = EncodedState::one_hot(desc.text());
        let tod = req.timestamp_us - req.day as u64 * world.config().day_length_us();
        let ctx = BidContext { request: &req, summary: &summary, state: &state, time_of_day_us: tod };
        let action = policy.bid(&ctx, rng);
        let outcome = world.resolve_auction(&req, action)?;
        let click = world.schedule_click(&req, &outcome);
        last_auction_id = Some(req.auction_id);
        finalizer.push(PendingAuction {
            tag: (),
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
        for f in finalizer.poll(world.now_us()) {
            if stored >= count {
                break;
            }
            if f.won {
                policy.observe_impression(f.publisher, f.sku_id);
                if f.clicked {
                    policy.observe_click(f.publisher, f.sku_id);
                }
            }
            memory.store(Transition::from(&f))?;
            stored += 1;
        }
    }
    Ok(())
}
