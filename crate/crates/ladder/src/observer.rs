//! Reward finalization: auctions become transitions only after their
//! click either arrives or the click window expires.
//!
//! Click feedback is inherently delayed, so the profit of an auction is
//! unknown at bid time. The finalizer holds each served auction until
//! `min(click time, impression time + window)` in simulated time, then
//! emits the settled record with its exact reward.

use crate::money::Money;
use std::collections::{BTreeMap, HashMap};

/// A served auction waiting for its reward to settle. `tag` carries
/// caller context (the A/B arm, for instance) through finalization.
#[derive(Debug, Clone)]
pub struct PendingAuction<T> {
    pub tag: T,
    pub auction_id: u64,
    /// Sparse encoding of the description shown to the network.
    pub state: Vec<(u16, u8)>,
    pub action: u16,
    pub publisher: u32,
    pub sku_id: u64,
    pub day: u32,
    pub timestamp_us: u64,
    pub won: bool,
    pub expense: Money,
    pub bid_click: Money,
    pub conversion_value: Money,
    /// Scheduled click time, if the user will click.
    pub click_at_us: Option<u64>,
}

/// A settled auction: reward components are final.
#[derive(Debug, Clone)]
pub struct FinalizedAuction<T> {
    pub tag: T,
    pub auction_id: u64,
    pub state: Vec<(u16, u8)>,
    pub action: u16,
    pub publisher: u32,
    pub sku_id: u64,
    pub day: u32,
    pub timestamp_us: u64,
    pub won: bool,
    pub clicked: bool,
    pub expense: Money,
    /// The CPC bid if clicked inside the window, else zero.
    pub income: Money,
    pub conversion_value: Money,
    /// income - expense.
    pub reward: Money,
    /// Last auction of its episode.
    pub terminal: bool,
}

struct Slot<T> {
    pending: PendingAuction<T>,
    terminal: bool,
}

/// Priority queue of pending auctions keyed by settle time.
pub struct RewardFinalizer<T> {
    window_us: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), Slot<T>>,
    by_auction: HashMap<u64, (u64, u64)>,
}

impl<T> RewardFinalizer<T> {
    pub fn new(window_us: u64) -> RewardFinalizer<T> {
        RewardFinalizer { window_us, seq: 0, queue: BTreeMap::new(), by_auction: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Settle time of an auction: click arrival when it beats the
    /// window, otherwise window expiry.
    pub fn settle_time(&self, p: &PendingAuction<T>) -> u64 {
        let deadline = p.timestamp_us + self.window_us;
        match p.click_at_us {
            Some(c) if c <= deadline => c,
            _ => deadline,
        }
    }

    pub fn push(&mut self, pending: PendingAuction<T>) {
        let key = (self.settle_time(&pending), self.seq);
        self.seq += 1;
        self.by_auction.insert(pending.auction_id, key);
        self.queue.insert(key, Slot { pending, terminal: false });
    }

    /// Flag an auction as the last of its episode. No-op if it already
    /// settled.
    pub fn mark_episode_final(&mut self, auction_id: u64) {
        if let Some(key) = self.by_auction.get(&auction_id) {
            if let Some(slot) = self.queue.get_mut(key) {
                slot.terminal = true;
            }
        }
    }

    fn settle(slot: Slot<T>, window_us: u64) -> FinalizedAuction<T> {
        let p = slot.pending;
        let clicked = matches!(p.click_at_us, Some(c) if c <= p.timestamp_us + window_us);
        let income = if clicked { p.bid_click } else { Money::ZERO };
        let conversion_value = if clicked { p.conversion_value } else { Money::ZERO };
        FinalizedAuction {
            tag: p.tag,
            auction_id: p.auction_id,
            state: p.state,
            action: p.action,
            publisher: p.publisher,
            sku_id: p.sku_id,
            day: p.day,
            timestamp_us: p.timestamp_us,
            won: p.won,
            clicked,
            expense: p.expense,
            income,
            conversion_value,
            reward: income - p.expense,
            terminal: slot.terminal,
        }
    }

    /// Settle every auction whose settle time has passed, in settle
    /// order.
    pub fn poll(&mut self, now_us: u64) -> Vec<FinalizedAuction<T>> {
        let mut out = Vec::new();
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > now_us {
                break;
            }
            let (key, slot) = self.queue.pop_first().unwrap();
            let _ = key;
            self.by_auction.remove(&slot.pending.auction_id);
            out.push(Self::settle(slot, self.window_us));
        }
        out
    }

    /// Settle everything still pending (end of run).
    pub fn drain(&mut self) -> Vec<FinalizedAuction<T>> {
        self.poll(u64::MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pending(id: u64, ts: u64, click: Option<u64>) -> PendingAuction<()> {
        PendingAuction {
            tag: (),
            auction_id: id,
            state: vec![(0, 0)],
            action: 10,
            publisher: 0,
            sku_id: 42,
            day: 0,
            timestamp_us: ts,
            won: true,
            expense: Money(300),
            bid_click: Money::from_fen(1000),
            conversion_value: Money::from_cny(5.0),
            click_at_us: click,
        }
    }

    #[test]
    fn clicked_auction_settles_at_click_time_with_income() {
        let mut f = RewardFinalizer::new(60 * 60 * 1_000_000);
        f.push(pending(1, 1000, Some(2_000_000)));
        assert!(f.poll(1_999_999).is_empty());
        let done = f.poll(2_000_000);
        assert_eq!(done.len(), 1);
        let d = &done[0];
        assert!(d.clicked);
        assert_eq!(d.income, Money::from_fen(1000));
        assert_eq!(d.reward, Money::from_fen(1000) - Money(300));
        assert_eq!(d.conversion_value, Money::from_cny(5.0));
    }

    #[test]
    fn unclicked_auction_settles_at_window_expiry_with_loss() {
        let window = 3_600_000_000;
        let mut f = RewardFinalizer::new(window);
        f.push(pending(2, 1000, None));
        assert!(f.poll(window).is_empty());
        let done = f.poll(1000 + window);
        assert_eq!(done.len(), 1);
        assert!(!done[0].clicked);
        assert_eq!(done[0].income, Money::ZERO);
        assert_eq!(done[0].reward, Money(-300));
    }

    #[test]
    fn click_past_the_window_counts_as_no_click() {
        let window = 1_000_000;
        let mut f = RewardFinalizer::new(window);
        f.push(pending(3, 0, Some(5_000_000)));
        let done = f.poll(window);
        assert_eq!(done.len(), 1);
        assert!(!done[0].clicked);
        assert_eq!(done[0].reward, Money(-300));
    }

    #[test]
    fn episode_final_flag_survives_to_settlement() {
        let mut f = RewardFinalizer::new(100);
        f.push(pending(4, 0, None));
        f.push(pending(5, 10, None));
        f.mark_episode_final(5);
        let done = f.drain();
        assert_eq!(done.len(), 2);
        assert!(!done[0].terminal);
        assert!(done[1].terminal);
    }

    #[test]
    fn settles_in_time_order() {
        let mut f = RewardFinalizer::new(1_000);
        f.push(pending(1, 500, None)); // settles 1500
        f.push(pending(2, 0, Some(100))); // settles 100
        let done = f.drain();
        assert_eq!(done[0].auction_id, 2);
        assert_eq!(done[1].auction_id, 1);
    }
}
