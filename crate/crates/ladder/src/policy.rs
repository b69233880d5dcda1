//! Action-selector abstraction shared by the baseline and the agent.

use crate::encoder::{EncodedState, RequestSummary};
use crate::sim::AuctionRequest;
use rand_chacha::ChaCha8Rng;

/// Everything a policy may look at when bidding one auction.
pub struct BidContext<'a> {
    pub request: &'a AuctionRequest,
    pub summary: &'a RequestSummary,
    pub state: &'a EncodedState,
    /// Microseconds since the start of the current day.
    pub time_of_day_us: u64,
}

pub trait BidPolicy {
    /// Action index (bid in fen) for this auction.
    fn bid(&mut self, ctx: &BidContext, rng: &mut ChaCha8Rng) -> usize;

    /// Feedback hooks; fed when an auction's reward finalizes.
    fn observe_impression(&mut self, _publisher: u32, _sku_id: u64) {}
    fn observe_click(&mut self, _publisher: u32, _sku_id: u64) {}
}

/// Bids the same action on every auction.
pub struct ConstantPolicy(pub usize);

impl BidPolicy for ConstantPolicy {
    fn bid(&mut self, _ctx: &BidContext, _rng: &mut ChaCha8Rng) -> usize {
        self.0
    }
}
