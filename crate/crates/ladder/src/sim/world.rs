//! The auction world: a seeded single-owner state machine.

use super::config::{CpcModel, WorldConfig, LATENT_BASE_FREQ};
use super::SimError;
use crate::encoder::RequestSummary;
use crate::money::{action_to_money, Money};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

/// One catalog entry. Latent vectors vary smoothly with the sku id, so
/// close ids mean similar click behavior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkuEntry {
    pub sku_id: u64,
    pub price_cny: u64,
    pub jdln: bool,
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: u64,
    /// (sku_id, days_ago)
    pub bought: Vec<(u64, u32)>,
    /// (sku_id, days_ago)
    pub browsed: Vec<(u64, u32)>,
    pub affinity_latent: Vec<f64>,
}

/// One bid opportunity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuctionRequest {
    pub auction_id: u64,
    /// Global simulated time in microseconds.
    pub timestamp_us: u64,
    pub day: u32,
    pub publisher_idx: u32,
    pub user_idx: u32,
    pub sku_idx: u32,
    /// Advertiser CPC bid; paid to us in full on a click.
    pub bid_click: Money,
}

/// Resolution of one GSP auction. `max_rival_bid` and `true_ctr` exist
/// for oracle tests only and must never reach the agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub auction_id: u64,
    pub won: bool,
    /// Zero if lost; the highest rival bid if won.
    pub expense: Money,
    /// Our bid.
    pub winning_bid: Money,
    pub max_rival_bid: Money,
    pub true_ctr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClickEvent {
    pub auction_id: u64,
    pub click_timestamp_us: u64,
    /// Equals the request's CPC bid exactly.
    pub income: Money,
}

/// Net profit of one auction: click income minus GSP expense.
pub fn reward_of(outcome: &AuctionOutcome, click: Option<&ClickEvent>) -> Money {
    let income = click.map_or(Money::ZERO, |c| c.income);
    income - outcome.expense
}

/// Latent coordinate `j` of a sku id: low-frequency sinusoids, so the
/// map is Lipschitz in the id with constant [`latent_lipschitz_bound`].
pub fn sku_latent(sku_id: u64, latent_dim: usize) -> Vec<f64> {
    let norm = (latent_dim as f64).sqrt();
    (0..latent_dim)
        .map(|j| {
            let freq = LATENT_BASE_FREQ * (j + 1) as f64;
            let phase = 2.399_963 * j as f64;
            (sku_id as f64 * freq + phase).sin() / norm
        })
        .collect()
}

/// Euclidean Lipschitz bound of the id -> latent map.
pub fn latent_lipschitz_bound(latent_dim: usize) -> f64 {
    let s: f64 = (1..=latent_dim).map(|j| (j * j) as f64).sum();
    LATENT_BASE_FREQ * (s / latent_dim as f64).sqrt()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
pub struct World {
    cfg: WorldConfig,
    users: Vec<UserProfile>,
    catalog: Vec<SkuEntry>,
    arrival: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    mean_interarrival_us: f64,
    clock_us: u64,
    day: u32,
    exhausted: bool,
    next_auction_id: u64,
    auctions_today: u64,
}

impl World {
    pub fn new(cfg: WorldConfig, seed: u64) -> Result<World, SimError> {
        cfg.validate()?;
        let mut build_rng = ChaCha8Rng::seed_from_u64(seed);
        build_rng.set_stream(1);

        let catalog: Vec<SkuEntry> = (0..cfg.catalog_size)
            .map(|i| {
                let sku_id = cfg.sku_id_base + i as u64;
                SkuEntry {
                    sku_id,
                    price_cny: build_rng.gen_range(10..8000),
                    jdln: build_rng.gen_bool(0.7),
                    latent: sku_latent(sku_id, cfg.latent_dim),
                }
            })
            .collect();

        let users: Vec<UserProfile> = (0..cfg.user_pool_size)
            .map(|i| {
                let affinity: Vec<f64> =
                    (0..cfg.latent_dim).map(|_| build_rng.gen_range(-2.0..2.0)).collect();
                let pick = |rng: &mut ChaCha8Rng| -> (u64, u32) {
                    // Best-of-m sampling ties histories to the affinity
                    // vector: users interact with skus they like.
                    let m = cfg.history_affinity_candidates.max(1);
                    let mut best_idx = rng.gen_range(0..catalog.len());
                    let mut best_dot = f64::NEG_INFINITY;
                    for _ in 0..m {
                        let idx = rng.gen_range(0..catalog.len());
                        let dot: f64 = catalog[idx]
                            .latent
                            .iter()
                            .zip(&affinity)
                            .map(|(a, b)| a * b)
                            .sum();
                        if dot > best_dot {
                            best_dot = dot;
                            best_idx = idx;
                        }
                    }
                    (catalog[best_idx].sku_id, rng.gen_range(0..=cfg.history_days))
                };
                let n_bought = build_rng.gen_range(0..=cfg.history_max);
                let n_browsed = build_rng.gen_range(0..=cfg.history_max);
                let bought = (0..n_bought).map(|_| pick(&mut build_rng)).collect();
                let browsed = (0..n_browsed).map(|_| pick(&mut build_rng)).collect();
                UserProfile { id: 100_000 + i as u64, bought, browsed, affinity_latent: affinity }
            })
            .collect();

        let arrival = WeightedIndex::new(cfg.publishers.iter().map(|p| p.arrival_weight))
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let mean_interarrival_us = cfg.day_length_us() as f64 / cfg.auctions_per_day as f64;
        Ok(World {
            cfg,
            users,
            catalog,
            arrival,
            rng,
            mean_interarrival_us,
            clock_us: 0,
            day: 0,
            exhausted: false,
            next_auction_id: 1,
            auctions_today: 0,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn now_us(&self) -> u64 {
        self.clock_us
    }

    pub fn auctions_today(&self) -> u64 {
        self.auctions_today
    }

    pub fn publisher_label(&self, idx: u32) -> &str {
        &self.cfg.publishers[idx as usize].id
    }

    pub fn user(&self, idx: u32) -> &UserProfile {
        &self.users[idx as usize]
    }

    pub fn sku(&self, idx: u32) -> &SkuEntry {
        &self.catalog[idx as usize]
    }

    /// True once the simulated clock reached the end of the day.
    pub fn is_terminal(&self) -> bool {
        self.exhausted
    }

    /// Start the next episode at the following midnight.
    pub fn reset_day(&mut self) {
        self.day += 1;
        self.clock_us = self.day as u64 * self.cfg.day_length_us();
        self.exhausted = false;
        self.auctions_today = 0;
    }

    fn day_end_us(&self) -> u64 {
        (self.day as u64 + 1) * self.cfg.day_length_us()
    }

    /// Draw the next auction: publisher by arrival weight, user and sku
    /// uniform from their pools, clock advanced by an exponential
    /// inter-arrival time.
    pub fn next_auction(&mut self) -> Result<AuctionRequest, SimError> {
        if self.exhausted {
            return Err(SimError::EpisodeExhausted);
        }
        let e: f64 = Exp1.sample(&mut self.rng);
        let dt_us = (e * self.mean_interarrival_us).round().max(1.0) as u64;
        let t = self.clock_us + dt_us;
        if t >= self.day_end_us() {
            self.clock_us = self.day_end_us();
            self.exhausted = true;
            return Err(SimError::EpisodeExhausted);
        }
        self.clock_us = t;
        let publisher_idx = self.arrival.sample(&mut self.rng) as u32;
        let user_idx = self.rng.gen_range(0..self.users.len()) as u32;
        let sku_idx = self.rng.gen_range(0..self.catalog.len()) as u32;
        let bid_click = self.cpc_bid(&self.catalog[sku_idx as usize]);
        let auction_id = self.next_auction_id;
        self.next_auction_id += 1;
        self.auctions_today += 1;
        Ok(AuctionRequest {
            auction_id,
            timestamp_us: t,
            day: self.day,
            publisher_idx,
            user_idx,
            sku_idx,
            bid_click,
        })
    }

    fn cpc_bid(&self, sku: &SkuEntry) -> Money {
        match self.cfg.cpc {
            CpcModel::Fixed { cny } => Money::from_cny(cny),
            CpcModel::PriceRate { rate, min_cny } => {
                let fen = (sku.price_cny as f64 * rate * 100.0).round() as i64;
                let min_fen = (min_cny * 100.0).round() as i64;
                Money::from_fen(fen.max(min_fen))
            }
        }
    }

    /// True click probability of a request (oracle side; never shown to
    /// the agent).
    pub fn true_ctr(&self, req: &AuctionRequest) -> f64 {
        if let Some(ctr) = self.cfg.ctr_override {
            return ctr;
        }
        let user = &self.users[req.user_idx as usize];
        let sku = &self.catalog[req.sku_idx as usize];
        let dot: f64 = user
            .affinity_latent
            .iter()
            .zip(&sku.latent)
            .map(|(a, b)| a * b)
            .sum();
        logistic(dot + self.cfg.publishers[req.publisher_idx as usize].base_ctr_bias)
    }

    /// Resolve a GSP auction: draw the configured number of rival bids,
    /// win strictly above the highest (rivals take ties), pay the second
    /// price.
    pub fn resolve_auction(
        &mut self,
        req: &AuctionRequest,
        action: usize,
    ) -> Result<AuctionOutcome, SimError> {
        if action > self.cfg.bid_ceiling_fen {
            return Err(SimError::InvalidAction { action, max: self.cfg.bid_ceiling_fen });
        }
        let our_bid = action_to_money(action);
        let p = &self.cfg.publishers[req.publisher_idx as usize];
        let day_frac = (req.timestamp_us - req.day as u64 * self.cfg.day_length_us()) as f64
            / self.cfg.day_length_us() as f64;
        let tod = (1.0
            + p.rival_bids.tod_amplitude
                * (2.0 * std::f64::consts::PI * day_frac + p.rival_bids.tod_phase).sin())
        .max(0.0);
        let mut max_rival = Money::ZERO;
        for _ in 0..self.cfg.rival_count {
            let z: f64 = self.rng.sample(rand_distr::StandardNormal);
            let bid = (p.rival_bids.mean_log + p.rival_bids.sigma_log * z).exp() * tod;
            max_rival = max_rival.max(Money::from_cny(bid));
        }
        let won = our_bid > max_rival;
        Ok(AuctionOutcome {
            auction_id: req.auction_id,
            won,
            expense: if won { max_rival } else { Money::ZERO },
            winning_bid: our_bid,
            max_rival_bid: max_rival,
            true_ctr: self.true_ctr(req),
        })
    }

    /// Bernoulli click with the request's true rate, delayed uniformly
    /// within the configured window. Lost auctions never click.
    pub fn schedule_click(
        &mut self,
        req: &AuctionRequest,
        outcome: &AuctionOutcome,
    ) -> Option<ClickEvent> {
        if !outcome.won {
            return None;
        }
        if !self.rng.gen_bool(outcome.true_ctr.clamp(0.0, 1.0)) {
            return None;
        }
        let lo = self.cfg.click_delay.min_minutes * 60.0 * 1e6;
        let hi = self.cfg.click_delay.max_minutes * 60.0 * 1e6;
        let delay = if hi > lo { self.rng.gen_range(lo..hi) } else { lo };
        Some(ClickEvent {
            auction_id: req.auction_id,
            click_timestamp_us: req.timestamp_us + delay.round().max(1.0) as u64,
            income: req.bid_click,
        })
    }

    /// Simulated conversion value carried by a click on this request.
    pub fn conversion_value(&self, req: &AuctionRequest) -> Money {
        let price = self.catalog[req.sku_idx as usize].price_cny as f64;
        Money::from_cny(price * self.cfg.conversion_value_rate)
    }

    /// Plain-field summary feeding the description template.
    pub fn request_summary(&self, req: &AuctionRequest) -> RequestSummary {
        let user = &self.users[req.user_idx as usize];
        let sku = &self.catalog[req.sku_idx as usize];
        RequestSummary {
            publisher_label: self.cfg.publishers[req.publisher_idx as usize].id.clone(),
            sku_id: sku.sku_id,
            price_cny: sku.price_cny,
            jdln: sku.jdln,
            bid_click: req.bid_click,
            bought: user.bought.clone(),
            browsed: user.browsed.clone(),
        }
    }
}
