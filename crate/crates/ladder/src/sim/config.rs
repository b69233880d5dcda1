//! World configuration and validation.

use super::SimError;
use crate::money::Money;
use serde::{Deserialize, Serialize};

/// Base angular frequency of the smooth sku-id -> latent map.
pub const LATENT_BASE_FREQ: f64 = 1e-3;

/// Lognormal rival-bid model with an optional sinusoidal time-of-day
/// multiplier: `bid = exp(mean_log + sigma_log*z) * (1 + tod_amplitude *
/// sin(2*pi*day_fraction + tod_phase))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RivalBidConfig {
    pub mean_log: f64,
    pub sigma_log: f64,
    #[serde(default)]
    pub tod_amplitude: f64,
    #[serde(default)]
    pub tod_phase: f64,
}

impl RivalBidConfig {
    /// Deterministic rival at a fixed price.
    pub fn fixed(cny: f64) -> RivalBidConfig {
        RivalBidConfig { mean_log: cny.ln(), sigma_log: 0.0, tod_amplitude: 0.0, tod_phase: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublisherConfig {
    /// Unique id; doubles as the label rendered into descriptions.
    pub id: String,
    pub arrival_weight: f64,
    pub rival_bids: RivalBidConfig,
    /// Logit offset added to the affinity score.
    pub base_ctr_bias: f64,
}

/// How the advertiser CPC bid of a request is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CpcModel {
    /// Every request carries the same CPC bid.
    Fixed { cny: f64 },
    /// CPC proportional to the advertised sku price, floored.
    PriceRate { rate: f64, min_cny: f64 },
}

/// Uniform click delay, in simulated minutes after the impression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickDelayConfig {
    pub min_minutes: f64,
    pub max_minutes: f64,
}

impl Default for ClickDelayConfig {
    fn default() -> Self {
        ClickDelayConfig { min_minutes: 10.0, max_minutes: 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub publishers: Vec<PublisherConfig>,
    pub user_pool_size: usize,
    pub catalog_size: usize,
    /// Dimension of sku latent and user affinity vectors.
    pub latent_dim: usize,
    /// Number of rival bids drawn per auction.
    pub rival_count: usize,
    #[serde(default)]
    pub click_delay: ClickDelayConfig,
    /// Rewards finalize once a click arrives or this window expires.
    #[serde(default = "default_click_window")]
    pub click_window_minutes: f64,
    pub day_length_secs: u64,
    pub auctions_per_day: u64,
    /// Per-list cap on user history length.
    #[serde(default = "default_history_max")]
    pub history_max: usize,
    /// Largest days-ago value generated for history entries.
    #[serde(default = "default_history_days")]
    pub history_days: u32,
    /// Best-of-m candidate sampling strength tying user histories to
    /// their affinity vector; 1 means uncorrelated.
    #[serde(default = "default_history_candidates")]
    pub history_affinity_candidates: usize,
    pub cpc: CpcModel,
    /// Force a fixed click-through rate on every auction (degenerate
    /// environments for analytic oracles).
    #[serde(default)]
    pub ctr_override: Option<f64>,
    /// Simulated conversion value per click: price * rate.
    #[serde(default = "default_conversion_rate")]
    pub conversion_value_rate: f64,
    /// Bid ceiling in fen: the highest legal action index.
    pub bid_ceiling_fen: usize,
    /// First sku id in the catalog; ids are consecutive from here.
    #[serde(default = "default_sku_base")]
    pub sku_id_base: u64,
}

fn default_click_window() -> f64 {
    60.0
}
fn default_history_max() -> usize {
    5
}
fn default_history_days() -> u32 {
    30
}
fn default_history_candidates() -> usize {
    4
}
fn default_conversion_rate() -> f64 {
    0.1
}
fn default_sku_base() -> u64 {
    3_133_000
}

impl WorldConfig {
    /// Degenerate single-publisher world: deterministic rival price,
    /// forced click-through rate, fixed CPC bid. Supports the analytic
    /// expected-profit oracle.
    pub fn degenerate(rival_cny: f64, ctr: f64, cpc_cny: f64, bid_ceiling_fen: usize) -> WorldConfig {
        WorldConfig {
            publishers: vec![PublisherConfig {
                id: "main".to_string(),
                arrival_weight: 1.0,
                rival_bids: RivalBidConfig::fixed(rival_cny),
                base_ctr_bias: 0.0,
            }],
            user_pool_size: 50,
            catalog_size: 20,
            latent_dim: 4,
            rival_count: 1,
            click_delay: ClickDelayConfig::default(),
            click_window_minutes: 60.0,
            day_length_secs: 86_400,
            auctions_per_day: 50_000,
            history_max: 3,
            history_days: 30,
            history_affinity_candidates: 1,
            cpc: CpcModel::Fixed { cny: cpc_cny },
            ctr_override: Some(ctr),
            conversion_value_rate: 0.1,
            bid_ceiling_fen,
            sku_id_base: default_sku_base(),
        }
    }

    /// The default four-publisher desk-scale world.
    pub fn default_desk() -> WorldConfig {
        let pubs = [
            ("wire", 0.4, -2.5, 0.55, -4.3),
            ("portal", 0.3, -2.9, 0.6, -4.6),
            ("feed", 0.2, -2.2, 0.5, -4.9),
            ("forum", 0.1, -3.2, 0.7, -4.4),
        ];
        WorldConfig {
            publishers: pubs
                .iter()
                .map(|&(id, w, mean_log, sigma_log, bias)| PublisherConfig {
                    id: id.to_string(),
                    arrival_weight: w,
                    rival_bids: RivalBidConfig {
                        mean_log,
                        sigma_log,
                        tod_amplitude: 0.15,
                        tod_phase: 0.0,
                    },
                    base_ctr_bias: bias,
                })
                .collect(),
            user_pool_size: 1000,
            catalog_size: 500,
            latent_dim: 8,
            rival_count: 5,
            click_delay: ClickDelayConfig::default(),
            click_window_minutes: 60.0,
            day_length_secs: 86_400,
            auctions_per_day: 50_000,
            history_max: 5,
            history_days: 30,
            history_affinity_candidates: 4,
            cpc: CpcModel::PriceRate { rate: 0.002, min_cny: 0.5 },
            ctr_override: None,
            conversion_value_rate: 0.1,
            bid_ceiling_fen: 200,
            sku_id_base: default_sku_base(),
        }
    }

    pub fn action_count(&self) -> usize {
        self.bid_ceiling_fen + 1
    }

    pub fn day_length_us(&self) -> u64 {
        self.day_length_secs * 1_000_000
    }

    pub fn click_window_us(&self) -> u64 {
        (self.click_window_minutes * 60.0 * 1e6) as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.publishers.is_empty() {
            return fail("at least one publisher is required".into());
        }
        let total: f64 = self.publishers.iter().map(|p| p.arrival_weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return fail(format!("publisher arrival weights sum to {total}, expected 1"));
        }
        let mut ids = std::collections::HashSet::new();
        for p in &self.publishers {
            if p.arrival_weight <= 0.0 {
                return fail(format!("publisher {} has non-positive weight", p.id));
            }
            if !ids.insert(&p.id) {
                return fail(format!("duplicate publisher id {}", p.id));
            }
            if p.rival_bids.sigma_log < 0.0 || p.rival_bids.tod_amplitude < 0.0 {
                return fail(format!("publisher {} rival parameters are negative", p.id));
            }
        }
        if self.user_pool_size == 0 || self.catalog_size == 0 || self.latent_dim == 0 {
            return fail("user pool, catalog, and latent dimension must be non-empty".into());
        }
        if self.rival_count == 0 {
            return fail("at least one rival bidder is required".into());
        }
        if self.day_length_secs == 0 || self.auctions_per_day == 0 {
            return fail("day length and auctions per day must be positive".into());
        }
        if self.click_delay.min_minutes < 0.0
            || self.click_delay.max_minutes < self.click_delay.min_minutes
        {
            return fail("click delay range is invalid".into());
        }
        if self.click_window_minutes <= 0.0 {
            return fail("click window must be positive".into());
        }
        if let Some(ctr) = self.ctr_override {
            if !(0.0..=1.0).contains(&ctr) {
                return fail(format!("ctr override {ctr} is not a probability"));
            }
        }
        if self.conversion_value_rate < 0.0 {
            return fail("conversion value rate must be nonnegative".into());
        }
        if self.bid_ceiling_fen == 0 {
            return fail("bid ceiling must allow at least one nonzero bid".into());
        }
        match self.cpc {
            CpcModel::Fixed { cny } => {
                let m = Money::from_cny(cny);
                if m <= Money::ZERO || !m.on_fen_grid() {
                    return fail(format!("fixed cpc {cny} must be positive and on the 0.01 grid"));
                }
            }
            CpcModel::PriceRate { rate, min_cny } => {
                if rate <= 0.0 || min_cny <= 0.0 {
                    return fail("price-rate cpc must have positive rate and floor".into());
                }
            }
        }
        Ok(())
    }
}
