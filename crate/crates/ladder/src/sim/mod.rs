//! The auction environment: request generation, GSP resolution with
//! stochastic rival bids, and delayed click feedback.

mod config;
mod oracle;
mod world;

pub use config::{
    ClickDelayConfig, CpcModel, PublisherConfig, RivalBidConfig, WorldConfig,
    LATENT_BASE_FREQ,
};
pub use oracle::{oracle_best, oracle_expected_profit};
pub use world::{
    latent_lipschitz_bound, reward_of, sku_latent, AuctionOutcome, AuctionRequest, ClickEvent,
    SkuEntry, UserProfile, World,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("episode exhausted: the simulated day is over, reset before the next auction")]
    EpisodeExhausted,
    #[error("invalid action {action}: the bid grid is 0..={max}")]
    InvalidAction { action: usize, max: usize },
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("oracle unavailable: the environment is not degenerate")]
    OracleUnavailable,
}
