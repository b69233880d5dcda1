//! Analytic expected-profit oracle for degenerate environments.
//!
//! When the world has exactly one publisher with a deterministic rival
//! price `b`, a forced click rate `p`, and a fixed CPC bid `v`, the
//! expected profit of an action is `0` when the bid does not beat `b`
//! (rivals take ties) and `p*v - b` otherwise. Used to check learned
//! policies against ground truth.

use super::config::{CpcModel, WorldConfig};
use super::SimError;
use crate::money::{action_to_money, Money};

fn degenerate_facts(cfg: &WorldConfig) -> Result<(Money, f64, f64), SimError> {
    if cfg.publishers.len() != 1 {
        return Err(SimError::OracleUnavailable);
    }
    let p = &cfg.publishers[0];
    if p.rival_bids.sigma_log != 0.0 || p.rival_bids.tod_amplitude != 0.0 {
        return Err(SimError::OracleUnavailable);
    }
    let ctr = cfg.ctr_override.ok_or(SimError::OracleUnavailable)?;
    let cpc = match cfg.cpc {
        CpcModel::Fixed { cny } => cny,
        CpcModel::PriceRate { .. } => return Err(SimError::OracleUnavailable),
    };
    Ok((Money::from_cny(p.rival_bids.mean_log.exp()), ctr, cpc))
}

/// Expected per-auction profit of bidding `action` in a degenerate
/// world, in CNY.
pub fn oracle_expected_profit(cfg: &WorldConfig, action: usize) -> Result<f64, SimError> {
    if action > cfg.bid_ceiling_fen {
        return Err(SimError::InvalidAction { action, max: cfg.bid_ceiling_fen });
    }
    let (rival, ctr, cpc) = degenerate_facts(cfg)?;
    if action_to_money(action) <= rival {
        Ok(0.0)
    } else {
        Ok(ctr * cpc - rival.to_cny())
    }
}

/// The best achievable expected per-auction profit over the bid grid.
pub fn oracle_best(cfg: &WorldConfig) -> Result<f64, SimError> {
    let (rival, ctr, cpc) = degenerate_facts(cfg)?;
    let win_profit = ctr * cpc - rival.to_cny();
    // Winning requires a grid bid strictly above the rival price; if no
    // such action exists the only choice is to lose.
    let min_winning_fen = rival.micros() / crate::money::MICROS_PER_FEN + 1;
    if min_winning_fen as usize > cfg.bid_ceiling_fen {
        Ok(0.0)
    } else {
        Ok(win_profit.max(0.0))
    }
}
