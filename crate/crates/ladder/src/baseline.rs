//! The human-calibrated ECPM bidding policy: a smoothed empirical
//! click-rate estimator times the advertiser's CPC bid, scaled by a
//! hand-maintained time-of-day coefficient schedule.

use crate::money::{cny_to_action_clamped, Money};
use crate::policy::{BidContext, BidPolicy};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use std::sync::RwLock;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("invalid coefficient schedule: {0}")]
    InvalidSchedule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefSpan {
    pub start_sec: u64,
    pub end_sec: u64,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Beta-prior pseudo-counts of the click estimator.
    pub smoothing_alpha: f64,
    pub smoothing_beta: f64,
    /// Sku ids are bucketed by this width before counting.
    pub sku_bucket: u64,
    pub coef_schedule: Vec<CoefSpan>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            smoothing_alpha: 1.0,
            smoothing_beta: 99.0,
            sku_bucket: 100,
            coef_schedule: vec![CoefSpan { start_sec: 0, end_sec: 86_400, coef: 1.0 }],
        }
    }
}

/// Per-(publisher, sku bucket) click counters with beta smoothing. The
/// estimate is always strictly inside (0, 1).
#[derive(Debug, Clone)]
pub struct CtrEstimator {
    alpha: f64,
    beta: f64,
    bucket: u64,
    counts: HashMap<(u32, u64), (u64, u64)>,
}

impl CtrEstimator {
    pub fn new(alpha: f64, beta: f64, bucket: u64) -> CtrEstimator {
        assert!(alpha > 0.0 && beta > 0.0 && bucket > 0);
        CtrEstimator { alpha, beta, bucket, counts: HashMap::new() }
    }

    pub fn from_config(cfg: &BaselineConfig) -> CtrEstimator {
        CtrEstimator::new(cfg.smoothing_alpha, cfg.smoothing_beta, cfg.sku_bucket)
    }

    fn key(&self, publisher: u32, sku_id: u64) -> (u32, u64) {
        (publisher, sku_id / self.bucket)
    }

    /// Smoothed click rate: (clicks + alpha) / (impressions + alpha + beta).
    pub fn estimate(&self, publisher: u32, sku_id: u64) -> f64 {
        let (imps, clicks) =
            self.counts.get(&self.key(publisher, sku_id)).copied().unwrap_or((0, 0));
        (clicks as f64 + self.alpha) / (imps as f64 + self.alpha + self.beta)
    }

    pub fn on_impression(&mut self, publisher: u32, sku_id: u64) {
        self.counts.entry(self.key(publisher, sku_id)).or_insert((0, 0)).0 += 1;
    }

    pub fn on_click(&mut self, publisher: u32, sku_id: u64) {
        self.counts.entry(self.key(publisher, sku_id)).or_insert((0, 0)).1 += 1;
    }

    /// Counter dump, sorted for stable output.
    pub fn dump_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "publisher,sku_bucket,impressions,clicks,estimate")?;
        let mut keys: Vec<_> = self.counts.keys().copied().collect();
        keys.sort_unstable();
        for (p, b) in keys {
            let (imps, clicks) = self.counts[&(p, b)];
            let est = (clicks as f64 + self.alpha) / (imps as f64 + self.alpha + self.beta);
            writeln!(w, "{p},{b},{imps},{clicks},{est:.6}")?;
        }
        Ok(())
    }
}

/// Reader-writer wrapper for the concurrent serving/observing split.
pub struct SharedCtrEstimator(RwLock<CtrEstimator>);

impl SharedCtrEstimator {
    pub fn new(inner: CtrEstimator) -> SharedCtrEstimator {
        SharedCtrEstimator(RwLock::new(inner))
    }

    pub fn estimate(&self, publisher: u32, sku_id: u64) -> f64 {
        self.0.read().unwrap().estimate(publisher, sku_id)
    }

    pub fn on_impression(&self, publisher: u32, sku_id: u64) {
        self.0.write().unwrap().on_impression(publisher, sku_id);
    }

    pub fn on_click(&self, publisher: u32, sku_id: u64) {
        self.0.write().unwrap().on_click(publisher, sku_id);
    }
}

/// Step function over the day mapping time to a bid coefficient.
#[derive(Debug, Clone)]
pub struct CoefSchedule {
    spans: Vec<CoefSpan>,
}

impl CoefSchedule {
    /// Spans must tile `[0, day_length_secs)` in order, without gaps or
    /// overlap, with positive coefficients.
    pub fn new(mut spans: Vec<CoefSpan>, day_length_secs: u64) -> Result<CoefSchedule, BaselineError> {
        if spans.is_empty() {
            return Err(BaselineError::InvalidSchedule("no spans".into()));
        }
        spans.sort_by_key(|s| s.start_sec);
        let mut cursor = 0;
        for s in &spans {
            if s.coef <= 0.0 {
                return Err(BaselineError::InvalidSchedule(format!(
                    "coefficient {} must be positive",
                    s.coef
                )));
            }
            if s.start_sec != cursor {
                return Err(BaselineError::InvalidSchedule(format!(
                    "gap or overlap at second {cursor}"
                )));
            }
            if s.end_sec <= s.start_sec {
                return Err(BaselineError::InvalidSchedule("empty span".into()));
            }
            cursor = s.end_sec;
        }
        if cursor != day_length_secs {
            return Err(BaselineError::InvalidSchedule(format!(
                "spans cover up to {cursor}s, day is {day_length_secs}s"
            )));
        }
        Ok(CoefSchedule { spans })
    }

    pub fn coef_at(&self, time_of_day_us: u64) -> f64 {
        let sec = time_of_day_us / 1_000_000;
        for s in &self.spans {
            if sec >= s.start_sec && sec < s.end_sec {
                return s.coef;
            }
        }
        self.spans.last().unwrap().coef
    }
}

/// The ECPM bid: `coef * ctr * bid_click`, rounded to the nearest fen
/// and clamped to the bid grid.
pub fn ecpm_bid(coef: f64, ctr: f64, bid_click: Money, ceiling_fen: usize) -> usize {
    cny_to_action_clamped(coef * ctr * bid_click.to_cny(), ceiling_fen)
}

/// The full baseline policy: estimator plus schedule.
pub struct EcpmPolicy {
    pub estimator: CtrEstimator,
    pub schedule: CoefSchedule,
    pub ceiling_fen: usize,
}

impl EcpmPolicy {
    pub fn new(
        cfg: &BaselineConfig,
        day_length_secs: u64,
        ceiling_fen: usize,
    ) -> Result<EcpmPolicy, BaselineError> {
        Ok(EcpmPolicy {
            estimator: CtrEstimator::from_config(cfg),
            schedule: CoefSchedule::new(cfg.coef_schedule.clone(), day_length_secs)?,
            ceiling_fen,
        })
    }
}

impl BidPolicy for EcpmPolicy {
    fn bid(&mut self, ctx: &BidContext, _rng: &mut ChaCha8Rng) -> usize {
        let ctr = self.estimator.estimate(ctx.request.publisher_idx, ctx.summary.sku_id);
        ecpm_bid(
            self.schedule.coef_at(ctx.time_of_day_us),
            ctr,
            ctx.request.bid_click,
            self.ceiling_fen,
        )
    }

    fn observe_impression(&mut self, publisher: u32, sku_id: u64) {
        self.estimator.on_impression(publisher, sku_id);
    }

    fn observe_click(&mut self, publisher: u32, sku_id: u64) {
        self.estimator.on_click(publisher, sku_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_with_no_data_is_the_prior_mean() {
        let e = CtrEstimator::new(1.0, 99.0, 100);
        assert!((e.estimate(0, 42) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn estimate_follows_the_smoothed_ratio() {
        let mut e = CtrEstimator::new(1.0, 99.0, 100);
        for _ in 0..100 {
            e.on_impression(0, 42);
        }
        for _ in 0..5 {
            e.on_click(0, 42);
        }
        assert!((e.estimate(0, 42) - 6.0 / 200.0).abs() < 1e-12);
        // Bucketing: sku 43 shares bucket 0 with sku 42.
        assert_eq!(e.estimate(0, 43), e.estimate(0, 42));
        // Different publisher is a different bucket.
        assert!((e.estimate(1, 42) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn estimate_stays_strictly_inside_unit_interval() {
        let mut e = CtrEstimator::new(1.0, 99.0, 10);
        for _ in 0..10_000 {
            e.on_impression(0, 5);
            e.on_click(0, 5);
        }
        let v = e.estimate(0, 5);
        assert!(v > 0.0 && v < 1.0);
        let z = CtrEstimator::new(1.0, 99.0, 10).estimate(7, 7);
        assert!(z > 0.0 && z < 1.0);
    }

    #[test]
    fn ecpm_bid_examples() {
        assert_eq!(ecpm_bid(1.0, 0.01, Money::from_fen(1000), 200), 10);
        assert_eq!(ecpm_bid(1.0, 0.0, Money::from_fen(1000), 200), 0);
        assert_eq!(ecpm_bid(2.0, 0.5, Money::from_fen(1000), 200), 200);
    }

    #[test]
    fn ecpm_bid_is_monotone_in_each_argument() {
        let mut prev = 0;
        for coef in [0.5, 1.0, 1.5, 2.0] {
            let b = ecpm_bid(coef, 0.01, Money::from_fen(2000), 400);
            assert!(b >= prev);
            prev = b;
        }
        prev = 0;
        for ctr in [0.0, 0.005, 0.01, 0.05] {
            let b = ecpm_bid(1.0, ctr, Money::from_fen(2000), 400);
            assert!(b >= prev);
            prev = b;
        }
        prev = 0;
        for fen in [100, 500, 1000, 4000] {
            let b = ecpm_bid(1.0, 0.01, Money::from_fen(fen), 400);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn schedule_must_tile_the_day() {
        let ok = CoefSchedule::new(
            vec![
                CoefSpan { start_sec: 0, end_sec: 3600, coef: 1.2 },
                CoefSpan { start_sec: 3600, end_sec: 86_400, coef: 0.9 },
            ],
            86_400,
        )
        .unwrap();
        assert_eq!(ok.coef_at(0), 1.2);
        assert_eq!(ok.coef_at(3_599_999_999), 1.2);
        assert_eq!(ok.coef_at(3_600_000_000), 0.9);

        assert!(CoefSchedule::new(
            vec![CoefSpan { start_sec: 0, end_sec: 3600, coef: 1.0 }],
            86_400
        )
        .is_err());
        assert!(CoefSchedule::new(
            vec![
                CoefSpan { start_sec: 0, end_sec: 5000, coef: 1.0 },
                CoefSpan { start_sec: 4000, end_sec: 86_400, coef: 1.0 },
            ],
            86_400
        )
        .is_err());
        assert!(CoefSchedule::new(
            vec![CoefSpan { start_sec: 0, end_sec: 86_400, coef: 0.0 }],
            86_400
        )
        .is_err());
    }

    #[test]
    fn shared_estimator_supports_concurrent_readers() {
        use std::sync::Arc;
        let shared = Arc::new(SharedCtrEstimator::new(CtrEstimator::new(1.0, 99.0, 100)));
        let writer = {
            let s = Arc::clone(&shared);
            std::thread::spawn(move || {
                for _ in 0..2000 {
                    s.on_impression(0, 10);
                }
            })
        };
        let readers: Vec<_> = (0..3)
            .map(|_| {
                let s = Arc::clone(&shared);
                std::thread::spawn(move || {
                    for _ in 0..2000 {
                        let v = s.estimate(0, 10);
                        assert!(v > 0.0 && v < 1.0);
                    }
                })
            })
            .collect();
        writer.join().unwrap();
        for r in readers {
            r.join().unwrap();
        }
        assert!(shared.estimate(0, 10) < 0.01);
    }
}
