//! Per-day, per-arm accounting in exact integer money.
//!
//! Revenue and expense of an auction are booked to its impression day,
//! so `profit = revenue - expense` holds exactly per row once the
//! day's click window has drained.

use super::Arm;
use crate::money::Money;
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSnapshot {
    pub day: u32,
    pub arm: Arm,
    pub auctions: u64,
    pub impressions_won: u64,
    pub clicks: u64,
    pub profit: Money,
    pub revenue: Money,
    pub expense: Money,
    pub conversion_value: Money,
    pub ctr: f64,
    pub roi: f64,
    pub mean_q: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    auctions: u64,
    impressions_won: u64,
    clicks: u64,
    revenue: Money,
    expense: Money,
    conversion_value: Money,
    q_sum: f64,
    q_count: u64,
}

/// Mutable accounting ledger keyed by (day, arm).
#[derive(Debug, Clone, Default)]
pub struct MetricsBook {
    cells: BTreeMap<(u32, Arm), Accum>,
}

impl MetricsBook {
    pub fn new() -> MetricsBook {
        MetricsBook::default()
    }

    pub fn book_auction(&mut self, day: u32, arm: Arm) {
        self.cells.entry((day, arm)).or_default().auctions += 1;
    }

    /// Book a settled auction's money onto its impression day.
    pub fn book_settled(
        &mut self,
        day: u32,
        arm: Arm,
        won: bool,
        clicked: bool,
        expense: Money,
        income: Money,
        conversion_value: Money,
    ) {
        let a = self.cells.entry((day, arm)).or_default();
        if won {
            a.impressions_won += 1;
            a.expense += expense;
            if clicked {
                a.clicks += 1;
                a.revenue += income;
                a.conversion_value += conversion_value;
            }
        }
    }

    /// Record the greedy value behind one served auction.
    pub fn book_q(&mut self, day: u32, arm: Arm, q: f64) {
        let a = self.cells.entry((day, arm)).or_default();
        a.q_sum += q;
        a.q_count += 1;
    }

    /// Materialize rows for days `0..days` and both arms, zero-filled
    /// where nothing happened.
    pub fn snapshots(&self, days: u32) -> Vec<MetricsSnapshot> {
        let mut out = Vec::with_capacity(days as usize * 2);
        for day in 0..days {
            for arm in [Arm::Ladder, Arm::Baseline] {
                let a = self.cells.get(&(day, arm)).copied().unwrap_or_default();
                out.push(MetricsSnapshot {
                    day,
                    arm,
                    auctions: a.auctions,
                    impressions_won: a.impressions_won,
                    clicks: a.clicks,
                    profit: a.revenue - a.expense,
                    revenue: a.revenue,
                    expense: a.expense,
                    conversion_value: a.conversion_value,
                    ctr: if a.impressions_won > 0 {
                        a.clicks as f64 / a.impressions_won as f64
                    } else {
                        0.0
                    },
                    roi: if a.revenue > Money::ZERO {
                        a.conversion_value.to_cny() / a.revenue.to_cny()
                    } else {
                        0.0
                    },
                    mean_q: if a.q_count > 0 { a.q_sum / a.q_count as f64 } else { 0.0 },
                });
            }
        }
        out
    }
}

pub const METRICS_HEADER: &str =
    "day,arm,auctions,impressions_won,clicks,profit,revenue,expense,conversion_value,ctr,roi,mean_q";

/// Write the versioned metrics CSV; byte-stable for identical inputs.
pub fn write_metrics_csv<W: Write>(rows: &[MetricsSnapshot], mut w: W) -> std::io::Result<()> {
    writeln!(w, "# ladder-metrics-v1")?;
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6}",
            r.day,
            r.arm.label(),
            r.auctions,
            r.impressions_won,
            r.clicks,
            r.profit,
            r.revenue,
            r.expense,
            r.conversion_value,
            r.ctr,
            r.roi,
            r.mean_q
        )?;
    }
    Ok(())
}

/// Min-max normalization of each money/ratio series into [0,1] across
/// all rows, mirroring how dashboards compare arms without scales.
/// Constant series normalize to zero.
pub fn write_normalized_csv<W: Write>(rows: &[MetricsSnapshot], mut w: W) -> std::io::Result<()> {
    writeln!(w, "# ladder-metrics-normalized-v1 (per-column min-max)")?;
    writeln!(w, "day,arm,profit,revenue,expense,ctr,roi,mean_q")?;
    let cols: [&dyn Fn(&MetricsSnapshot) -> f64; 6] = [
        &|r| r.profit.to_cny(),
        &|r| r.revenue.to_cny(),
        &|r| r.expense.to_cny(),
        &|r| r.ctr,
        &|r| r.roi,
        &|r| r.mean_q,
    ];
    let ranges: Vec<(f64, f64)> = cols
        .iter()
        .map(|f| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for r in rows {
                let v = f(r);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        })
        .collect();
    let norm = |v: f64, (lo, hi): (f64, f64)| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    for r in rows {
        write!(w, "{},{}", r.day, r.arm.label())?;
        for (f, range) in cols.iter().zip(&ranges) {
            write!(w, ",{:.6}", norm(f(r), *range))?;
        }
        writeln!(w)?;
    }
    Ok(())
}
