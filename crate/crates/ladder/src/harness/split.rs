//! Deterministic hash-based traffic split.
//!
//! Assignment is a pure function of the auction id, so it is stable
//! across runs, replays, and processes.

use super::Arm;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// 64-bit avalanche finalizer (splitmix64).
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Map an auction id to an arm: the hash lands in [0,1) and the ladder
/// arm takes the sub-`split_fraction` slice.
pub fn ab_assign(auction_id: u64, split_fraction: f64) -> Arm {
    let u = (splitmix64(auction_id) >> 11) as f64 / (1u64 << 53) as f64;
    if u < split_fraction {
        Arm::Ladder
    } else {
        Arm::Baseline
    }
}

/// Per-day split overrides over a default fraction (a launch ramp, for
/// instance).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSchedule {
    default: f64,
    overrides: BTreeMap<u32, f64>,
}

impl SplitSchedule {
    pub fn new(default: f64, overrides: impl IntoIterator<Item = (u32, f64)>) -> SplitSchedule {
        SplitSchedule { default, overrides: overrides.into_iter().collect() }
    }

    pub fn fraction_for_day(&self, day: u32) -> f64 {
        self.overrides.get(&day).copied().unwrap_or(self.default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_split_is_always_baseline() {
        for id in 0..10_000 {
            assert_eq!(ab_assign(id, 0.0), Arm::Baseline);
        }
    }

    #[test]
    fn full_split_is_always_ladder() {
        for id in 0..10_000 {
            assert_eq!(ab_assign(id, 1.0), Arm::Ladder);
        }
    }

    #[test]
    fn assignment_is_deterministic() {
        for id in [1u64, 42, 1_000_000_007] {
            assert_eq!(ab_assign(id, 0.37), ab_assign(id, 0.37));
        }
    }

    #[test]
    fn ladder_fraction_tracks_the_split() {
        let n = 1_000_000u64;
        let ladder = (0..n).filter(|&id| ab_assign(id, 0.1) == Arm::Ladder).count();
        let frac = ladder as f64 / n as f64;
        assert!((frac - 0.1).abs() <= 0.005, "ladder fraction {frac}");
    }

    #[test]
    fn schedule_overrides_specific_days() {
        let s = SplitSchedule::new(0.1, [(7, 0.9)]);
        assert_eq!(s.fraction_for_day(0), 0.1);
        assert_eq!(s.fraction_for_day(7), 0.9);
        assert_eq!(s.fraction_for_day(8), 0.1);
    }
}
