//! Fixed-point currency and the discrete bid grid.
//!
//! All accounting runs on integer micro-CNY so that sums like
//! `profit = revenue - expense` hold exactly. Bids live on the coarser
//! 0.01 grid (one fen) and are addressed by action index: action `a`
//! means a bid of `a` fen.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

/// Micro-CNY per CNY.
pub const MICROS_PER_CNY: i64 = 1_000_000;
/// Micro-CNY per fen (0.01 CNY), the bid grid step.
pub const MICROS_PER_FEN: i64 = 10_000;

/// An exact amount of currency in integer micro-CNY.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    /// Round a CNY float to the nearest micro-CNY.
    pub fn from_cny(cny: f64) -> Money {
        Money((cny * MICROS_PER_CNY as f64).round() as i64)
    }

    /// Exact amount from a whole number of fen.
    pub fn from_fen(fen: i64) -> Money {
        Money(fen * MICROS_PER_FEN)
    }

    pub fn micros(self) -> i64 {
        self.0
    }

    pub fn to_cny(self) -> f64 {
        self.0 as f64 / MICROS_PER_CNY as f64
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    /// True when the amount sits exactly on the 0.01 bid grid.
    pub fn on_fen_grid(self) -> bool {
        self.0 % MICROS_PER_FEN == 0
    }

    /// Render with two decimals; requires a fen-grid amount.
    pub fn format_fen2(self) -> String {
        debug_assert!(self.on_fen_grid());
        let fen = self.0 / MICROS_PER_FEN;
        format!("{}.{:02}", fen / 100, (fen % 100).abs())
    }
}

impl fmt::Display for Money {
    /// Fixed six-decimal rendering, stable for CSV diffing.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(
            f,
            "{sign}{}.{:06}",
            abs / MICROS_PER_CNY as u64,
            abs % MICROS_PER_CNY as u64
        )
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

/// Bid amount for an action index: `a` fen.
pub fn action_to_money(action: usize) -> Money {
    Money::from_fen(action as i64)
}

/// Nearest action for an arbitrary CNY amount, clamped to `[0, ceiling]`.
///
/// `ceiling_fen` is the bid ceiling expressed in fen, i.e. the highest
/// legal action index.
pub fn cny_to_action_clamped(cny: f64, ceiling_fen: usize) -> usize {
    let fen = (cny * 100.0).round();
    if fen <= 0.0 {
        0
    } else {
        (fen as usize).min(ceiling_fen)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_sub_cent_amounts() {
        let e = Money::from_cny(0.0003);
        assert_eq!(e.micros(), 300);
        assert_eq!((Money::ZERO - e).to_cny(), -0.0003);
    }

    #[test]
    fn display_is_fixed_width() {
        assert_eq!(Money(300).to_string(), "0.000300");
        assert_eq!(Money(-10_500_000).to_string(), "-10.500000");
        assert_eq!(Money::from_fen(30).to_string(), "0.300000");
    }

    #[test]
    fn fen_grid_rendering() {
        assert_eq!(Money::from_fen(1000).format_fen2(), "10.00");
        assert_eq!(Money::from_fen(3).format_fen2(), "0.03");
        assert_eq!(Money::from_fen(650).format_fen2(), "6.50");
    }

    #[test]
    fn action_round_trip() {
        assert_eq!(action_to_money(11).to_cny(), 0.11);
        assert_eq!(cny_to_action_clamped(0.114, 200), 11);
        assert_eq!(cny_to_action_clamped(0.115, 200), 12);
        assert_eq!(cny_to_action_clamped(9.0, 200), 200);
        assert_eq!(cny_to_action_clamped(-0.2, 200), 0);
    }

    #[test]
    fn sums_are_exact() {
        let parts = [Money(300), Money(-500), Money(10_000_000)];
        let total: Money = parts.iter().copied().sum();
        assert_eq!(total, Money(9_999_800));
    }
}
