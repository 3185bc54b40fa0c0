//! Scalar abstraction for the cohesion arithmetic.
//!
//! Every index is a mean of reciprocals of small positive integers, so the
//! engine only needs field operations plus a way to lift a count into the
//! scalar. Floating types give the usual reals; [`Rational64`] gives exact
//! values, which is what the exact `CoI(AJ) == 1` checks rely on.

use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::{Num, Signed, ToPrimitive};

/// Numeric type the metrics engine is generic over.
pub trait Scalar: Num + Copy + PartialOrd + Debug {
    /// Lift a module or functionality count into the scalar.
    fn from_count(n: usize) -> Self;

    /// Lossy conversion for display and serialization.
    fn to_f64(self) -> f64;

    /// Round to hundredths, half away from zero, returning the integer
    /// number of hundredths (`0.375 -> 38`).
    fn hundredths(self) -> i64;
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_count(n: usize) -> Self {
                n as $t
            }

            fn to_f64(self) -> f64 {
                self as f64
            }

            fn hundredths(self) -> i64 {
                let scaled = self as f64 * 100.0;
                let floor = scaled.floor();
                let frac = scaled - floor;
                // Values that are exact ties in decimal (k/200) are not exact
                // in binary; treat anything within a few ulps of .5 as a tie.
                let tie = (frac - 0.5).abs() <= 1e-9 * scaled.abs().max(1.0);
                if tie {
                    if scaled >= 0.0 {
                        floor as i64 + 1
                    } else {
                        floor as i64
                    }
                } else {
                    scaled.round() as i64
                }
            }
        }
    };
}

float_scalar!(f32);
float_scalar!(f64);

impl Scalar for Rational64 {
    fn from_count(n: usize) -> Self {
        Rational64::from_integer(n as i64)
    }

    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn hundredths(self) -> i64 {
        let scaled = self * Rational64::from_integer(100);
        let half = Rational64::new(1, 2);
        let rounded = if scaled.is_negative() {
            (scaled - half).ceil()
        } else {
            (scaled + half).floor()
        };
        rounded.to_integer()
    }
}

/// Render a hundredths count as fixed-point text (`38 -> "0.38"`).
pub fn format_hundredths(h: i64) -> String {
    let sign = if h < 0 { "-" } else { "" };
    let abs = h.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_away_from_zero() {
        assert_eq!(0.375f64.hundredths(), 38);
        assert_eq!(0.6875f64.hundredths(), 69);
        assert_eq!((-0.375f64).hundredths(), -38);
        assert_eq!(0.285f64.hundredths(), 29);
        assert_eq!(Rational64::new(57, 200).hundredths(), 29);
        assert_eq!(Rational64::new(3, 8).hundredths(), 38);
        assert_eq!(Rational64::new(-3, 8).hundredths(), -38);
        assert_eq!(Rational64::new(1, 3).hundredths(), 33);
        assert_eq!((1.0f32 / 3.0).hundredths(), 33);
    }

    #[test]
    fn fixed_point_text() {
        assert_eq!(format_hundredths(38), "0.38");
        assert_eq!(format_hundredths(100), "1.00");
        assert_eq!(format_hundredths(-5), "-0.05");
        assert_eq!(format_hundredths(0), "0.00");
    }
}
