//! Signed log-magnitude numbers for quantities like `e^{τT}·I` that leave the
//! range of `f64` long before the asymptotics of interest kick in.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Neg, Sub};

/// `sign · exp(ln_abs)`. Zero is `sign == 0` with `ln_abs == -inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    sign: i8,
    ln_abs: f64,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue {
        sign: 0,
        ln_abs: f64::NEG_INFINITY,
    };

    pub fn new(sign: i8, ln_abs: f64) -> Self {
        if sign == 0 || ln_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            Self {
                sign: sign.signum(),
                ln_abs,
            }
        }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self::new(if x > 0.0 { 1 } else { -1 }, x.abs().ln())
        }
    }

    /// `x · e^{shift}` without forming `e^{shift}`.
    pub fn from_scaled(x: f64, shift: f64) -> Self {
        let v = Self::from_f64(x);
        v.times_exp(shift)
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn ln_abs(&self) -> f64 {
        self.ln_abs
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn is_finite(&self) -> bool {
        self.sign == 0 || self.ln_abs.is_finite()
    }

    /// Multiply by `e^{a}`.
    pub fn times_exp(self, a: f64) -> Self {
        if self.sign == 0 {
            self
        } else {
            Self::new(self.sign, self.ln_abs + a)
        }
    }

    pub fn abs(self) -> Self {
        Self::new(self.sign.abs(), self.ln_abs)
    }

    /// Lossy conversion; underflows to zero and overflows to infinity.
    pub fn to_f64(self) -> f64 {
        f64::from(self.sign) * self.ln_abs.exp()
    }

    /// Sum of many terms with a single rescaling by the largest magnitude.
    pub fn sum<I: IntoIterator<Item = LogValue>>(terms: I) -> Self {
        let terms: Vec<LogValue> = terms.into_iter().filter(|t| !t.is_zero()).collect();
        let Some(max) = terms
            .iter()
            .map(|t| t.ln_abs)
            .max_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))
        else {
            return Self::ZERO;
        };
        let scaled: f64 = terms
            .iter()
            .map(|t| f64::from(t.sign) * (t.ln_abs - max).exp())
            .sum();
        Self::from_scaled(scaled, max)
    }
}

impl Default for LogValue {
    fn default() -> Self {
        Self::ZERO
    }
}

impl Add for LogValue {
    type Output = LogValue;
    fn add(self, rhs: LogValue) -> LogValue {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let m = self.ln_abs.max(rhs.ln_abs);
        let a = f64::from(self.sign) * (self.ln_abs - m).exp();
        let b = f64::from(rhs.sign) * (rhs.ln_abs - m).exp();
        LogValue::from_scaled(a + b, m)
    }
}

impl Neg for LogValue {
    type Output = LogValue;
    fn neg(self) -> LogValue {
        LogValue::new(-self.sign, self.ln_abs)
    }
}

impl Sub for LogValue {
    type Output = LogValue;
    fn sub(self, rhs: LogValue) -> LogValue {
        self + (-rhs)
    }
}

impl Mul for LogValue {
    type Output = LogValue;
    fn mul(self, rhs: LogValue) -> LogValue {
        if self.is_zero() || rhs.is_zero() {
            LogValue::ZERO
        } else {
            LogValue::new(self.sign * rhs.sign, self.ln_abs + rhs.ln_abs)
        }
    }
}

impl Mul<f64> for LogValue {
    type Output = LogValue;
    fn mul(self, rhs: f64) -> LogValue {
        self * LogValue::from_f64(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn beyond_f64_range() {
        let a = LogValue::from_scaled(3.0, 1000.0);
        let b = LogValue::from_scaled(-1.0, 1000.0);
        let s = a + b;
        assert_eq!(s.sign(), 1);
        assert!((s.ln_abs() - (2.0f64.ln() + 1000.0)).abs() < 1e-12);
        assert_eq!((a - a).sign(), 0);
    }

    proptest! {
        #[test]
        fn arithmetic_matches_f64(x in -1e3f64..1e3, y in -1e3f64..1e3) {
            let (lx, ly) = (LogValue::from_f64(x), LogValue::from_f64(y));
            let tol = 1e-12 * (x.abs() + y.abs()).max(1e-300);
            prop_assert!(((lx + ly).to_f64() - (x + y)).abs() <= tol);
            prop_assert!(((lx * ly).to_f64() - x * y).abs() <= 1e-12 * (x * y).abs());
            prop_assert!((LogValue::sum([lx, ly, lx]).to_f64() - (2.0 * x + y)).abs() <= 2.0 * tol);
        }
    }
}
