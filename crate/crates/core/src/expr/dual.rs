//! Scalar types the expression evaluator is generic over.
//!
//! [`DualValue`] carries a value together with the first and second
//! derivatives along a single seeded direction, which is enough for
//! Jacobians (first part only) and, via polarization, for mixed second
//! derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Number:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
    /// True when every derivative part vanishes.
    fn is_constant(&self) -> bool;
    /// Apply a scalar function given its value and first two derivatives at
    /// `self.value()`.
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self;
    fn is_finite(&self) -> bool;
}

impl Number for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn is_constant(&self) -> bool {
        true
    }
    fn chain(self, f: f64, _df: f64, _d2f: f64) -> Self {
        f
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

/// Truncated second-order jet `(f, f', f'')` along one direction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualValue {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

impl DualValue {
    pub fn new(value: f64, first: f64, second: f64) -> Self {
        Self {
            value,
            first,
            second,
        }
    }

    pub fn variable(value: f64, seed: f64) -> Self {
        Self::new(value, seed, 0.0)
    }
}

impl Number for DualValue {
    fn constant(v: f64) -> Self {
        Self::new(v, 0.0, 0.0)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn is_constant(&self) -> bool {
        self.first == 0.0 && self.second == 0.0
    }
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        Self::new(
            f,
            df * self.first,
            d2f * self.first * self.first + df * self.second,
        )
    }
    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.first.is_finite() && self.second.is_finite()
    }
}

impl Add for DualValue {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(
            self.value + o.value,
            self.first + o.first,
            self.second + o.second,
        )
    }
}

impl Sub for DualValue {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(
            self.value - o.value,
            self.first - o.first,
            self.second - o.second,
        )
    }
}

impl Mul for DualValue {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.value * o.value,
            self.first * o.value + self.value * o.first,
            self.second * o.value + 2.0 * self.first * o.first + self.value * o.second,
        )
    }
}

impl Div for DualValue {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.value / o.value;
        let q1 = (self.first - q * o.first) / o.value;
        let q2 = (self.second - 2.0 * q1 * o.first - q * o.second) / o.value;
        Self::new(q, q1, q2)
    }
}

impl Neg for DualValue {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.first, -self.second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = DualValue::variable(3.0, 1.0);
        let y = x * x * x;
        assert_eq!(y.value, 27.0);
        assert_eq!(y.first, 27.0);
        assert_eq!(y.second, 18.0);
    }

    #[test]
    fn quotient_rule() {
        let x = DualValue::variable(2.0, 1.0);
        let y = DualValue::constant(1.0) / x;
        assert!((y.first + 0.25).abs() < 1e-15);
        assert!((y.second - 0.25).abs() < 1e-15);
    }
}
