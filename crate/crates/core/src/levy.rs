//! Local Lévy measure of the symmetric random measure, described by its
//! upper tail `U(x) = rho(x, inf)`.
//!
//! Only the pure power family `U(x) = c * x^(-alpha)` ships. Code that only
//! needs a tail goes through [`TailFunction`], so other regularly varying
//! tails can be added without touching the consumers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nonincreasing, right-continuous tail function on `(0, inf)`.
pub trait TailFunction {
    fn tail_at(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> TailFunction for F {
    fn tail_at(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Power-law local Lévy measure: `U(x) = scale * x^(-alpha)` for `x > 0`.
///
/// `p0` is the lower-tail exponent, i.e. `x^p0 * U(x) -> 0` as `x -> 0`.
/// For the power family this holds exactly whenever `p0 > alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyTail {
    alpha: f64,
    scale: f64,
    p0: f64,
}

impl LevyTail {
    pub fn new(alpha: f64, scale: f64, p0: f64) -> Result<Self> {
        let lt = LevyTail { alpha, scale, p0 };
        lt.validate()?;
        Ok(lt)
    }

    /// Tail with `p0` at the midpoint of the admissible interval `(alpha, 2)`.
    pub fn with_default_p0(alpha: f64, scale: f64) -> Result<Self> {
        Self::new(alpha, scale, default_p0(alpha))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::domain(format!(
                "levy.alpha must lie in (0,2), got {}",
                self.alpha
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::domain(format!(
                "levy.scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.p0 > self.alpha && self.p0 < 2.0) {
            return Err(Error::domain(format!(
                "levy.p0 must lie in (alpha,2) = ({},2), got {}",
                self.alpha, self.p0
            )));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    /// `U(x) = scale * x^(-alpha)`.
    pub fn tail(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::domain(format!("tail requires x > 0, got {x}")));
        }
        Ok(self.tail_unchecked(x))
    }

    /// Right-continuous inverse `inf{x > 0 : U(x) <= y} = (scale / y)^(1/alpha)`.
    pub fn inverse_tail(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::domain(format!("inverse_tail requires y > 0, got {y}")));
        }
        Ok(self.inverse_tail_unchecked(y))
    }

    #[inline]
    pub(crate) fn tail_unchecked(&self, x: f64) -> f64 {
        self.scale * x.powf(-self.alpha)
    }

    #[inline]
    pub(crate) fn inverse_tail_unchecked(&self, y: f64) -> f64 {
        (self.scale / y).powf(1.0 / self.alpha)
    }

    /// Split into the jumps above and below magnitude one.
    pub fn split(&self) -> SplitTail {
        SplitTail { whole: *self }
    }
}

impl TailFunction for LevyTail {
    fn tail_at(&self, x: f64) -> f64 {
        self.tail_unchecked(x)
    }
}

pub fn default_p0(alpha: f64) -> f64 {
    0.5 * (alpha + 2.0)
}

/// The big-jump (`|x| > 1`) and small-jump (`|x| <= 1`) parts of a tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitTail {
    whole: LevyTail,
}

impl SplitTail {
    /// Tail of the measure restricted to `|x| > 1`: constant `U(1)` below one.
    pub fn big(&self, x: f64) -> f64 {
        self.whole.tail_unchecked(x.max(1.0))
    }

    /// Tail of the measure restricted to `|x| <= 1`: zero from one upwards.
    pub fn small(&self, x: f64) -> f64 {
        if x >= 1.0 {
            0.0
        } else {
            self.whole.tail_unchecked(x) - self.whole.tail_unchecked(1.0)
        }
    }

    pub fn big_part(&self) -> impl TailFunction + '_ {
        move |x: f64| self.big(x)
    }

    pub fn small_part(&self) -> impl TailFunction + '_ {
        move |x: f64| self.small(x)
    }
}

/// Tail of the image of a Lévy measure under `x -> x^2`, folded onto the
/// positive half-line: `x -> 2 * U(sqrt(x))`.
#[derive(Debug, Clone, Copy)]
pub struct SquaredTail<T> {
    inner: T,
}

impl<T: TailFunction> TailFunction for SquaredTail<T> {
    fn tail_at(&self, x: f64) -> f64 {
        2.0 * self.inner.tail_at(x.sqrt())
    }
}

pub fn squared_transform<T: TailFunction>(tail: T) -> SquaredTail<T> {
    SquaredTail { inner: tail }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
        let (a, b) = (lo.ln(), hi.ln());
        (0..points)
            .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
            .collect()
    }

    #[test]
    fn tail_examples() {
        let lt = LevyTail::with_default_p0(1.5, 1.0).unwrap();
        assert_eq!(lt.tail(1.0).unwrap(), 1.0);
        assert!((lt.tail(4.0).unwrap() - 0.125).abs() < 1e-15);
        let lt = LevyTail::with_default_p0(0.8, 2.0).unwrap();
        let v = lt.tail(2.0).unwrap();
        assert!((v - 2.0 * 2f64.powf(-0.8)).abs() < 1e-15);
        assert!((v - 1.1487).abs() < 1e-4);
    }

    #[test]
    fn tail_rejects_nonpositive() {
        let lt = LevyTail::with_default_p0(1.5, 1.0).unwrap();
        assert!(matches!(lt.tail(0.0), Err(Error::Domain(_))));
        assert!(matches!(lt.tail(-1.0), Err(Error::Domain(_))));
        assert!(matches!(lt.inverse_tail(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn inverse_examples() {
        let lt = LevyTail::with_default_p0(1.5, 1.0).unwrap();
        assert_eq!(lt.inverse_tail(1.0).unwrap(), 1.0);
        assert!((lt.inverse_tail(0.125).unwrap() - 4.0).abs() < 1e-12);
        for &x in &[0.5, 1.0, 2.0, 10.0] {
            let y = lt.tail(x).unwrap();
            assert!((lt.inverse_tail(y).unwrap() - x).abs() < 1e-12 * x);
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(LevyTail::new(0.0, 1.0, 1.0).is_err());
        assert!(LevyTail::new(2.0, 1.0, 1.9).is_err());
        assert!(LevyTail::new(1.5, 0.0, 1.75).is_err());
        assert!(LevyTail::new(1.5, 1.0, 1.5).is_err());
        assert!(LevyTail::new(1.5, 1.0, 2.0).is_err());
        assert_eq!(LevyTail::with_default_p0(1.5, 1.0).unwrap().p0(), 1.75);
    }

    #[test]
    fn lower_tail_condition_on_grid() {
        for &alpha in &[0.3, 1.0, 1.5, 1.9] {
            let lt = LevyTail::with_default_p0(alpha, 1.0).unwrap();
            let mut prev = f64::INFINITY;
            for e in 1..=6 {
                let x = 10f64.powi(-e);
                let v = x.powf(lt.p0()) * lt.tail(x).unwrap();
                assert!(v < prev);
                prev = v;
            }
            assert!(prev < 10f64.powf(-6.0 * (lt.p0() - alpha)) * 1.000001);
        }
    }

    #[test]
    fn round_trip_and_index_on_grid() {
        for &alpha in &[0.5, 1.0, 1.5] {
            let lt = LevyTail::with_default_p0(alpha, 1.7).unwrap();
            for x in log_grid(1e-3, 1e3, 61) {
                let back = lt.inverse_tail(lt.tail(x).unwrap()).unwrap();
                assert!(((back - x) / x).abs() <= 1e-12);
                let idx = (lt.tail(x).unwrap() / lt.tail(2.0 * x).unwrap()).log2();
                assert!((idx - alpha).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn split_examples_and_conservation() {
        let lt = LevyTail::with_default_p0(1.5, 1.0).unwrap();
        let s = lt.split();
        assert!((s.big(2.0) - 2f64.powf(-1.5)).abs() < 1e-15);
        assert_eq!(s.small(2.0), 0.0);
        assert_eq!(s.big(0.5), 1.0);
        assert!((s.small(0.5) - (2f64.powf(1.5) - 1.0)).abs() < 1e-14);
        for x in log_grid(1e-3, 1e3, 61) {
            let total = lt.tail(x).unwrap();
            assert!((s.big(x) + s.small(x) - total).abs() <= 1e-12 * total);
        }
    }

    #[test]
    fn squared_transform_examples() {
        let lt = LevyTail::with_default_p0(1.5, 1.0).unwrap();
        let sq = squared_transform(lt);
        assert!((sq.tail_at(16.0) - 0.25).abs() < 1e-15);
        assert_eq!(sq.tail_at(1.0), 2.0 * lt.tail(1.0).unwrap());
        let grid = [0.1, 1.0, 10.0, 100.0];
        for w in grid.windows(2) {
            assert!(sq.tail_at(w[1]) <= sq.tail_at(w[0]));
        }
        // big part: constant-continued below 1, still monotone after squaring
        let split = lt.split();
        let sq_big = squared_transform(split.big_part());
        for w in grid.windows(2) {
            assert!(sq_big.tail_at(w[1]) <= sq_big.tail_at(w[0]));
        }
    }
}
