//! Forward-mode dual numbers.
//!
//! Every loss in this crate is written once, generically over [`Scalar`], and
//! evaluated either with plain `f64` (values only) or with [`Dual<N>`] to get
//! exact first derivatives with respect to `N` seeded variables. Branches
//! (`min`, `max`, `clamp`, clipping side tests) are decided on the value, so
//! at a kink the derivative of the active piece is returned.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Arithmetic needed by the geometry and loss code.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
{
    fn cst(v: f64) -> Self;
    fn val(self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    fn abs(self) -> Self {
        if self.val() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other.val() < self.val() {
            other
        } else {
            self
        }
    }

    fn max(self, other: Self) -> Self {
        if other.val() > self.val() {
            other
        } else {
            self
        }
    }

    /// Saturated pieces are constants, so their derivative is zero.
    fn clamp(self, lo: f64, hi: f64) -> Self {
        let v = self.val();
        if v < lo {
            Self::cst(lo)
        } else if v > hi {
            Self::cst(hi)
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
}

/// A value together with its partial derivatives with respect to `N` variables.
#[derive(Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    /// The `index`-th independent variable at value `v`.
    pub fn variable(v: f64, index: usize) -> Self {
        let mut d = [0.0; N];
        d[index] = 1.0;
        Self { v, d }
    }

    #[inline]
    fn chain(self, v: f64, slope: f64) -> Self {
        let mut d = self.d;
        for g in &mut d {
            *g *= slope;
        }
        Self { v, d }
    }
}

impl<const N: usize> fmt::Debug for Dual<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dual({} ; {:?})", self.v, self.d)
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d) {
            *a += b;
        }
        Self {
            v: self.v + rhs.v,
            d,
        }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d) {
            *a -= b;
        }
        Self {
            v: self.v - rhs.v,
            d,
        }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for (i, g) in d.iter_mut().enumerate() {
            *g = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Self {
            v: self.v * rhs.v,
            d,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.v;
        let v = self.v * inv;
        let mut d = [0.0; N];
        for (i, g) in d.iter_mut().enumerate() {
            *g = (self.d[i] - v * rhs.d[i]) * inv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.v, -1.0)
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        Self {
            v: self.v + rhs,
            d: self.d,
        }
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        Self {
            v: self.v - rhs,
            d: self.d,
        }
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.chain(self.v * rhs, rhs)
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.chain(self.v / rhs, 1.0 / rhs)
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const N: usize> Scalar for Dual<N> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    #[inline]
    fn val(self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        // sqrt is not differentiable at 0; the zero subgradient keeps
        // coincident points from producing infinities.
        let slope = if r > 0.0 { 0.5 / r } else { 0.0 };
        self.chain(r, slope)
    }
    #[inline]
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D2 = Dual<2>;

    #[test]
    fn product_and_quotient_rules() {
        let x = D2::variable(3.0, 0);
        let y = D2::variable(2.0, 1);
        let f = x * y / (x + y);
        // f = xy/(x+y); df/dx = y^2/(x+y)^2, df/dy = x^2/(x+y)^2
        assert!((f.v - 1.2).abs() < 1e-15);
        assert!((f.d[0] - 4.0 / 25.0).abs() < 1e-15);
        assert!((f.d[1] - 9.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn trig_and_sqrt() {
        let t = D2::variable(0.3, 0);
        let s = t.sin() * t.cos();
        assert!((s.d[0] - (2.0 * 0.3f64).cos()).abs() < 1e-14);
        let r = (t * t + 1.0).sqrt();
        assert!((r.d[0] - 0.3 / (1.09f64).sqrt()).abs() < 1e-14);
        assert_eq!(D2::constant(0.0).sqrt().d, [0.0, 0.0]);
    }

    #[test]
    fn clamp_saturation_has_zero_slope() {
        let x = D2::variable(1.5, 0);
        assert_eq!(x.clamp(0.0, 1.0).d, [0.0, 0.0]);
        assert_eq!(x.clamp(0.0, 2.0).d, [1.0, 0.0]);
    }
}
