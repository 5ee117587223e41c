//! Scalars for forward-mode differentiation.
//!
//! [`Scalar`] abstracts over `f64` and [`Dual`]. `Dual<T>` is generic over its
//! own component type, so `Dual<Dual<f64>>` carries second derivatives; the
//! geometry pipeline relies on that to differentiate quantities that are
//! themselves built from first derivatives (curvature, contorsion, β).

use core::fmt::Debug;
use core::ops::{Add, Div, Mul, Neg, Sub};

/// Real-like number usable throughout the geometry pipeline.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;

    /// Innermost real value.
    fn re(&self) -> f64;

    /// True iff every component (value and all tangent parts) is finite.
    fn is_finite(&self) -> bool;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn atan2(self, x: Self) -> Self;
    fn powi(self, n: i32) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn scale(self, k: f64) -> Self {
        self * Self::from_f64(k)
    }

    /// `self^e` for a real exponent, through `exp(e ln self)`; requires `self > 0`.
    fn powf(self, e: Self) -> Self {
        (e * self.ln()).exp()
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn sin(self) -> Self {
        libm::sin(self)
    }
    fn cos(self) -> Self {
        libm::cos(self)
    }
    fn tan(self) -> Self {
        libm::tan(self)
    }
    fn exp(self) -> Self {
        libm::exp(self)
    }
    fn ln(self) -> Self {
        libm::log(self)
    }
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    fn atan2(self, x: Self) -> Self {
        libm::atan2(self, x)
    }
    fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { 1.0 / self } else { self };
        let mut k = n.unsigned_abs();
        let mut acc = 1.0;
        while k > 0 {
            if k & 1 == 1 {
                acc *= base;
            }
            base *= base;
            k >>= 1;
        }
        acc
    }
    fn powf(self, e: Self) -> Self {
        libm::pow(self, e)
    }
}

/// Dual number `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }

    pub fn constant(re: T) -> Self {
        Dual { re, eps: T::zero() }
    }

    pub fn variable(re: T) -> Self {
        Dual { re, eps: T::one() }
    }
}

/// Lift a slice into dual numbers seeded along coordinate `dir`.
pub fn seed<T: Scalar>(x: &[T], dir: usize) -> alloc::vec::Vec<Dual<T>> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| if i == dir { Dual::variable(v) } else { Dual::constant(v) })
        .collect()
}

/// Lift a slice into dual numbers seeded along an arbitrary direction.
pub fn seed_along<T: Scalar>(x: &[T], dir: &[T]) -> alloc::vec::Vec<Dual<T>> {
    x.iter().zip(dir).map(|(&v, &d)| Dual::new(v, d)).collect()
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Dual::new(q, (self.eps - q * o.eps) / o.re)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn from_f64(x: f64) -> Self {
        Dual::constant(T::from_f64(x))
    }
    fn re(&self) -> f64 {
        self.re.re()
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.eps * self.re.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -(self.eps * self.re.sin()))
    }
    fn tan(self) -> Self {
        let t = self.re.tan();
        Dual::new(t, self.eps * (T::one() + t * t))
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, self.eps * e)
    }
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.eps / self.re)
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.eps / (s + s))
    }
    fn atan2(self, x: Self) -> Self {
        let r2 = x.re * x.re + self.re * self.re;
        Dual::new(self.re.atan2(x.re), (x.re * self.eps - self.re * x.eps) / r2)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        let lower = self.re.powi(n - 1);
        Dual::new(self.re.powi(n), self.eps * lower.scale(n as f64))
    }
    fn powf(self, e: Self) -> Self {
        let re = self.re.powf(e.re);
        let mut eps = e.re * self.re.powf(e.re - T::one()) * self.eps;
        if self.re.re() > 0.0 {
            eps = eps + re * self.re.ln() * e.eps;
        }
        Dual::new(re, eps)
    }
}
