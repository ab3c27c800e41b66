//! Scalar abstractions used by the pointwise geometry kernels.
//!
//! The same pointwise formulas are evaluated with three number types:
//! plain `f64`, [`Dual`] (first-order variation along a direction in
//! immersion space, which gives exact linearizations of the discrete maps),
//! and [`Jet`] (second-order Taylor data in the parameter coordinates
//! (θ, φ), used to differentiate composite fields such as `V^i ∂_i F`).

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + std::fmt::Debug
{
    fn cst(v: f64) -> Self;
    fn re(&self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powf(self, p: f64) -> Self;

    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
}

/// First-order dual number `re + du·t`, `t² = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub const fn new(re: f64, du: f64) -> Self {
        Self { re, du }
    }

    #[inline]
    fn chain(self, f: f64, df: f64) -> Self {
        Self::new(f, df * self.du)
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.du + o.du)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        self.du += o.du;
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.du - o.du)
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.du * o.re + self.re * o.du)
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Self::new(q, (self.du - q * o.du) / o.re)
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.du)
    }
}

impl Scalar for Dual {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::new(v, 0.0)
    }
    #[inline]
    fn re(&self) -> f64 {
        self.re
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), 1.0 / self.re)
    }
    fn powf(self, p: f64) -> Self {
        let v = self.re.powf(p);
        self.chain(v, p * self.re.powf(p - 1.0))
    }
}

/// Second-order Taylor jet in the parameter coordinates (θ, φ).
///
/// `d = [∂θ, ∂φ]`, `h = [∂θθ, ∂θφ, ∂φφ]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: [f64; 2],
    pub h: [f64; 3],
}

impl Jet {
    pub const fn new(v: f64, d: [f64; 2], h: [f64; 3]) -> Self {
        Self { v, d, h }
    }

    /// Applies a scalar function with derivatives `f, f', f''`.
    #[inline]
    fn chain(self, f: f64, f1: f64, f2: f64) -> Self {
        let [a, b] = self.d;
        Self {
            v: f,
            d: [f1 * a, f1 * b],
            h: [
                f2 * a * a + f1 * self.h[0],
                f2 * a * b + f1 * self.h[1],
                f2 * b * b + f1 * self.h[2],
            ],
        }
    }
}

impl Add for Jet {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1]],
            h: [self.h[0] + o.h[0], self.h[1] + o.h[1], self.h[2] + o.h[2]],
        }
    }
}

impl AddAssign for Jet {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for Jet {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            v: -self.v,
            d: [-self.d[0], -self.d[1]],
            h: [-self.h[0], -self.h[1], -self.h[2]],
        }
    }
}

impl Mul for Jet {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let (a, b) = (self, o);
        Self {
            v: a.v * b.v,
            d: [a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1]],
            h: [
                a.h[0] * b.v + 2.0 * a.d[0] * b.d[0] + a.v * b.h[0],
                a.h[1] * b.v + a.d[0] * b.d[1] + a.d[1] * b.d[0] + a.v * b.h[1],
                a.h[2] * b.v + 2.0 * a.d[1] * b.d[1] + a.v * b.h[2],
            ],
        }
    }
}

impl Div for Jet {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let r = 1.0 / o.v;
        self * o.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl Scalar for Jet {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::new(v, [0.0; 2], [0.0; 3])
    }
    #[inline]
    fn re(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(self.v.ln(), r, -r * r)
    }
    fn powf(self, p: f64) -> Self {
        let x = self.v;
        self.chain(x.powf(p), p * x.powf(p - 1.0), p * (p - 1.0) * x.powf(p - 2.0))
    }
}

pub type Vec3<T> = [T; 3];

#[inline]
pub fn dot<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn axpy<T: Scalar>(k: T, a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [k * a[0] + b[0], k * a[1] + b[1], k * a[2] + b[2]]
}

#[inline]
pub fn scale3<T: Scalar>(k: T, a: &Vec3<T>) -> Vec3<T> {
    [k * a[0], k * a[1], k * a[2]]
}
