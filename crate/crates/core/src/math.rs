//! Transcendental functions pinned to the pure-Rust `libm` implementations.
//!
//! `num_traits::Float` forwards to the platform math library whenever any
//! crate in the build enables `num-traits/std`, which would make results
//! depend on the dependency graph. Everything non-exact goes through here.

pub trait Libm: Copy {
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn powf(self, e: Self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn atan2(self, x: Self) -> Self;
}

impl Libm for f32 {
    fn exp(self) -> Self {
        libm::expf(self)
    }
    fn ln(self) -> Self {
        libm::logf(self)
    }
    fn ln_1p(self) -> Self {
        libm::log1pf(self)
    }
    fn powf(self, e: Self) -> Self {
        libm::powf(self, e)
    }
    fn sin(self) -> Self {
        libm::sinf(self)
    }
    fn cos(self) -> Self {
        libm::cosf(self)
    }
    fn atan2(self, x: Self) -> Self {
        libm::atan2f(self, x)
    }
}

impl Libm for f64 {
    fn exp(self) -> Self {
        libm::exp(self)
    }
    fn ln(self) -> Self {
        libm::log(self)
    }
    fn ln_1p(self) -> Self {
        libm::log1p(self)
    }
    fn powf(self, e: Self) -> Self {
        libm::pow(self, e)
    }
    fn sin(self) -> Self {
        libm::sin(self)
    }
    fn cos(self) -> Self {
        libm::cos(self)
    }
    fn atan2(self, x: Self) -> Self {
        libm::atan2(self, x)
    }
}

#[inline]
pub fn exp<T: Libm>(x: T) -> T {
    x.exp()
}

#[inline]
pub fn ln<T: Libm>(x: T) -> T {
    x.ln()
}

#[inline]
pub fn ln_1p<T: Libm>(x: T) -> T {
    x.ln_1p()
}

#[inline]
pub fn powf<T: Libm>(x: T, e: T) -> T {
    x.powf(e)
}

/// Integer power by binary exponentiation; the multiplication order is fixed.
pub fn powi(x: f64, n: i32) -> f64 {
    let mut base = if n < 0 { 1.0 / x } else { x };
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

#[inline]
pub fn sin<T: Libm>(x: T) -> T {
    x.sin()
}

#[inline]
pub fn cos<T: Libm>(x: T) -> T {
    x.cos()
}

#[inline]
pub fn atan2<T: Libm>(y: T, x: T) -> T {
    y.atan2(x)
}
