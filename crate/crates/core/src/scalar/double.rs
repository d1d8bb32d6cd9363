//! Double-double arithmetic: an unevaluated sum `hi + lo` of two f64 values
//! with `|lo| <= ulp(hi) / 2`, giving about 106 significant bits.
//!
//! Sums and products use error-free transformations, division is long
//! division, and `sqrt`, `exp`, `ln`, `ln_1p` and `erf` are accurate to a few
//! units in the last place of the pair. Trigonometric and hyperbolic functions
//! are only f64-accurate; the model does not use them.

use std::cmp::Ordering;
use std::fmt;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};

use super::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

/// `a + b` exactly as `s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `two_sum` for `|a| >= |b|`.
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// `a * b` exactly as `p + e`.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const PI: DoubleDouble = DoubleDouble { hi: std::f64::consts::PI, lo: 1.2246467991473532e-16 };
const LN_2: DoubleDouble = DoubleDouble { hi: std::f64::consts::LN_2, lo: 2.3190468138462996e-17 };

impl DoubleDouble {
    pub const fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn renormalized(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    fn square(self) -> Self {
        self * self
    }

    fn scale_pow2(self, factor: f64) -> Self {
        Self { hi: self.hi * factor, lo: self.lo * factor }
    }

    fn ldexp(self, exp: i32) -> Self {
        let (mut x, mut e) = (self, exp);
        // Two steps keep each factor representable.
        while e != 0 {
            let step = e.clamp(-1000, 1000);
            x = x.scale_pow2(2f64.powi(step));
            e -= step;
        }
        x
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 { Self::zero() } else { Self::nan() };
        }
        let x = 1.0 / self.hi.sqrt();
        let ax = self.hi * x;
        let ax_dd = Self::from_f64(ax);
        let correction = (self - ax_dd.square()).hi * (x * 0.5);
        let (hi, lo) = two_sum(ax, correction);
        Self::renormalized(hi, lo)
    }

    /// `exp(self) = (1 + s) 2^m`; `s` is accurate relative to itself.
    fn exp_parts(self) -> (Self, i32) {
        // exp(x) = 2^m * exp(r)^512 with |r| <= ln2 / 1024.
        let m = (self.hi / LN_2.hi + 0.5).floor();
        let r = (self - LN_2 * Self::from_f64(m)).scale_pow2(1.0 / 512.0);
        // s = exp(r) - 1 by Taylor series.
        let mut term = r;
        let mut s = r;
        let mut n = 1.0;
        while term.hi.abs() > 1e-35 * s.hi.abs() {
            n += 1.0;
            term = term * r / Self::from_f64(n);
            s += term;
        }
        // (1 + s)^2 - 1 = 2s + s^2, nine times.
        for _ in 0..9 {
            s = s.scale_pow2(2.0) + s.square();
        }
        (s, m as i32)
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.78 {
            return Self::infinity();
        }
        if self.hi < -745.2 {
            return Self::zero();
        }
        if self.hi == 0.0 && self.lo == 0.0 {
            return Self::one();
        }
        let (s, m) = self.exp_parts();
        (s + Self::one()).ldexp(m)
    }

    pub fn exp_m1(self) -> Self {
        if self.hi == 0.0 || self.hi.abs() > 0.25 {
            return self.exp() - Self::one();
        }
        let (s, m) = self.exp_parts();
        debug_assert_eq!(m, 0);
        s
    }

    pub fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 { Self::neg_infinity() } else { Self::nan() };
        }
        if self.hi.is_infinite() {
            return self;
        }
        // One Newton step on exp(y) = x doubles the f64 starting accuracy.
        let y = Self::from_f64(self.hi.ln());
        y + self * (-y).exp() - Self::one()
    }

    pub fn ln_1p(self) -> Self {
        if self.hi <= -1.0 {
            return if self.hi == -1.0 && self.lo == 0.0 { Self::neg_infinity() } else { Self::nan() };
        }
        if self.hi == 0.0 {
            return self;
        }
        // Newton step on exp_m1(y) = x.
        let y = Self::from_f64(self.hi.ln_1p());
        let e = y.exp_m1();
        y - (e - self) / (e + Self::one())
    }

    pub fn erf(self) -> Self {
        let x = self.abs();
        let value = if x.hi < ERF_SERIES_LIMIT { erf_series(x) } else { Self::one() - erfc_fraction(x) };
        if self.hi < 0.0 {
            -value
        } else {
            value
        }
    }
}

/// Below this the series is used; above it the continued fraction.
const ERF_SERIES_LIMIT: f64 = 3.0;

/// `erf(x) = 2/sqrt(pi) exp(-x^2) sum_n 2^n x^(2n+1) / (1 3 5 ... (2n+1))`,
/// whose terms are all positive.
fn erf_series(x: DoubleDouble) -> DoubleDouble {
    let xx = x * x;
    let mut term = x;
    let mut total = x;
    let mut n = 0.0;
    while term.hi > total.hi * 1e-34 {
        n += 1.0;
        term = term * xx * DoubleDouble::from_f64(2.0) / DoubleDouble::from_f64(2.0 * n + 1.0);
        total += term;
    }
    total * (-xx).exp() * DoubleDouble::FRAC_2_SQRT_PI()
}

/// `erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))`,
/// evaluated bottom-up at a fixed depth.
fn erfc_fraction(x: DoubleDouble) -> DoubleDouble {
    const DEPTH: usize = 400;
    let mut tail = x;
    for k in (1..=DEPTH).rev() {
        tail = x + DoubleDouble::from_f64(k as f64 * 0.5) / tail;
    }
    (-(x * x)).exp() * DoubleDouble::FRAC_2_SQRT_PI() * DoubleDouble::from_f64(0.5) / tail
}

impl Scalar for DoubleDouble {
    fn erf(self) -> Self {
        DoubleDouble::erf(self)
    }
}

impl fmt::Display for DoubleDouble {
    /// Shows the leading word.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.hi, f)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            o => Some(o),
        }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (s, e) = two_sum(self.hi, rhs.hi);
        if !s.is_finite() {
            return Self::from_f64(s);
        }
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        if !p.is_finite() {
            return Self::from_f64(p);
        }
        let e = e + (self.hi * rhs.lo + self.lo * rhs.hi);
        Self::renormalized(p, e)
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q1 = self.hi / rhs.hi;
        if !q1.is_finite() {
            return Self::from_f64(q1);
        }
        let r = self - rhs * Self::from_f64(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Self::from_f64(q2);
        let q3 = r.hi / rhs.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::from_f64(q3)
    }
}

impl Rem for DoubleDouble {
    type Output = Self;
    fn rem(self, rhs: Self) -> Self {
        self - (self / rhs).trunc() * rhs
    }
}

macro_rules! assign_ops {
    ($($trait:ident $method:ident $op:tt),*) => {
        $(impl $trait for DoubleDouble {
            fn $method(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        })*
    };
}

assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /, RemAssign rem_assign %);

impl Zero for DoubleDouble {
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0
    }
}

impl One for DoubleDouble {
    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

impl Num for DoubleDouble {
    type FromStrRadixErr = num_traits::ParseFloatError;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Self::from_f64)
    }
}

impl ToPrimitive for DoubleDouble {
    fn to_i64(&self) -> Option<i64> {
        self.to_f64().and_then(|v| v.to_i64())
    }
    fn to_u64(&self) -> Option<u64> {
        self.to_f64().and_then(|v| v.to_u64())
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.hi + self.lo)
    }
}

impl FromPrimitive for DoubleDouble {
    fn from_i64(n: i64) -> Option<Self> {
        let hi = n as f64;
        let lo = (n as i128 - hi as i128) as f64;
        Some(Self::renormalized(hi, lo))
    }
    fn from_u64(n: u64) -> Option<Self> {
        let hi = n as f64;
        let lo = (n as i128 - hi as i128) as f64;
        Some(Self::renormalized(hi, lo))
    }
    fn from_f64(n: f64) -> Option<Self> {
        Some(Self::from_f64(n))
    }
    fn from_f32(n: f32) -> Option<Self> {
        Some(Self::from_f64(n as f64))
    }
}

impl NumCast for DoubleDouble {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        n.to_f64().map(Self::from_f64)
    }
}

impl FloatConst for DoubleDouble {
    fn PI() -> Self {
        PI
    }
    fn TAU() -> Self {
        PI.scale_pow2(2.0)
    }
    fn FRAC_PI_2() -> Self {
        PI.scale_pow2(0.5)
    }
    fn FRAC_PI_3() -> Self {
        PI / Self::from_f64(3.0)
    }
    fn FRAC_PI_4() -> Self {
        PI.scale_pow2(0.25)
    }
    fn FRAC_PI_6() -> Self {
        PI / Self::from_f64(6.0)
    }
    fn FRAC_PI_8() -> Self {
        PI.scale_pow2(0.125)
    }
    fn FRAC_1_PI() -> Self {
        Self::one() / PI
    }
    fn FRAC_2_PI() -> Self {
        Self::from_f64(2.0) / PI
    }
    fn FRAC_2_SQRT_PI() -> Self {
        Self::from_f64(2.0) / PI.sqrt()
    }
    fn SQRT_2() -> Self {
        Self::from_f64(2.0).sqrt()
    }
    fn FRAC_1_SQRT_2() -> Self {
        Self::from_f64(2.0).sqrt().scale_pow2(0.5)
    }
    fn E() -> Self {
        Self::one().exp()
    }
    fn LN_2() -> Self {
        LN_2
    }
    fn LN_10() -> Self {
        Self::from_f64(10.0).ln()
    }
    fn LOG2_E() -> Self {
        Self::one() / LN_2
    }
    fn LOG10_E() -> Self {
        Self::one() / Self::LN_10()
    }
    fn LOG2_10() -> Self {
        Self::LN_10() / LN_2
    }
    fn LOG10_2() -> Self {
        LN_2 / Self::LN_10()
    }
}

/// Lifts an f64 method; the result has f64 accuracy only.
macro_rules! via_f64 {
    ($($name:ident),*) => {
        $(fn $name(self) -> Self {
            Self::from_f64(self.to_f64().unwrap_or(f64::NAN).$name())
        })*
    };
}

impl Float for DoubleDouble {
    fn nan() -> Self {
        Self::from_f64(f64::NAN)
    }
    fn infinity() -> Self {
        Self::from_f64(f64::INFINITY)
    }
    fn neg_infinity() -> Self {
        Self::from_f64(f64::NEG_INFINITY)
    }
    fn neg_zero() -> Self {
        Self::from_f64(-0.0)
    }
    fn min_value() -> Self {
        Self::from_f64(f64::MIN)
    }
    fn min_positive_value() -> Self {
        Self::from_f64(f64::MIN_POSITIVE)
    }
    fn epsilon() -> Self {
        Self::from_f64(f64::EPSILON * f64::EPSILON)
    }
    fn max_value() -> Self {
        Self::from_f64(f64::MAX)
    }
    fn is_nan(self) -> bool {
        self.hi.is_nan() || self.lo.is_nan()
    }
    fn is_infinite(self) -> bool {
        self.hi.is_infinite()
    }
    fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }
    fn is_normal(self) -> bool {
        self.hi.is_normal()
    }
    fn classify(self) -> FpCategory {
        self.hi.classify()
    }
    fn floor(self) -> Self {
        let hi = self.hi.floor();
        if hi == self.hi {
            Self::renormalized(hi, self.lo.floor())
        } else {
            Self::from_f64(hi)
        }
    }
    fn ceil(self) -> Self {
        -(-self).floor()
    }
    fn round(self) -> Self {
        if self.hi < 0.0 {
            -(-self).round()
        } else {
            (self + Self::from_f64(0.5)).floor()
        }
    }
    fn trunc(self) -> Self {
        if self.hi < 0.0 {
            self.ceil()
        } else {
            self.floor()
        }
    }
    fn fract(self) -> Self {
        self - self.trunc()
    }
    fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.hi.is_sign_negative()) {
            -self
        } else {
            self
        }
    }
    fn signum(self) -> Self {
        Self::from_f64(self.hi.signum())
    }
    fn is_sign_positive(self) -> bool {
        self.hi.is_sign_positive()
    }
    fn is_sign_negative(self) -> bool {
        self.hi.is_sign_negative()
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        Self::one() / self
    }
    fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { self.recip() } else { self };
        let mut e = n.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base = base.square();
            e >>= 1;
        }
        acc
    }
    fn powf(self, n: Self) -> Self {
        (n * self.ln()).exp()
    }
    fn sqrt(self) -> Self {
        DoubleDouble::sqrt(self)
    }
    fn exp(self) -> Self {
        DoubleDouble::exp(self)
    }
    fn exp2(self) -> Self {
        (self * LN_2).exp()
    }
    fn ln(self) -> Self {
        DoubleDouble::ln(self)
    }
    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }
    fn log2(self) -> Self {
        self.ln() / LN_2
    }
    fn log10(self) -> Self {
        self.ln() / Self::LN_10()
    }
    fn max(self, other: Self) -> Self {
        if self.is_nan() || other > self {
            other
        } else {
            self
        }
    }
    fn min(self, other: Self) -> Self {
        if self.is_nan() || other < self {
            other
        } else {
            self
        }
    }
    fn abs_sub(self, other: Self) -> Self {
        if self <= other {
            Self::zero()
        } else {
            self - other
        }
    }
    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }
    fn atan2(self, other: Self) -> Self {
        Self::from_f64(self.hi.atan2(other.hi))
    }
    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
    fn exp_m1(self) -> Self {
        DoubleDouble::exp_m1(self)
    }
    fn ln_1p(self) -> Self {
        DoubleDouble::ln_1p(self)
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        self.hi.integer_decode()
    }
    via_f64!(cbrt, sin, cos, tan, asin, acos, atan, sinh, cosh, tanh, asinh, acosh, atanh);
}
