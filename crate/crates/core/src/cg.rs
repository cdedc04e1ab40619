//! Exact Clebsch–Gordan coefficients in the Condon–Shortley convention.
//!
//! Coefficients come from Racah's closed form evaluated in arbitrary
//! precision rational arithmetic. The result keeps the two square-root
//! factors of that formula separate:
//!
//! ```text
//! <j1 m1; j2 m2 | K Q> = S · sqrt(R_K) · sqrt(R_m)
//! ```
//!
//! where `S` is the (signed, rational) Racah sum, `R_K` depends only on
//! `(j1, j2, K, Q)` and `R_m` only on `(j1, m1, j2, m2)`. Sums over `m1` of
//! products of two coefficients therefore reduce to rational arithmetic,
//! which [`orthonormality_residual`] uses to check orthogonality exactly.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A half-integer stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HalfInt(i64);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const HALF: HalfInt = HalfInt(1);

    pub const fn from_twice(twice: i64) -> Self {
        HalfInt(twice)
    }

    pub const fn integer(n: i64) -> Self {
        HalfInt(2 * n)
    }

    /// Fails unless `2x` is an integer.
    pub fn from_f64(x: f64) -> Result<Self> {
        let t = 2.0 * x;
        if !t.is_finite() || t.fract() != 0.0 || t.abs() > 1e15 {
            return Err(invalid(format!("{x} is not a half-integer")));
        }
        Ok(HalfInt(t as i64))
    }

    pub const fn twice(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Arguments of `<j1 m1; j2 m2 | K Q>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CgKey {
    pub j1: HalfInt,
    pub m1: HalfInt,
    pub j2: HalfInt,
    pub m2: HalfInt,
    pub k: HalfInt,
    pub q: HalfInt,
}

impl CgKey {
    pub fn new(j1: HalfInt, m1: HalfInt, j2: HalfInt, m2: HalfInt, k: HalfInt, q: HalfInt) -> Self {
        Self { j1, m1, j2, m2, k, q }
    }

    /// Builds a key from floating-point values, rejecting non-half-integers.
    pub fn from_f64(j1: f64, m1: f64, j2: f64, m2: f64, k: f64, q: f64) -> Result<Self> {
        Ok(Self {
            j1: HalfInt::from_f64(j1)?,
            m1: HalfInt::from_f64(m1)?,
            j2: HalfInt::from_f64(j2)?,
            m2: HalfInt::from_f64(m2)?,
            k: HalfInt::from_f64(k)?,
            q: HalfInt::from_f64(q)?,
        })
    }

    fn validate(&self) -> Result<()> {
        for (j, m, name) in [(self.j1, self.m1, "j1"), (self.j2, self.m2, "j2"), (self.k, self.q, "K")] {
            if j.twice() < 0 {
                return Err(invalid(format!("{name} = {j} is negative")));
            }
            if m.twice().abs() > j.twice() || (j.twice() - m.twice()) % 2 != 0 {
                return Err(invalid(format!("projection {m} is not allowed for {name} = {j}")));
            }
        }
        Ok(())
    }

    fn passes_selection_rules(&self) -> bool {
        let (j1, j2, k) = (self.j1.twice(), self.j2.twice(), self.k.twice());
        self.m1.twice() + self.m2.twice() == self.q.twice()
            && k >= (j1 - j2).abs()
            && k <= j1 + j2
            && (j1 + j2 + k) % 2 == 0
    }
}

/// An exactly represented coefficient `racah_sum · sqrt(rank_radicand · state_radicand)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactCg {
    pub racah_sum: BigRational,
    pub rank_radicand: BigRational,
    pub state_radicand: BigRational,
}

impl ExactCg {
    fn zero() -> Self {
        Self {
            racah_sum: BigRational::zero(),
            rank_radicand: BigRational::one(),
            state_radicand: BigRational::one(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.racah_sum.is_zero()
    }

    /// The exact square of the coefficient.
    pub fn squared(&self) -> BigRational {
        &self.racah_sum * &self.racah_sum * &self.rank_radicand * &self.state_radicand
    }

    /// `sign(c) · c²`, the usual "signed square root" encoding.
    pub fn signed_square(&self) -> BigRational {
        let sq = self.squared();
        if self.racah_sum.is_negative() {
            -sq
        } else {
            sq
        }
    }

    pub fn to_f64(&self) -> f64 {
        let magnitude = self.squared().to_f64().unwrap_or(f64::NAN).sqrt();
        if self.racah_sum.is_negative() {
            -magnitude
        } else {
            magnitude
        }
    }
}

fn factorial(n: i64) -> BigInt {
    assert!(n >= 0, "factorial of negative argument");
    (2..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn rational(n: BigInt) -> BigRational {
    BigRational::from_integer(n)
}

/// Halves a twice-valued sum that is known to be even.
fn half(twice: i64) -> i64 {
    debug_assert_eq!(twice % 2, 0);
    twice / 2
}

/// Exact Clebsch–Gordan coefficient; zero when the selection rules fail.
pub fn clebsch_gordan_exact(key: &CgKey) -> Result<ExactCg> {
    key.validate()?;
    if !key.passes_selection_rules() {
        return Ok(ExactCg::zero());
    }
    let (j1, m1, j2, m2, k, q) = (
        key.j1.twice(),
        key.m1.twice(),
        key.j2.twice(),
        key.m2.twice(),
        key.k.twice(),
        key.q.twice(),
    );

    let a = half(j1 + j2 - k);
    let b = half(j1 - m1);
    let c = half(j2 + m2);
    let d = half(k - j2 + m1);
    let e = half(k - j1 - m2);

    let rank_radicand = rational(BigInt::from(k + 1) * factorial(half(k + j1 - j2)) * factorial(half(k - j1 + j2)) * factorial(a))
        / rational(factorial(half(j1 + j2 + k) + 1))
        * rational(factorial(half(k + q)) * factorial(half(k - q)));
    let state_radicand = rational(
        factorial(half(j1 - m1)) * factorial(half(j1 + m1)) * factorial(half(j2 - m2)) * factorial(half(j2 + m2)),
    );

    let s_min = 0.max(-d).max(-e);
    let s_max = a.min(b).min(c);
    let mut racah_sum = BigRational::zero();
    for s in s_min..=s_max {
        let denom = factorial(s) * factorial(a - s) * factorial(b - s) * factorial(c - s) * factorial(d + s) * factorial(e + s);
        let term = BigRational::new(BigInt::one(), denom);
        if s % 2 == 0 {
            racah_sum += term;
        } else {
            racah_sum -= term;
        }
    }

    Ok(ExactCg { racah_sum, rank_radicand, state_radicand })
}

/// Floating-point value of `<j1 m1; j2 m2 | K Q>`.
pub fn clebsch_gordan(key: &CgKey) -> Result<f64> {
    Ok(clebsch_gordan_exact(key)?.to_f64())
}

/// Exact orthonormality defect of the coupling `j1 ⊗ j2`.
///
/// Returns a rational that vanishes if and only if
/// `Σ_{m1,m2} <j1 m1; j2 m2|K Q><j1 m1; j2 m2|K' Q'> = δ_{KK'} δ_{QQ'}`.
/// For `K = K'`, `Q = Q'` the value is the sum minus one; otherwise it is the
/// sum divided by the common factor `sqrt(R_K R_K')`.
pub fn orthonormality_residual(
    j1: HalfInt,
    j2: HalfInt,
    (k, q): (HalfInt, HalfInt),
    (kp, qp): (HalfInt, HalfInt),
) -> Result<BigRational> {
    let same = k == kp && q == qp;
    let mut rank_factor: Option<BigRational> = None;
    let mut acc = BigRational::zero();
    let mut m1 = -j1;
    while m1 <= j1 {
        let mut m2 = -j2;
        while m2 <= j2 {
            let a = clebsch_gordan_exact(&CgKey::new(j1, m1, j2, m2, k, q))?;
            let b = clebsch_gordan_exact(&CgKey::new(j1, m1, j2, m2, kp, qp))?;
            if !a.is_zero() && !b.is_zero() {
                // state radicands coincide, so their product is a perfect square
                acc += &a.racah_sum * &b.racah_sum * &a.state_radicand;
                rank_factor.get_or_insert_with(|| a.rank_radicand.clone());
            }
            m2 = m2 + HalfInt::integer(1);
        }
        m1 = m1 + HalfInt::integer(1);
    }
    if same {
        let r = rank_factor.unwrap_or_else(BigRational::zero);
        Ok(acc * r - BigRational::one())
    } else {
        Ok(acc)
    }
}
