//! Spin-`j` operator matrices for `N` collective spin-½ constituents.
//!
//! Basis states are ordered by descending magnetic number,
//! `m = j, j-1, ..., -j`, so row/column `i` carries `m = j - i`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cg::HalfInt;
use crate::error::{invalid, Result};
use crate::linalg::{c, CMatrix, I};

/// Component selector for the spin operators and their adjoint generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

impl Axis {
    pub const CARTESIAN: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

impl FromStr for Axis {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            "+" | "plus" | "p" => Ok(Axis::Plus),
            "-" | "minus" | "m" => Ok(Axis::Minus),
            other => Err(invalid(format!("unknown spin component {other:?}"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
            Axis::Plus => "+",
            Axis::Minus => "-",
        };
        f.write_str(s)
    }
}

/// The maximally symmetric spin sector `j = N/2` with its dense operators.
#[derive(Clone, Debug)]
pub struct SpinSystem {
    n: u32,
    j: HalfInt,
    jx: CMatrix,
    jy: CMatrix,
    jz: CMatrix,
    jp: CMatrix,
    jm: CMatrix,
    j2: CMatrix,
}

impl SpinSystem {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(invalid("number of spins must be at least 1"));
        }
        let j = HalfInt::from_twice(n as i64);
        let jf = j.value();
        let dim = n as usize + 1;
        let m_of = |i: usize| jf - i as f64;

        let jz = CMatrix::from_fn(dim, dim, |r, col| if r == col { c(m_of(r)) } else { c(0.0) });
        // <m+1| J+ |m> sits at (i-1, i) with m = j - i.
        let mut jp = CMatrix::zeros(dim, dim);
        for i in 1..dim {
            let m = m_of(i);
            jp[(i - 1, i)] = c((jf * (jf + 1.0) - m * (m + 1.0)).sqrt());
        }
        let jm = jp.adjoint();
        let jx = (&jp + &jm) * c(0.5);
        let jy = (&jp - &jm) * (-0.5 * I);
        let j2 = &jx * &jx + &jy * &jy + &jz * &jz;

        Ok(Self { n, j, jx, jy, jz, jp, jm, j2 })
    }

    /// Number of spin-½ constituents.
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn j(&self) -> HalfInt {
        self.j
    }

    /// Hilbert-space dimension `2j + 1`.
    pub fn dim(&self) -> usize {
        self.n as usize + 1
    }

    /// Operator-space dimension `(2j + 1)²`.
    pub fn operator_dim(&self) -> usize {
        self.dim() * self.dim()
    }

    /// Magnetic number of basis row `i`.
    pub fn m(&self, i: usize) -> HalfInt {
        HalfInt::from_twice(self.n as i64 - 2 * i as i64)
    }

    pub fn op(&self, axis: Axis) -> &CMatrix {
        match axis {
            Axis::X => &self.jx,
            Axis::Y => &self.jy,
            Axis::Z => &self.jz,
            Axis::Plus => &self.jp,
            Axis::Minus => &self.jm,
        }
    }

    pub fn jx(&self) -> &CMatrix {
        &self.jx
    }
    pub fn jy(&self) -> &CMatrix {
        &self.jy
    }
    pub fn jz(&self) -> &CMatrix {
        &self.jz
    }
    pub fn jp(&self) -> &CMatrix {
        &self.jp
    }
    pub fn jm(&self) -> &CMatrix {
        &self.jm
    }
    pub fn j2(&self) -> &CMatrix {
        &self.j2
    }

    /// Matrix of `exp(-i β J_y)`, built from the Wigner small-d formula.
    ///
    /// Entry `(i, i')` is `d^j_{m m'}(β)` with `m = j - i`, `m' = j - i'`.
    pub fn rotation_y(&self, beta: f64) -> CMatrix {
        let twoj = self.n as i64;
        let dim = self.dim();
        let (cos_h, sin_h) = ((beta / 2.0).cos(), (beta / 2.0).sin());
        CMatrix::from_fn(dim, dim, |r, col| {
            // work with integer offsets j+m, j-m etc.
            let jpm1 = twoj - r as i64; // j + m'   (row carries m')
            let jmm1 = r as i64; // j - m'
            let jpm = twoj - col as i64; // j + m
            let jmm = col as i64; // j - m
            let diff = jpm1 - jpm; // m' - m
            let pre = (fact(jpm1) * fact(jmm1) * fact(jpm) * fact(jmm)).sqrt();
            let s_min = 0.max(-diff);
            let s_max = jpm.min(jmm1);
            let mut acc = 0.0;
            for s in s_min..=s_max {
                let sign = if (diff + s).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let denom = fact(jpm - s) * fact(s) * fact(diff + s) * fact(jmm1 - s);
                let cos_pow = (twoj - diff - 2 * s) as i32;
                let sin_pow = (diff + 2 * s) as i32;
                acc += sign * cos_h.powi(cos_pow) * sin_h.powi(sin_pow) / denom;
            }
            c(pre * acc)
        })
    }
}

fn fact(n: i64) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `AB - BA`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() || !b.is_square() || a.nrows() != b.nrows() {
        return Err(invalid(format!(
            "commutator needs square matrices of equal size, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a * b - b * a)
}
