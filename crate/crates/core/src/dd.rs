// SPDX-License-Identifier: Apache-2.0

//! Minimal double-double arithmetic (about 32 significant digits).
//!
//! Used where a Gaussian quadrature has to resolve a result many orders of
//! magnitude below its individual terms.

use std::f64::consts::PI;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const TWO_PI: Dd = Dd {
    hi: std::f64::consts::TAU,
    lo: 2.449_293_598_294_706_4e-16,
};
const HALF_PI: Dd = Dd {
    hi: std::f64::consts::FRAC_PI_2,
    lo: 6.123_233_995_736_766e-17,
};

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let x = self.hi.sqrt();
        let (p, e) = two_prod(x, x);
        let diff = (self - Dd { hi: p, lo: e }).to_f64();
        let (s, t) = quick_two_sum(x, diff / (2.0 * x));
        Dd { hi: s, lo: t }
    }

    pub fn round(self) -> f64 {
        let r = self.hi.round();
        if r == self.hi {
            // hi already integral: the low word decides ties.
            return r + self.lo.round();
        }
        r
    }

    /// (sin x, cos x) by reduction modulo π/2 and Taylor series.
    pub fn sin_cos(self) -> (Dd, Dd) {
        let k = (self / TWO_PI).round();
        let r = self - TWO_PI * k;
        let j = (r / HALF_PI).round();
        let t = r - HALF_PI * j;
        let t2 = t * t;
        let mut s = Dd::ZERO;
        let mut c = Dd::ZERO;
        // Horner in t² for both series; |t| ≤ π/4 needs about 30 terms.
        for n in (0..16).rev() {
            let ns = (2 * n + 2) as f64 * (2 * n + 3) as f64;
            let nc = (2 * n + 1) as f64 * (2 * n + 2) as f64;
            s = Dd::ONE - t2 * s / ns;
            c = Dd::ONE - t2 * c / nc;
        }
        let s = t * s;
        match (j as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Dd {
        Dd::from_f64(x)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, o.hi);
        let (t1, t2) = two_sum(self.lo, o.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, o: f64) -> Dd {
        let (p, e) = two_prod(self.hi, o);
        let (hi, lo) = quick_two_sum(p, e + self.lo * o);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * q1;
        let q2 = r.hi / o.hi;
        let r = r - o * q2;
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from_f64(q3)
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    fn div(self, o: f64) -> Dd {
        self / Dd::from_f64(o)
    }
}

/// Gauss–Hermite nodes and weights (weight e^{-x²}) in double-double,
/// obtained by Newton-polishing the double-precision rule.
pub fn gauss_hermite_dd(n: usize) -> (Vec<Dd>, Vec<Dd>) {
    let base = crate::quadrature::gauss_hermite(n);
    let nf = Dd::from_f64(n as f64);
    let p0 = Dd::from_f64(PI).sqrt().sqrt();
    let p0 = Dd::ONE / p0;
    let eval = |x: Dd| {
        let mut prev = Dd::ZERO;
        let mut p = p0;
        let mut k = 0;
        for j in 1..=n {
            let jf = Dd::from_f64(j as f64);
            let next =
                x * (Dd::from_f64(2.0) / jf).sqrt() * p - ((jf - Dd::ONE) / jf).sqrt() * prev;
            prev = p;
            p = next;
            if p.hi.abs() > 1e150 {
                p = p * crate::quadrature::HERMITE_RESCALE;
                prev = prev * crate::quadrature::HERMITE_RESCALE;
                k += 1;
            }
        }
        (p, prev, k)
    };
    let two_n = (nf * 2.0).sqrt();
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &x0 in &base.nodes {
        let mut x = Dd::from_f64(x0);
        for _ in 0..3 {
            let (p, prev, _) = eval(x);
            x = x - p / (two_n * prev);
        }
        let (_, prev, k) = eval(x);
        let dp = two_n * prev;
        let mut w = Dd::from_f64(2.0) / (dp * dp);
        for _ in 0..(2 * k) {
            w = w * crate::quadrature::HERMITE_RESCALE;
        }
        nodes.push(x);
        weights.push(w);
    }
    (nodes, weights)
}
