// SPDX-License-Identifier: Apache-2.0

//! Quadrature rules: cached Gauss–Legendre and Gauss–Hermite nodes, a
//! periodic trapezoid, adaptive Gauss–Kronrod and deterministic summation.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use std::sync::LazyLock;

use crate::error::{Error, Result};

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Affine map of a rule on [-1, 1] onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        Rule {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| half * w).collect(),
        }
    }
}

static GL_CACHE: LazyLock<Mutex<HashMap<usize, Arc<Rule>>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));
static GH_CACHE: LazyLock<Mutex<HashMap<usize, Arc<Rule>>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

/// Gauss–Legendre rule on [-1, 1] with `n` nodes, ascending.
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let mut cache = GL_CACHE.lock().unwrap_or_else(|e| e.into_inner());
    cache
        .entry(n)
        .or_insert_with(|| Arc::new(build_gauss_legendre(n)))
        .clone()
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn build_gauss_legendre(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Gauss–Hermite rule for the weight e^{-x²} with `n` nodes, ascending.
pub fn gauss_hermite(n: usize) -> Arc<Rule> {
    assert!(n >= 1, "Gauss-Hermite needs at least one node");
    let mut cache = GH_CACHE.lock().unwrap_or_else(|e| e.into_inner());
    cache
        .entry(n)
        .or_insert_with(|| Arc::new(build_gauss_hermite(n)))
        .clone()
}

/// 2^-500: rescaling by a power of two is exact.
pub(crate) const HERMITE_RESCALE: f64 = 3.054_936_363_499_605e-151;

/// Orthonormal Hermite values p_n(x), p_{n-1}(x) for the weight e^{-x²},
/// scaled by HERMITE_RESCALE^k to stay in range; returns k as well.
pub(crate) fn hermite_pair(n: usize, x: f64) -> (f64, f64, i32) {
    let mut p_prev = 0.0;
    let mut p = PI.powf(-0.25);
    let mut k = 0;
    for j in 1..=n {
        let jf = j as f64;
        let next = x * (2.0 / jf).sqrt() * p - ((jf - 1.0) / jf).sqrt() * p_prev;
        p_prev = p;
        p = next;
        if p.abs() > 1e150 {
            p *= HERMITE_RESCALE;
            p_prev *= HERMITE_RESCALE;
            k += 1;
        }
    }
    (p, p_prev, k)
}

/// 2/dp² undoing `k` rescalings; underflows gracefully to zero.
pub(crate) fn hermite_weight(dp: f64, k: i32) -> f64 {
    let mut w = 2.0 / (dp * dp);
    for _ in 0..(2 * k) {
        w *= HERMITE_RESCALE;
    }
    w
}

fn build_gauss_hermite(n: usize) -> Rule {
    let nf = n as f64;
    // Golub–Welsch eigenvalues as starting points, then Newton on p_n.
    let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = nalgebra::SymmetricEigen::new(jacobi)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    guesses.sort_by(f64::total_cmp);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = -guesses[i];
        for _ in 0..20 {
            let (p, p_prev, _) = hermite_pair(n, z);
            let dz = p / ((2.0 * nf).sqrt() * p_prev);
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, p_prev, k) = hermite_pair(n, z);
        let w = hermite_weight((2.0 * nf).sqrt() * p_prev, k);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Trapezoid rule with `n` equal steps on the period [0, 2π).
pub fn periodic_trapezoid(n: usize) -> Rule {
    assert!(n >= 1);
    let h = 2.0 * PI / n as f64;
    Rule {
        nodes: (0..n).map(|k| k as f64 * h).collect(),
        weights: vec![h; n],
    }
}

/// Node count for an integrand oscillating like e^{iωx} over [-1, 1].
///
/// Gauss–Legendre resolves such an integrand once the node count exceeds
/// roughly ω/2 by a few multiples of √ω.
pub fn oscillatory_nodes(base: usize, omega: f64) -> usize {
    let w = omega.abs();
    let need = (0.5 * w + 3.0 * w.sqrt() + 12.0).ceil() as usize;
    base.max(need)
}

/// Sum in a fixed pairwise order; bit-stable for a given slice.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn pairwise_sum_complex(values: &[Complex64]) -> Complex64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum_complex(&values[..mid]) + pairwise_sum_complex(&values[mid..])
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// Globally adaptive G7/K15 on [a, b]. Fails with a convergence error when
/// the estimate does not reach `max(abs_tol, rel_tol·|I|)` within `max_intervals`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Integral> {
    let (v, e) = kronrod15(&f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(Integral {
                value: total,
                error: err,
                intervals: pieces.len(),
            });
        }
        if pieces.len() >= max_intervals {
            return Err(Error::Convergence {
                context: "adaptive Gauss-Kronrod".into(),
                achieved: err / total.abs().max(f64::MIN_POSITIVE),
                requested: rel_tol,
            });
        }
        let (worst, _) =
            pieces.iter().enumerate().fold(
                (0, -1.0),
                |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc },
            );
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod15(&f, lo, mid);
        let (v2, e2) = kronrod15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// Adaptive integral over [a, ∞) via x = a + t/(1−t).
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Integral> {
    integrate_adaptive(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let v = f(a + t / s) / (s * s);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
        max_intervals,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 8, 33, 64] {
            let rule = gauss_legendre(n);
            for k in 0..(2 * n) {
                let got: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x.powi(k as i32))
                    .sum();
                let want = if k % 2 == 1 {
                    0.0
                } else {
                    2.0 / (k as f64 + 1.0)
                };
                assert!((got - want).abs() < 1e-13, "n={n} k={k}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn large_legendre_rule_is_accurate() {
        let rule = gauss_legendre(2048);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-12);
        let got: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * (300.0 * x).cos())
            .sum();
        let want = 2.0 * 300f64.sin() / 300.0;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn hermite_moments() {
        for n in [1usize, 4, 10, 40, 100, 256, 512] {
            let rule = gauss_hermite(n);
            let m0: f64 = rule.weights.iter().sum();
            assert!((m0 - PI.sqrt()).abs() < 1e-13 * PI.sqrt(), "n={n}");
            let m2: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x * x)
                .sum();
            if n >= 2 {
                assert!((m2 - 0.5 * PI.sqrt()).abs() < 1e-12, "n={n}");
            }
        }
        let rule = gauss_hermite(60);
        let got: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * (2.0 * x).cos())
            .sum();
        assert!((got - PI.sqrt() * (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_is_spectral_for_periodic_functions() {
        let rule = periodic_trapezoid(24);
        let got: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * (x.cos()).exp())
            .sum();
        // 2π I₀(1)
        assert!((got - 2.0 * PI * 1.266_065_877_752_008_4).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_peaks_and_tails() {
        let r = integrate_adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 0.0, 1e-12, 500).unwrap();
        let want = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((r.value - want).abs() < 1e-10 * want);
        let r = integrate_semi_infinite(|x| (-x).exp(), 0.0, 0.0, 1e-12, 500).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!(integrate_adaptive(
            |x| 1.0 / x.abs().sqrt().max(1e-300),
            -1.0,
            1.0,
            0.0,
            1e-14,
            4
        )
        .is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_for_small_inputs() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-12);
    }
}
