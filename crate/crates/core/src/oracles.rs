// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference for [`reduced_integral_i2`].
//!
//! Before the energy-shell delta is integrated out, I₂ reads
//!
//!   I₂(R) = ∫d³q₁d³q₂ dn̂ (q₁/4π²ħ²q₂) u(q₁,q₂) e^{iq₁n̂·R/ħ}
//!           f*(q₁n̂, q₂) f(q₁n̂, q₁) δ(q₂ − q₁)
//!
//! with q₁, q₂ magnitudes inside δ. Replacing δ by a normal density of width
//! s gives a plain 8-dimensional integral that is sampled directly; as s → 0
//! it tends to I₂ with an O(s²) bias, removed by extrapolation over several
//! widths.
//!
//! [`reduced_integral_i2`]: crate::wavepacket_mc::reduced_integral_i2

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Kinematics;
use crate::error::{Error, Result};
use crate::quadrature::pairwise_sum;
use crate::scattering::{amplitude_vec, AmplitudeModel};
use crate::vec3::Vec3;
use crate::wavepacket_mc::GaussianBilinear;

/// Estimates at each smearing width plus the extrapolation to zero width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmearedEstimate {
    pub widths: Vec<f64>,
    pub values: Vec<(f64, f64)>,
    pub stderrs: Vec<f64>,
    /// Least-squares fit of a + c·s² evaluated at s = 0.
    pub extrapolated: (f64, f64),
    pub extrapolated_stderr: f64,
    /// Difference between the two-point extrapolations from the wider and
    /// the narrower pair of widths, with its standard error.
    pub richardson_gap: f64,
    pub richardson_gap_stderr: f64,
}

impl SmearedEstimate {
    pub fn extrapolated_complex(&self) -> Complex64 {
        Complex64::new(self.extrapolated.0, self.extrapolated.1)
    }
}

/// Coefficients a_k with Σa_k = 1 and Σa_k s_k² = 0 of least norm.
fn zero_width_weights(widths: &[f64]) -> Vec<f64> {
    let x: Vec<f64> = widths.iter().map(|s| s * s).collect();
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let det = n * sxx - sx * sx;
    x.iter().map(|&xi| (sxx - sx * xi) / det).collect()
}

fn complex_stats(samples: &[Complex64]) -> (Complex64, f64) {
    let n = samples.len() as f64;
    let re: Vec<f64> = samples.iter().map(|z| z.re).collect();
    let im: Vec<f64> = samples.iter().map(|z| z.im).collect();
    let mean = Complex64::new(pairwise_sum(&re) / n, pairwise_sum(&im) / n);
    let dev: Vec<f64> = samples.iter().map(|z| (z - mean).norm_sqr()).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of the smeared I₂ for a Gaussian packet bilinear.
///
/// Samples q̄ = (q₁+q₂)/2 and the transverse part of s = q₂−q₁ from the
/// packet Gaussians, the longitudinal part of s from the smearing density
/// (one normal variate shared by all widths) and n̂ uniformly. Requires an
/// amplitude defined off the energy shell. At least three widths are needed
/// for the consistency check.
pub fn smeared_delta_i2(
    u: &GaussianBilinear,
    model: &AmplitudeModel,
    r: Vec3,
    kin: Kinematics,
    widths: &[f64],
    samples: usize,
    seed: u64,
) -> Result<SmearedEstimate> {
    model.validate()?;
    if widths.len() < 3 || widths.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::invalid(
            "widths",
            "need at least three positive smearing widths",
        ));
    }
    if samples < 2 {
        return Err(Error::invalid("samples", "need at least two samples"));
    }
    if !(u.b > 0.0) || !u.momentum.is_finite() || !u.center.is_finite() || !r.is_finite() {
        return Err(Error::invalid(
            "u",
            "packet parameters must be finite with b > 0",
        ));
    }
    if matches!(model, AmplitudeModel::HardSphere { .. }) {
        return Err(Error::DegenerateModel(
            "smeared-delta oracle needs an off-shell amplitude".into(),
        ));
    }
    let b = u.b;
    let h = kin.hbar;
    let k = widths.len();

    let draw = |index: usize| -> Result<Vec<Complex64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let mut z = || -> f64 { rng.sample::<f64, _>(StandardNormal) };
        let q_bar = u.momentum + Vec3::new(z(), z(), z()) * (b / 2f64.sqrt());
        let (z1, z2, z3) = (z(), z(), z());
        let qb = q_bar.norm();
        let axis = q_bar / qb;
        let (e1, e2) = axis.orthonormal_frame();
        let s_perp = (e1 * z1 + e2 * z2) * (2f64.sqrt() * b);
        let ct = 2.0 * rng.random::<f64>() - 1.0;
        let ph = 2.0 * PI * rng.random::<f64>();
        let st = (1.0 - ct * ct).sqrt();
        let n_hat = Vec3::new(st * ph.cos(), st * ph.sin(), ct);
        // u/(N₃(q̄)N₂(s⊥)) leaves 4πb² e^{−s∥²/4b²} and the phase.
        let mut out = Vec::with_capacity(k);
        for &s in widths {
            let s_par = s * z3;
            let sv = s_perp + axis * s_par;
            let q1 = q_bar - sv * 0.5;
            let q2 = q_bar + sv * 0.5;
            let (m1, m2) = (q1.norm(), q2.norm());
            let g = m2 - m1;
            let smear_ratio = (-(g * g - s_par * s_par) / (2.0 * s * s)).exp();
            let packet = 4.0 * PI * b * b * (-s_par * s_par / (4.0 * b * b)).exp();
            let phase = Complex64::from_polar(1.0, sv.dot(u.center) / h + m1 * n_hat.dot(r) / h);
            let out_q = n_hat * m1;
            let amp = amplitude_vec(model, out_q, q2, kin)?.conj()
                * amplitude_vec(model, out_q, q1, kin)?;
            let w = packet * smear_ratio * 4.0 * PI * m1 / (4.0 * PI * PI * h * h * m2);
            out.push(amp * phase * w);
        }
        Ok(out)
    };

    let rows: Vec<Vec<Complex64>> = (0..samples)
        .into_par_iter()
        .map(draw)
        .collect::<Result<_>>()?;

    let mut values = Vec::with_capacity(k);
    let mut stderrs = Vec::with_capacity(k);
    for j in 0..k {
        let col: Vec<Complex64> = rows.iter().map(|row| row[j]).collect();
        let (m, e) = complex_stats(&col);
        values.push((m.re, m.im));
        stderrs.push(e);
    }
    let a = zero_width_weights(widths);
    let extrap: Vec<Complex64> = rows
        .iter()
        .map(|row| row.iter().zip(&a).map(|(v, w)| v * w).sum())
        .collect();
    let (ex, ex_err) = complex_stats(&extrap);

    // Two-point extrapolations (s_i²I_j − s_j²I_i)/(s_i² − s_j²).
    let pair = |i: usize, j: usize, row: &[Complex64]| -> Complex64 {
        let (xi, xj) = (widths[i] * widths[i], widths[j] * widths[j]);
        (row[j] * xi - row[i] * xj) / (xi - xj)
    };
    let gaps: Vec<Complex64> = rows
        .iter()
        .map(|row| pair(0, 1, row) - pair(k - 2, k - 1, row))
        .collect();
    let (gap, gap_err) = complex_stats(&gaps);

    Ok(SmearedEstimate {
        widths: widths.to_vec(),
        values,
        stderrs,
        extrapolated: (ex.re, ex.im),
        extrapolated_stderr: ex_err,
        richardson_gap: gap.norm(),
        richardson_gap_stderr: gap_err,
    })
}
