// SPDX-License-Identifier: Apache-2.0

//! Weak-coupling route to F(R) through the bath correlation spectrum
//!
//!   Ḡ_q(ω) = (2πnmħ/q)|V̄(q)|²(β/2πm)^{1/2} exp[−(βmħ²/2q²)(ω − q²/2mħ)²],
//!
//! with F(R) = 8π³ħ∫d³q (1 − e^{−iq·R/ħ}) Ḡ_q(0).
//!
//! Since F is a rate, Ḡ_q(ω) has the unit 1/(energy·time²·momentum³).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::BathSpec;
use crate::error::{ensure_finite, Error, Result};
use crate::quadrature::{gauss_legendre, integrate_semi_infinite, oscillatory_nodes};
use crate::rate::{collect_level, refine, zero_results, QuadratureSpec, RateResult};
use crate::scattering::PotentialModel;
use crate::vec3::Vec3;

/// V̄(q) = ∫d³r (2πħ)^{-3} V(r) e^{−iq·r/ħ}.
pub fn potential_fourier(potential: &PotentialModel, q: Vec3, hbar: f64) -> f64 {
    potential.fourier(q.norm(), hbar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbarSpec {
    pub bath: BathSpec,
    pub potential: PotentialModel,
}

fn check_q(q: f64, omega: f64) -> Result<()> {
    ensure_finite("q", q)?;
    ensure_finite("omega", omega)?;
    if q <= 0.0 {
        return Err(Error::invalid("q", "momentum transfer must be positive"));
    }
    Ok(())
}

/// p_cut = |2mħω − q²|/(2q): the smallest bath momentum able to absorb
/// momentum q and energy ħω.
pub fn p_cut(q: f64, omega: f64, mass: f64, hbar: f64) -> f64 {
    (2.0 * mass * hbar * omega - q * q).abs() / (2.0 * q)
}

/// Closed-form Ḡ_q(ω).
pub fn gbar_closed(spec: &GbarSpec, q: f64, omega: f64) -> Result<f64> {
    check_q(q, omega)?;
    let b = &spec.bath;
    let (m, beta, h) = (b.mass(), b.beta(), b.hbar());
    let v = spec.potential.fourier(q, h);
    let detune = omega - q * q / (2.0 * m * h);
    Ok(2.0 * PI * b.density() * m * h / q
        * v
        * v
        * (beta / (2.0 * PI * m)).sqrt()
        * (-(beta * m * h * h / (2.0 * q * q)) * detune * detune).exp())
}

/// Ḡ_q(ω) = (πmħ/q)|V̄(q)|² n ∫_{p_cut}^∞ ν(p)/p dp by adaptive quadrature.
///
/// With p = p_cut + s the Boltzmann factor e^{−βp_cut²/2m} comes out of the
/// integral exactly, so the remaining quadrature stays well scaled deep in
/// the tail.
pub fn gbar_integral(spec: &GbarSpec, q: f64, omega: f64) -> Result<f64> {
    check_q(q, omega)?;
    let b = &spec.bath;
    let (m, beta, h) = (b.mass(), b.beta(), b.hbar());
    let pc = p_cut(q, omega, m, h);
    let norm = 4.0 * PI * (beta / (2.0 * PI * m)).powf(1.5);
    let tail = integrate_semi_infinite(
        |s| (pc + s) * (-beta * (2.0 * pc * s + s * s) / (2.0 * m)).exp(),
        0.0,
        0.0,
        1e-13,
        2000,
    )?;
    let v = spec.potential.fourier(q, h);
    let outer = (-beta * pc * pc / (2.0 * m)).exp();
    Ok(PI * m * h / q * v * v * b.density() * norm * outer * tail.value)
}

/// Minimal coarse-graining time βħ for the golden-rule limit.
pub fn golden_rule_window(bath: &BathSpec) -> f64 {
    bath.beta() * bath.hbar()
}

/// F(R) = 8π³ħ∫d³q (1 − e^{−iq·R/ħ}) Ḡ_q(0) at many separations.
///
/// Reduced to (|q|, cos θ against R); the radial range runs to twice the
/// configured cutoff because Ḡ_q(0) decays only like e^{−βq²/8m}.
pub fn rate_weak_coupling_many(
    bath: &BathSpec,
    potential: &PotentialModel,
    separations: &[Vec3],
    quad: &QuadratureSpec,
) -> Result<Vec<RateResult>> {
    potential.validate()?;
    quad.validate()?;
    let radii: Vec<f64> = separations.iter().map(|r| r.norm()).collect();
    if radii.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("R", "separation must be finite"));
    }
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    if bath.density() == 0.0 || r_max == 0.0 {
        return Ok(zero_results(radii.len()));
    }
    let spec = GbarSpec {
        bath: *bath,
        potential: *potential,
    };
    let h = bath.hbar();
    let qmax = 2.0 * quad.radial_qmax_thermal_units * bath.thermal_momentum();
    refine(&radii, quad, "weak-coupling refinement", |level| {
        let base = oscillatory_nodes(quad.radial_nodes, qmax * r_max / h);
        let nr = base << level;
        if nr > quad.max_nodes {
            return Err(Error::Convergence {
                context: format!("weak-coupling radial nodes {nr} exceed cap"),
                achieved: f64::NAN,
                requested: quad.refine_tol,
            });
        }
        let rule = gauss_legendre(nr).mapped(0.0, qmax);
        let scale = 1.0 + 0.5 * level as f64;
        let per_node: Vec<(Vec<f64>, Vec<f64>, f64)> = rule
            .nodes
            .par_iter()
            .zip(rule.weights.par_iter())
            .map(|(&q, &wq)| -> Result<(Vec<f64>, Vec<f64>, f64)> {
                // d³q = 2π q² dq d(cos θ)
                let g = gbar_closed(&spec, q, 0.0)?;
                let weight = wq * 2.0 * PI * q * q * g;
                let mut values = Vec::with_capacity(radii.len());
                let mut imag = Vec::with_capacity(radii.len());
                for &r in &radii {
                    let kr = q * r / h;
                    let nc = (scale * oscillatory_nodes(quad.angular_theta_nodes, kr) as f64).ceil()
                        as usize;
                    let c_rule = gauss_legendre(nc);
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for (&c, &wc) in c_rule.nodes.iter().zip(&c_rule.weights) {
                        let ph = kr * c;
                        let s = (0.5 * ph).sin();
                        re += wc * 2.0 * s * s;
                        im += wc * ph.sin();
                    }
                    values.push(weight * re);
                    imag.push(weight * im);
                }
                Ok((values, imag, weight * 2.0))
            })
            .collect::<Result<_>>()?;
        Ok(collect_level(
            &per_node,
            radii.len(),
            8.0 * PI.powi(3) * h,
            rule.len(),
        ))
    })
}

pub fn rate_weak_coupling(
    bath: &BathSpec,
    potential: &PotentialModel,
    r: Vec3,
    quad: &QuadratureSpec,
) -> Result<RateResult> {
    Ok(rate_weak_coupling_many(bath, potential, &[r], quad)?[0])
}
