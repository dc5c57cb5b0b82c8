// SPDX-License-Identifier: Apache-2.0

//! The localization rate F(R).
//!
//! Two routes live here. The general route integrates
//!
//!   F(R) = ε n ∫dq ν(q) (q/m) ∫ dn̂₁dn̂₂/4π (1 − e^{iq(n̂₁−n̂₂)·R/ħ}) |f(qn̂₂, qn̂₁)|²
//!
//! directly over (cos θ₁, cos θ₂, Δφ) measured from R. The replacement route
//! averages the single-collision decoherence function,
//! F = n∫d³p μ(p)(p/m)σ(p)(1 − Re η_p(R)), using Legendre moments of |f|².
//! Both assume an isotropic amplitude, so F depends on |R| only.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{BathSpec, EpsilonMode, Kinematics};
use crate::error::{Error, Result};
use crate::quadrature::{
    gauss_legendre, oscillatory_nodes, pairwise_sum, periodic_trapezoid, Rule,
};
use crate::scattering::{total_cross_section, AmplitudeModel, OnShell};
use crate::special::{legendre_p, spherical_jn};
use crate::thermal::speed_distribution;
use crate::vec3::Vec3;

/// Node counts and tolerances shared by the quadrature routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub radial_nodes: usize,
    /// Upper radial limit in units of √(2mk_BT).
    pub radial_qmax_thermal_units: f64,
    pub angular_theta_nodes: usize,
    pub angular_phi_nodes: usize,
    pub refine_tol: f64,
    /// Refinement passes after the first before giving up.
    pub max_levels: usize,
    /// Hard cap on any single node count.
    pub max_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            radial_nodes: 32,
            radial_qmax_thermal_units: 8.0,
            angular_theta_nodes: 16,
            angular_phi_nodes: 16,
            refine_tol: 1e-9,
            max_levels: 4,
            max_nodes: 4096,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("quad.radial_nodes", self.radial_nodes),
            ("quad.angular_theta_nodes", self.angular_theta_nodes),
            ("quad.angular_phi_nodes", self.angular_phi_nodes),
        ] {
            if n < 8 {
                return Err(Error::invalid(name, format!("must be at least 8, got {n}")));
            }
        }
        if !(self.refine_tol > 0.0 && self.refine_tol.is_finite()) {
            return Err(Error::invalid("quad.refine_tol", "must be positive"));
        }
        if !(self.radial_qmax_thermal_units > 0.0 && self.radial_qmax_thermal_units.is_finite()) {
            return Err(Error::invalid("quad.qmax", "must be positive"));
        }
        if self.max_nodes < 64 {
            return Err(Error::invalid("quad.max_nodes", "must be at least 64"));
        }
        Ok(())
    }

    fn angular_scale(level: usize) -> f64 {
        1.0 + 0.5 * level as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    General,
    Replacement,
    WeakCoupling,
    MonteCarlo,
}

impl Route {
    pub fn label(self) -> &'static str {
        match self {
            Route::General => "general",
            Route::Replacement => "replacement",
            Route::WeakCoupling => "weak_coupling",
            Route::MonteCarlo => "monte_carlo",
        }
    }
}

/// One converged rate value with its quadrature diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub value: f64,
    /// Largest |Im| of the angular sums, relative to the saturation scale.
    pub imag_residue: f64,
    /// Relative change between the last two refinement levels.
    pub achieved_tol: f64,
    pub levels: usize,
    pub radial_nodes: usize,
    /// A small negative value was reset to zero.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub model: String,
    pub thermal_momentum: f64,
    pub hbar: f64,
    pub density: f64,
    pub notes: Vec<String>,
}

/// Sampled F(R) along with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceCurve {
    pub separations: Vec<Vec3>,
    pub values: Vec<f64>,
    pub route: Route,
    pub epsilon: EpsilonMode,
    pub stderr: Option<Vec<f64>>,
    pub metadata: CurveMetadata,
}

impl DecoherenceCurve {
    pub fn new(
        separations: Vec<Vec3>,
        values: Vec<f64>,
        route: Route,
        epsilon: EpsilonMode,
        bath: &BathSpec,
        model: &str,
    ) -> Result<Self> {
        if separations.len() != values.len() {
            return Err(Error::Contract(
                "separations and values differ in length".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Contract(format!(
                "rate value {v} is negative or not finite"
            )));
        }
        Ok(DecoherenceCurve {
            separations,
            values,
            route,
            epsilon,
            stderr: None,
            metadata: CurveMetadata {
                model: model.to_string(),
                thermal_momentum: bath.thermal_momentum(),
                hbar: bath.hbar(),
                density: bath.density(),
                notes: Vec::new(),
            },
        })
    }

    /// Same curve with every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> DecoherenceCurve {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        if let Some(e) = out.stderr.as_mut() {
            e.iter_mut().for_each(|v| *v *= c.abs());
        }
        out
    }
}

fn check_inputs(model: &AmplitudeModel, quad: &QuadratureSpec, rs: &[Vec3]) -> Result<()> {
    model.validate()?;
    quad.validate()?;
    for r in rs {
        if !r.is_finite() {
            return Err(Error::invalid("R", "separation must be finite"));
        }
    }
    Ok(())
}

/// Symmetric half of a periodic trapezoid for an integrand even in φ:
/// (cos φ_k, weight) over k = 0..=n/2.
fn half_trapezoid(n: usize) -> Vec<(f64, f64)> {
    let n = n + n % 2;
    let full = periodic_trapezoid(n);
    (0..=n / 2)
        .map(|k| {
            let w = if k == 0 || k == n / 2 {
                full.weights[k]
            } else {
                2.0 * full.weights[k]
            };
            (full.nodes[k].cos(), w)
        })
        .collect()
}

struct LevelNodes {
    theta: usize,
    phi: usize,
}

fn general_angular_nodes(
    shell: &OnShell,
    kr_max: f64,
    quad: &QuadratureSpec,
    level: usize,
) -> Result<LevelNodes> {
    let scale = QuadratureSpec::angular_scale(level);
    let theta =
        (scale * oscillatory_nodes(quad.angular_theta_nodes, kr_max) as f64).ceil() as usize;
    let phi =
        (scale * quad.angular_phi_nodes.max(shell.azimuthal_bandwidth()) as f64).ceil() as usize;
    let worst = theta.max(phi);
    if worst > quad.max_nodes {
        return Err(Error::Convergence {
            context: format!(
                "angular node escalation needs {worst} nodes (cap {})",
                quad.max_nodes
            ),
            achieved: f64::NAN,
            requested: quad.refine_tol,
        });
    }
    Ok(LevelNodes { theta, phi })
}

/// Per-momentum angular factor of the general route for every radius, plus σ.
struct AngularGeneral {
    inner: Vec<f64>,
    imag: Vec<f64>,
    sigma: f64,
}

fn angular_general(shell: &OnShell, k: f64, radii: &[f64], nodes: &LevelNodes) -> AngularGeneral {
    let rule = gauss_legendre(nodes.theta);
    let n = rule.len();
    let c = &rule.nodes;
    let w = &rule.weights;
    let s: Vec<f64> = c.iter().map(|x| (1.0 - x * x).max(0.0).sqrt()).collect();
    let phi = half_trapezoid(nodes.phi);
    // K_ij = ∫dΔφ |f|²(c_i c_j + s_i s_j cos Δφ), upper triangle row-major.
    let mut kmat = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let a = c[i] * c[j];
            let b = s[i] * s[j];
            let v: f64 = phi
                .iter()
                .map(|&(cp, wp)| wp * shell.abs2(a + b * cp))
                .sum();
            kmat[i * n + j] = v;
            kmat[j * n + i] = v;
        }
    }
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..n {
        diag += w[i] * w[i] * kmat[i * n + i];
        for j in (i + 1)..n {
            off += w[i] * w[j] * kmat[i * n + j];
        }
    }
    let sigma = 0.5 * (diag + 2.0 * off);
    let mut inner = Vec::with_capacity(radii.len());
    let mut imag = Vec::with_capacity(radii.len());
    // cos(kR(c_i − c_j)) and sin(kR(c_i − c_j)) from per-node tables.
    let mut cs = vec![0.0; n];
    let mut sn = vec![0.0; n];
    for &r in radii {
        let kr = k * r;
        for i in 0..n {
            let (si, ci) = (kr * c[i]).sin_cos();
            cs[i] = ci;
            sn[i] = si;
        }
        let mut re = 0.0;
        let mut im = 0.0;
        for i in 0..n {
            let mut row_re = 0.0;
            let mut row_im = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let kw = w[j] * kmat[i * n + j];
                let d = c[i] - c[j];
                // 1 − cos d loses precision for small kR|Δc|; use 2sin²(d/2) there.
                let one_minus_cos = if (kr * d).abs() < 0.1 {
                    let h = (0.5 * kr * d).sin();
                    2.0 * h * h
                } else {
                    1.0 - (cs[i] * cs[j] + sn[i] * sn[j])
                };
                row_re += kw * one_minus_cos;
                row_im += kw * (sn[i] * cs[j] - cs[i] * sn[j]);
            }
            re += w[i] * row_re;
            im += w[i] * row_im;
        }
        // ½ Σ w w K (1 − cos d); the sine part is odd.
        inner.push(0.5 * re);
        imag.push(0.5 * im);
    }
    AngularGeneral { inner, imag, sigma }
}

fn radial_rule(
    bath: &BathSpec,
    quad: &QuadratureSpec,
    r_max: f64,
    level: usize,
) -> Result<(Rule, f64)> {
    let qmax = quad.radial_qmax_thermal_units * bath.thermal_momentum();
    let base = oscillatory_nodes(quad.radial_nodes, qmax * r_max / bath.hbar());
    let n = base << level;
    if n > quad.max_nodes {
        return Err(Error::Convergence {
            context: format!("radial refinement needs {n} nodes (cap {})", quad.max_nodes),
            achieved: f64::NAN,
            requested: quad.refine_tol,
        });
    }
    Ok((gauss_legendre(n).mapped(0.0, qmax), qmax))
}

pub(crate) struct LevelOutput {
    pub(crate) values: Vec<f64>,
    pub(crate) imag: Vec<f64>,
    pub(crate) saturation: f64,
    pub(crate) radial_nodes: usize,
}

/// Runs one route level by level until every radius has converged.
pub(crate) fn refine<F>(
    radii: &[f64],
    quad: &QuadratureSpec,
    context: &str,
    mut level_fn: F,
) -> Result<Vec<RateResult>>
where
    F: FnMut(usize) -> Result<LevelOutput>,
{
    let mut prev = level_fn(0)?;
    for level in 1..=quad.max_levels {
        let next = level_fn(level)?;
        let mut worst: f64 = 0.0;
        for (a, b) in prev.values.iter().zip(&next.values) {
            let change = (a - b).abs();
            let scale = b.abs().max(1e-300);
            worst = worst.max(change / scale);
        }
        if worst <= quad.refine_tol {
            return finish(radii, next, worst, level, quad);
        }
        prev = next;
    }
    let mut worst: f64 = 0.0;
    let last = level_fn(quad.max_levels + 1)?;
    for (a, b) in prev.values.iter().zip(&last.values) {
        worst = worst.max((a - b).abs() / b.abs().max(1e-300));
    }
    Err(Error::Convergence {
        context: context.to_string(),
        achieved: worst,
        requested: quad.refine_tol,
    })
}

fn finish(
    radii: &[f64],
    out: LevelOutput,
    achieved: f64,
    levels: usize,
    quad: &QuadratureSpec,
) -> Result<Vec<RateResult>> {
    let scale = out.saturation.abs();
    let mut results = Vec::with_capacity(radii.len());
    for (i, &v) in out.values.iter().enumerate() {
        let imag_residue = if scale > 0.0 {
            out.imag[i].abs() / scale
        } else {
            0.0
        };
        if imag_residue > quad.refine_tol {
            return Err(Error::Convergence {
                context: "imaginary residue of the angular quadrature".into(),
                achieved: imag_residue,
                requested: quad.refine_tol,
            });
        }
        let mut value = v;
        let mut clamped = false;
        if value < 0.0 {
            if value.abs() <= quad.refine_tol * scale.max(f64::MIN_POSITIVE) {
                value = 0.0;
                clamped = true;
            } else {
                return Err(Error::Contract(format!(
                    "negative rate {v:e} at R={} beyond quadrature tolerance",
                    radii[i]
                )));
            }
        }
        results.push(RateResult {
            value,
            imag_residue,
            achieved_tol: achieved,
            levels,
            radial_nodes: out.radial_nodes,
            clamped,
        });
    }
    Ok(results)
}

pub(crate) fn zero_results(n: usize) -> Vec<RateResult> {
    vec![
        RateResult {
            value: 0.0,
            imag_residue: 0.0,
            achieved_tol: 0.0,
            levels: 0,
            radial_nodes: 0,
            clamped: false,
        };
        n
    ]
}

/// F(R) by the general formula at many separations (sharing the angular work).
pub fn rate_general_many(
    bath: &BathSpec,
    model: &AmplitudeModel,
    separations: &[Vec3],
    quad: &QuadratureSpec,
    epsilon: EpsilonMode,
) -> Result<Vec<RateResult>> {
    check_inputs(model, quad, separations)?;
    let radii: Vec<f64> = separations.iter().map(|r| r.norm()).collect();
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    if bath.density() == 0.0 || r_max == 0.0 {
        return Ok(zero_results(radii.len()));
    }
    let kin = bath.kinematics();
    let prefactor = epsilon.multiplier() * bath.density();
    refine(&radii, quad, "general-route refinement", |level| {
        let (rule, _) = radial_rule(bath, quad, r_max, level)?;
        let per_node: Vec<(Vec<f64>, Vec<f64>, f64)> = rule
            .nodes
            .par_iter()
            .zip(rule.weights.par_iter())
            .map(|(&q, &wq)| -> Result<(Vec<f64>, Vec<f64>, f64)> {
                let weight = wq * speed_distribution(bath, q) * q / kin.mass;
                if weight == 0.0 {
                    return Ok((vec![0.0; radii.len()], vec![0.0; radii.len()], 0.0));
                }
                let shell = model.on_shell(q, kin)?;
                let k = q / kin.hbar;
                let nodes = general_angular_nodes(&shell, k * r_max, quad, level)?;
                let a = angular_general(&shell, k, &radii, &nodes);
                Ok((
                    a.inner.iter().map(|v| weight * v).collect(),
                    a.imag.iter().map(|v| weight * v).collect(),
                    weight * a.sigma,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(collect_level(&per_node, radii.len(), prefactor, rule.len()))
    })
}

/// Real parts, imaginary parts and saturation term at one radial node.
pub(crate) type NodeSums = (Vec<f64>, Vec<f64>, f64);

pub(crate) fn collect_level(
    per_node: &[NodeSums],
    nr: usize,
    prefactor: f64,
    radial_nodes: usize,
) -> LevelOutput {
    let column = |pick: &dyn Fn(&NodeSums) -> f64| -> f64 {
        let vals: Vec<f64> = per_node.iter().map(pick).collect();
        prefactor * pairwise_sum(&vals)
    };
    let values = (0..nr).map(|i| column(&|t| t.0[i])).collect();
    let imag = (0..nr).map(|i| column(&|t| t.1[i])).collect();
    let saturation = column(&|t| t.2);
    LevelOutput {
        values,
        imag,
        saturation,
        radial_nodes,
    }
}

/// F(R) by the general formula.
pub fn rate_general(
    bath: &BathSpec,
    model: &AmplitudeModel,
    r: Vec3,
    quad: &QuadratureSpec,
    epsilon: EpsilonMode,
) -> Result<RateResult> {
    Ok(rate_general_many(bath, model, &[r], quad, epsilon)?[0])
}

/// η_p(R) = 1 − (1/σ(p)) ∫dn̂ (1 − e^{i(p−pn̂)·R/ħ}) |f(pn̂, p)|².
///
/// Direct quadrature with n̂ measured from p̂: Gauss–Legendre in n̂·p̂ and a
/// periodic trapezoid around p̂.
pub fn per_collision_decoherence(
    model: &AmplitudeModel,
    p: Vec3,
    r: Vec3,
    kin: Kinematics,
) -> Result<Complex64> {
    let pm = p.norm();
    if !(pm > 0.0) || !p.is_finite() {
        return Err(Error::invalid("p", "momentum must be nonzero and finite"));
    }
    if !r.is_finite() {
        return Err(Error::invalid("R", "separation must be finite"));
    }
    let shell = model.on_shell(pm, kin)?;
    let sigma = total_cross_section(model, pm, kin)?;
    if !(sigma > 0.0) {
        return Err(Error::DegenerateModel(
            "total cross section vanishes".into(),
        ));
    }
    let p_hat = p / pm;
    let k = pm / kin.hbar;
    let rn = r.norm();
    let (cs, ss) = if rn > 0.0 {
        let c = (p_hat.dot(r) / rn).clamp(-1.0, 1.0);
        (c, (1.0 - c * c).max(0.0).sqrt())
    } else {
        (1.0, 0.0)
    };
    let kr = k * rn;
    let eval = |nt: usize, npsi: usize| -> Complex64 {
        let t_rule = gauss_legendre(nt);
        let psi = half_trapezoid(npsi);
        let mut acc = Complex64::new(0.0, 0.0);
        for (&t, &wt) in t_rule.nodes.iter().zip(&t_rule.weights) {
            let st = (1.0 - t * t).max(0.0).sqrt();
            let g = shell.abs2(t);
            let mut row = Complex64::new(0.0, 0.0);
            for &(cp, wp) in &psi {
                // (p − pn̂)·R/ħ = kR(c_s − n̂·R̂)
                let phase = kr * (cs - (cs * t + ss * st * cp));
                let h = (0.5 * phase).sin();
                // 1 − e^{iφ} = 2 sin²(φ/2) − i sin φ
                row += wp * Complex64::new(2.0 * h * h, -phase.sin());
            }
            acc += wt * g * row;
        }
        acc
    };
    let mut nt = oscillatory_nodes(32, 2.0 * kr) + shell.azimuthal_bandwidth() / 2;
    let mut npsi = oscillatory_nodes(32, 2.0 * kr * ss).max(shell.azimuthal_bandwidth());
    let mut prev = eval(nt, npsi);
    for _ in 0..6 {
        nt = nt * 3 / 2;
        npsi = npsi * 3 / 2;
        let next = eval(nt, npsi);
        if (next - prev).norm() <= 1e-12 * sigma {
            return Ok(Complex64::new(1.0, 0.0) - next / sigma);
        }
        prev = next;
    }
    Err(Error::Convergence {
        context: "decoherence-function quadrature".into(),
        achieved: f64::NAN,
        requested: 1e-12,
    })
}

/// Legendre moments G_L = ∫_{-1}^{1} |f|²(t) P_L(t) dt for L = 0..=l_cut.
fn legendre_moments(shell: &OnShell, l_cut: usize, nodes: usize) -> Vec<f64> {
    let rule = gauss_legendre(nodes);
    let mut g = vec![0.0; l_cut + 1];
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        let v = w * shell.abs2(t);
        let p = legendre_p(l_cut, t);
        for (gl, pl) in g.iter_mut().zip(&p) {
            *gl += v * pl;
        }
    }
    g
}

fn multipole_cut(kr: f64) -> usize {
    (kr + 6.0 * kr.cbrt() + 25.0).ceil() as usize
}

/// Moments above the degree of a polynomial |f|² vanish.
fn moment_cut(shell: &OnShell, kr: f64) -> usize {
    let cut = multipole_cut(kr);
    shell.abs2_degree().map_or(cut, |d| cut.min(d))
}

/// η_p(R) for p̂·R̂ = c by the multipole expansion
/// η = (2π/σ) e^{ikRc} Σ_L (2L+1)(−i)^L j_L(kR) G_L P_L(c).
fn eta_multipole(kr: f64, c: f64, sigma: f64, jl: &[f64], moments: &[f64]) -> Complex64 {
    let p = legendre_p(moments.len() - 1, c);
    let mut sum = Complex64::new(0.0, 0.0);
    let phases = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, -1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, 1.0),
    ];
    for l in 0..moments.len() {
        sum += phases[l % 4] * ((2 * l + 1) as f64 * jl[l] * moments[l] * p[l]);
    }
    Complex64::from_polar(2.0 * PI / sigma, kr * c) * sum
}

/// η_p(R) through Legendre moments of |f|²; an independent evaluation of
/// [`per_collision_decoherence`].
pub fn per_collision_decoherence_multipole(
    model: &AmplitudeModel,
    p: Vec3,
    r: Vec3,
    kin: Kinematics,
) -> Result<Complex64> {
    let pm = p.norm();
    if !(pm > 0.0) {
        return Err(Error::invalid("p", "momentum must be nonzero"));
    }
    let rn = r.norm();
    if rn == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let shell = model.on_shell(pm, kin)?;
    let sigma = total_cross_section(model, pm, kin)?;
    let kr = pm * rn / kin.hbar;
    let l_cut = moment_cut(&shell, kr);
    let moments = legendre_moments(&shell, l_cut, l_cut + shell.azimuthal_bandwidth() + 32);
    let jl = spherical_jn(l_cut, kr);
    Ok(eta_multipole(
        kr,
        p.dot(r) / (pm * rn),
        sigma,
        &jl,
        &moments,
    ))
}

/// F(R) = n∫d³p μ(p)(p/m)σ(p)(1 − Re η_p(R)) at many separations.
pub fn rate_via_replacement_many(
    bath: &BathSpec,
    model: &AmplitudeModel,
    separations: &[Vec3],
    quad: &QuadratureSpec,
) -> Result<Vec<RateResult>> {
    check_inputs(model, quad, separations)?;
    let radii: Vec<f64> = separations.iter().map(|r| r.norm()).collect();
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    if bath.density() == 0.0 || r_max == 0.0 {
        return Ok(zero_results(radii.len()));
    }
    let kin = bath.kinematics();
    let n = bath.density();
    refine(&radii, quad, "replacement-route refinement", |level| {
        let (rule, _) = radial_rule(bath, quad, r_max, level)?;
        let scale = QuadratureSpec::angular_scale(level);
        let per_node: Vec<(Vec<f64>, Vec<f64>, f64)> = rule
            .nodes
            .par_iter()
            .zip(rule.weights.par_iter())
            .map(|(&p, &wp)| -> Result<(Vec<f64>, Vec<f64>, f64)> {
                let weight = wp * speed_distribution(bath, p) * p / kin.mass;
                if weight == 0.0 {
                    return Ok((vec![0.0; radii.len()], vec![0.0; radii.len()], 0.0));
                }
                let shell = model.on_shell(p, kin)?;
                let sigma = total_cross_section(model, p, kin)?;
                let k = p / kin.hbar;
                let l_cut = moment_cut(&shell, k * r_max);
                let nt =
                    (scale * (l_cut + shell.azimuthal_bandwidth() + 32) as f64).ceil() as usize;
                if nt > quad.max_nodes {
                    return Err(Error::Convergence {
                        context: format!("multipole moments need {nt} nodes"),
                        achieved: f64::NAN,
                        requested: quad.refine_tol,
                    });
                }
                let moments = legendre_moments(&shell, l_cut, nt);
                let mut values = Vec::with_capacity(radii.len());
                let mut imag = Vec::with_capacity(radii.len());
                for &r in &radii {
                    if r == 0.0 {
                        values.push(0.0);
                        imag.push(0.0);
                        continue;
                    }
                    let kr = k * r;
                    let lc = multipole_cut(kr).min(l_cut);
                    let jl = spherical_jn(lc, kr);
                    let nc = (scale
                        * (oscillatory_nodes(quad.angular_theta_nodes, kr) + lc / 2 + 8) as f64)
                        .ceil() as usize;
                    let c_rule = gauss_legendre(nc);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (&c, &wc) in c_rule.nodes.iter().zip(&c_rule.weights) {
                        let eta = eta_multipole(kr, c, sigma, &jl, &moments[..=lc]);
                        acc += wc * (Complex64::new(1.0, 0.0) - eta);
                    }
                    // Average over p̂ is ½∫dc.
                    values.push(weight * sigma * 0.5 * acc.re);
                    imag.push(weight * sigma * 0.5 * acc.im);
                }
                Ok((values, imag, weight * sigma))
            })
            .collect::<Result<_>>()?;
        Ok(collect_level(&per_node, radii.len(), n, rule.len()))
    })
}

pub fn rate_via_replacement(
    bath: &BathSpec,
    model: &AmplitudeModel,
    r: Vec3,
    quad: &QuadratureSpec,
) -> Result<RateResult> {
    Ok(rate_via_replacement_many(bath, model, &[r], quad)?[0])
}

/// |∫dn̂ |f(pn̂, p)|² / σ(p) − 1| with the solid angle measured in the lab
/// frame (a (θ, φ) product rule about ẑ, not about p̂).
pub fn conservation_check(model: &AmplitudeModel, p: Vec3, kin: Kinematics) -> Result<f64> {
    let pm = p.norm();
    if !(pm > 0.0) {
        return Err(Error::invalid("p", "momentum must be nonzero"));
    }
    let sigma = total_cross_section(model, pm, kin)?;
    if !(sigma > 0.0) {
        return Err(Error::DegenerateModel(
            "total cross section vanishes".into(),
        ));
    }
    let shell = model.on_shell(pm, kin)?;
    let p_hat = p / pm;
    let lab = |nth: usize, nph: usize| -> f64 {
        let th = gauss_legendre(nth);
        let ph = periodic_trapezoid(nph);
        let mut rows = Vec::with_capacity(nth);
        for (&c, &wc) in th.nodes.iter().zip(&th.weights) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            let row: f64 = ph
                .nodes
                .iter()
                .zip(&ph.weights)
                .map(|(&phi, &wphi)| {
                    let n = Vec3::new(s * phi.cos(), s * phi.sin(), c);
                    wphi * shell.abs2(n.dot(p_hat))
                })
                .sum();
            rows.push(wc * row);
        }
        pairwise_sum(&rows)
    };
    let base = 64 + 2 * shell.azimuthal_bandwidth();
    let (mut nth, mut nph) = (base, base);
    let mut prev = lab(nth, nph);
    loop {
        nth *= 2;
        nph *= 2;
        let next = lab(nth, nph);
        if (next - prev).abs() <= 1e-13 * next.abs() || nth > 4096 {
            return Ok((next / sigma - 1.0).abs());
        }
        prev = next;
    }
}

/// Large-separation limit n∫ν(q)(q/m)σ(q)dq, the total collision rate.
pub fn saturation_rate(
    bath: &BathSpec,
    model: &AmplitudeModel,
    quad: &QuadratureSpec,
) -> Result<f64> {
    model.validate()?;
    quad.validate()?;
    if bath.density() == 0.0 {
        return Ok(0.0);
    }
    let kin = bath.kinematics();
    let qmax = quad.radial_qmax_thermal_units * bath.thermal_momentum();
    let eval = |n: usize| -> Result<f64> {
        let rule = gauss_legendre(n).mapped(0.0, qmax);
        let terms: Vec<f64> = rule
            .nodes
            .par_iter()
            .zip(rule.weights.par_iter())
            .map(|(&q, &w)| -> Result<f64> {
                let weight = w * speed_distribution(bath, q) * q / kin.mass;
                if weight == 0.0 {
                    return Ok(0.0);
                }
                Ok(weight * total_cross_section(model, q, kin)?)
            })
            .collect::<Result<_>>()?;
        Ok(bath.density() * pairwise_sum(&terms))
    };
    let mut n = quad.radial_nodes;
    let mut prev = eval(n)?;
    loop {
        n *= 2;
        let next = eval(n)?;
        let change = (next - prev).abs() / next.abs().max(f64::MIN_POSITIVE);
        if change <= 1e-12 {
            return Ok(next);
        }
        if n > quad.max_nodes {
            return Err(Error::Convergence {
                context: "saturation-rate quadrature".into(),
                achieved: change,
                requested: 1e-12,
            });
        }
        prev = next;
    }
}

/// F(R) ≈ ΛR² fitted over the small-separation points of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationFit {
    pub lambda: f64,
    /// Root-mean-square relative deviation of the points from ΛR².
    pub relative_residual: f64,
    pub points: usize,
}

/// Quadratic regime: q_th·|R|/ħ at most this value.
pub const QUADRATIC_REGIME: f64 = 0.1;

pub fn localization_coefficient(curve: &DecoherenceCurve) -> Result<LocalizationFit> {
    let limit = QUADRATIC_REGIME * curve.metadata.hbar / curve.metadata.thermal_momentum;
    let pts: Vec<(f64, f64)> = curve
        .separations
        .iter()
        .zip(&curve.values)
        .map(|(r, f)| (r.norm(), *f))
        .filter(|(r, _)| *r > 0.0 && *r <= limit)
        .collect();
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 separations with 0 < |R| <= {limit:e}, found {}",
            pts.len()
        )));
    }
    let num: f64 = pts.iter().map(|(r, f)| f * r * r).sum();
    let den: f64 = pts.iter().map(|(r, _)| r.powi(4)).sum();
    let lambda = num / den;
    let rms = (pts
        .iter()
        .map(|(r, f)| {
            let model = lambda * r * r;
            ((f - model) / model).powi(2)
        })
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    Ok(LocalizationFit {
        lambda,
        relative_residual: rms,
        points: pts.len(),
    })
}
