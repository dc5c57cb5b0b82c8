// SPDX-License-Identifier: Apache-2.0

//! Wave-packet picture of a single collision and a Monte Carlo estimate of
//! the localization rate built from it.
//!
//! The thermal bath is decomposed into Gaussian packets of momentum width b.
//! A packet centred at r_o with mean momentum p_o changes ρ(R₁,R₂) by
//! ρ₀⟨ψ|A|ψ⟩ with
//!
//!   ⟨ψ|A|ψ⟩ = ∫d³q e^{−|q−p_o|²/b²}/(πb²)^{3/2} A(q),
//!   A(q) = Γ_q(r_o−R̄)∫dn̂ e^{i(q−qn̂)·D/ħ}|f|² − ½(Γ_q(r_o−R₁)+Γ_q(r_o−R₂))σ
//!          + (2πiħ/q)(Γ_q(r_o−R₁)−Γ_q(r_o−R₂)) Re f(q,q),
//!
//! where D = R₁−R₂, R̄ = (R₁+R₂)/2 and Γ_q is the transverse packet profile.
//! The last term is purely imaginary and is reported on its own.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::domain::{BathSpec, Kinematics};
use crate::error::{ensure_finite, Error, Result};
use crate::quadrature::{gauss_hermite, gauss_legendre, pairwise_sum, periodic_trapezoid};
use crate::rate::per_collision_decoherence_multipole;
use crate::scattering::{amplitude_vec, AmplitudeModel, OnShell};
use crate::thermal::{gamma_profile, PacketSplit};
use crate::vec3::Vec3;

/// Packets whose centre lies within this many widths of R̄ along the slab
/// overlap the sites initially and are rejected.
pub const OVERLAP_REJECTION_WIDTHS: f64 = 5.0;

/// Settings of [`mc_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub seed: u64,
    pub samples: usize,
    pub delta_t: f64,
    pub transverse_window: f64,
    pub bar_fraction: f64,
}

impl McConfig {
    /// Δt = 20·max(a, |D|)/v_wp and W⊥ = |D| + 6√(a² + s²), where
    /// s = bΔt/m is the transverse spread a packet picks up over the slab.
    pub fn auto(
        split: &PacketSplit,
        separation: f64,
        seed: u64,
        samples: usize,
        bar_fraction: f64,
    ) -> McConfig {
        let d = separation.abs();
        let delta_t = 20.0 * split.a.max(d) / split.v_wp();
        let s = split.b * delta_t / split.mass;
        McConfig {
            seed,
            samples,
            delta_t,
            transverse_window: d + 6.0 * (split.a * split.a + s * s).sqrt(),
            bar_fraction,
        }
    }

    /// Checks Δt ≥ 10a/v_wp, v_wp·Δt ≥ 10|D|, W⊥ ≥ 6a + |D| and the sample floor.
    pub fn validate(&self, split: &PacketSplit, separation: f64) -> Result<()> {
        ensure_finite("mc.delta_t", self.delta_t)?;
        ensure_finite("mc.transverse_window", self.transverse_window)?;
        if self.samples < 1000 {
            return Err(Error::invalid(
                "mc.samples",
                format!("need at least 1000 samples, got {}", self.samples),
            ));
        }
        let v = split.v_wp();
        if self.delta_t < 10.0 * split.a / v {
            return Err(Error::invalid(
                "mc.delta_t",
                format!(
                    "{} is shorter than 10 packet crossing times ({})",
                    self.delta_t,
                    10.0 * split.a / v
                ),
            ));
        }
        if v * self.delta_t < 10.0 * separation {
            return Err(Error::invalid(
                "mc.delta_t",
                format!(
                    "packets travel {} in delta_t, less than 10 site separations",
                    v * self.delta_t
                ),
            ));
        }
        if self.transverse_window < 6.0 * split.a + separation {
            return Err(Error::invalid(
                "mc.transverse_window",
                format!(
                    "{} is narrower than 6a + |D| = {}",
                    self.transverse_window,
                    6.0 * split.a + separation
                ),
            ));
        }
        let frac = split.t_bar / (split.t_bar + split.t_hat);
        if (frac - self.bar_fraction).abs() > 1e-12 * self.bar_fraction.max(1e-300) {
            return Err(Error::invalid(
                "mc.bar_fraction",
                format!(
                    "{} does not match the packet split ({frac})",
                    self.bar_fraction
                ),
            ));
        }
        Ok(())
    }
}

/// Result of [`mc_rate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Samples that were not rejected as overlapping.
    pub samples_used: usize,
    pub warnings: Vec<String>,
    /// Share of the sampled slab volume lying within the rejection zone.
    pub excluded_fraction: f64,
    /// Imaginary contribution of the Re f(q,q) term and its standard error.
    pub forward_imag: f64,
    pub forward_imag_stderr: f64,
    /// Largest b²|D|/(ħ|p|) among the accepted packets.
    pub max_neglect_ratio: f64,
}

/// ⟨ψ|A|ψ⟩ for one packet, split by term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketKernel {
    /// Full kernel including the forward term.
    pub value: Complex64,
    /// The (2πiħ/q)(Γ₁−Γ₂)Re f contribution alone.
    pub forward: Complex64,
    /// ⟨Γ_q(r_o−R_i)σ(q)⟩ for i = 1, 2.
    pub absorption: [f64; 2],
    /// p_o < 5b; the kernel formula assumes p_o ≫ b.
    pub slow_packet: bool,
}

fn check_kernel_args(r_o: Vec3, p_o: Vec3, r1: Vec3, r2: Vec3) -> Result<()> {
    for (name, v) in [("r_o", r_o), ("p_o", p_o), ("R1", r1), ("R2", r2)] {
        if !v.is_finite() {
            return Err(Error::invalid(name, "must be finite"));
        }
    }
    if !(p_o.norm() > 0.0) {
        return Err(Error::invalid("p_o", "packet momentum must be nonzero"));
    }
    Ok(())
}

/// (M₁, M₂) at (q, n̂, Δ).
pub fn m_kernels(
    model: &AmplitudeModel,
    q: Vec3,
    delta: Vec3,
    n_hat: Vec3,
    kin: Kinematics,
) -> Result<(Complex64, Complex64)> {
    let qm = q.norm();
    if !(qm > 0.0) || !q.is_finite() || !delta.is_finite() {
        return Err(Error::invalid("q", "momentum must be nonzero and finite"));
    }
    if delta.dot(q).abs() > 1e-12 * delta.norm() * qm {
        return Err(Error::invalid("delta", "must be perpendicular to q"));
    }
    if !((n_hat.norm() - 1.0).abs() <= 1e-12) {
        return Err(Error::invalid("n_hat", "must be a unit vector"));
    }
    let h = kin.hbar;
    let plus = q + delta * 0.5;
    let minus = q - delta * 0.5;
    let m1 = m1_kernel(model, q, delta, kin)?;
    let qq = (qm * qm + 0.25 * delta.norm_sq()).sqrt();
    let big_q = n_hat * qq;
    let m2 = amplitude_vec(model, big_q, plus, kin)?.conj()
        * amplitude_vec(model, big_q, minus, kin)?
        * (qq / qm)
        / (4.0 * PI * PI * h * h);
    Ok((m1, m2))
}

/// σ(q), J(q) = ∫dn̂(1 − e^{i(q−qn̂)·D/ħ})|f(qn̂,q)|² and Re f(q,q).
fn angular_factors(
    model: &AmplitudeModel,
    q: Vec3,
    d: Vec3,
    kin: Kinematics,
) -> Result<(f64, Complex64, f64)> {
    let qm = q.norm();
    if let AmplitudeModel::ConstantSWave { f0 } = *model {
        let sigma = 4.0 * PI * f0 * f0;
        let dn = d.norm();
        if dn == 0.0 {
            return Ok((sigma, Complex64::new(0.0, 0.0), f0));
        }
        let c = Complex64::from_polar(
            crate::special::sinc(qm * dn / kin.hbar),
            q.dot(d) / kin.hbar,
        );
        return Ok((sigma, sigma * (Complex64::new(1.0, 0.0) - c), f0));
    }
    let shell = model.on_shell(qm, kin)?;
    let sigma = cross_section(&shell)?;
    let j = if d.norm() == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        sigma * (Complex64::new(1.0, 0.0) - per_collision_decoherence_multipole(model, q, d, kin)?)
    };
    Ok((sigma, j, shell.forward().re))
}

fn cross_section(shell: &OnShell) -> Result<f64> {
    match shell.closed_cross_section() {
        Some(s) => Ok(s),
        None => shell.cross_section_quadrature(),
    }
}

/// Unnormalized sums over the q-average, before any window correction.
#[derive(Debug, Clone, Copy, Default)]
struct KernelParts {
    mid_sigma: f64,
    mid_j: Complex64,
    side: [f64; 2],
    forward: Complex64,
}

impl KernelParts {
    /// Re⟨A⟩ with each Γ term divided by its window mass.
    fn corrected_real(&self, mass_mid: f64, mass: [f64; 2]) -> f64 {
        -self.mid_j.re / mass_mid
            + (self.mid_sigma / mass_mid - 0.5 * (self.side[0] / mass[0] + self.side[1] / mass[1]))
    }

    fn value(&self) -> Complex64 {
        -self.mid_j + (self.mid_sigma - 0.5 * (self.side[0] + self.side[1])) + self.forward
    }
}

/// Gauss–Hermite node counts (transverse, longitudinal) for the q-average.
const KERNEL_NODES: (usize, usize) = (8, 6);
const KERNEL_REFINEMENTS: usize = 4;

/// ⟨Γ_q(r_o − c)σ⟩, ⟨Γ_q(r_o − c)J⟩ and ⟨Γ_q(r_o − c)·2πħRe f/q⟩ under the
/// packet momentum average.
///
/// To first order in the tilt of q̂, Γ_q(u) is a Gaussian in the transverse
/// Hermite variable x with centre −κc/(1+κ²) and width 1/√(1+κ²), where
/// κ = −(u·p̂)b/(|q∥|a). Far upstream of the sites that Gaussian is much
/// narrower than the packet weight, so the transverse nodes are shifted and
/// scaled onto it. The map is affine, so the average itself stays exact.
#[allow(clippy::too_many_arguments)]
fn profile_average(
    split: &PacketSplit,
    model: &AmplitudeModel,
    kin: Kinematics,
    u: Vec3,
    p_o: Vec3,
    d: Vec3,
    with_j: bool,
    nodes: (usize, usize),
) -> Result<(f64, Complex64, f64)> {
    let p = p_o.norm();
    let p_hat = p_o / p;
    let (e1, e2) = p_hat.orthonormal_frame();
    let c = [u.dot(e1) / split.a, u.dot(e2) / split.a];
    let along = u.dot(p_hat);
    let gp = gauss_hermite(nodes.0);
    let gl = gauss_hermite(nodes.1);
    let norm = PI.powf(-1.5);
    let (mut g_sigma, mut g_j, mut g_fwd) = (0.0, Complex64::new(0.0, 0.0), 0.0);
    for (&x3, &w3) in gl.nodes.iter().zip(&gl.weights) {
        let q_par = p + split.b * x3;
        let kappa = if q_par > 0.0 {
            -along * split.b / (q_par * split.a)
        } else {
            0.0
        };
        let s2 = 1.0 + kappa * kappa;
        let scale = s2.sqrt().recip();
        let centre = [-kappa * c[0] / s2, -kappa * c[1] / s2];
        for (&y1, &w1) in gp.nodes.iter().zip(&gp.weights) {
            let x1 = centre[0] + y1 * scale;
            for (&y2, &w2) in gp.nodes.iter().zip(&gp.weights) {
                let x2 = centre[1] + y2 * scale;
                let q = p_o + (e1 * x1 + e2 * x2 + p_hat * x3) * split.b;
                let qm = q.norm();
                if qm == 0.0 {
                    continue;
                }
                let gamma = gamma_profile(split, q / qm, u);
                if gamma == 0.0 {
                    continue;
                }
                // e^{−|x|²} against the e^{−|y|²} of the rule, and the Jacobian.
                let shift = (y1 * y1 + y2 * y2 - x1 * x1 - x2 * x2).exp() / s2;
                let w = w1 * w2 * w3 * norm * shift * gamma;
                let (sigma, j, re_f) = if with_j {
                    angular_factors(model, q, d, kin)?
                } else {
                    angular_factors(model, q, Vec3::ZERO, kin)?
                };
                g_sigma += w * sigma;
                g_j += w * j;
                g_fwd += w * 2.0 * PI * kin.hbar / qm * re_f;
            }
        }
    }
    Ok((g_sigma, g_j, g_fwd))
}

#[allow(clippy::too_many_arguments)]
fn kernel_parts(
    split: &PacketSplit,
    model: &AmplitudeModel,
    kin: Kinematics,
    r_o: Vec3,
    p_o: Vec3,
    r1: Vec3,
    r2: Vec3,
    nodes: (usize, usize),
) -> Result<KernelParts> {
    let r_bar = (r1 + r2) * 0.5;
    let d = r1 - r2;
    let (mid_sigma, mid_j, _) =
        profile_average(split, model, kin, r_o - r_bar, p_o, d, true, nodes)?;
    let (s1, _, f1) = profile_average(split, model, kin, r_o - r1, p_o, d, false, nodes)?;
    let (s2, _, f2) = profile_average(split, model, kin, r_o - r2, p_o, d, false, nodes)?;
    Ok(KernelParts {
        mid_sigma,
        mid_j,
        side: [s1, s2],
        forward: Complex64::new(0.0, f1 - f2),
    })
}

/// ⟨ψ|A|ψ⟩ for a packet centred at r_o with mean momentum p_o.
///
/// The q-average runs on a Gauss–Hermite product grid aligned with p_o,
/// refined until two successive grids agree to 1e-9 of σ(p_o)/πa²; a
/// convergence error otherwise.
pub fn single_packet_kernel(
    split: &PacketSplit,
    model: &AmplitudeModel,
    r_o: Vec3,
    p_o: Vec3,
    r1: Vec3,
    r2: Vec3,
) -> Result<PacketKernel> {
    check_kernel_args(r_o, p_o, r1, r2)?;
    model.validate()?;
    let kin = Kinematics {
        mass: split.mass,
        hbar: split.hbar,
    };
    let scale = cross_section(&model.on_shell(p_o.norm(), kin)?)? / (PI * split.a * split.a);
    let mut nodes = KERNEL_NODES;
    let mut coarse = kernel_parts(split, model, kin, r_o, p_o, r1, r2, nodes)?;
    let mut achieved = f64::INFINITY;
    let mut fine = coarse;
    for _ in 0..KERNEL_REFINEMENTS {
        nodes = (nodes.0 + 6, nodes.1 + 4);
        fine = kernel_parts(split, model, kin, r_o, p_o, r1, r2, nodes)?;
        achieved = (fine.value() - coarse.value()).norm() / scale;
        if achieved <= 1e-9 {
            break;
        }
        coarse = fine;
    }
    if achieved > 1e-9 {
        return Err(Error::Convergence {
            context: "packet kernel momentum average".into(),
            achieved,
            requested: 1e-9,
        });
    }
    Ok(PacketKernel {
        value: fine.value(),
        forward: fine.forward,
        absorption: fine.side,
        slow_packet: p_o.norm() < 5.0 * split.b,
    })
}

/// Δρ/ρ₀ = −Γ_{p_o}(r_o−R̄)∫dn̂(1 − e^{i(p_o−p_on̂)·(R₁−R₂)/ħ})|f(p_on̂,p_o)|²,
/// valid when |R₁−R₂| ≪ a; requires |R₁−R₂| ≤ 0.1a.
pub fn strong_condition_delta_rho(
    split: &PacketSplit,
    model: &AmplitudeModel,
    r_o: Vec3,
    p_o: Vec3,
    r1: Vec3,
    r2: Vec3,
) -> Result<Complex64> {
    check_kernel_args(r_o, p_o, r1, r2)?;
    let d = r1 - r2;
    if d.norm() > 0.1 * split.a {
        return Err(Error::invalid(
            "R1-R2",
            format!("separation {} exceeds 0.1a = {}", d.norm(), 0.1 * split.a),
        ));
    }
    let kin = Kinematics {
        mass: split.mass,
        hbar: split.hbar,
    };
    let (_, j, _) = angular_factors(model, p_o, d, kin)?;
    let gamma = gamma_profile(split, p_o / p_o.norm(), r_o - (r1 + r2) * 0.5);
    Ok(-gamma * j)
}

/// Mass of a 2-D Gaussian e^{−|x−c|²/w²}/(πw²) inside the square |x_k| ≤ half.
fn window_mass(c: [f64; 2], half: f64, w: f64) -> f64 {
    c.iter()
        .map(|&ck| 0.5 * (erf((half - ck) / w) + erf((half + ck) / w)))
        .product()
}

struct SampleOutcome {
    value: f64,
    forward: f64,
    excluded_len: f64,
    len: f64,
    neglect: f64,
    used: bool,
}

/// Monte Carlo estimate of F(R₁−R₂).
///
/// Each sample draws a packet momentum p from the Maxwell–Boltzmann law at
/// T̂ and a centre uniformly in the slab of length (p/m)Δt behind R̄ and
/// cross-section W⊥². The estimator is −n(p/m)W⊥² Re⟨ψ|A|ψ⟩. Centres closer
/// than 5a to R̄ along the slab are rejected and the rest of the slab stands
/// in for them; the rejected share of the volume is reported. Each Γ term is
/// divided by the mass of its (momentum-blurred) profile inside the window,
/// which removes the truncation bias of a finite W⊥.
pub fn mc_rate(
    bath: &BathSpec,
    split: &PacketSplit,
    model: &AmplitudeModel,
    r1: Vec3,
    r2: Vec3,
    mc: &McConfig,
) -> Result<McEstimate> {
    model.validate()?;
    if !r1.is_finite() || !r2.is_finite() {
        return Err(Error::invalid("R", "site positions must be finite"));
    }
    if (split.mass - bath.mass()).abs() > 1e-12 * bath.mass()
        || (split.t_bar + split.t_hat - bath.temperature()).abs() > 1e-12 * bath.temperature()
    {
        return Err(Error::invalid(
            "split",
            "packet split does not belong to this bath",
        ));
    }
    let d = r1 - r2;
    let dn = d.norm();
    mc.validate(split, dn)?;
    let n = bath.density();
    if n == 0.0 {
        return Ok(McEstimate {
            value: 0.0,
            stderr: 0.0,
            samples_used: 0,
            warnings: Vec::new(),
            excluded_fraction: 0.0,
            forward_imag: 0.0,
            forward_imag_stderr: 0.0,
            max_neglect_ratio: 0.0,
        });
    }
    let kin = bath.kinematics();
    let r_bar = (r1 + r2) * 0.5;
    let sigma_p = split.center_momentum_sigma();
    let w = mc.transverse_window;
    let half = 0.5 * w;
    let reject = OVERLAP_REJECTION_WIDTHS * split.a;

    let sample = |index: usize| -> Result<SampleOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
        rng.set_stream(index as u64);
        let mut normal = || -> f64 { rng.sample::<f64, _>(StandardNormal) };
        let p_vec = Vec3::new(normal(), normal(), normal()) * sigma_p;
        let p = p_vec.norm();
        let len = p / split.mass * mc.delta_t;
        if len <= reject || p == 0.0 {
            return Ok(SampleOutcome {
                value: 0.0,
                forward: 0.0,
                excluded_len: len,
                len,
                neglect: 0.0,
                used: false,
            });
        }
        let along = reject + (len - reject) * rng.random::<f64>();
        let t1 = (rng.random::<f64>() - 0.5) * w;
        let t2 = (rng.random::<f64>() - 0.5) * w;
        let p_hat = p_vec / p;
        let (e1, e2) = p_hat.orthonormal_frame();
        let r_o = r_bar - p_hat * along + e1 * t1 + e2 * t2;
        let parts = kernel_parts(split, model, kin, r_o, p_vec, r1, r2, KERNEL_NODES)?;
        let blur = (split.a * split.a + (along * split.b / p).powi(2)).sqrt();
        let offset = |r: Vec3| -> [f64; 2] {
            let u = r - r_bar;
            [u.dot(e1), u.dot(e2)]
        };
        let m_mid = window_mass([0.0, 0.0], half, blur);
        let m = [
            window_mass(offset(r1), half, blur),
            window_mass(offset(r2), half, blur),
        ];
        let weight = -n * (p / split.mass) * w * w;
        Ok(SampleOutcome {
            value: weight * parts.corrected_real(m_mid, m),
            forward: weight * parts.forward.im,
            excluded_len: reject,
            len,
            neglect: split.b * split.b * dn / (split.hbar * p),
            used: true,
        })
    };

    let outcomes: Vec<SampleOutcome> = (0..mc.samples)
        .into_par_iter()
        .map(sample)
        .collect::<Result<Vec<_>>>()?;

    let count = outcomes.len() as f64;
    let values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    let forwards: Vec<f64> = outcomes.iter().map(|o| o.forward).collect();
    let (mean, stderr) = mean_and_stderr(&values, count);
    let (f_mean, f_err) = mean_and_stderr(&forwards, count);
    let excluded = pairwise_sum(&outcomes.iter().map(|o| o.excluded_len).collect::<Vec<_>>());
    let total = pairwise_sum(&outcomes.iter().map(|o| o.len).collect::<Vec<_>>());
    let excluded_fraction = if total > 0.0 { excluded / total } else { 1.0 };
    let max_neglect_ratio = outcomes
        .iter()
        .filter(|o| o.used)
        .map(|o| o.neglect)
        .fold(0.0, f64::max);
    let samples_used = outcomes.iter().filter(|o| o.used).count();

    let mut warnings = Vec::new();
    if mean != 0.0 && stderr > 0.5 * mean.abs() {
        warnings.push(format!(
            "standard error {stderr:.3e} exceeds half the estimate {mean:.3e}"
        ));
    }
    if excluded_fraction > 0.5 {
        warnings.push(format!(
            "{:.1}% of the slab volume lies in the rejection zone",
            100.0 * excluded_fraction
        ));
    }
    let lambda = crate::thermal::thermal_wavelength(bath);
    if dn > 0.0 && mc.bar_fraction > 0.1 * dn / lambda {
        warnings.push(format!(
            "bar_fraction {} is not small against |D|/lambda = {:.3e}",
            mc.bar_fraction,
            dn / lambda
        ));
    }
    if max_neglect_ratio > 0.1 {
        warnings.push(format!(
            "largest b^2|D|/(hbar p) is {max_neglect_ratio:.3e}"
        ));
    }
    Ok(McEstimate {
        value: mean,
        stderr,
        samples_used,
        warnings,
        excluded_fraction,
        forward_imag: f_mean,
        forward_imag_stderr: f_err,
        max_neglect_ratio,
    })
}

fn mean_and_stderr(values: &[f64], count: f64) -> (f64, f64) {
    let mean = pairwise_sum(values) / count;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (count - 1.0).max(1.0);
    (mean, (var / count).sqrt())
}

/// The bilinear ⟨ψ|q₂⟩⟨q₁|ψ⟩ of a Gaussian packet with mean momentum p,
/// momentum width b and centre r_o.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBilinear {
    pub momentum: Vec3,
    pub b: f64,
    pub center: Vec3,
    pub hbar: f64,
}

impl GaussianBilinear {
    pub fn value(&self, q1: Vec3, q2: Vec3) -> Complex64 {
        let b2 = self.b * self.b;
        let mag = (PI * b2).powf(-1.5)
            * (-((q1 - self.momentum).norm_sq() + (q2 - self.momentum).norm_sq()) / (2.0 * b2))
                .exp();
        Complex64::from_polar(mag, (q2 - q1).dot(self.center) / self.hbar)
    }
}

/// Quadrature for the reduced integrals: Gauss–Hermite in q around `center`
/// with scale `width`, Gauss–Hermite in Δ with scale 2·width, and a
/// Gauss–Legendre × trapezoid product over n̂ about q̂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedQuadrature {
    pub center: Vec3,
    pub width: f64,
    pub q_nodes: usize,
    pub delta_nodes: usize,
    pub theta_nodes: usize,
    pub phi_nodes: usize,
    pub tol: f64,
}

impl ReducedQuadrature {
    pub fn for_packet(momentum: Vec3, b: f64) -> ReducedQuadrature {
        ReducedQuadrature {
            center: momentum,
            width: b,
            q_nodes: 8,
            delta_nodes: 8,
            theta_nodes: 12,
            phi_nodes: 12,
            tol: 1e-6,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.center.is_finite() {
            return Err(Error::invalid("quad.center", "must be finite"));
        }
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::invalid("quad.width", "must be positive"));
        }
        if self.q_nodes < 2 || self.delta_nodes < 2 || self.theta_nodes < 2 || self.phi_nodes < 2 {
            return Err(Error::invalid(
                "quad",
                "every node count must be at least 2",
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("quad.tol", "must be positive"));
        }
        Ok(())
    }

    fn finer(&self) -> ReducedQuadrature {
        ReducedQuadrature {
            q_nodes: self.q_nodes + 2,
            delta_nodes: self.delta_nodes + 2,
            theta_nodes: self.theta_nodes * 3 / 2,
            phi_nodes: self.phi_nodes * 3 / 2,
            ..*self
        }
    }
}

/// ∫d³q ∫_{q̂⊥}d²Δ g(q, Δ) on the Gauss–Hermite grid of `quad`. The
/// Gaussian weights of the rule are divided back out, so the rule is exact
/// for polynomials times e^{−|q−c|²/w²−Δ²/4w²}.
fn reduced_sum<G>(quad: &ReducedQuadrature, g: G) -> Result<Complex64>
where
    G: Fn(Vec3, Vec3) -> Result<Complex64> + Sync,
{
    let gq = gauss_hermite(quad.q_nodes);
    let gd = gauss_hermite(quad.delta_nodes);
    let wq = quad.width;
    let jac = wq.powi(3) * 4.0 * wq * wq;
    let mut triples = Vec::with_capacity(quad.q_nodes.pow(3));
    for (&x1, &w1) in gq.nodes.iter().zip(&gq.weights) {
        for (&x2, &w2) in gq.nodes.iter().zip(&gq.weights) {
            for (&x3, &w3) in gq.nodes.iter().zip(&gq.weights) {
                triples.push((x1, x2, x3, w1 * w2 * w3));
            }
        }
    }
    let per_q: Vec<Complex64> = triples
        .par_iter()
        .map(|&(x1, x2, x3, w)| -> Result<Complex64> {
            let q = quad.center + Vec3::new(x1, x2, x3) * wq;
            let qm = q.norm();
            if qm == 0.0 {
                return Ok(Complex64::new(0.0, 0.0));
            }
            let (e1, e2) = (q / qm).orthonormal_frame();
            let mut acc = Complex64::new(0.0, 0.0);
            for (&y1, &v1) in gd.nodes.iter().zip(&gd.weights) {
                for (&y2, &v2) in gd.nodes.iter().zip(&gd.weights) {
                    let delta = (e1 * y1 + e2 * y2) * (2.0 * wq);
                    let undo = (x1 * x1 + x2 * x2 + x3 * x3 + y1 * y1 + y2 * y2).exp();
                    acc += v1 * v2 * undo * g(q, delta)?;
                }
            }
            Ok(w * acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let re: Vec<f64> = per_q.iter().map(|z| z.re).collect();
    let im: Vec<f64> = per_q.iter().map(|z| z.im).collect();
    Ok(Complex64::new(pairwise_sum(&re), pairwise_sum(&im)) * jac)
}

fn refine_reduced<F>(quad: &ReducedQuadrature, context: &str, eval: F) -> Result<Complex64>
where
    F: Fn(&ReducedQuadrature) -> Result<Complex64>,
{
    quad.validate()?;
    let coarse = eval(quad)?;
    let fine = eval(&quad.finer())?;
    let diff = (fine - coarse).norm();
    if diff > quad.tol * fine.norm() && diff > 1e-300 {
        return Err(Error::Convergence {
            context: context.into(),
            achieved: diff / fine.norm(),
            requested: quad.tol,
        });
    }
    Ok(fine)
}

/// I₁ = ∫d³q ∫_{q̂⊥}d²Δ u(q−Δ/2, q+Δ/2) M₁(q, Δ).
pub fn reduced_integral_i1<U>(
    u: U,
    model: &AmplitudeModel,
    kin: Kinematics,
    quad: &ReducedQuadrature,
) -> Result<Complex64>
where
    U: Fn(Vec3, Vec3) -> Complex64 + Sync,
{
    model.validate()?;
    refine_reduced(quad, "reduced integral I1", |qd| {
        reduced_sum(qd, |q, delta| {
            let uv = u(q - delta * 0.5, q + delta * 0.5);
            if uv == Complex64::new(0.0, 0.0) {
                return Ok(uv);
            }
            Ok(uv * m1_kernel(model, q, delta, kin)?)
        })
    })
}

fn m1_kernel(model: &AmplitudeModel, q: Vec3, delta: Vec3, kin: Kinematics) -> Result<Complex64> {
    let plus = q + delta * 0.5;
    let minus = q - delta * 0.5;
    Ok(
        (amplitude_vec(model, plus, minus, kin)? + amplitude_vec(model, minus, plus, kin)?.conj())
            / (2.0 * PI * kin.hbar * q.norm()),
    )
}

/// I₂(R) = ∫dn̂ d³q ∫_{q̂⊥}d²Δ u(q−Δ/2, q+Δ/2) e^{iQ·R/ħ} M₂(q, n̂, Δ),
/// Q = n̂√(q² + Δ²/4).
pub fn reduced_integral_i2<U>(
    u: U,
    model: &AmplitudeModel,
    r: Vec3,
    kin: Kinematics,
    quad: &ReducedQuadrature,
) -> Result<Complex64>
where
    U: Fn(Vec3, Vec3) -> Complex64 + Sync,
{
    model.validate()?;
    if !r.is_finite() {
        return Err(Error::invalid("R", "must be finite"));
    }
    let h = kin.hbar;
    refine_reduced(quad, "reduced integral I2", |qd| {
        let t_rule = gauss_legendre(qd.theta_nodes);
        let phi = periodic_trapezoid(qd.phi_nodes);
        reduced_sum(qd, |q, delta| {
            let uv = u(q - delta * 0.5, q + delta * 0.5);
            if uv == Complex64::new(0.0, 0.0) {
                return Ok(uv);
            }
            let qm = q.norm();
            let q_hat = q / qm;
            let (e1, e2) = q_hat.orthonormal_frame();
            let plus = q + delta * 0.5;
            let minus = q - delta * 0.5;
            let big = (qm * qm + 0.25 * delta.norm_sq()).sqrt();
            let mut acc = Complex64::new(0.0, 0.0);
            for (&t, &wt) in t_rule.nodes.iter().zip(&t_rule.weights) {
                let st = (1.0 - t * t).max(0.0).sqrt();
                for (&ph, &wp) in phi.nodes.iter().zip(&phi.weights) {
                    let n_hat = q_hat * t + (e1 * ph.cos() + e2 * ph.sin()) * st;
                    let bq = n_hat * big;
                    let prod = amplitude_vec(model, bq, plus, kin)?.conj()
                        * amplitude_vec(model, bq, minus, kin)?;
                    acc += wt * wp * prod * Complex64::from_polar(1.0, bq.dot(r) / h);
                }
            }
            Ok(uv * acc * (big / qm) / (4.0 * PI * PI * h * h))
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_bath, UnitSystem};
    use crate::thermal::split_bath;

    fn split() -> PacketSplit {
        let bath = make_bath(1.0, 1.0, 0.01, UnitSystem::default()).unwrap();
        split_bath(&bath, 0.01).unwrap()
    }

    #[test]
    fn m_kernels_at_zero_delta() {
        let kin = Kinematics::default();
        let model = AmplitudeModel::ConstantSWave { f0: 0.3 };
        let q = Vec3::new(0.2, -0.4, 1.1);
        let n = Vec3::new(1.0, 2.0, 2.0) / 3.0;
        let (m1, m2) = m_kernels(&model, q, Vec3::ZERO, n, kin).unwrap();
        assert!((m1.re - 0.3 / (PI * q.norm())).abs() < 1e-15);
        assert!((m2.re - 0.09 / (4.0 * PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn m_kernels_reject_tilted_delta() {
        let kin = Kinematics::default();
        let model = AmplitudeModel::ConstantSWave { f0: 0.3 };
        assert!(m_kernels(&model, Vec3::Z, Vec3::new(0.1, 0.0, 0.01), Vec3::Z, kin).is_err());
    }

    #[test]
    fn kernel_vanishes_at_coincidence() {
        let s = split();
        let model = AmplitudeModel::ConstantSWave { f0: 0.5 };
        let r = Vec3::new(0.1, 0.2, -0.3);
        let k = single_packet_kernel(&s, &model, r - Vec3::Z * 40.0, Vec3::Z * 1.3, r, r).unwrap();
        assert_eq!(k.value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn strong_condition_rejects_wide_separation() {
        let s = split();
        let model = AmplitudeModel::ConstantSWave { f0: 0.5 };
        let d = Vec3::X * (0.2 * s.a);
        assert!(
            strong_condition_delta_rho(&s, &model, Vec3::ZERO, Vec3::Z, d, Vec3::ZERO).is_err()
        );
    }

    #[test]
    fn window_mass_limits() {
        assert!((window_mass([0.0, 0.0], 50.0, 1.0) - 1.0).abs() < 1e-15);
        let m = window_mass([0.0, 0.0], 1.0, 1.0);
        assert!((m - erf(1.0).powi(2)).abs() < 1e-15);
    }
}
