// SPDX-License-Identifier: Apache-2.0

//! Elastic scattering amplitudes f(q₂, q₁) and cross sections.
//!
//! Amplitudes carry the dimension of length and take momenta (not wave
//! numbers) as arguments. With ⟨q₂|S|q₁⟩ = δ(q₂−q₁) + (i/2πħm)δ(E₂−E₁)f(q₂,q₁)
//! the first Born approximation reads f_B = −4π²mħ·V̄(q₂−q₁).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::Kinematics;
use crate::error::{ensure_finite, Error, Result};
use crate::quadrature::gauss_legendre;
use crate::special::{spherical_jn, spherical_yn};
use crate::vec3::Vec3;

/// Real, spherically symmetric interaction potentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialModel {
    /// V(r) = V0·exp(−r²/2w²)
    Gaussian { strength: f64, width: f64 },
    /// V(r) = g·exp(−κr)/r
    Yukawa { strength: f64, screening: f64 },
}

impl PotentialModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PotentialModel::Gaussian { strength, width } => {
                ensure_finite("potential.strength", strength)?;
                ensure_finite("potential.width", width)?;
                if width <= 0.0 {
                    return Err(Error::invalid("potential.width", "must be positive"));
                }
            }
            PotentialModel::Yukawa {
                strength,
                screening,
            } => {
                ensure_finite("potential.strength", strength)?;
                ensure_finite("potential.screening", screening)?;
                if screening <= 0.0 {
                    return Err(Error::invalid("potential.screening", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// V(r).
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            PotentialModel::Gaussian { strength, width } => {
                strength * (-0.5 * r * r / (width * width)).exp()
            }
            PotentialModel::Yukawa {
                strength,
                screening,
            } => strength * (-screening * r).exp() / r,
        }
    }

    /// V̄(k) = ∫d³r (2πħ)^{-3} V(r) e^{−ik·r/ħ} as a function of |k|.
    ///
    /// Yukawa: V̄ = g / (2π²ħ(k² + ħ²κ²)), so that the Born amplitude is the
    /// screened-Coulomb form −2mg/(k² + ħ²κ²).
    pub fn fourier(&self, k: f64, hbar: f64) -> f64 {
        match *self {
            PotentialModel::Gaussian { strength, width } => {
                strength * width.powi(3) / ((2.0 * PI).powf(1.5) * hbar.powi(3))
                    * (-0.5 * k * k * width * width / (hbar * hbar)).exp()
            }
            PotentialModel::Yukawa {
                strength,
                screening,
            } => strength / (2.0 * PI * PI * hbar * (k * k + hbar * hbar * screening * screening)),
        }
    }

    /// Dimensionless coupling: 2m|V0|w²/ħ² (Gaussian) or 2m|g|/(ħ²κ) (Yukawa).
    pub fn born_strength(&self, kin: Kinematics) -> f64 {
        let h2 = kin.hbar * kin.hbar;
        match *self {
            PotentialModel::Gaussian { strength, width } => {
                2.0 * kin.mass * strength.abs() * width * width / h2
            }
            PotentialModel::Yukawa {
                strength,
                screening,
            } => 2.0 * kin.mass * strength.abs() / (h2 * screening),
        }
    }

    pub fn scaled(&self, factor: f64) -> PotentialModel {
        match *self {
            PotentialModel::Gaussian { strength, width } => PotentialModel::Gaussian {
                strength: strength * factor,
                width,
            },
            PotentialModel::Yukawa {
                strength,
                screening,
            } => PotentialModel::Yukawa {
                strength: strength * factor,
                screening,
            },
        }
    }
}

/// Above this dimensionless coupling the Born amplitude is not trusted.
pub const BORN_VALIDITY_LIMIT: f64 = 0.3;

/// Partial-wave cutoff for the hard sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LMax {
    #[default]
    Auto,
    Fixed(usize),
}

/// Families of scattering amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmplitudeModel {
    /// f ≡ f0. Real, hence not unitary: the forward term Im f vanishes.
    ConstantSWave {
        f0: f64,
    },
    HardSphere {
        radius: f64,
        l_max: LMax,
    },
    BornPotential {
        potential: PotentialModel,
    },
}

impl AmplitudeModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AmplitudeModel::ConstantSWave { f0 } => ensure_finite("model.f0", f0),
            AmplitudeModel::HardSphere { radius, .. } => {
                ensure_finite("model.radius", radius)?;
                if radius <= 0.0 {
                    return Err(Error::invalid("model.radius", "must be positive"));
                }
                Ok(())
            }
            AmplitudeModel::BornPotential { potential } => potential.validate(),
        }
    }

    /// Whether the model obeys the optical theorem.
    pub fn is_unitary(&self) -> bool {
        matches!(self, AmplitudeModel::HardSphere { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            AmplitudeModel::ConstantSWave { .. } => "constant_s_wave",
            AmplitudeModel::HardSphere { .. } => "hard_sphere",
            AmplitudeModel::BornPotential {
                potential: PotentialModel::Gaussian { .. },
            } => "born_gaussian",
            AmplitudeModel::BornPotential {
                potential: PotentialModel::Yukawa { .. },
            } => "born_yukawa",
        }
    }

    /// The amplitude on the energy shell |q₂| = |q₁| = q.
    pub fn on_shell(&self, q: f64, kin: Kinematics) -> Result<OnShell> {
        ensure_finite("q", q)?;
        if q <= 0.0 {
            return Err(Error::invalid("q", "momentum magnitude must be positive"));
        }
        self.validate()?;
        let kind = match *self {
            AmplitudeModel::ConstantSWave { f0 } => OnShellKind::Constant(f0),
            AmplitudeModel::HardSphere { radius, l_max } => {
                let lmax = match l_max {
                    LMax::Fixed(l) => l,
                    LMax::Auto => auto_lmax(radius, q, kin.hbar)?,
                };
                let k = q / kin.hbar;
                let coeffs = hard_sphere_coefficients(radius * k, lmax)
                    .into_iter()
                    .map(|c| c / k)
                    .collect();
                OnShellKind::Partial(coeffs)
            }
            AmplitudeModel::BornPotential { potential } => OnShellKind::Born {
                potential,
                prefactor: -4.0 * PI * PI * kin.mass * kin.hbar,
                hbar: kin.hbar,
            },
        };
        Ok(OnShell { q, kind })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum OnShellKind {
    Constant(f64),
    /// (2l+1)e^{iδ_l}sin δ_l / k
    Partial(Vec<Complex64>),
    Born {
        potential: PotentialModel,
        prefactor: f64,
        hbar: f64,
    },
}

/// f(q n̂₂, q n̂₁) at a fixed momentum magnitude, as a function of n̂₂·n̂₁.
#[derive(Debug, Clone, PartialEq)]
pub struct OnShell {
    q: f64,
    kind: OnShellKind,
}

impl OnShell {
    pub fn momentum(&self) -> f64 {
        self.q
    }

    /// Number of partial waves kept, if the model has any.
    pub fn partial_waves(&self) -> Option<usize> {
        match &self.kind {
            OnShellKind::Partial(c) => Some(c.len()),
            _ => None,
        }
    }

    /// Degree of |f|² as a polynomial in cos θ, when it is one.
    pub fn abs2_degree(&self) -> Option<usize> {
        match &self.kind {
            OnShellKind::Constant(_) => Some(0),
            OnShellKind::Partial(c) => Some(2 * c.len().saturating_sub(1)),
            OnShellKind::Born { .. } => None,
        }
    }

    pub fn amplitude(&self, cos_theta: f64) -> Complex64 {
        let c = cos_theta.clamp(-1.0, 1.0);
        match &self.kind {
            OnShellKind::Constant(f0) => Complex64::new(*f0, 0.0),
            OnShellKind::Partial(coeffs) => {
                let mut p_prev = 1.0;
                let mut p = c;
                let mut sum = coeffs[0];
                for (l, coeff) in coeffs.iter().enumerate().skip(1) {
                    if l >= 2 {
                        let lf = l as f64;
                        let next = ((2.0 * lf - 1.0) * c * p - (lf - 1.0) * p_prev) / lf;
                        p_prev = p;
                        p = next;
                    }
                    sum += coeff * p;
                }
                sum
            }
            OnShellKind::Born {
                potential,
                prefactor,
                hbar,
            } => {
                // |q₂ − q₁| = q·√(2(1 − cos θ))
                let transfer = self.q * (2.0 * (1.0 - c)).max(0.0).sqrt();
                Complex64::new(prefactor * potential.fourier(transfer, *hbar), 0.0)
            }
        }
    }

    pub fn abs2(&self, cos_theta: f64) -> f64 {
        self.amplitude(cos_theta).norm_sqr()
    }

    /// Trapezoid points (full circle) needed to resolve |f|² as a function
    /// of the azimuth between two directions.
    pub fn azimuthal_bandwidth(&self) -> usize {
        match &self.kind {
            OnShellKind::Constant(_) => 0,
            OnShellKind::Partial(c) => 2 * c.len() + 8,
            OnShellKind::Born {
                potential, hbar, ..
            } => match *potential {
                PotentialModel::Gaussian { width, .. } => {
                    let alpha = 2.0 * (self.q * width / hbar).powi(2);
                    (alpha + 3.0 * alpha.sqrt() + 10.0).ceil() as usize
                }
                PotentialModel::Yukawa { screening, .. } => {
                    let gap = (1.0 + (hbar * screening / self.q).powi(2) / 2.0).acosh();
                    (34.0 / gap).ceil() as usize + 8
                }
            },
        }
    }

    pub fn forward(&self) -> Complex64 {
        self.amplitude(1.0)
    }

    /// Closed-form σ when one exists (constant and partial-wave models).
    pub fn closed_cross_section(&self) -> Option<f64> {
        match &self.kind {
            OnShellKind::Constant(f0) => Some(4.0 * PI * f0 * f0),
            OnShellKind::Partial(coeffs) => Some(
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(l, c)| 4.0 * PI * c.norm_sqr() / (2 * l + 1) as f64)
                    .sum(),
            ),
            OnShellKind::Born { .. } => None,
        }
    }

    /// σ = 2π∫|f|² d(cos θ) by Gauss–Legendre, doubling from 64 nodes until
    /// the relative change drops below 1e-10.
    pub fn cross_section_quadrature(&self) -> Result<f64> {
        let integrate = |n: usize| -> f64 {
            let rule = gauss_legendre(n);
            let s: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(c, w)| w * self.abs2(*c))
                .sum();
            2.0 * PI * s
        };
        let mut n = 64;
        let mut prev = integrate(n);
        loop {
            n *= 2;
            let next = integrate(n);
            let change = (next - prev).abs();
            if change <= 1e-10 * next.abs() || next == 0.0 {
                return Ok(next);
            }
            if n >= 8192 {
                return Err(Error::Convergence {
                    context: "angular cross-section quadrature".into(),
                    achieved: change / next.abs(),
                    requested: 1e-10,
                });
            }
            prev = next;
        }
    }
}

/// (2l+1) e^{iδ_l} sin δ_l for a hard sphere at x = kR, l = 0..=lmax.
fn hard_sphere_coefficients(x: f64, lmax: usize) -> Vec<Complex64> {
    let j = spherical_jn(lmax, x);
    let y = spherical_yn(lmax, x);
    (0..=lmax)
        .map(|l| {
            let t = j[l] / y[l];
            let t = if t.is_finite() { t } else { 0.0 };
            let d = 1.0 + t * t;
            Complex64::new(t / d, t * t / d) * (2 * l + 1) as f64
        })
        .collect()
}

/// Hard-sphere phase shifts δ_l (principal branch of atan(j_l/y_l)).
pub fn hard_sphere_phase_shifts(radius: f64, q: f64, hbar: f64, lmax: usize) -> Result<Vec<f64>> {
    let x = radius * q / hbar;
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::invalid("q", "qR/ħ must be positive and finite"));
    }
    let j = spherical_jn(lmax, x);
    let y = spherical_yn(lmax, x);
    Ok((0..=lmax).map(|l| (j[l] / y[l]).atan()).collect())
}

/// Smallest partial-wave cutoff whose tail estimate falls below 1e-10 of
/// the retained sum, and never below ⌈qR/ħ⌉ + 10.
pub fn auto_lmax(radius: f64, q: f64, hbar: f64) -> Result<usize> {
    ensure_finite("radius", radius)?;
    ensure_finite("q", q)?;
    if radius <= 0.0 {
        return Err(Error::invalid("radius", "must be positive"));
    }
    let x = radius * q / hbar;
    if !(x > 0.0) {
        return Err(Error::invalid("q", "qR/ħ must be positive"));
    }
    let mut l = x.ceil() as usize + 10;
    loop {
        let j = spherical_jn(l + 1, x);
        let y = spherical_yn(l + 1, x);
        let retained: f64 = (0..=l)
            .map(|k| {
                let t = j[k] / y[k];
                (2 * k + 1) as f64 * (t / (1.0 + t * t).sqrt()).abs()
            })
            .sum();
        let tail = (2 * l + 3) as f64 * (j[l + 1] / y[l + 1]).abs();
        if !(tail >= 1e-10 * retained) || l > 10_000 {
            return Ok(l);
        }
        l += 1;
    }
}

fn check_direction(n_out: Vec3) -> Result<()> {
    if !n_out.is_finite() || (n_out.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::invalid("n_out", "must be a unit vector"));
    }
    Ok(())
}

/// f(q·n̂_out, q_in) with q = |q_in|.
pub fn amplitude(
    model: &AmplitudeModel,
    q_in: Vec3,
    n_out: Vec3,
    kin: Kinematics,
) -> Result<Complex64> {
    check_direction(n_out)?;
    let q = q_in.norm();
    if !(q > 0.0) || !q_in.is_finite() {
        return Err(Error::invalid("q_in", "must be a nonzero finite momentum"));
    }
    let c = n_out.dot(q_in) / q;
    Ok(model.on_shell(q, kin)?.amplitude(c))
}

/// f(q₂, q₁) for arbitrary momentum vectors. Only the Born model is defined
/// off the energy shell; the others require |q₂| = |q₁| to 1e-9.
pub fn amplitude_vec(
    model: &AmplitudeModel,
    q_out: Vec3,
    q_in: Vec3,
    kin: Kinematics,
) -> Result<Complex64> {
    if let AmplitudeModel::BornPotential { potential } = model {
        potential.validate()?;
        let k = (q_out - q_in).norm();
        return Ok(Complex64::new(
            -4.0 * PI * PI * kin.mass * kin.hbar * potential.fourier(k, kin.hbar),
            0.0,
        ));
    }
    let (a, b) = (q_out.norm(), q_in.norm());
    if (a - b).abs() > 1e-9 * a.max(b) {
        return Err(Error::DegenerateModel(format!(
            "{} amplitude is only defined on the energy shell (|q_out|={a}, |q_in|={b})",
            model.label()
        )));
    }
    amplitude(model, q_in, q_out / a, kin)
}

/// σ(q) = ∫dn̂ |f(q n̂, q ẑ)|².
pub fn total_cross_section(model: &AmplitudeModel, q: f64, kin: Kinematics) -> Result<f64> {
    let shell = model.on_shell(q, kin)?;
    match model {
        AmplitudeModel::ConstantSWave { f0 } => Ok(4.0 * PI * f0 * f0),
        _ => shell.cross_section_quadrature(),
    }
}

/// |Im f(q,q) − qσ/(4πħ)| relative to qσ/(4πħ). Non-unitary models return
/// their violation (1 for a real constant amplitude) rather than an error.
pub fn optical_theorem_residual(model: &AmplitudeModel, q: f64, kin: Kinematics) -> Result<f64> {
    let shell = model.on_shell(q, kin)?;
    let sigma = shell.cross_section_quadrature()?;
    let scale = q * sigma / (4.0 * PI * kin.hbar);
    if scale == 0.0 {
        return Err(Error::DegenerateModel("zero cross section".into()));
    }
    Ok((shell.forward().im - scale).abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    const KIN: Kinematics = Kinematics {
        mass: 1.0,
        hbar: 1.0,
    };

    fn hs(l_max: LMax) -> AmplitudeModel {
        AmplitudeModel::HardSphere { radius: 1.0, l_max }
    }

    #[test]
    fn constant_model() {
        let m = AmplitudeModel::ConstantSWave { f0: 2.0 };
        let f = amplitude(&m, Vec3::new(0.3, -1.0, 2.0), Vec3::Y, KIN).unwrap();
        assert_eq!(f, Complex64::new(2.0, 0.0));
        assert_eq!(total_cross_section(&m, 0.7, KIN).unwrap(), 16.0 * PI);
        assert!((optical_theorem_residual(&m, 1.0, KIN).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hard_sphere_low_energy_limit() {
        let q = 1e-4;
        for c in [-1.0f64, -0.3, 0.0, 0.5, 1.0] {
            let n = Vec3::new((1.0 - c * c).sqrt(), 0.0, c);
            let f = amplitude(&hs(LMax::Auto), Vec3::new(0.0, 0.0, q), n, KIN).unwrap();
            assert!((f.re + 1.0).abs() < 1e-6, "{f}");
            // Im f = sin²δ₀/k ≈ kR².
            assert!((f.im - q).abs() < 1e-6);
        }
        let sigma = total_cross_section(&hs(LMax::Auto), q, KIN).unwrap();
        assert!((sigma / (4.0 * PI) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hard_sphere_s_wave_phase_shift_is_minus_kr() {
        let d = hard_sphere_phase_shifts(1.0, 0.7, 1.0, 2).unwrap();
        assert!((d[0] + 0.7).abs() < 1e-14);
    }

    #[test]
    fn optical_theorem_for_hard_sphere() {
        for x in [0.1, 1.0, 5.0] {
            let r = optical_theorem_residual(&hs(LMax::Auto), x, KIN).unwrap();
            assert!(r <= 1e-8, "x={x}: {r}");
        }
    }

    #[test]
    fn quadrature_cross_section_matches_partial_wave_sum() {
        for x in [0.1, 1.0, 5.0, 12.0] {
            let shell = hs(LMax::Auto).on_shell(x, KIN).unwrap();
            let a = shell.cross_section_quadrature().unwrap();
            let b = shell.closed_cross_section().unwrap();
            assert!((a - b).abs() < 1e-11 * b, "x={x}");
        }
    }

    #[test]
    fn truncation_changes_the_cross_section() {
        let full = total_cross_section(&hs(LMax::Auto), 5.0, KIN).unwrap();
        let s_only = total_cross_section(&hs(LMax::Fixed(0)), 5.0, KIN).unwrap();
        assert!((full - s_only).abs() / full > 0.1);
    }

    #[test]
    fn auto_lmax_bounds() {
        assert!(auto_lmax(1.0, 0.001, 1.0).unwrap() <= 12);
        assert!(auto_lmax(1.0, 5.0, 1.0).unwrap() >= 15);
        assert!(auto_lmax(1.0, 0.0, 1.0).is_err());
        assert!(auto_lmax(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn born_gaussian_forward_amplitude() {
        let (v0, w) = (0.05, 0.8);
        let pot = PotentialModel::Gaussian {
            strength: v0,
            width: w,
        };
        let m = AmplitudeModel::BornPotential { potential: pot };
        let f = amplitude(&m, Vec3::new(0.0, 0.0, 1.3), Vec3::Z, KIN).unwrap();
        // −4π²mħ · V0 w³/(2π)^{3/2}ħ³ = −√(2π) m V0 w³ / ħ²
        let want = -(2.0 * PI).sqrt() * v0 * w.powi(3);
        assert!((f.re - want).abs() < 1e-15);
        let q_in = Vec3::new(0.2, 0.5, -1.0);
        let q_out = Vec3::new(-0.7, 0.1, 0.4);
        let off = amplitude_vec(&m, q_out, q_in, KIN).unwrap();
        let want = -4.0 * PI * PI * pot.fourier((q_out - q_in).norm(), 1.0);
        assert!((off.re - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn yukawa_born_is_screened_coulomb() {
        let (g, kappa) = (0.03, 1.5);
        let pot = PotentialModel::Yukawa {
            strength: g,
            screening: kappa,
        };
        let kin = Kinematics {
            mass: 2.0,
            hbar: 0.7,
        };
        let m = AmplitudeModel::BornPotential { potential: pot };
        let shell = m.on_shell(1.1, kin).unwrap();
        let c: f64 = 0.2;
        let k2 = 2.0 * 1.1 * 1.1 * (1.0 - c);
        let want = -2.0 * kin.mass * g / (k2 + kin.hbar * kin.hbar * kappa * kappa);
        assert!((shell.amplitude(c).re - want).abs() < 1e-14);
    }

    #[test]
    fn off_shell_rejected_for_partial_waves() {
        let r = amplitude_vec(&hs(LMax::Auto), Vec3::new(0.0, 0.0, 2.0), Vec3::X, KIN);
        assert!(matches!(r, Err(Error::DegenerateModel(_))));
        assert!(amplitude(&hs(LMax::Auto), Vec3::ZERO, Vec3::Z, KIN).is_err());
    }
}
