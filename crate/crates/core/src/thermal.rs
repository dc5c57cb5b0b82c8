// SPDX-License-Identifier: Apache-2.0

//! Maxwell–Boltzmann distributions and the split of the thermal state into
//! Gaussian wave packets.
//!
//! Writing T = T̄ + T̂, the bath state becomes a mixture of minimum
//! uncertainty packets of momentum width b = √(2mk_BT̄) whose centers move
//! with a Maxwell–Boltzmann distribution at the pseudo-temperature T̂.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

use crate::dd::{gauss_hermite_dd, Dd};
use crate::domain::BathSpec;
use crate::error::{ensure_finite, Error, Result};
use crate::vec3::Vec3;

/// μ(q) = (β/2πm)^{3/2} e^{−βq²/2m}, normalized over d³q.
pub fn mb_density(bath: &BathSpec, q: Vec3) -> f64 {
    let (beta, m) = (bath.beta(), bath.mass());
    (beta / (2.0 * PI * m)).powf(1.5) * (-beta * q.norm_sq() / (2.0 * m)).exp()
}

/// ν(q) = 4πq²μ(q), normalized over q ∈ [0, ∞).
pub fn speed_distribution(bath: &BathSpec, q: f64) -> f64 {
    if q < 0.0 {
        return 0.0;
    }
    let (beta, m) = (bath.beta(), bath.mass());
    4.0 * PI * (beta / (2.0 * PI * m)).powf(1.5) * q * q * (-beta * q * q / (2.0 * m)).exp()
}

/// λ = √(2πħ²β/m).
pub fn thermal_wavelength(bath: &BathSpec) -> f64 {
    let h = bath.hbar();
    (2.0 * PI * h * h * bath.beta() / bath.mass()).sqrt()
}

/// Default share T̄/T of the temperature assigned to the packet width.
pub const DEFAULT_BAR_FRACTION: f64 = 0.01;

/// Parameters of the decomposition T = T̄ + T̂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketSplit {
    pub t_bar: f64,
    pub t_hat: f64,
    /// Momentum width √(2mk_BT̄).
    pub b: f64,
    /// Position width ħ/b.
    pub a: f64,
    pub lambda_bar: f64,
    pub mass: f64,
    pub hbar: f64,
    pub boltzmann: f64,
}

pub fn split_bath(bath: &BathSpec, bar_fraction: f64) -> Result<PacketSplit> {
    ensure_finite("bar_fraction", bar_fraction)?;
    if !(bar_fraction > 0.0 && bar_fraction < 1.0) {
        return Err(Error::invalid(
            "bar_fraction",
            format!("must lie strictly between 0 and 1, got {bar_fraction}"),
        ));
    }
    let units = bath.units();
    let t = bath.temperature();
    let t_bar = bar_fraction * t;
    let t_hat = t - t_bar;
    let m = bath.mass();
    let b = (2.0 * m * units.boltzmann * t_bar).sqrt();
    let beta_bar = 1.0 / (units.boltzmann * t_bar);
    Ok(PacketSplit {
        t_bar,
        t_hat,
        b,
        a: units.hbar / b,
        lambda_bar: (2.0 * PI * units.hbar * units.hbar * beta_bar / m).sqrt(),
        mass: m,
        hbar: units.hbar,
        boltzmann: units.boltzmann,
    })
}

impl PacketSplit {
    /// Typical packet speed √(3k_BT̂/m).
    pub fn v_wp(&self) -> f64 {
        (3.0 * self.boltzmann * self.t_hat / self.mass).sqrt()
    }

    /// Per-component standard deviation of the packet mean momenta, √(mk_BT̂).
    pub fn center_momentum_sigma(&self) -> f64 {
        (self.mass * self.boltzmann * self.t_hat).sqrt()
    }

    /// (Δp_x)²: momentum variance within one packet, b²/2.
    pub fn packet_momentum_variance(&self) -> f64 {
        0.5 * self.b * self.b
    }

    /// (δp_x)²: variance of the packet mean momenta, mk_BT̂.
    pub fn center_momentum_variance(&self) -> f64 {
        self.mass * self.boltzmann * self.t_hat
    }

    /// (Δp_x)²/2m + (δp_x)²/2m − k_BT/2; zero up to rounding.
    pub fn variance_sum_defect(&self) -> f64 {
        (self.packet_momentum_variance() + self.center_momentum_variance()) / (2.0 * self.mass)
            - 0.5 * self.boltzmann * (self.t_bar + self.t_hat)
    }
}

/// A Gaussian packet ψ_rp with center r and mean momentum p.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavePacket {
    pub center: Vec3,
    pub mean_momentum: Vec3,
    pub split: PacketSplit,
}

/// ⟨r′|ψ_rp⟩ = (2√2/λ̄^{3/2}) e^{ip·(r′−r)/ħ} e^{−2π|r′−r|²/λ̄²}.
pub fn packet_wavefunction(packet: &WavePacket, r_prime: Vec3) -> Complex64 {
    let s = packet.split;
    let d = r_prime - packet.center;
    let amp = 2.0 * 2f64.sqrt() / s.lambda_bar.powf(1.5)
        * (-2.0 * PI * d.norm_sq() / (s.lambda_bar * s.lambda_bar)).exp();
    Complex64::from_polar(amp, packet.mean_momentum.dot(d) / s.hbar)
}

/// Closed-form ∫|ψ|² d³r′ of the packet.
pub fn packet_norm(packet: &WavePacket) -> f64 {
    let l = packet.split.lambda_bar;
    // (8/λ̄³)·(λ̄²/4)^{3/2}
    8.0 / l.powi(3) * (l * l / 4.0).powf(1.5)
}

/// Γ_q(R) = exp(−[R² − (q̂·R)²]/a²)/(πa²).
pub fn gamma_profile(split: &PacketSplit, q_hat: Vec3, r: Vec3) -> f64 {
    let along = q_hat.dot(r);
    let perp2 = (r.norm_sq() - along * along).max(0.0);
    (-perp2 / (split.a * split.a)).exp() / (PI * split.a * split.a)
}

type DdRule = Arc<(Vec<Dd>, Vec<Dd>)>;

static GH_DD_CACHE: LazyLock<Mutex<HashMap<usize, DdRule>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

fn hermite_dd(n: usize) -> Arc<(Vec<Dd>, Vec<Dd>)> {
    let mut cache = GH_DD_CACHE.lock().unwrap_or_else(|e| e.into_inner());
    cache
        .entry(n)
        .or_insert_with(|| Arc::new(gauss_hermite_dd(n)))
        .clone()
}

/// Σᵢⱼ wᵢwⱼ cos(c₁xᵢ + c₂xⱼ) on an n×n Gauss–Hermite tensor grid.
fn hermite_cos_sum(n: usize, c1: f64, c2: f64) -> f64 {
    let rule = hermite_dd(n);
    let (x, w) = (&rule.0, &rule.1);
    let trig = |c: f64| -> Vec<(Dd, Dd)> { x.iter().map(|&xi| (xi * c).sin_cos()).collect() };
    let (t1, t2) = (trig(c1), trig(c2));
    let mut total = Dd::ZERO;
    for i in 0..n {
        let (s1, co1) = t1[i];
        let mut row = Dd::ZERO;
        for j in 0..n {
            let (s2, co2) = t2[j];
            row = row + w[j] * (co1 * co2 - s1 * s2);
        }
        total = total + w[i] * row;
    }
    total.to_f64()
}

/// Relative difference between a tensor Gauss–Hermite evaluation of
/// ∫_{q̂⊥} d²Δ e^{−iΔ·u/ħ} e^{−Δ²/4b²} and (2πħ)²Γ_q(u).
///
/// The integral is small (e^{−25} at |u⊥| = 5a) against terms of order one,
/// so the sum runs in double-double arithmetic. Nodes double from 64 until
/// two successive rules agree to 1e-13 of the closed form.
pub fn gamma_fourier_residual(split: &PacketSplit, q_hat: Vec3, u: Vec3) -> Result<f64> {
    let q_hat = q_hat.unit()?;
    let (e1, e2) = q_hat.orthonormal_frame();
    // Δ = 2b(x₁e₁ + x₂e₂), Δ·u/ħ = 2(x₁u₁ + x₂u₂)/a.
    let c1 = 2.0 * e1.dot(u) / split.a;
    let c2 = 2.0 * e2.dot(u) / split.a;
    let closed = (2.0 * PI * split.hbar).powi(2) * gamma_profile(split, q_hat, u);
    let jac = 4.0 * split.b * split.b;
    let mut n = 64;
    let mut prev = jac * hermite_cos_sum(n, c1, c2);
    loop {
        n *= 2;
        let next = jac * hermite_cos_sum(n, c1, c2);
        if (next - prev).abs() <= 1e-13 * closed {
            return Ok((next - closed).abs() / closed);
        }
        if n >= 512 {
            return Err(Error::Convergence {
                context: "Gauss-Hermite Fourier integral".into(),
                achieved: (next - prev).abs() / closed,
                requested: 1e-13,
            });
        }
        prev = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_bath, UnitSystem};

    fn bath() -> BathSpec {
        make_bath(1.0, 1.0, 0.01, UnitSystem::default()).unwrap()
    }

    #[test]
    fn closed_forms() {
        let b = bath();
        assert!((mb_density(&b, Vec3::ZERO) - (2.0 * PI).powf(-1.5)).abs() < 1e-16);
        assert!((thermal_wavelength(&b) - (2.0 * PI).sqrt()).abs() < 1e-15);
        let q = Vec3::new(0.3, -1.1, 0.7);
        assert_eq!(mb_density(&b, q), mb_density(&b, -q));
        let v = speed_distribution(&b, 1.7);
        let mu = mb_density(&b, Vec3::new(0.0, 0.0, 1.7));
        assert!((4.0 * PI * 1.7 * 1.7 * mu - v).abs() < 1e-12 * v);
    }

    #[test]
    fn split_parameters() {
        let s = split_bath(&bath(), 0.01).unwrap();
        assert!((s.b - 0.02f64.sqrt()).abs() < 1e-15);
        assert!((s.a - 1.0 / 0.02f64.sqrt()).abs() < 1e-12);
        assert!((s.a * s.b - 1.0).abs() < 1e-15);
        let half = split_bath(&bath(), 0.5).unwrap();
        assert!((half.lambda_bar - thermal_wavelength(&bath()) * 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(half.t_bar, half.t_hat);
        assert!(split_bath(&bath(), 0.0).is_err());
        assert!(split_bath(&bath(), 1.0).is_err());
    }

    #[test]
    fn packet_peak_and_norm() {
        let split = split_bath(&bath(), 0.2).unwrap();
        let p = WavePacket {
            center: Vec3::new(1.0, 2.0, 3.0),
            mean_momentum: Vec3::new(0.5, 0.0, -1.0),
            split,
        };
        let psi = packet_wavefunction(&p, p.center);
        assert_eq!(psi.im, 0.0);
        assert!((psi.re - 2.0 * 2f64.sqrt() / split.lambda_bar.powf(1.5)).abs() < 1e-15);
        assert!((packet_norm(&p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_profile_values() {
        let s = split_bath(&bath(), 0.01).unwrap();
        let peak = 1.0 / (PI * s.a * s.a);
        assert!((gamma_profile(&s, Vec3::Z, Vec3::new(0.0, 0.0, 4.0)) - peak).abs() < 1e-18);
        let r = gamma_profile(&s, Vec3::Z, Vec3::new(s.a, 0.0, 9.0));
        assert!((r - peak * (-1.0f64).exp()).abs() < 1e-15 * peak);
    }

    #[test]
    fn gamma_fourier_identity_near_origin() {
        let s = split_bath(&bath(), 0.01).unwrap();
        let q = Vec3::new(1.0, 1.0, 0.5).unit().unwrap();
        assert!(gamma_fourier_residual(&s, q, Vec3::ZERO).unwrap() <= 1e-10);
        let u = Vec3::X.perpendicular_to(q).unit().unwrap() * s.a + q * 3.0;
        assert!(gamma_fourier_residual(&s, q, u).unwrap() <= 1e-9);
    }
}
