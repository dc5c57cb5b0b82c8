// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use decoh_core::quadrature::{gauss_legendre, integrate_adaptive};
use decoh_core::rate::{rate_general, rate_general_many, saturation_rate, QuadratureSpec};
use decoh_core::scattering::{
    amplitude, amplitude_vec, optical_theorem_residual, total_cross_section,
};
use decoh_core::thermal::*;
use decoh_core::weak_coupling::*;
use decoh_core::{
    make_bath, AmplitudeModel, BathSpec, EpsilonMode, Kinematics, LMax, PotentialModel, UnitSystem,
    Vec3,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn bath() -> BathSpec {
    make_bath(1.0, 1.0, 0.01, UnitSystem::default()).unwrap()
}

fn unit(v: (f64, f64, f64)) -> Vec3 {
    Vec3::new(v.0, v.1, v.2).unit().unwrap()
}

/// Rotation about a unit axis by an angle (Rodrigues).
fn rotate(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c))
}

#[test]
fn dimensionless_rate_is_scale_covariant() {
    // ħ → sPħ, lengths → s·length, momenta → P·momentum (m → P²m), n → n/s³.
    let (s, p): (f64, f64) = (3.7, 0.45);
    let base = bath();
    let scaled = make_bath(
        p * p,
        1.0,
        0.01 / s.powi(3),
        UnitSystem::new(s * p, 1.0).unwrap(),
    )
    .unwrap();
    let q = QuadratureSpec::default();
    let models = |k: f64| {
        vec![
            AmplitudeModel::ConstantSWave { f0: 0.5 * k },
            AmplitudeModel::HardSphere {
                radius: 0.6 * k,
                l_max: LMax::Auto,
            },
            AmplitudeModel::BornPotential {
                potential: PotentialModel::Gaussian {
                    strength: 0.05,
                    width: 0.7 * k,
                },
            },
        ]
    };
    let dimensionless = |b: &BathSpec, m: &AmplitudeModel, r: f64| {
        let f = rate_general(
            b,
            m,
            Vec3::new(0.3, 0.4, 1.0).unit().unwrap() * r,
            &q,
            EpsilonMode::Corrected,
        )
        .unwrap()
        .value;
        let sigma = total_cross_section(m, b.thermal_momentum(), b.kinematics()).unwrap();
        f * b.mass() / (b.density() * b.thermal_momentum() * sigma)
    };
    for (m0, m1) in models(1.0).iter().zip(&models(s)) {
        for r in [0.2, 1.5] {
            let a = dimensionless(&base, m0, r);
            let b = dimensionless(&scaled, m1, s * r);
            assert!(
                (a - b).abs() <= 1e-12 * a.abs(),
                "{}: {a} vs {b}",
                m0.label()
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn amplitudes_are_rotation_invariant(
        qin in (-2.0..2.0f64, -2.0..2.0f64, 0.2..2.0f64),
        nout in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
        ax in (-1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64),
        angle in 0.0..6.2f64,
    ) {
        let kin = Kinematics::default();
        prop_assume!(Vec3::new(nout.0, nout.1, nout.2).norm() > 0.1);
        let q_in = Vec3::new(qin.0, qin.1, qin.2);
        let n_out = unit(nout);
        let axis = unit(ax);
        for m in [
            AmplitudeModel::ConstantSWave { f0: 0.4 },
            AmplitudeModel::HardSphere { radius: 1.3, l_max: LMax::Auto },
            AmplitudeModel::BornPotential { potential: PotentialModel::Gaussian { strength: 0.1, width: 0.6 } },
            AmplitudeModel::BornPotential { potential: PotentialModel::Yukawa { strength: 0.05, screening: 1.2 } },
        ] {
            let f = amplitude(&m, q_in, n_out, kin).unwrap();
            let g = amplitude(&m, rotate(q_in, axis, angle), rotate(n_out, axis, angle), kin).unwrap();
            prop_assert!((f - g).norm() <= 1e-12 * f.norm().max(1e-300));
            // Reciprocity: swapping incoming and outgoing directions.
            let q = q_in.norm();
            let r = amplitude(&m, n_out * q, q_in / q, kin).unwrap();
            prop_assert!((f - r).norm() <= 1e-12 * f.norm().max(1e-300));
        }
    }

    #[test]
    fn born_amplitude_is_the_potential_transform(
        a in (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64),
        b in (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64),
    ) {
        let kin = Kinematics { mass: 1.7, hbar: 0.8 };
        let (q_out, q_in) = (Vec3::new(a.0, a.1, a.2), Vec3::new(b.0, b.1, b.2));
        for pot in [
            PotentialModel::Gaussian { strength: 0.1, width: 0.6 },
            PotentialModel::Yukawa { strength: 0.05, screening: 1.2 },
        ] {
            let m = AmplitudeModel::BornPotential { potential: pot };
            let f = amplitude_vec(&m, q_out, q_in, kin).unwrap();
            let expect = -4.0 * PI * PI * kin.mass * kin.hbar * potential_fourier(&pot, q_out - q_in, kin.hbar);
            prop_assert!((f - Complex64::new(expect, 0.0)).norm() <= 1e-12 * expect.abs());
        }
    }

    #[test]
    fn variance_sum_rule(fraction in 1e-4..0.9999f64, t in 0.1..10.0f64, m in 0.1..10.0f64) {
        let b = make_bath(m, t, 0.01, UnitSystem::default()).unwrap();
        let s = split_bath(&b, fraction).unwrap();
        prop_assert!(s.variance_sum_defect().abs() <= 1e-12 * 0.5 * t);
    }
}

#[test]
fn hard_sphere_optical_theorem() {
    let kin = Kinematics::default();
    for kr in [0.1, 1.0, 5.0] {
        let m = AmplitudeModel::HardSphere {
            radius: 1.0,
            l_max: LMax::Auto,
        };
        let r = optical_theorem_residual(&m, kr, kin).unwrap();
        assert!(r <= 1e-8, "kR_s={kr}: {r:e}");
    }
}

#[test]
fn speed_distribution_is_normalized() {
    for (m, t) in [(1.0, 1.0), (4.0, 0.3), (0.2, 7.0)] {
        let b = make_bath(m, t, 0.01, UnitSystem::default()).unwrap();
        let top = 12.0 * b.thermal_momentum();
        let norm = integrate_adaptive(|q| speed_distribution(&b, q), 0.0, top, 1e-15, 1e-13, 2000)
            .unwrap()
            .value;
        assert!((norm - 1.0).abs() <= 1e-10);
        for q in [0.1, 0.9, 2.5] {
            let q = q * b.thermal_momentum();
            let nu = speed_distribution(&b, q);
            let mu = mb_density(&b, Vec3::new(0.0, 0.6, 0.8) * q);
            assert!((4.0 * PI * q * q * mu - nu).abs() <= 1e-10 * nu);
        }
    }
}

#[test]
fn packet_uncertainties() {
    let b = make_bath(1.3, 0.8, 0.01, UnitSystem::new(0.9, 1.0).unwrap()).unwrap();
    let s = split_bath(&b, 0.2).unwrap();
    let packet = WavePacket {
        center: Vec3::new(0.3, -0.2, 0.1),
        mean_momentum: Vec3::new(0.7 * s.b, 0.1, -0.2),
        split: s,
    };
    // x moments on a tensor Gauss-Legendre grid; ∂ₓψ by a five-point stencil.
    let rule = gauss_legendre(80).mapped(-8.0 * s.a, 8.0 * s.a);
    let h = 1e-3 * s.a;
    let (mut norm, mut x1, mut x2, mut p1, mut p2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
        for (&y, &wy) in rule.nodes.iter().zip(&rule.weights) {
            for (&z, &wz) in rule.nodes.iter().zip(&rule.weights) {
                let w = wx * wy * wz;
                let d = Vec3::new(x, y, z);
                let r = packet.center + d;
                let psi = packet_wavefunction(&packet, r);
                let at = |k: f64| packet_wavefunction(&packet, r + Vec3::X * (k * h));
                let dpsi = (at(-2.0) - at(-1.0) * 8.0 + at(1.0) * 8.0 - at(2.0)) / (12.0 * h);
                let rho = psi.norm_sqr();
                norm += w * rho;
                x1 += w * rho * x;
                x2 += w * rho * x * x;
                p1 += w * (psi.conj() * dpsi).im * s.hbar;
                p2 += w * dpsi.norm_sqr() * s.hbar * s.hbar;
            }
        }
    }
    assert!((norm - packet_norm(&packet)).abs() <= 1e-10);
    assert!((norm - 1.0).abs() <= 1e-10);
    let dx = (x2 / norm - (x1 / norm).powi(2)).sqrt();
    let dp = (p2 / norm - (p1 / norm).powi(2)).sqrt();
    assert!(
        (dx - s.a / 2f64.sqrt()).abs() <= 1e-10 * s.a,
        "{dx} vs {}",
        s.a / 2f64.sqrt()
    );
    assert!(
        (dp - s.b / 2f64.sqrt()).abs() <= 1e-10 * s.b,
        "{dp} vs {}",
        s.b / 2f64.sqrt()
    );
    assert!((p1 / norm - packet.mean_momentum.x).abs() <= 1e-10 * s.b);
}

#[test]
fn gamma_fourier_identity_over_the_profile() {
    let s = split_bath(&bath(), DEFAULT_BAR_FRACTION).unwrap();
    let q_hat = Vec3::new(0.2, -0.4, 0.9).unit().unwrap();
    let (e1, e2) = q_hat.orthonormal_frame();
    let dir = (e1 * 0.6 + e2 * 0.8).unit().unwrap();
    for i in 0..=10 {
        let u = dir * (0.5 * i as f64 * s.a) + q_hat * (1.7 * s.a);
        let r = gamma_fourier_residual(&s, q_hat, u).unwrap();
        assert!(r <= 1e-6, "|u⊥|/a = {}: {r:e}", 0.5 * i as f64);
    }
}

fn gbar_grid() -> (Vec<f64>, Vec<f64>) {
    let b = bath();
    let qth = b.thermal_momentum();
    let qs = (0..5).map(|i| (0.2 + 0.95 * i as f64) * qth).collect();
    let ws = (0..5)
        .map(|i| 0.75 * i as f64 * qth * qth / (2.0 * b.mass() * b.hbar()))
        .collect();
    (qs, ws)
}

#[test]
fn gbar_closed_form_matches_integral() {
    let (qs, ws) = gbar_grid();
    for pot in [
        PotentialModel::Gaussian {
            strength: 0.05,
            width: 0.7,
        },
        PotentialModel::Yukawa {
            strength: 0.02,
            screening: 1.0,
        },
    ] {
        let spec = GbarSpec {
            bath: bath(),
            potential: pot,
        };
        for &q in &qs {
            for &w in &ws {
                let c = gbar_closed(&spec, q, w).unwrap();
                let i = gbar_integral(&spec, q, w).unwrap();
                assert!((c - i).abs() <= 1e-9 * c, "q={q} ω={w}: {c:e} vs {i:e}");
            }
        }
    }
}

#[test]
fn gbar_peaks_on_the_free_dispersion() {
    let spec = GbarSpec {
        bath: bath(),
        potential: PotentialModel::Gaussian {
            strength: 0.05,
            width: 0.7,
        },
    };
    for q in [0.5, 1.0, 2.0] {
        let resonance = q * q / 2.0;
        let grid: Vec<f64> = (0..=400).map(|i| resonance * i as f64 / 200.0).collect();
        let vals: Vec<f64> = grid
            .iter()
            .map(|&w| gbar_closed(&spec, q, w).unwrap())
            .collect();
        let best = (0..vals.len())
            .max_by(|&i, &j| vals[i].total_cmp(&vals[j]))
            .unwrap();
        assert_eq!(best, 200);
    }
}

#[test]
fn weak_coupling_matches_born_general_route() {
    let b = bath();
    let q = QuadratureSpec::default();
    let qth = b.thermal_momentum();
    let rs: Vec<Vec3> = [0.1, 0.5, 2.0, 8.0]
        .iter()
        .map(|&x| Vec3::Z * (x / qth))
        .collect();
    for pot in [
        PotentialModel::Gaussian {
            strength: 0.05,
            width: 0.7,
        },
        PotentialModel::Yukawa {
            strength: 0.02,
            screening: 1.0,
        },
    ] {
        let m = AmplitudeModel::BornPotential { potential: pot };
        let g = rate_general_many(&b, &m, &rs, &q, EpsilonMode::Corrected).unwrap();
        let w = rate_weak_coupling_many(&b, &pot, &rs, &q).unwrap();
        for (g, w) in g.iter().zip(&w) {
            assert!(
                (g.value - w.value).abs() <= 1e-3 * g.value,
                "{}: {} vs {}",
                m.label(),
                g.value,
                w.value
            );
        }
    }
}

#[test]
fn weak_coupling_is_quadratic_in_strength() {
    let b = bath();
    let q = QuadratureSpec::default();
    let pot = PotentialModel::Gaussian {
        strength: 0.05,
        width: 0.7,
    };
    let f1 = rate_weak_coupling(&b, &pot, Vec3::X, &q).unwrap().value;
    let f2 = rate_weak_coupling(&b, &pot.scaled(2.0), Vec3::X, &q)
        .unwrap()
        .value;
    assert!((f2 / f1 - 4.0).abs() <= 1e-12 * 4.0);
    let sat = saturation_rate(&b, &AmplitudeModel::BornPotential { potential: pot }, &q).unwrap();
    assert!(f1 > 0.0 && f1 <= sat * (1.0 + 1e-6));
}
