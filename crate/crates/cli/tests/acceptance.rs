// SPDX-License-Identifier: Apache-2.0

//! The eleven acceptance criteria, each printed as one PASS/FAIL line with
//! its measured defect and runtime.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use decoh_core::evolution::{evolve, DensityMatrixGrid};
use decoh_core::oracles::smeared_delta_i2;
use decoh_core::rate::*;
use decoh_core::scattering::optical_theorem_residual;
use decoh_core::thermal::{gamma_fourier_residual, split_bath, DEFAULT_BAR_FRACTION};
use decoh_core::wavepacket_mc::*;
use decoh_core::weak_coupling::{gbar_closed, gbar_integral, rate_weak_coupling_many, GbarSpec};
use decoh_core::{
    make_bath, AmplitudeModel, BathSpec, EpsilonMode, LMax, PotentialModel, UnitSystem, Vec3,
};
use num_complex::Complex64;

fn bath() -> BathSpec {
    make_bath(1.0, 1.0, 0.01, UnitSystem::default()).unwrap()
}

fn quad() -> QuadratureSpec {
    QuadratureSpec::default()
}

/// ħ/q_th for the reference bath.
fn thermal_length() -> f64 {
    let b = bath();
    b.hbar() / b.thermal_momentum()
}

fn oblique() -> Vec3 {
    Vec3::new(1.0, 2.0, 2.0) / 3.0
}

/// Ten separations with qR/ħ log-spaced over [0.1, 20].
fn route_grid() -> Vec<Vec3> {
    (0..10)
        .map(|i| oblique() * (0.1 * 200f64.powf(i as f64 / 9.0) * thermal_length()))
        .collect()
}

fn max_rel(a: &[RateResult], b: &[RateResult]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.value - y.value).abs() / x.value)
        .fold(0.0, f64::max)
}

/// Outcome of one criterion: pass flag and a one-line account.
type Verdict = (bool, String);

/// Name, check and runtime limit in seconds.
type Criterion = (&'static str, fn() -> Verdict, u64);

fn decoh() -> Command {
    Command::new(env!("CARGO_BIN_EXE_decoh"))
}

fn run_decoh(args: &[&str], out: &Path) -> std::process::Output {
    let out = decoh()
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("decoh runs");
    assert!(
        out.status.success(),
        "decoh {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn epsilon_factor() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    run_decoh(
        &["compare-routes", "--set", "model.kind=constant_s_wave"],
        dir.path(),
    );
    let csv = std::fs::read_to_string(dir.path().join("compare_routes.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    let pick = |eps: &str| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r[3] == "general" && r[4] == eps)
            .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
            .collect()
    };
    let (c, g) = (pick("corrected"), pick("gallis-fleming"));
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for ((rc, fc), (rg, fg)) in c.iter().zip(&g) {
        assert_eq!(rc, rg);
        if *rc > 0.0 {
            points += 1;
            worst = worst.max((fg / fc - 2.0 * PI).abs() / (2.0 * PI));
        }
    }
    let ok = points == 10 && worst <= 1e-12;
    (
        ok,
        format!("{points} points, max |ratio − 2π|/2π = {worst:.2e} (tol 1e-12)"),
    )
}

fn route_equivalence_algebraic() -> Verdict {
    let b = bath();
    let m = AmplitudeModel::HardSphere {
        radius: thermal_length(),
        l_max: LMax::Auto,
    };
    let rs = route_grid();
    let g = rate_general_many(&b, &m, &rs, &quad(), EpsilonMode::Corrected).unwrap();
    let r = rate_via_replacement_many(&b, &m, &rs, &quad()).unwrap();
    let d = max_rel(&g, &r);
    (
        d <= 1e-6,
        format!("hard sphere qR_s/ħ = 1, max relative difference {d:.2e} (tol 1e-6)"),
    )
}

fn route_equivalence_physical() -> Verdict {
    let b = bath();
    let pot = PotentialModel::Gaussian {
        strength: 0.05,
        width: 0.7,
    };
    let rs = route_grid();
    let g = rate_general_many(
        &b,
        &AmplitudeModel::BornPotential { potential: pot },
        &rs,
        &quad(),
        EpsilonMode::Corrected,
    )
    .unwrap();
    let w = rate_weak_coupling_many(&b, &pot, &rs, &quad()).unwrap();
    let d = max_rel(&g, &w);
    (
        d <= 1e-3,
        format!("Born Gaussian, max relative difference {d:.2e} (tol 1e-3)"),
    )
}

fn mc_verification() -> Verdict {
    let b = bath();
    let s = split_bath(&b, DEFAULT_BAR_FRACTION).unwrap();
    let m = AmplitudeModel::ConstantSWave { f0: 0.5 };
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, x) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let d = oblique() * (x * thermal_length());
        let exact = rate_general(&b, &m, d, &quad(), EpsilonMode::Corrected)
            .unwrap()
            .value;
        let cfg = McConfig::auto(&s, d.norm(), 100 + i as u64, 100_000, DEFAULT_BAR_FRACTION);
        let e = mc_rate(&b, &s, &m, d, Vec3::ZERO, &cfg).unwrap();
        let z = (e.value - exact) / e.stderr;
        let rel = e.stderr / e.value;
        ok &= z.abs() <= 3.0 && rel <= 0.1;
        parts.push(format!("z={z:+.2} σ/F={rel:.3}"));
    }
    (
        ok,
        format!("{} (need |z| ≤ 3, σ/F ≤ 0.1)", parts.join(", ")),
    )
}

fn gbar_closed_form() -> Verdict {
    let b = bath();
    let qth = b.thermal_momentum();
    let w0 = qth * qth / (2.0 * b.mass() * b.hbar());
    let mut worst: f64 = 0.0;
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
            bath: b,
            potential: pot,
        };
        for i in 0..5 {
            for j in 0..5 {
                let (q, w) = ((0.2 + 0.95 * i as f64) * qth, 0.75 * j as f64 * w0);
                let c = gbar_closed(&spec, q, w).unwrap();
                worst = worst.max((gbar_integral(&spec, q, w).unwrap() - c).abs() / c);
            }
        }
    }
    (
        worst <= 1e-9,
        format!("5×5 grid, Gaussian and Yukawa, max relative difference {worst:.2e} (tol 1e-9)"),
    )
}

fn optical_theorem() -> Verdict {
    let kin = bath().kinematics();
    let mut worst: f64 = 0.0;
    for kr in [0.1, 1.0, 5.0] {
        let m = AmplitudeModel::HardSphere {
            radius: kr * kin.hbar,
            l_max: LMax::Auto,
        };
        worst = worst.max(optical_theorem_residual(&m, 1.0, kin).unwrap());
    }
    (
        worst <= 1e-8,
        format!("qR_s/ħ ∈ {{0.1, 1, 5}}, max residual {worst:.2e} (tol 1e-8)"),
    )
}

fn gamma_fourier() -> Verdict {
    let s = split_bath(&bath(), DEFAULT_BAR_FRACTION).unwrap();
    let mut worst: f64 = 0.0;
    for q_hat in [Vec3::Z, Vec3::new(0.2, -0.4, 0.9).unit().unwrap()] {
        let (e1, e2) = q_hat.orthonormal_frame();
        let dir = e1 * 0.6 + e2 * 0.8;
        for i in 0..=20 {
            for along in [0.0, 1.7] {
                let u = dir * (0.25 * i as f64 * s.a) + q_hat * (along * s.a);
                worst = worst.max(gamma_fourier_residual(&s, q_hat, u).unwrap());
            }
        }
    }
    (
        worst <= 1e-6,
        format!("|u⊥|/a ∈ [0, 5], max residual {worst:.2e} (tol 1e-6)"),
    )
}

fn limits() -> Verdict {
    let b = bath();
    let kin = b.kinematics();
    let qth = b.thermal_momentum();
    let hs = AmplitudeModel::HardSphere {
        radius: thermal_length(),
        l_max: LMax::Auto,
    };
    let cs = AmplitudeModel::ConstantSWave { f0: 0.5 };
    let born = AmplitudeModel::BornPotential {
        potential: PotentialModel::Gaussian {
            strength: 0.05,
            width: 0.7,
        },
    };

    let mut f0: f64 = 0.0;
    for m in [&hs, &cs, &born] {
        let sat = saturation_rate(&b, m, &quad()).unwrap();
        let g = rate_general(&b, m, Vec3::ZERO, &quad(), EpsilonMode::Corrected)
            .unwrap()
            .value;
        let r = rate_via_replacement(&b, m, Vec3::ZERO, &quad())
            .unwrap()
            .value;
        f0 = f0.max(g.abs().max(r.abs()) / sat);
    }

    let far = oblique() * (100.0 / qth);
    let sat_hs = saturation_rate(&b, &hs, &quad()).unwrap();
    let f_hs = rate_via_replacement(&b, &hs, far, &quad()).unwrap().value;
    let sat_cs = saturation_rate(&b, &cs, &quad()).unwrap();
    let f_cs = rate_general(&b, &cs, far, &quad(), EpsilonMode::Corrected)
        .unwrap()
        .value;
    let sat_dev = ((f_hs - sat_hs).abs() / sat_hs).max((f_cs - sat_cs).abs() / sat_cs);

    let p = Vec3::new(0.2, 0.9, -0.4);
    let eta0_exact = [&hs, &cs, &born].iter().all(|m| {
        let e = per_collision_decoherence(m, p, Vec3::ZERO, kin).unwrap();
        e.re == 1.0 && e.im == 0.0
    });

    let q = qth;
    let big = AmplitudeModel::HardSphere {
        radius: 5.0 * kin.hbar / q,
        l_max: LMax::Auto,
    };
    let mut eta_far: f64 = 0.0;
    for dir in [
        Vec3::X,
        Vec3::new(1.0, 1.0, 1.0) / 3f64.sqrt(),
        Vec3::new(1.0, 0.0, 1.0) / 2f64.sqrt(),
    ] {
        eta_far = eta_far.max(
            per_collision_decoherence(&big, Vec3::Z * q, dir * (50.0 * kin.hbar / q), kin)
                .unwrap()
                .norm(),
        );
    }

    let ok = f0 <= 1e-15 && sat_dev <= 5e-3 && eta0_exact && eta_far <= 0.05;
    (
        ok,
        format!(
            "|F(0)|/F_sat {f0:.1e}, F(qR=100) vs saturation {sat_dev:.2e} (tol 5e-3), η(0)=1 exact: {eta0_exact}, |η| at 50ħ/q {eta_far:.3} (tol 0.05)"
        ),
    )
}

fn evolution() -> Verdict {
    let b = bath();
    let m = AmplitudeModel::ConstantSWave { f0: 0.5 };
    let n = 64;
    let length = 16.0 * thermal_length();
    let xs: Vec<f64> = (0..n)
        .map(|i| -0.5 * length + length * i as f64 / (n - 1) as f64)
        .collect();
    let dx = xs[1] - xs[0];
    let rs: Vec<Vec3> = (0..n).map(|k| oblique() * (k as f64 * dx)).collect();
    let f: Vec<f64> = rate_general_many(&b, &m, &rs, &quad(), EpsilonMode::Corrected)
        .unwrap()
        .iter()
        .map(|r| r.value)
        .collect();
    let lookup = |r: f64| Ok(f[(r / dx).round() as usize]);

    // A mixture of a cat state and a moving packet.
    let l = thermal_length();
    let cat: Vec<Complex64> = xs
        .iter()
        .map(|&x| {
            Complex64::new(
                (-((x - 3.0 * l) / l).powi(2)).exp() + (-((x + 3.0 * l) / l).powi(2)).exp(),
                0.0,
            )
        })
        .collect();
    let moving: Vec<Complex64> = xs
        .iter()
        .map(|&x| Complex64::from_polar((-((x - l) / l).powi(2) / 2.0).exp(), 0.7 * x / l))
        .collect();
    let a = DensityMatrixGrid::pure(oblique(), xs.clone(), &cat).unwrap();
    let c = DensityMatrixGrid::pure(oblique(), xs.clone(), &moving).unwrap();
    let rho = DensityMatrixGrid::new(
        oblique(),
        xs.clone(),
        a.values() * Complex64::new(0.6, 0.0) + c.values() * Complex64::new(0.4, 0.0),
        0.0,
    )
    .unwrap();
    let scale = rho.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tau = 1.0 / f[n / 4];

    let two = evolve(&evolve(&rho, lookup, 0.7 * tau).unwrap(), lookup, 1.8 * tau).unwrap();
    let one = evolve(&rho, lookup, 2.5 * tau).unwrap();
    let semigroup = (two.values() - one.values())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        / scale;

    let diag = (0..n)
        .map(|i| (one.values()[(i, i)] - rho.values()[(i, i)]).norm())
        .fold(0.0, f64::max)
        / scale;
    let preserve = ((one.trace() - rho.trace()).abs() / rho.trace())
        .max(diag)
        .max(one.hermiticity_defect() / scale);

    let mut decay: f64 = 0.0;
    let t = 2.5 * tau;
    for (i, j) in [(3, 9), (10, 30), (0, 63), (20, 21), (5, 50)] {
        let d = (j - i) as f64 * dx;
        let direct = rate_general(&b, &m, oblique() * d, &quad(), EpsilonMode::Corrected)
            .unwrap()
            .value;
        let ratio = one.values()[(i, j)] / rho.values()[(i, j)];
        decay = decay.max((ratio - (-direct * t).exp()).norm());
    }

    let mut negativity: f64 = 0.0;
    for k in [0.1, 1.0, 10.0, 1e3, 1e5] {
        let out = evolve(&rho, lookup, k * tau).unwrap();
        negativity = negativity.max(-out.min_eigenvalue() / out.trace());
    }

    let ok = semigroup <= 1e-12 && preserve <= 1e-12 && decay <= 1e-10 && negativity <= 1e-10;
    (
        ok,
        format!(
            "semigroup {semigroup:.1e}, trace/diagonal/hermiticity {preserve:.1e} (tol 1e-12), decay {decay:.1e} (tol 1e-10), −λ_min/tr {negativity:.1e} (tol 1e-10)"
        ),
    )
}

fn oracle() -> Verdict {
    let kin = bath().kinematics();
    let m = AmplitudeModel::BornPotential {
        potential: PotentialModel::Gaussian {
            strength: 0.05,
            width: 0.7,
        },
    };
    let p = Vec3::new(0.3, -0.2, 3.0);
    let u = GaussianBilinear {
        momentum: p,
        b: 0.5,
        center: Vec3::new(0.4, 0.1, 0.0),
        hbar: kin.hbar,
    };
    let r = Vec3::new(0.5, 0.2, 0.3);
    let i2 = reduced_integral_i2(
        |a, b| u.value(a, b),
        &m,
        r,
        kin,
        &ReducedQuadrature::for_packet(p, 0.5),
    )
    .unwrap();
    let est = smeared_delta_i2(&u, &m, r, kin, &[0.04, 0.03, 0.02], 4_000_000, 7).unwrap();
    let ex = est.extrapolated_complex();
    let z = (ex - i2).norm() / est.extrapolated_stderr;
    // Richardson consistency: the two-point extrapolations agree within
    // three standard errors of their difference.
    let gap_z = est.richardson_gap / est.richardson_gap_stderr;
    let ok = z <= 3.0 && gap_z <= 3.0;
    (
        ok,
        format!("|oracle − I₂|/σ = {z:.2}, Richardson gap/σ = {gap_z:.2} (both ≤ 3)"),
    )
}

fn determinism() -> Verdict {
    let args = [
        "mc-verify",
        "--seed",
        "77",
        "--set",
        "model.kind=constant_s_wave",
        "--set",
        "mc.samples=20000",
    ];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_decoh(&args, a.path());
    run_decoh(&args, b.path());
    let read = |d: &Path| std::fs::read(d.join("mc_verify.csv")).unwrap();
    let same = read(a.path()) == read(b.path());
    let other = tempfile::tempdir().unwrap();
    run_decoh(
        &[
            "mc-verify",
            "--seed",
            "78",
            "--set",
            "model.kind=constant_s_wave",
            "--set",
            "mc.samples=20000",
        ],
        other.path(),
    );
    let differs = read(other.path()) != read(a.path());
    (
        same && differs,
        format!("identical seed → identical bytes: {same}; other seed differs: {differs}"),
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 11] = [
        ("1 epsilon factor", epsilon_factor, 10),
        ("2 general = replacement", route_equivalence_algebraic, 60),
        ("3 general = weak coupling", route_equivalence_physical, 120),
        ("4 Monte Carlo", mc_verification, 300),
        ("5 Gbar closed form", gbar_closed_form, 5),
        ("6 optical theorem", optical_theorem, 5),
        ("7 Gamma Fourier identity", gamma_fourier, 10),
        ("8 limits", limits, 60),
        ("9 evolution", evolution, 10),
        ("10 smeared-delta oracle", oracle, 600),
        ("11 determinism", determinism, 60),
    ];
    let mut failed = Vec::new();
    for (name, f, limit) in criteria {
        let start = Instant::now();
        let (ok, detail) = f();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(limit);
        let pass = ok && in_time;
        if !pass {
            failed.push(name);
        }
        let line = format!(
            "{} [{name}] {detail}; {:.1} s (limit {limit} s)\n",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
        std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
