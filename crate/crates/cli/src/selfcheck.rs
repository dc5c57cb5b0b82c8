// SPDX-License-Identifier: Apache-2.0

//! Invariant suite run by `decoh selfcheck`.
//!
//! Every check reduces to a non-negative defect compared against a
//! tolerance. Models are built in thermal units of the configured bath, so
//! the suite runs on any valid bath. `--extended` adds the smeared-delta
//! oracle and full-size Monte Carlo runs.

use std::f64::consts::PI;
use std::time::Instant;

use decoh_core::evolution::{evolve, DensityMatrixGrid};
use decoh_core::oracles::smeared_delta_i2;
use decoh_core::rate::*;
use decoh_core::scattering::{amplitude, optical_theorem_residual};
use decoh_core::thermal::{gamma_fourier_residual, split_bath, DEFAULT_BAR_FRACTION};
use decoh_core::wavepacket_mc::*;
use decoh_core::weak_coupling::{
    gbar_closed, gbar_integral, potential_fourier, rate_weak_coupling_many, GbarSpec,
};
use decoh_core::{AmplitudeModel, BathSpec, EpsilonMode, LMax, PotentialModel, Vec3};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::commands::{CmdResult, Failed};
use crate::config::RunConfig;
use crate::output::{text_table, Cell, OutputDir, Table};
use crate::{CliError, Report};

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub name: &'static str,
    pub defect: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
    pub error: Option<String>,
}

type Check = (&'static str, fn(&Ctx) -> decoh_core::Result<(f64, f64)>);

/// Shared inputs: the bath and its thermal length ħ/q_th.
pub struct Ctx {
    bath: BathSpec,
    len: f64,
    quad: QuadratureSpec,
}

impl Ctx {
    fn constant(&self) -> AmplitudeModel {
        AmplitudeModel::ConstantSWave { f0: 0.5 * self.len }
    }
    fn hard_sphere(&self, radius: f64) -> AmplitudeModel {
        AmplitudeModel::HardSphere {
            radius: radius * self.len,
            l_max: LMax::Auto,
        }
    }
    fn gaussian(&self) -> PotentialModel {
        // Born coupling 2m|V0|w²/ħ² = 0.049 whatever the bath.
        let kin = self.bath.kinematics();
        let w = 0.7 * self.len;
        PotentialModel::Gaussian {
            strength: 0.0245 * kin.hbar * kin.hbar / (kin.mass * w * w),
            width: w,
        }
    }
    fn born(&self) -> AmplitudeModel {
        AmplitudeModel::BornPotential {
            potential: self.gaussian(),
        }
    }
    fn along(&self, dir: Vec3, xs: &[f64]) -> Vec<Vec3> {
        xs.iter().map(|&x| dir * (x * self.len)).collect()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

fn max_rel(a: &[RateResult], b: &[RateResult]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| rel(y.value, x.value))
        .fold(0.0, f64::max)
}

fn oblique() -> Vec3 {
    Vec3::new(1.0, 2.0, 2.0) / 3.0
}

fn epsilon_ratio(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let rs = c.along(oblique(), &[0.1, 1.0, 5.0, 20.0]);
    let m = c.constant();
    let a = rate_general_many(&c.bath, &m, &rs, &c.quad, EpsilonMode::Corrected)?;
    let b = rate_general_many(&c.bath, &m, &rs, &c.quad, EpsilonMode::GallisFleming)?;
    let d = a
        .iter()
        .zip(&b)
        .map(|(x, y)| rel(y.value / x.value, 2.0 * PI))
        .fold(0.0, f64::max);
    Ok((d, 1e-12))
}

fn replacement_route(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let rs = c.along(oblique(), &[0.1, 1.0, 5.0, 20.0]);
    let m = c.hard_sphere(1.0);
    let a = rate_general_many(&c.bath, &m, &rs, &c.quad, EpsilonMode::Corrected)?;
    let b = rate_via_replacement_many(&c.bath, &m, &rs, &c.quad)?;
    Ok((max_rel(&a, &b), 1e-6))
}

fn weak_coupling_route(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let rs = c.along(oblique(), &[0.5, 2.0]);
    let a = rate_general_many(&c.bath, &c.born(), &rs, &c.quad, EpsilonMode::Corrected)?;
    let b = rate_weak_coupling_many(&c.bath, &c.gaussian(), &rs, &c.quad)?;
    Ok((max_rel(&a, &b), 1e-3))
}

fn zero_separation(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let m = c.hard_sphere(1.0);
    let f = rate_general(&c.bath, &m, Vec3::ZERO, &c.quad, EpsilonMode::Corrected)?.value;
    let g = rate_via_replacement(&c.bath, &m, Vec3::ZERO, &c.quad)?.value;
    let sat = saturation_rate(&c.bath, &m, &c.quad)?;
    Ok((f.abs().max(g.abs()) / sat, 1e-15))
}

fn saturation(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let m = c.constant();
    let sat = saturation_rate(&c.bath, &m, &c.quad)?;
    let f = rate_general(
        &c.bath,
        &m,
        oblique() * (100.0 * c.len),
        &c.quad,
        EpsilonMode::Corrected,
    )?
    .value;
    Ok((rel(f, sat), 5e-3))
}

fn eta_at_origin(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let kin = c.bath.kinematics();
    let p = Vec3::new(0.2, 0.9, -0.4) / c.len * c.bath.hbar();
    let mut worst: f64 = 0.0;
    for m in [c.constant(), c.hard_sphere(1.0), c.born()] {
        worst = worst.max((per_collision_decoherence(&m, p, Vec3::ZERO, kin)? - 1.0).norm());
    }
    Ok((worst, 0.0))
}

fn eta_decay(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    // qR_s/ħ = 5 and |R| = 50ħ/q, away from the forward diffraction peak.
    let kin = c.bath.kinematics();
    let q = c.bath.thermal_momentum();
    let m = AmplitudeModel::HardSphere {
        radius: 5.0 * kin.hbar / q,
        l_max: LMax::Auto,
    };
    let mut worst: f64 = 0.0;
    for dir in [
        Vec3::X,
        Vec3::new(1.0, 1.0, 1.0) / 3f64.sqrt(),
        Vec3::new(1.0, 0.0, 1.0) / 2f64.sqrt(),
    ] {
        worst = worst.max(
            per_collision_decoherence(&m, Vec3::Z * q, dir * (50.0 * kin.hbar / q), kin)?.norm(),
        );
    }
    Ok((worst, 0.05))
}

fn eta_two_ways(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let kin = c.bath.kinematics();
    let p = Vec3::new(0.3, -0.5, 1.1) * (c.bath.hbar() / c.len);
    let r = Vec3::new(1.3, 0.4, -0.2) * c.len;
    let mut worst: f64 = 0.0;
    for m in [c.constant(), c.hard_sphere(1.0), c.born()] {
        let a = per_collision_decoherence(&m, p, r, kin)?;
        let b = per_collision_decoherence_multipole(&m, p, r, kin)?;
        worst = worst.max((a - b).norm());
    }
    Ok((worst, 1e-10))
}

fn flux_conservation(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let kin = c.bath.kinematics();
    let p = Vec3::new(-1.0, 2.0, 0.5) * (0.5 * c.bath.hbar() / c.len);
    let mut worst: f64 = 0.0;
    for m in [c.constant(), c.hard_sphere(1.0), c.born()] {
        worst = worst.max(conservation_check(&m, p, kin)?);
    }
    Ok((worst, 1e-10))
}

fn optical_theorem(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let kin = c.bath.kinematics();
    let m = c.hard_sphere(1.0);
    let mut worst: f64 = 0.0;
    for kr in [0.1, 1.0, 5.0] {
        worst = worst.max(optical_theorem_residual(&m, kr * kin.hbar / c.len, kin)?);
    }
    Ok((worst, 1e-8))
}

fn born_amplitude(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let kin = c.bath.kinematics();
    let pot = c.gaussian();
    let q = Vec3::new(0.4, -0.3, 1.2) * (kin.hbar / c.len);
    let n = Vec3::new(-0.6, 0.0, 0.8);
    let f = amplitude(&AmplitudeModel::BornPotential { potential: pot }, q, n, kin)?;
    let expect =
        -4.0 * PI * PI * kin.mass * kin.hbar * potential_fourier(&pot, n * q.norm() - q, kin.hbar);
    Ok((
        (f - Complex64::new(expect, 0.0)).norm() / expect.abs(),
        1e-12,
    ))
}

fn gbar_forms(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let qth = c.bath.thermal_momentum();
    let w0 = qth * qth / (2.0 * c.bath.mass() * c.bath.hbar());
    let spec = GbarSpec {
        bath: c.bath,
        potential: c.gaussian(),
    };
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let (q, w) = ((0.2 + 0.95 * i as f64) * qth, 0.75 * j as f64 * w0);
            worst = worst.max(rel(gbar_integral(&spec, q, w)?, gbar_closed(&spec, q, w)?));
        }
    }
    Ok((worst, 1e-9))
}

fn gamma_fourier(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let s = split_bath(&c.bath, DEFAULT_BAR_FRACTION)?;
    let q_hat = Vec3::new(0.2, -0.4, 0.9).unit()?;
    let (e1, e2) = q_hat.orthonormal_frame();
    let dir = e1 * 0.6 + e2 * 0.8;
    let mut worst: f64 = 0.0;
    for i in 0..=10 {
        let u = dir * (0.5 * i as f64 * s.a) + q_hat * (1.7 * s.a);
        worst = worst.max(gamma_fourier_residual(&s, q_hat, u)?);
    }
    Ok((worst, 1e-6))
}

fn variance_sum(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for frac in [1e-3, DEFAULT_BAR_FRACTION, 0.3, 0.9] {
        let s = split_bath(&c.bath, frac)?;
        worst = worst
            .max(s.variance_sum_defect().abs() / (c.bath.temperature() * c.bath.units().boltzmann));
    }
    Ok((worst, 1e-12))
}

fn rotation_invariance(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let m = c.hard_sphere(1.0);
    let r = Vec3::new(0.4, -1.1, 0.8) * c.len;
    let f = rate_general(&c.bath, &m, r, &c.quad, EpsilonMode::Corrected)?.value;
    let g = rate_general(&c.bath, &m, -r, &c.quad, EpsilonMode::Corrected)?.value;
    let h = rate_general(
        &c.bath,
        &m,
        Vec3::Z * r.norm(),
        &c.quad,
        EpsilonMode::Corrected,
    )?
    .value;
    Ok((rel(g, f).max(rel(h, f)), 1e-10))
}

/// Grid on [−2L, 2L] thermal lengths and F at every multiple of the spacing.
fn evolution_setup(c: &Ctx, n: usize) -> decoh_core::Result<(DensityMatrixGrid, Vec<f64>)> {
    let length = 16.0 * c.len;
    let xs: Vec<f64> = (0..n)
        .map(|i| -0.5 * length + length * i as f64 / (n - 1) as f64)
        .collect();
    let dx = xs[1] - xs[0];
    let rs: Vec<Vec3> = (0..n).map(|k| oblique() * (k as f64 * dx)).collect();
    let f = rate_general_many(&c.bath, &c.constant(), &rs, &c.quad, EpsilonMode::Corrected)?
        .iter()
        .map(|r| r.value)
        .collect();
    let psi: Vec<Complex64> = xs
        .iter()
        .map(|&x| {
            let (a, b) = ((x - 3.0 * c.len) / c.len, (x + 3.0 * c.len) / c.len);
            Complex64::from_polar((-a * a).exp() + (-b * b).exp(), 0.3 * x / c.len)
        })
        .collect();
    Ok((DensityMatrixGrid::pure(oblique(), xs, &psi)?, f))
}

fn lookup(table: &[f64], dx: f64) -> impl Fn(f64) -> decoh_core::Result<f64> + '_ {
    move |r| Ok(table[(r / dx).round() as usize])
}

fn scale_of(g: &DensityMatrixGrid) -> f64 {
    g.values().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn evolution_semigroup(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let (rho, f) = evolution_setup(c, 40)?;
    let dx = rho.spacing();
    let t = 1.0 / f[f.len() / 4];
    let two = evolve(
        &evolve(&rho, lookup(&f, dx), 0.4 * t)?,
        lookup(&f, dx),
        0.6 * t,
    )?;
    let one = evolve(&rho, lookup(&f, dx), t)?;
    let d = (two.values() - one.values())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    Ok((d / scale_of(&rho), 1e-12))
}

fn evolution_preserves(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let (rho, f) = evolution_setup(c, 40)?;
    let out = evolve(&rho, lookup(&f, rho.spacing()), 5.0 / f[f.len() / 4])?;
    let s = scale_of(&rho);
    let diag = (0..rho.len())
        .map(|i| (out.values()[(i, i)] - rho.values()[(i, i)]).norm())
        .fold(0.0, f64::max);
    let d = rel(out.trace(), rho.trace())
        .max(diag / s)
        .max(out.hermiticity_defect() / s);
    Ok((d, 1e-12))
}

fn evolution_decay(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let (rho, f) = evolution_setup(c, 40)?;
    let dx = rho.spacing();
    let t = 2.0 / f[f.len() / 4];
    let out = evolve(&rho, lookup(&f, dx), t)?;
    let mut worst: f64 = 0.0;
    for (i, j) in [(3, 9), (10, 30), (0, 39), (20, 21)] {
        let d = (j - i) as f64 * dx;
        let direct = rate_general(
            &c.bath,
            &c.constant(),
            oblique() * d,
            &c.quad,
            EpsilonMode::Corrected,
        )?
        .value;
        let ratio = out.values()[(i, j)] / rho.values()[(i, j)];
        worst = worst.max((ratio - (-direct * t).exp()).norm());
    }
    Ok((worst, 1e-10))
}

fn evolution_positive(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let (rho, f) = evolution_setup(c, 64)?;
    let mut worst: f64 = 0.0;
    for k in [0.1, 1.0, 10.0, 1000.0] {
        let out = evolve(&rho, lookup(&f, rho.spacing()), k / f[f.len() / 4])?;
        worst = worst.max((-out.min_eigenvalue() / out.trace()).max(0.0));
    }
    Ok((worst, 1e-10))
}

fn kernel_coincidence(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let s = split_bath(&c.bath, DEFAULT_BAR_FRACTION)?;
    let p = Vec3::new(0.2, 0.1, 1.0) * (20.0 * s.b);
    let r_o = Vec3::new(0.3 * s.a, 0.0, -4.0 * s.a);
    let r = Vec3::new(0.1, 0.2, 0.0) * s.a;
    let k = single_packet_kernel(&s, &c.constant(), r_o, p, r, r)?;
    let sigma =
        decoh_core::scattering::total_cross_section(&c.constant(), p.norm(), c.bath.kinematics())?;
    Ok((k.value.norm() / (sigma / (PI * s.a * s.a)), 1e-12))
}

fn mc_quick(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    mc_against_quadrature(c, &[1.0], 20_000, f64::INFINITY)
}

fn mc_deterministic(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let s = split_bath(&c.bath, DEFAULT_BAR_FRACTION)?;
    let d = oblique() * c.len;
    let cfg = McConfig::auto(&s, c.len, 99, 2000, DEFAULT_BAR_FRACTION);
    let a = mc_rate(&c.bath, &s, &c.constant(), d, Vec3::ZERO, &cfg)?;
    let b = mc_rate(&c.bath, &s, &c.constant(), d, Vec3::ZERO, &cfg)?;
    let same = a.value.to_bits() == b.value.to_bits() && a.stderr.to_bits() == b.stderr.to_bits();
    Ok((if same { 0.0 } else { 1.0 }, 0.0))
}

/// Largest |z| over the separations; reported as failing when a relative
/// standard error exceeds `max_rel_stderr`.
fn mc_against_quadrature(
    c: &Ctx,
    seps: &[f64],
    samples: usize,
    max_rel_stderr: f64,
) -> decoh_core::Result<(f64, f64)> {
    let s = split_bath(&c.bath, DEFAULT_BAR_FRACTION)?;
    let m = c.constant();
    let mut worst: f64 = 0.0;
    for (i, &x) in seps.iter().enumerate() {
        let d = oblique() * (x * c.len);
        let exact = rate_general(&c.bath, &m, d, &c.quad, EpsilonMode::Corrected)?.value;
        let cfg = McConfig::auto(&s, d.norm(), 2024 + i as u64, samples, DEFAULT_BAR_FRACTION);
        let e = mc_rate(&c.bath, &s, &m, d, Vec3::ZERO, &cfg)?;
        if e.stderr > max_rel_stderr * e.value {
            return Ok((f64::INFINITY, 3.0));
        }
        worst = worst.max((e.value - exact).abs() / e.stderr);
    }
    Ok((worst, 3.0))
}

fn mc_full(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    mc_against_quadrature(c, &[0.5, 1.0, 2.0], 100_000, 0.1)
}

fn oracle_overlap(c: &Ctx) -> decoh_core::Result<(f64, f64)> {
    let (u, m, r) = oracle_inputs(c);
    let kin = c.bath.kinematics();
    let i2 = reduced_integral_i2(
        |a, b| u.value(a, b),
        &m,
        r,
        kin,
        &ReducedQuadrature::for_packet(u.momentum, u.b),
    )?;
    let est = smeared_delta_i2(&u, &m, r, kin, &[0.04, 0.03, 0.02], 4_000_000, 7)?;
    let z = (est.extrapolated_complex() - i2).norm() / est.extrapolated_stderr;
    let gap_z = est.richardson_gap / est.richardson_gap_stderr;
    // Both conditions folded into one defect: each z-score at most 3.
    Ok((z.max(gap_z), 3.0))
}

fn oracle_inputs(c: &Ctx) -> (GaussianBilinear, AmplitudeModel, Vec3) {
    let h = c.bath.hbar();
    let p = Vec3::new(0.3, -0.2, 3.0) * (h / c.len);
    let u = GaussianBilinear {
        momentum: p,
        b: 0.5 * h / c.len,
        center: Vec3::new(0.4, 0.1, 0.0) * c.len,
        hbar: h,
    };
    (u, c.born(), Vec3::new(0.5, 0.2, 0.3) * c.len)
}

const DEFAULT_CHECKS: &[Check] = &[
    ("gallis-fleming / corrected = 2π", epsilon_ratio),
    ("general = replacement (hard sphere)", replacement_route),
    ("general = weak coupling (Born)", weak_coupling_route),
    ("F(0) = 0", zero_separation),
    ("F(qR=100) → saturation", saturation),
    ("F rotation invariant and even", rotation_invariance),
    ("η(0) = 1", eta_at_origin),
    ("|η| small at qR_s=5, R=50ħ/q", eta_decay),
    ("η direct = multipole", eta_two_ways),
    ("probability conservation", flux_conservation),
    ("optical theorem (hard sphere)", optical_theorem),
    ("Born amplitude = −4π²mħV̄", born_amplitude),
    ("Ḡ closed = integral", gbar_forms),
    ("Γ Fourier identity", gamma_fourier),
    ("packet variance sum rule", variance_sum),
    ("packet kernel zero at coincidence", kernel_coincidence),
    ("evolution semigroup", evolution_semigroup),
    (
        "evolution keeps trace, diagonal, hermiticity",
        evolution_preserves,
    ),
    ("evolution decay e^{−Ft}", evolution_decay),
    ("evolution positivity (N=64)", evolution_positive),
    ("Monte Carlo within 3σ (quick)", mc_quick),
    ("Monte Carlo deterministic", mc_deterministic),
];

const EXTENDED_CHECKS: &[Check] = &[
    ("Monte Carlo within 3σ, 10⁵ samples", mc_full),
    ("reduced I₂ = smeared-delta oracle", oracle_overlap),
];

/// Runs the suite and returns one outcome per check.
pub fn evaluate(cfg: &RunConfig, extended: bool) -> Result<Vec<Outcome>, CliError> {
    let bath = cfg.bath()?;
    cfg.quad.validate()?;
    let ctx = Ctx {
        bath,
        len: bath.hbar() / bath.thermal_momentum(),
        quad: cfg.quad,
    };
    let checks = DEFAULT_CHECKS
        .iter()
        .chain(if extended { EXTENDED_CHECKS } else { &[] });
    Ok(checks
        .map(|(name, f)| {
            let start = Instant::now();
            let (defect, tolerance, error) = match f(&ctx) {
                Ok((d, t)) => (d, t, None),
                Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
            };
            Outcome {
                name,
                defect,
                tolerance,
                passed: error.is_none() && defect <= tolerance,
                seconds: start.elapsed().as_secs_f64(),
                error,
            }
        })
        .collect())
}

pub fn run(cfg: &RunConfig, extended: bool, out: &mut OutputDir) -> CmdResult {
    let outcomes = evaluate(cfg, extended)?;
    let mut table = Table::new(&["check", "defect", "tolerance", "passed"]);
    let mut rows = Vec::new();
    for o in &outcomes {
        table.push(&[
            Cell::Text(o.name),
            Cell::Num(o.defect),
            Cell::Num(o.tolerance),
            Cell::Text(if o.passed { "true" } else { "false" }),
        ]);
        rows.push(vec![
            o.name.to_string(),
            format!("{:.3e}", o.defect),
            format!("{:.1e}", o.tolerance),
            if o.passed {
                "PASS".into()
            } else {
                "FAIL".into()
            },
            format!("{:.2}", o.seconds),
        ]);
    }
    out.table("selfcheck.csv", &table)?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    let mut summary = text_table(
        &["check", "defect", "tolerance", "status", "seconds"],
        &rows,
    );
    summary.push_str(&format!(
        "{} of {} checks passed\n",
        outcomes.len() - failed,
        outcomes.len()
    ));
    let report = Report {
        diagnostics: json!({ "checks": outcomes }),
        warnings: outcomes
            .iter()
            .filter_map(|o| o.error.as_ref().map(|e| format!("{}: {e}", o.name)))
            .collect(),
        summary,
    };
    if failed > 0 {
        return Err(Failed {
            report: Box::new(report),
            error: CliError::SelfcheckFailed {
                failed,
                total: outcomes.len(),
            },
        });
    }
    Ok(report)
}
