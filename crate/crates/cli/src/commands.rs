// SPDX-License-Identifier: Apache-2.0

//! The subcommands other than `selfcheck`.

use decoh_core::evolution::{coherence_length, evolve as evolve_grid, DensityMatrixGrid};
use decoh_core::rate::{per_collision_decoherence, per_collision_decoherence_multipole};
use decoh_core::rate::{rate_general_many, rate_via_replacement_many, RateResult, Route};
use decoh_core::scattering::BORN_VALIDITY_LIMIT;
use decoh_core::thermal::split_bath;
use decoh_core::wavepacket_mc::{mc_rate, McConfig};
use decoh_core::weak_coupling::{gbar_closed, gbar_integral, rate_weak_coupling_many, GbarSpec};
use decoh_core::{AmplitudeModel, BathSpec, EpsilonMode, Vec3};
use num_complex::Complex64;
use serde_json::json;

use crate::config::{ConfigError, RunConfig};
use crate::output::{fmt_f64, rate_table, text_table, Cell, OutputDir, Table};
use crate::{CliError, Report};

/// A failed subcommand together with whatever it had to report.
#[derive(Debug)]
pub struct Failed {
    pub report: Box<Report>,
    pub error: CliError,
}

impl<E: Into<CliError>> From<E> for Failed {
    fn from(e: E) -> Failed {
        Failed {
            report: Box::default(),
            error: e.into(),
        }
    }
}

pub type CmdResult = Result<Report, Failed>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn bath_warnings(bath: &BathSpec, model: &AmplitudeModel) -> Vec<String> {
    let mut w = Vec::new();
    if bath.dilute_warning() {
        w.push(format!(
            "gas is not dilute: n·λ³ = {:.3e}",
            bath.degeneracy()
        ));
    }
    if let AmplitudeModel::BornPotential { potential } = model {
        let s = potential.born_strength(bath.kinematics());
        if s > BORN_VALIDITY_LIMIT {
            w.push(format!("Born coupling {s:.3} exceeds {BORN_VALIDITY_LIMIT}; amplitudes are not trustworthy"));
        }
    }
    w
}

fn separations(cfg: &RunConfig, bath: &BathSpec) -> Result<(Vec<f64>, Vec<Vec3>), CliError> {
    let radii = cfg.grid_radii(bath).map_err(usage)?;
    let axis = cfg.axis()?;
    let rs = radii.iter().map(|&r| axis * r).collect();
    Ok((radii, rs))
}

/// Rate values along `rs` by one quadrature route.
fn route_values(
    cfg: &RunConfig,
    bath: &BathSpec,
    model: &AmplitudeModel,
    rs: &[Vec3],
    route: Route,
    epsilon: EpsilonMode,
) -> Result<Vec<RateResult>, CliError> {
    if route != Route::General && epsilon != EpsilonMode::Corrected {
        return Err(usage(format!(
            "route {} is only defined for epsilon=corrected",
            route.label()
        )));
    }
    Ok(match route {
        Route::General => rate_general_many(bath, model, rs, &cfg.quad, epsilon)?,
        Route::Replacement => rate_via_replacement_many(bath, model, rs, &cfg.quad)?,
        Route::WeakCoupling => {
            let pot = cfg.potential(bath).ok_or_else(|| {
                usage("route weak_coupling needs model.kind=born_gaussian or born_yukawa")
            })?;
            rate_weak_coupling_many(bath, &pot, rs, &cfg.quad)?
        }
        Route::MonteCarlo => return Err(usage("use mc-verify for Monte Carlo estimates")),
    })
}

fn push_rates(
    table: &mut Table,
    radii: &[f64],
    values: &[RateResult],
    route: Route,
    epsilon: EpsilonMode,
) {
    for (r, v) in radii.iter().zip(values) {
        table.push(&[
            Cell::Num(*r),
            Cell::Num(v.value),
            Cell::Num(v.achieved_tol * v.value),
            Cell::Text(route.label()),
            Cell::Text(epsilon.label()),
        ]);
    }
}

fn rate_diagnostics(values: &[RateResult]) -> serde_json::Value {
    json!({
        "max_achieved_tol": values.iter().map(|v| v.achieved_tol).fold(0.0, f64::max),
        "max_levels": values.iter().map(|v| v.levels).max().unwrap_or(0),
        "max_radial_nodes": values.iter().map(|v| v.radial_nodes).max().unwrap_or(0),
        "max_imag_residue": values.iter().map(|v| v.imag_residue).fold(0.0, f64::max),
        "clamped_points": values.iter().filter(|v| v.clamped).count(),
    })
}

fn max_rel_diff(a: &[RateResult], b: &[RateResult]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, _)| x.value > 0.0)
        .map(|(x, y)| (x.value - y.value).abs() / x.value)
        .fold(0.0, f64::max)
}

pub fn rate_curve(cfg: &RunConfig, out: &mut OutputDir) -> CmdResult {
    let bath = cfg.bath()?;
    let model = cfg.amplitude_model(&bath)?;
    let (radii, rs) = separations(cfg, &bath)?;
    let values = route_values(cfg, &bath, &model, &rs, cfg.route, cfg.epsilon)?;
    let mut table = rate_table();
    push_rates(&mut table, &radii, &values, cfg.route, cfg.epsilon);
    let path = out.table("rate_curve.csv", &table)?;
    let mut warnings = bath_warnings(&bath, &model);
    let clamped = values.iter().filter(|v| v.clamped).count();
    if clamped > 0 {
        warnings.push(format!(
            "{clamped} slightly negative values were reset to zero"
        ));
    }
    Ok(Report {
        diagnostics: json!({ "route": cfg.route.label(), "quadrature": rate_diagnostics(&values) }),
        warnings,
        summary: format!(
            "{} {} rate values written to {}\n",
            table.len(),
            cfg.route.label(),
            path.display()
        ),
    })
}

pub fn compare_routes(cfg: &RunConfig, out: &mut OutputDir) -> CmdResult {
    let bath = cfg.bath()?;
    let model = cfg.amplitude_model(&bath)?;
    let (radii, rs) = separations(cfg, &bath)?;
    let corrected = route_values(
        cfg,
        &bath,
        &model,
        &rs,
        Route::General,
        EpsilonMode::Corrected,
    )?;
    let gf = route_values(
        cfg,
        &bath,
        &model,
        &rs,
        Route::General,
        EpsilonMode::GallisFleming,
    )?;
    let replacement = route_values(
        cfg,
        &bath,
        &model,
        &rs,
        Route::Replacement,
        EpsilonMode::Corrected,
    )?;
    let weak = match model {
        AmplitudeModel::BornPotential { .. } => Some(route_values(
            cfg,
            &bath,
            &model,
            &rs,
            Route::WeakCoupling,
            EpsilonMode::Corrected,
        )?),
        _ => None,
    };

    let mut table = rate_table();
    push_rates(
        &mut table,
        &radii,
        &corrected,
        Route::General,
        EpsilonMode::Corrected,
    );
    push_rates(
        &mut table,
        &radii,
        &gf,
        Route::General,
        EpsilonMode::GallisFleming,
    );
    push_rates(
        &mut table,
        &radii,
        &replacement,
        Route::Replacement,
        EpsilonMode::Corrected,
    );
    if let Some(w) = &weak {
        push_rates(
            &mut table,
            &radii,
            w,
            Route::WeakCoupling,
            EpsilonMode::Corrected,
        );
    }
    let path = out.table("compare_routes.csv", &table)?;

    let two_pi = EpsilonMode::GallisFleming.multiplier();
    let ratios: Vec<f64> = corrected
        .iter()
        .zip(&gf)
        .filter(|(c, _)| c.value > 0.0)
        .map(|(c, g)| g.value / c.value)
        .collect();
    let ratio_dev = ratios
        .iter()
        .map(|r| (r - two_pi).abs() / two_pi)
        .fold(0.0, f64::max);
    let vs_replacement = max_rel_diff(&corrected, &replacement);
    let vs_weak = weak.as_ref().map(|w| max_rel_diff(&corrected, w));

    let mut rows = vec![
        vec![
            "ratio gallis-fleming/corrected".into(),
            format!("{:.15}", ratios.first().copied().unwrap_or(f64::NAN)),
        ],
        vec!["max |ratio - 2π|/2π".into(), format!("{ratio_dev:.3e}")],
        vec![
            "max rel diff general vs replacement".into(),
            format!("{vs_replacement:.3e}"),
        ],
    ];
    if let Some(d) = vs_weak {
        rows.push(vec![
            "max rel diff general vs weak_coupling".into(),
            format!("{d:.3e}"),
        ]);
    }
    let mut summary = text_table(&["quantity", "value"], &rows);
    summary.push_str(&format!(
        "{} rows written to {}\n",
        table.len(),
        path.display()
    ));
    Ok(Report {
        diagnostics: json!({
            "ratio_points": ratios.len(),
            "max_ratio_deviation": ratio_dev,
            "max_rel_diff_replacement": vs_replacement,
            "max_rel_diff_weak_coupling": vs_weak,
            "general": rate_diagnostics(&corrected),
            "replacement": rate_diagnostics(&replacement),
            "weak_coupling": weak.as_ref().map(|w| rate_diagnostics(w)),
        }),
        warnings: bath_warnings(&bath, &model),
        summary,
    })
}

pub fn eta(cfg: &RunConfig, out: &mut OutputDir) -> CmdResult {
    let bath = cfg.bath()?;
    let model = cfg.amplitude_model(&bath)?;
    let (radii, rs) = separations(cfg, &bath)?;
    let axis = cfg.axis()?;
    let theta = cfg.eta_angle_deg.to_radians();
    let dir = axis * theta.cos() + axis.orthonormal_frame().0 * theta.sin();
    let p = dir * (cfg.eta_momentum * bath.thermal_momentum());
    let kin = bath.kinematics();
    let mut table = Table::new(&[
        "R",
        "eta_re",
        "eta_im",
        "eta_multipole_re",
        "eta_multipole_im",
        "abs_diff",
    ]);
    let mut worst: f64 = 0.0;
    for (r, rv) in radii.iter().zip(&rs) {
        let a: Complex64 = per_collision_decoherence(&model, p, *rv, kin)?;
        let b: Complex64 = per_collision_decoherence_multipole(&model, p, *rv, kin)?;
        worst = worst.max((a - b).norm());
        table.push(&[
            Cell::Num(*r),
            Cell::Num(a.re),
            Cell::Num(a.im),
            Cell::Num(b.re),
            Cell::Num(b.im),
            Cell::Num((a - b).norm()),
        ]);
    }
    let path = out.table("eta.csv", &table)?;
    Ok(Report {
        diagnostics: json!({ "momentum": [p.x, p.y, p.z], "max_abs_diff": worst }),
        warnings: bath_warnings(&bath, &model),
        summary: format!(
            "{} η values written to {} (evaluations differ by at most {worst:.3e})\n",
            table.len(),
            path.display()
        ),
    })
}

pub fn gbar(cfg: &RunConfig, out: &mut OutputDir) -> CmdResult {
    let bath = cfg.bath()?;
    let potential = cfg
        .potential(&bath)
        .ok_or_else(|| usage("gbar needs model.kind=born_gaussian or born_yukawa"))?;
    let (nq, nw) = (cfg.gbar_q_count, cfg.gbar_omega_count);
    if nq < 2 || nw < 2 {
        return Err(usage("gbar.q_count and gbar.omega_count must be at least 2").into());
    }
    let qth = bath.thermal_momentum();
    let w_scale = qth * qth / (2.0 * bath.mass() * bath.hbar());
    let spec = GbarSpec { bath, potential };
    let mut table = Table::new(&["q", "omega", "closed", "integral", "rel_diff"]);
    let mut worst: f64 = 0.0;
    for i in 0..nq {
        let q = (0.2 + 3.8 * i as f64 / (nq - 1) as f64) * qth;
        for j in 0..nw {
            let w = 3.0 * j as f64 / (nw - 1) as f64 * w_scale;
            let c = gbar_closed(&spec, q, w)?;
            let g = gbar_integral(&spec, q, w)?;
            let rel = if c != 0.0 {
                (c - g).abs() / c.abs()
            } else {
                (c - g).abs()
            };
            worst = worst.max(rel);
            table.push(&[
                Cell::Num(q),
                Cell::Num(w),
                Cell::Num(c),
                Cell::Num(g),
                Cell::Num(rel),
            ]);
        }
    }
    let path = out.table("gbar.csv", &table)?;
    Ok(Report {
        diagnostics: json!({ "max_rel_diff": worst }),
        warnings: Vec::new(),
        summary: format!(
            "{} Ḡ values written to {} (max relative difference {worst:.3e})\n",
            table.len(),
            path.display()
        ),
    })
}

pub fn mc_verify(cfg: &RunConfig, out: &mut OutputDir) -> CmdResult {
    if cfg.epsilon != EpsilonMode::Corrected {
        return Err(usage("mc-verify compares against epsilon=corrected only").into());
    }
    if cfg.mc_separations.is_empty() {
        return Err(ConfigError {
            origin: crate::config::Origin::Flag("mc.separations".into()),
            message: "needs at least one separation".into(),
        }
        .into());
    }
    let bath = cfg.bath()?;
    let model = cfg.amplitude_model(&bath)?;
    let split = split_bath(&bath, cfg.mc_bar_fraction)?;
    let axis = cfg.axis()?;
    let scale = cfg.length_scale(&bath);
    let radii: Vec<f64> = cfg.mc_separations.iter().map(|d| d * scale).collect();
    let rs: Vec<Vec3> = radii.iter().map(|&d| axis * d).collect();
    let exact = rate_general_many(&bath, &model, &rs, &cfg.quad, EpsilonMode::Corrected)?;

    let mut table = rate_table();
    let mut z_table = Table::new(&["R", "mc", "general", "z", "rel_stderr"]);
    let mut warnings = bath_warnings(&bath, &model);
    let mut diag = Vec::new();
    let mut rows = Vec::new();
    for (i, (&d, &r1)) in radii.iter().zip(&rs).enumerate() {
        // Each separation draws from its own seed so adding one leaves the others unchanged.
        let mut mc = McConfig::auto(
            &split,
            d,
            cfg.seed.wrapping_add(i as u64),
            cfg.mc_samples,
            cfg.mc_bar_fraction,
        );
        if let Some(dt) = cfg.mc_delta_t {
            mc.delta_t = dt;
        }
        if let Some(w) = cfg.mc_window {
            mc.transverse_window = w * scale;
        }
        let est = mc_rate(&bath, &split, &model, r1, Vec3::ZERO, &mc)?;
        let f = exact[i].value;
        let z = if est.stderr > 0.0 {
            (est.value - f) / est.stderr
        } else {
            0.0
        };
        let rel = if est.value != 0.0 {
            est.stderr / est.value.abs()
        } else {
            f64::INFINITY
        };
        table.push(&[
            Cell::Num(d),
            Cell::Num(est.value),
            Cell::Num(est.stderr),
            Cell::Text(Route::MonteCarlo.label()),
            Cell::Text(EpsilonMode::Corrected.label()),
        ]);
        table.push(&[
            Cell::Num(d),
            Cell::Num(f),
            Cell::Num(exact[i].achieved_tol * f),
            Cell::Text(Route::General.label()),
            Cell::Text(EpsilonMode::Corrected.label()),
        ]);
        z_table.push(&[
            Cell::Num(d),
            Cell::Num(est.value),
            Cell::Num(f),
            Cell::Num(z),
            Cell::Num(rel),
        ]);
        rows.push(vec![
            fmt_f64(d),
            format!("{:.6e}", est.value),
            format!("{f:.6e}"),
            format!("{z:+.2}"),
            format!("{rel:.2e}"),
        ]);
        warnings.extend(est.warnings.iter().map(|w| format!("R={d:.4e}: {w}")));
        diag.push(json!({
            "R": d,
            "seed": mc.seed,
            "samples": mc.samples,
            "samples_used": est.samples_used,
            "delta_t": mc.delta_t,
            "transverse_window": mc.transverse_window,
            "excluded_fraction": est.excluded_fraction,
            "forward_imag": est.forward_imag,
            "forward_imag_stderr": est.forward_imag_stderr,
            "max_neglect_ratio": est.max_neglect_ratio,
            "z": z,
        }));
    }
    let path = out.table("mc_verify.csv", &table)?;
    out.table("mc_verify_z.csv", &z_table)?;
    let mut summary = text_table(&["R", "mc", "general", "z", "stderr/F"], &rows);
    summary.push_str(&format!("rows written to {}\n", path.display()));
    Ok(Report {
        diagnostics: json!({ "separations": diag, "general": rate_diagnostics(&exact) }),
        warnings,
        summary,
    })
}

/// Two Gaussians at ±L/4 of width L/16 in equal superposition.
fn cat_state(xs: &[f64], length: f64) -> Vec<Complex64> {
    let s = length / 16.0;
    xs.iter()
        .map(|&x| {
            let g = |c: f64| (-(x - c) * (x - c) / (2.0 * s * s)).exp();
            Complex64::new(g(0.25 * length) + g(-0.25 * length), 0.0)
        })
        .collect()
}

pub fn evolve(cfg: &RunConfig, out: &mut OutputDir) -> CmdResult {
    let n = cfg.evolve_points;
    if n < 2 {
        return Err(usage("evolve.points must be at least 2").into());
    }
    if cfg.evolve_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(usage("evolve.times must be finite and non-negative").into());
    }
    let bath = cfg.bath()?;
    let model = cfg.amplitude_model(&bath)?;
    let axis = cfg.axis()?;
    let length = cfg.evolve_length * cfg.length_scale(&bath);
    if !length.is_finite() || length <= 0.0 {
        return Err(usage("evolve.length must be positive").into());
    }
    let xs: Vec<f64> = (0..n)
        .map(|i| -0.5 * length + length * i as f64 / (n - 1) as f64)
        .collect();
    let dx = xs[1] - xs[0];
    let rs: Vec<Vec3> = (0..n).map(|k| axis * (k as f64 * dx)).collect();
    let table = route_values(cfg, &bath, &model, &rs, cfg.route, cfg.epsilon)?;
    let rates: Vec<f64> = table.iter().map(|r| r.value).collect();
    let lookup = |r: f64| -> decoh_core::Result<f64> {
        let k = (r / dx).round() as usize;
        rates.get(k).copied().ok_or_else(|| {
            decoh_core::Error::Contract(format!("separation {r} outside the rate table"))
        })
    };
    let rho0 = DensityMatrixGrid::pure(axis, xs.clone(), &cat_state(&xs, length))?;

    let mut summary_table = Table::new(&[
        "t",
        "trace",
        "min_eigenvalue",
        "hermiticity_defect",
        "coherence_length",
        "reached",
    ]);
    let mut rows = Vec::new();
    for (idx, &t) in cfg.evolve_times.iter().enumerate() {
        let rho = evolve_grid(&rho0, lookup, t)?;
        let mut snap = Table::new(&["i", "j", "x_i", "x_j", "re", "im"]);
        for i in 0..n {
            for j in 0..n {
                let z = rho.values()[(i, j)];
                snap.push(&[
                    Cell::Int(i),
                    Cell::Int(j),
                    Cell::Num(xs[i]),
                    Cell::Num(xs[j]),
                    Cell::Num(z.re),
                    Cell::Num(z.im),
                ]);
            }
        }
        out.table(&format!("evolve_{idx:03}.csv"), &snap)?;
        let c = coherence_length(&rho, cfg.evolve_threshold)?;
        let (tr, ev, h) = (rho.trace(), rho.min_eigenvalue(), rho.hermiticity_defect());
        summary_table.push(&[
            Cell::Num(t),
            Cell::Num(tr),
            Cell::Num(ev),
            Cell::Num(h),
            Cell::Num(c.length),
            Cell::Text(if c.reached { "true" } else { "false" }),
        ]);
        rows.push(vec![
            format!("{t:.4e}"),
            format!("{tr:.12}"),
            format!("{ev:+.3e}"),
            format!("{:.4e}", c.length),
        ]);
    }
    let path = out.table("evolve_summary.csv", &summary_table)?;
    let mut summary = text_table(&["t", "trace", "min eigenvalue", "coherence length"], &rows);
    summary.push_str(&format!("snapshots and {} written\n", path.display()));
    Ok(Report {
        diagnostics: json!({ "spacing": dx, "rate_table": rate_diagnostics(&table) }),
        warnings: bath_warnings(&bath, &model),
        summary,
    })
}
