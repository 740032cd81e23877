//! Subcommand implementations: each orchestrates core modules and emits
//! schema-stamped CSV reports into the output directory.

use std::path::{Path, PathBuf};

use ahhm_core::approx::build_approximate_solution;
use ahhm_core::barrier::{solve_barrier, EpsilonPolicy};
use ahhm_core::comparison::{
    comparison_bounds, d_epsilon, hessian_lower_bound_constants, hessian_trace_h2, kappa_bound,
    laplacian_bound_f, solve_comparison_ode, TargetDistance,
};
use ahhm_core::io::{read_checkpoint, write_checkpoint, write_map_field, CsvWriter};
use ahhm_core::solver::{flow_steps, run_exhaustion, FlowParams, FlowState};
use ahhm_core::tension::{neumann_extract, rescaled_tension_report};
use ahhm_core::{boundary_energy_density, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;

fn ensure_out(cfg: &ExperimentConfig, out_override: Option<&Path>) -> Result<PathBuf> {
    let dir = out_override
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| cfg.run.out_dir.clone());
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Kernel moments and bound constants over the radius ladder.
pub fn cmd_kernel_check(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    let dir = ensure_out(cfg, out)?;
    let ctx = cfg.kernel_context()?;
    let radii = &cfg.run.radii;
    let min_r = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    ctx.check_resolution(min_r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut csv = CsvWriter::create(
        &dir.join("kernel_check.csv"),
        "kernel-check/1",
        cfg.hash,
        &["r", "i0", "i1", "i2", "c_grad", "c_lap"],
    )?;
    let m = ctx.spec.dim_boundary;
    for &r in radii {
        let moments = ctx.kernel_moments(&vec![0.0; m], r)?;
        let samples: Vec<(Vec<f64>, f64, Vec<f64>)> = (0..cfg.run.samples)
            .map(|_| {
                let rand_x = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                    (0..m).map(|a| rng.gen_range(0.0..ctx.spec.lattice[a])).collect()
                };
                let x = rand_x(&mut rng);
                let y = rand_x(&mut rng);
                (x, r, y)
            })
            .collect();
        let (c_grad, c_lap) = ctx.kernel_bounds_check(&samples)?;
        csv.row(&[r, moments.i0, moments.i1, moments.i2, c_grad, c_lap])?;
    }
    csv.finish()
}

/// Builds the approximate solution, reports its rescaled tension per level and
/// its Neumann data, and persists the map field.
pub fn cmd_build_approx(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    let dir = ensure_out(cfg, out)?;
    let ctx = cfg.kernel_context()?;
    let grid = cfg.build_grid()?;
    let v = build_approximate_solution(&cfg.map, &ctx, &cfg.target, grid.clone())?;
    write_map_field(&dir.join("approx.ahhm"), &v)?;

    let rep = rescaled_tension_report(&v, &cfg.source, &cfg.target)?;
    let mut csv = CsvWriter::create(
        &dir.join("tension_report.csv"),
        "tension-report/1",
        cfg.hash,
        &[
            "r_level",
            "sup_tension_h",
            "sup_rescaled_tan",
            "sup_rescaled_nor",
            "sup_energy_minus_m1",
        ],
    )?;
    for i in 0..rep.levels.len() {
        csv.row(&[
            rep.levels[i],
            rep.sup_tension_h[i],
            rep.sup_rescaled_tan[i],
            rep.sup_rescaled_nor[i],
            rep.sup_energy_minus[i],
        ])?;
    }
    csv.finish()?;

    let nd = neumann_extract(&v)?;
    let mf = cfg.source.dim_boundary as f64;
    let mut header: Vec<String> = (0..cfg.source.dim_boundary).map(|a| format!("x{a}")).collect();
    for c in 0..cfg.map.dim_target() {
        header.push(format!("du{c}_dr"));
    }
    header.push("drho_dr".into());
    header.push("sqrt_ehat_over_m".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = CsvWriter::create(&dir.join("neumann.csv"), "neumann/1", cfg.hash, &header_refs)?;
    for lat in 0..grid.lat_len() {
        let x = grid.lat_coords(lat);
        let mut row = x.clone();
        for c in 0..cfg.map.dim_target() {
            row.push(nd.tangential_slope[c][lat]);
        }
        row.push(nd.radial_slope[lat]);
        row.push((boundary_energy_density(&cfg.map, &cfg.source, &cfg.target, &x)? / mf).sqrt());
        csv.row(&row)?;
    }
    csv.finish()
}

fn flow_history_csv(dir: &Path, cfg: &ExperimentConfig, state: &FlowState) -> Result<()> {
    let mut csv = CsvWriter::create(
        &dir.join("flow_history.csv"),
        "flow-history/1",
        cfg.hash,
        &["step", "tension_sup", "energy_sup"],
    )?;
    for &(step, t, e) in &state.history {
        csv.row(&[step as f64, t, e])?;
    }
    csv.finish()
}

/// Flows the approximate solution to a harmonic map on the full slab (or from
/// a checkpoint), with optional periodic checkpointing.
pub fn cmd_solve(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    let dir = ensure_out(cfg, out)?;
    let grid = cfg.build_grid()?;
    let delta = grid.r_min();
    let mut params = FlowParams::new(delta, cfg.solver.tol);
    params.max_steps = cfg.solver.max_steps;
    params.sigma = cfg.solver.sigma;

    let (seed_map, mut resume_at) = if let Some(ck_path) = &cfg.run.resume {
        let ck = read_checkpoint(ck_path)?;
        (ck.u, Some((ck.step, ck.dt)))
    } else {
        let ctx = cfg.kernel_context()?;
        let v = build_approximate_solution(&cfg.map, &ctx, &cfg.target, grid.clone())?;
        write_map_field(&dir.join("approx.ahhm"), &v)?;
        (v, None)
    };

    let chunk = if cfg.run.checkpoint_every > 0 {
        cfg.run.checkpoint_every
    } else {
        cfg.solver.max_steps
    };
    let mut state;
    let mut current = seed_map;
    let mut spent = 0u64;
    loop {
        let mut p = params.clone();
        p.max_steps = chunk.min(cfg.solver.max_steps - spent);
        state = flow_steps(&current, &cfg.source, &cfg.target, &p, resume_at)?;
        spent += p.max_steps;
        if cfg.run.checkpoint_every > 0 {
            write_checkpoint(&dir.join("checkpoint.ahck"), &state)?;
        }
        if state.converged || spent >= cfg.solver.max_steps {
            break;
        }
        resume_at = Some((state.step, state.dt));
        current = state.u.clone();
    }
    if !state.converged {
        return Err(Error::FlowDivergence {
            max_steps: cfg.solver.max_steps,
            tension_sup: state.tension_sup,
            history: state.history.clone(),
        });
    }
    if state.clamp_events > 0 {
        return Err(Error::SolverDivergence(format!(
            "{} radial positivity clamps during the flow; run rejected",
            state.clamp_events
        )));
    }
    write_map_field(&dir.join("solution.ahhm"), &state.u)?;
    flow_history_csv(&dir, cfg, &state)?;

    let rep = rescaled_tension_report(&state.u, &cfg.source, &cfg.target)?;
    let mut csv = CsvWriter::create(
        &dir.join("solution_tension.csv"),
        "tension-report/1",
        cfg.hash,
        &[
            "r_level",
            "sup_tension_h",
            "sup_rescaled_tan",
            "sup_rescaled_nor",
            "sup_energy_minus_m1",
        ],
    )?;
    for i in 0..rep.levels.len() {
        csv.row(&[
            rep.levels[i],
            rep.sup_tension_h[i],
            rep.sup_rescaled_tan[i],
            rep.sup_rescaled_nor[i],
            rep.sup_energy_minus[i],
        ])?;
    }
    csv.finish()
}

/// Runs the truncated-domain exhaustion study.
pub fn cmd_exhaust(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    let dir = ensure_out(cfg, out)?;
    if cfg.run.delta_list.len() < 2 {
        return Err(Error::Config(
            "[run] delta_list needs at least two radii for the exhaustion study".into(),
        ));
    }
    let ctx = cfg.kernel_context()?;
    let grid = cfg.build_grid()?;
    let v = build_approximate_solution(&cfg.map, &ctx, &cfg.target, grid.clone())?;
    let report = run_exhaustion(&v, &cfg.source, &cfg.target, &cfg.run.delta_list, cfg.solver.tol)?;

    let mut csv = CsvWriter::create(
        &dir.join("exhaust.csv"),
        "exhaust/1",
        cfg.hash,
        &[
            "delta",
            "iterations",
            "tension_sup",
            "sup_d",
            "sup_d_tilde",
            "bound",
            "last_two_rel_change",
            "stable",
        ],
    )?;
    for rec in &report.records {
        csv.row(&[
            rec.delta,
            rec.iterations as f64,
            rec.tension_sup,
            rec.sup_d,
            rec.sup_d_tilde,
            report.bound,
            report.last_two_rel_change,
            if report.stable { 1.0 } else { 0.0 },
        ])?;
    }
    csv.finish()?;

    let mut csv = CsvWriter::create(
        &dir.join("exhaust_profile.csv"),
        "exhaust-profile/1",
        cfg.hash,
        &["delta", "r_level", "sup_d_tilde", "sup_energy_minus_m1"],
    )?;
    for rec in &report.records {
        for (i, &(r, d)) in rec.distance_profile.iter().enumerate() {
            let e = rec
                .energy_profile
                .get(i.saturating_sub(1))
                .map(|&(_, e)| e)
                .unwrap_or(f64::NAN);
            csv.row(&[rec.delta, r, d, e])?;
        }
    }
    csv.finish()
}

/// Solves and certifies the superharmonic barrier; with `wall_check` also
/// reports the sensitivity to doubling the outer wall.
pub fn cmd_barrier(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    let dir = ensure_out(cfg, out)?;
    let mut csv = CsvWriter::create(
        &dir.join("barrier.csv"),
        "barrier-certificate/1",
        cfg.hash,
        &[
            "node_count",
            "epsilon",
            "sup_v_corr",
            "max_interior_laplacian",
            "residual",
            "outer_wall_doubled",
        ],
    )?;
    let grid = cfg.build_grid()?;
    let bf = solve_barrier(&cfg.source, grid.clone(), EpsilonPolicy::SafetyRule)?;
    csv.row(&[
        grid.node_count() as f64,
        bf.epsilon,
        bf.v_corr.sup_abs(),
        bf.max_interior_laplacian,
        bf.residual,
        0.0,
    ])?;
    if cfg.run.wall_check && 2.0 * cfg.grid.r_max <= cfg.source.r_star {
        let levels = grid.num_levels() - 1;
        let wide = std::sync::Arc::new(ahhm_core::SlabGrid::from_levels(
            cfg.source.lattice.clone(),
            cfg.grid.n.clone(),
            cfg.grid.r_min,
            2.0 * cfg.grid.r_max,
            levels + levels / 4,
        )?);
        let bf2 = solve_barrier(&cfg.source, wide.clone(), EpsilonPolicy::SafetyRule)?;
        csv.row(&[
            wide.node_count() as f64,
            bf2.epsilon,
            bf2.v_corr.sup_abs(),
            bf2.max_interior_laplacian,
            bf2.residual,
            1.0,
        ])?;
    }
    csv.finish()
}

/// Distance and comparison-bound diagnostics.
pub fn cmd_compare(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    let dir = ensure_out(cfg, out)?;
    let mut csv = CsvWriter::create(
        &dir.join("compare.csv"),
        "compare/1",
        cfg.hash,
        &["check", "value", "reference", "pass"],
    )?;
    let mut put = |name: &str, value: f64, reference: f64, pass: bool| -> Result<()> {
        csv.row_strings(&[
            name.to_string(),
            format!("{value}"),
            format!("{reference}"),
            format!("{}", pass as u8),
        ])
    };

    // constant-curvature closed forms
    let ode = solve_comparison_ode(|_| -1.0, 4.0, 8192)?;
    let gap_s = (ode.s_at(4.0) - 4.0f64.sinh()).abs();
    put("ode_sinh_gap", gap_s, 1e-8, gap_s <= 1e-8)?;
    let gap_r = ode.riccati_gap();
    put("riccati_gap", gap_r, 1e-6, gap_r <= 1e-6)?;

    // piecewise curvature bound of the Hessian-estimate constants
    let l = 5.0;
    let ode_pw = solve_comparison_ode(move |t| if t < l - 2.0 { 0.0 } else { -0.5 }, l, 20_000)?;
    put("piecewise_q_at_l", ode_pw.q_at(l), 0.5, ode_pw.q_at(l) >= 0.5)?;
    put("piecewise_s_at_l", ode_pw.s_at(l), l, ode_pw.s_at(l) >= l)?;

    // Jacobi comparison inequalities on sampled constant-curvature fields
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut violations = 0usize;
    let trials = 1000usize;
    for _ in 0..trials {
        let c: f64 = rng.gen_range(0.3..1.5);
        let mu = -c * c * rng.gen_range(0.2..1.0);
        let length: f64 = rng.gen_range(1.0..4.0);
        let ode = solve_comparison_ode(|_| mu, length, 2048)?;
        let ts: Vec<f64> = (1..=10).map(|i| length * i as f64 / 10.0).collect();
        let amp: f64 = rng.gen_range(0.3..2.0);
        let ok = comparison_bounds(
            &ode,
            |t| amp * (c * t).sinh() / c,
            amp,
            |t| amp * amp * (c * t).sinh() * (c * t).cosh() / c,
            &ts,
        );
        if ok.is_err() {
            violations += 1;
        }
    }
    put("jacobi_bound_violations", violations as f64, 0.0, violations == 0)?;

    // distance order d <= d-tilde on random pairs
    let td = TargetDistance::for_spec(&cfg.target);
    let mut order_violations = 0usize;
    let n = cfg.target.dim_boundary;
    for _ in 0..cfg.run.samples.min(10_000) {
        let y1: Vec<f64> = (0..n).map(|a| rng.gen_range(-2.0 * cfg.target.lattice[a]..2.0 * cfg.target.lattice[a])).collect();
        let y2: Vec<f64> = (0..n).map(|a| rng.gen_range(-2.0 * cfg.target.lattice[a]..2.0 * cfg.target.lattice[a])).collect();
        let r1 = rng.gen_range(0.05..cfg.target.r_star.min(0.5));
        let r2 = rng.gen_range(0.05..cfg.target.r_star.min(0.5));
        let dt = td.distance((&y1, r1), (&y2, r2), true)?;
        let d = td.distance((&y1, r1), (&y2, r2), false)?;
        if d > dt + 1e-12 {
            order_violations += 1;
        }
    }
    put("distance_order_violations", order_violations as f64, 0.0, order_violations == 0)?;

    // Hessian trace bound on far-apart frame-aligned configurations
    let (c_const, _l_of) = hessian_lower_bound_constants();
    let mut hess_violations = 0usize;
    let mut checked = 0usize;
    while checked < 1000 {
        let xp: f64 = rng.gen_range(0.0..cfg.target.lattice[0]);
        let rp: f64 = rng.gen_range(0.05..0.4);
        let sep: f64 = rng.gen_range(4.2..6.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let rq = rp * sep.exp();
        let xq = xp + rng.gen_range(-0.5..0.5) * rp.min(rq);
        let frame = |rho: f64, rng: &mut ChaCha8Rng| -> Vec<(f64, f64)> {
            let scale: f64 = rng.gen_range(0.8..1.25);
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (ca, sa) = (ang.cos(), ang.sin());
            (0..2)
                .map(|i| {
                    let e = if i == 0 { (ca, sa) } else { (-sa, ca) };
                    let n0 = 1.0 + rng.gen_range(-0.1..0.1);
                    let n1: f64 = rng.gen_range(-0.1..0.1);
                    (
                        rho * scale * (e.0 * n0 + e.1 * n1),
                        rho * scale * (e.1 * n0 - e.0 * n1),
                    )
                })
                .collect()
        };
        let du = frame(rp, &mut rng);
        let dv = frame(rq, &mut rng);
        let tr = hessian_trace_h2((xp, rp), (xq, rq), &du, &dv)?;
        let e_v: f64 = dv.iter().map(|d| (d.0 * d.0 + d.1 * d.1) / (rq * rq)).sum();
        if tr < c_const * e_v {
            hess_violations += 1;
        }
        checked += 1;
    }
    put("hessian_trace_violations", hess_violations as f64, 0.0, hess_violations == 0)?;

    // scalar bound functions
    let f_inf = laplacian_bound_f(40.0);
    put("f_limit", f_inf, 0.5, f_inf > 0.4999 && f_inf < 0.5)?;
    let de = d_epsilon(1e-3, cfg.source.dim_boundary);
    let de_ref = 4.0 * (4.0 * 1e-3 / cfg.source.dim_boundary as f64).atanh();
    put("d_epsilon_small", de, de_ref, (de - de_ref).abs() <= 1e-9)?;
    put(
        "d_epsilon_sentinel",
        d_epsilon(0.25 * cfg.source.dim_boundary as f64, cfg.source.dim_boundary),
        f64::INFINITY,
        d_epsilon(0.25 * cfg.source.dim_boundary as f64, cfg.source.dim_boundary).is_infinite(),
    )?;
    let kb = kappa_bound(1.0, 1.0);
    put("kappa_bound_1_1", kb, 0.4621, (kb - 0.4621).abs() < 1e-4)?;
    csv.finish()
}
