//! Harmonic map Dirichlet problems on truncated slabs by damped explicit
//! relaxation, with the exhaustion driver and a numerical uniqueness probe.

use crate::approx::MapField;
use crate::comparison::{map_distance_report, TargetDistance};
use crate::error::{Error, Result};
use crate::geometry::MetricSpec;
use crate::operator::SourceOperator;
use crate::tension::{flow_tension, TargetMetric};

const HISTORY_CAP: usize = 4096;

#[derive(Debug, Clone)]
pub struct FlowParams {
    /// Inner truncation radius; the wall sits at the deepest ladder level
    /// with `r >= delta`.
    pub delta: f64,
    pub tol: f64,
    pub max_steps: u64,
    /// Safety factor in the stability-limited step size.
    pub sigma: f64,
}

impl FlowParams {
    pub fn new(delta: f64, tol: f64) -> Self {
        FlowParams {
            delta,
            tol,
            max_steps: 2_000_000,
            sigma: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub u: MapField,
    pub step: u64,
    pub dt: f64,
    pub tension_sup: f64,
    pub energy_sup: f64,
    /// Ring of (step, tension_sup, energy_sup), capped at the most recent
    /// entries.
    pub history: Vec<(u64, f64, f64)>,
    pub converged: bool,
    /// Positivity clamps of the radial update; must be zero in accepted runs.
    pub clamp_events: u64,
    /// Dirichlet wall level indices (outer, inner).
    pub walls: (usize, usize),
    /// Step rejections from the monotone-residual damping.
    pub rejections: u64,
}

/// Deepest ladder level whose radius is still `>= delta`.
fn wall_level(u: &MapField, delta: f64) -> Result<usize> {
    let levels = u.grid.levels();
    if delta > levels[0] * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "truncation radius {delta} exceeds the outer wall {}",
            levels[0]
        )));
    }
    let mut k = 0;
    for (i, &r) in levels.iter().enumerate() {
        if r >= delta - 1e-12 {
            k = i;
        }
    }
    if k < 2 {
        return Err(Error::Config(format!(
            "truncation radius {delta} leaves no interior levels"
        )));
    }
    Ok(k)
}

/// Stability-limited step size over the active window.
fn stable_dt(op: &SourceOperator, level_lo: usize, level_hi: usize, sigma: f64) -> f64 {
    let grid = &op.grid;
    let m = grid.dim_boundary();
    let mut worst: f64 = f64::INFINITY;
    for level in level_lo..=level_hi {
        let st = op.radial_stencil(level);
        // center magnitude of the second-derivative stencil
        let mut w2c = 0.0;
        let mut w1c = 0.0;
        for (j, &lev) in st.levels.iter().enumerate() {
            if lev == level {
                w2c = st.d2[j].abs();
                w1c = st.d1[j].abs();
            }
        }
        for lat in 0..grid.lat_len() {
            let node = grid.node_index(level, lat);
            let gd = op.g_diag(node);
            let cd = op.contraction(node);
            let mut denom = gd[m] * w2c + cd[m].abs() * w1c;
            for a in 0..m {
                denom += gd[a] * 2.0 * op.inv_h2(a) + cd[a].abs() * op.inv_2h(a);
            }
            worst = worst.min(1.0 / denom);
        }
    }
    sigma * worst
}

/// Runs the damped flow `u <- u + dt tau(u)` (multiplicative in the radial
/// component) until `sup |tau|_h <= tol`, the step budget runs out, or the
/// step size collapses. Does not error on non-convergence; see
/// [`flow_to_harmonic`] for the erroring wrapper.
pub fn flow_steps(
    v: &MapField,
    source: &MetricSpec,
    target: &MetricSpec,
    params: &FlowParams,
    resume: Option<(u64, f64)>,
) -> Result<FlowState> {
    let grid = v.grid.clone();
    let op = SourceOperator::new(source, grid.clone())?;
    let tm = TargetMetric::new(target)?;
    let k_inner = wall_level(v, params.delta)?;
    let (lo, hi) = (1usize, k_inner - 1);
    let n = v.n_target();
    let ll = grid.lat_len();

    let mut u = v.clone();
    let mut ft = flow_tension(&u, &op, &tm, lo, hi)?;
    let dt0 = stable_dt(&op, lo, hi, params.sigma);
    let (start_step, mut dt) = resume.unwrap_or((0, dt0));
    let mut state = FlowState {
        u: v.clone(),
        step: start_step,
        dt,
        tension_sup: ft.tension_sup,
        energy_sup: ft.energy_sup,
        history: vec![(start_step, ft.tension_sup, ft.energy_sup)],
        converged: ft.tension_sup <= params.tol,
        clamp_events: 0,
        walls: (0, k_inner),
        rejections: 0,
    };
    if state.converged {
        return Ok(state);
    }

    let mut candidate = u.clone();
    while state.step < start_step + params.max_steps {
        // apply one explicit step into the candidate buffers
        let mut clamps = 0u64;
        for (row, level) in (lo..=hi).enumerate() {
            for lat in 0..ll {
                let node = grid.node_index(level, lat);
                let tau = &ft.tau[row * ll + lat];
                for c in 0..n {
                    candidate.tangential[c].data[node] =
                        u.tangential[c].data[node] + dt * tau[c];
                }
                let rho = u.rho.data[node];
                let mut arg = dt * tau[n] / rho;
                if !(-0.5..=0.5).contains(&arg) {
                    arg = arg.clamp(-0.5, 0.5);
                    clamps += 1;
                }
                candidate.rho.data[node] = rho * arg.exp();
            }
        }
        let ft_cand = flow_tension(&candidate, &op, &tm, lo, hi)?;
        if ft_cand.tension_sup <= ft.tension_sup * (1.0 + 1e-12) {
            std::mem::swap(&mut u, &mut candidate);
            ft = ft_cand;
            state.step += 1;
            state.clamp_events += clamps;
            state.tension_sup = ft.tension_sup;
            state.energy_sup = ft.energy_sup;
            if state.history.len() == HISTORY_CAP {
                state.history.remove(0);
            }
            state
                .history
                .push((state.step, ft.tension_sup, ft.energy_sup));
            if ft.tension_sup <= params.tol {
                state.converged = true;
                break;
            }
        } else {
            dt *= 0.5;
            state.rejections += 1;
            if dt < dt0 * 1e-12 {
                break; // step size collapsed; report unconverged
            }
        }
    }
    state.dt = dt;
    state.u = u;
    Ok(state)
}

/// Flows an approximate solution to a harmonic map on the truncated slab
/// `B_delta`; errors when the tolerance is not reached.
pub fn flow_to_harmonic(
    v: &MapField,
    source: &MetricSpec,
    target: &MetricSpec,
    delta: f64,
    tol: f64,
) -> Result<FlowState> {
    let params = FlowParams::new(delta, tol);
    flow_with_params(v, source, target, &params)
}

pub fn flow_with_params(
    v: &MapField,
    source: &MetricSpec,
    target: &MetricSpec,
    params: &FlowParams,
) -> Result<FlowState> {
    let state = flow_steps(v, source, target, params, None)?;
    if !state.converged {
        return Err(Error::FlowDivergence {
            max_steps: params.max_steps,
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
    Ok(state)
}

/// One record of the exhaustion study.
#[derive(Debug, Clone)]
pub struct ExhaustionRecord {
    /// Actual wall radius (ladder level nearest the requested delta).
    pub delta: f64,
    pub iterations: u64,
    pub tension_sup: f64,
    pub sup_d: f64,
    pub sup_d_tilde: f64,
    /// Per-level `(r, sup |e(u) - (m+1)|)` over the truncated interior.
    pub energy_profile: Vec<(f64, f64)>,
    /// Per-level `(r, sup d_tilde(u, v))`.
    pub distance_profile: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ExhaustionReport {
    pub records: Vec<ExhaustionRecord>,
    /// `max over delta of sup d_tilde`, the uniform bound.
    pub bound: f64,
    /// Relative change of `sup d_tilde` between the last two truncations.
    pub last_two_rel_change: f64,
    pub stable: bool,
}

/// Flows the approximate solution on each truncated slab of a strictly
/// decreasing `delta_list` and records tension, distances, and energy.
pub fn run_exhaustion(
    v: &MapField,
    source: &MetricSpec,
    target: &MetricSpec,
    delta_list: &[f64],
    tol: f64,
) -> Result<ExhaustionReport> {
    if delta_list.len() < 2 {
        return Err(Error::Config("exhaustion needs at least two truncation radii".into()));
    }
    for w in delta_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Config(format!(
                "truncation radii must decrease strictly, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let td = TargetDistance::for_spec(target);
    let m1 = (source.dim_boundary + 1) as f64;
    let mut records = Vec::with_capacity(delta_list.len());
    for &delta in delta_list {
        let state = flow_to_harmonic(v, source, target, delta, tol)?;
        let (outer, inner) = state.walls;
        let dist = map_distance_report(&state.u, v, &td, outer, inner)?;
        let energy = crate::tension::energy_density(&state.u, source, target)?;
        let mut energy_profile = Vec::new();
        for level in outer + 1..inner {
            let r = v.grid.levels()[level];
            let mut sup: f64 = 0.0;
            for lat in 0..v.grid.lat_len() {
                sup = sup.max((energy.e_g_h.at(level, lat) - m1).abs());
            }
            energy_profile.push((r, sup));
        }
        let distance_profile: Vec<(f64, f64)> = dist
            .levels
            .iter()
            .cloned()
            .zip(dist.sup_d_tilde.iter().cloned())
            .collect();
        records.push(ExhaustionRecord {
            delta: v.grid.levels()[inner],
            iterations: state.step,
            tension_sup: state.tension_sup,
            sup_d: dist.overall_sup_d,
            sup_d_tilde: dist.overall_sup_d_tilde,
            energy_profile,
            distance_profile,
        });
    }
    let bound = records
        .iter()
        .map(|r| r.sup_d_tilde)
        .fold(0.0f64, f64::max);
    let a = records[records.len() - 2].sup_d_tilde;
    let b = records[records.len() - 1].sup_d_tilde;
    let last_two_rel_change = (b - a).abs() / a.abs().max(b.abs()).max(1e-30);
    Ok(ExhaustionReport {
        records,
        bound,
        last_two_rel_change,
        stable: last_two_rel_change < 0.10,
    })
}

#[derive(Debug, Clone)]
pub struct UniquenessReport {
    pub pairwise_sup_d_tilde: Vec<Vec<f64>>,
    pub max_pairwise: f64,
    /// All pairwise distances within `10 tol`.
    pub pass: bool,
}

/// Flows several admissible seeds (shared walls and homotopy class) and
/// reports pairwise unwrapped distances between the converged solutions.
pub fn uniqueness_probe(
    seeds: &[MapField],
    source: &MetricSpec,
    target: &MetricSpec,
    delta: f64,
    tol: f64,
) -> Result<UniquenessReport> {
    if seeds.is_empty() {
        return Err(Error::Config("uniqueness probe needs at least one seed".into()));
    }
    let k_inner = wall_level(&seeds[0], delta)?;
    for s in &seeds[1..] {
        if !seeds[0].same_class(s) {
            return Err(Error::Homotopy(
                "uniqueness probe seeds must share the relative homotopy class".into(),
            ));
        }
        for c in 0..seeds[0].n_target() {
            for &wall in &[0usize, k_inner] {
                for lat in 0..seeds[0].grid.lat_len() {
                    let a = seeds[0].tangential[c].at(wall, lat);
                    let b = s.tangential[c].at(wall, lat);
                    if (a - b).abs() > 1e-12 {
                        return Err(Error::Homotopy(format!(
                            "seeds disagree on Dirichlet data at wall level {wall}"
                        )));
                    }
                }
            }
        }
        for &wall in &[0usize, k_inner] {
            for lat in 0..seeds[0].grid.lat_len() {
                if (seeds[0].rho.at(wall, lat) - s.rho.at(wall, lat)).abs() > 1e-12 {
                    return Err(Error::Homotopy(format!(
                        "seeds disagree on radial Dirichlet data at wall level {wall}"
                    )));
                }
            }
        }
    }
    let mut flows = Vec::with_capacity(seeds.len());
    for s in seeds {
        flows.push(flow_to_harmonic(s, source, target, delta, tol)?);
    }
    let td = TargetDistance::for_spec(target);
    let k = seeds.len();
    let mut pairwise = vec![vec![0.0f64; k]; k];
    let mut max_pairwise: f64 = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let rep = map_distance_report(&flows[i].u, &flows[j].u, &td, 0, k_inner)?;
            pairwise[i][j] = rep.overall_sup_d_tilde;
            pairwise[j][i] = rep.overall_sup_d_tilde;
            max_pairwise = max_pairwise.max(rep.overall_sup_d_tilde);
        }
    }
    Ok(UniquenessReport {
        pairwise_sup_d_tilde: pairwise,
        max_pairwise,
        pass: max_pairwise <= 10.0 * tol,
    })
}
