//! Target-space distances (quotient and unwrapped), the Jacobi comparison ODE
//! with its Riccati cross-check, Hessian-of-distance bounds, and the scalar
//! functions entering the distance-Laplacian estimates.

use crate::approx::MapField;
use crate::error::{Error, Result};
use crate::geometry::{eval_metric_jet, MetricSpec};
use crate::grid::wrap_diff;

/// Distance function of the target manifold.
#[derive(Debug, Clone)]
pub enum TargetDistance {
    /// Closed form for the exact model: `arcosh(1 + (|dx|^2 + drho^2)/(2 rho rho'))`.
    ExactHyperbolic { lattice: Vec<f64> },
    /// Shooting geodesics for perturbed targets (2-dimensional targets only).
    NumericGeodesic { spec: MetricSpec, steps: usize },
}

impl TargetDistance {
    pub fn for_spec(spec: &MetricSpec) -> TargetDistance {
        if spec.is_exact_hyperbolic() {
            TargetDistance::ExactHyperbolic {
                lattice: spec.lattice.clone(),
            }
        } else {
            TargetDistance::NumericGeodesic {
                spec: spec.clone(),
                steps: 50,
            }
        }
    }

    /// Distance between chart points `p = (y, rho)` and `q`. With
    /// `unwrapped` the raw lifted tangential differences are used; otherwise
    /// the difference is minimized over lattice translates.
    pub fn distance(&self, p: (&[f64], f64), q: (&[f64], f64), unwrapped: bool) -> Result<f64> {
        let (yp, rp) = p;
        let (yq, rq) = q;
        if !(rp > 0.0 && rq > 0.0) {
            return Err(Error::Domain(format!(
                "distance needs positive radial components, got {rp} and {rq}"
            )));
        }
        match self {
            TargetDistance::ExactHyperbolic { lattice } => {
                let mut dx2 = 0.0;
                for a in 0..yp.len() {
                    let d = if unwrapped {
                        yp[a] - yq[a]
                    } else {
                        wrap_diff(yp[a] - yq[a], lattice[a])
                    };
                    dx2 += d * d;
                }
                let dr = rp - rq;
                Ok(half_space_distance(dx2 + dr * dr, rp, rq))
            }
            TargetDistance::NumericGeodesic { spec, steps } => {
                if spec.dim_boundary != 1 {
                    return Err(Error::Geodesic(
                        "numeric geodesic distance is implemented for 2-dimensional targets"
                            .into(),
                    ));
                }
                if unwrapped {
                    geodesic_distance_2d(spec, (yp[0], rp), (yq[0], rq), *steps)
                } else {
                    let l = spec.lattice[0];
                    let mut best = f64::INFINITY;
                    for j in -1i32..=1 {
                        let d = geodesic_distance_2d(
                            spec,
                            (yp[0], rp),
                            (yq[0] + j as f64 * l, rq),
                            *steps,
                        )?;
                        best = best.min(d);
                    }
                    Ok(best)
                }
            }
        }
    }
}

/// `arcosh(1 + e/(2 rho rho'))` with `e` the squared chart displacement.
fn half_space_distance(e: f64, rp: f64, rq: f64) -> f64 {
    let arg = 1.0 + e / (2.0 * rp * rq);
    // arcosh via the stable log form
    (arg + (arg * arg - 1.0).max(0.0).sqrt()).ln()
}

/// Geodesic BVP on a 2-dimensional target by shooting: coarse scan of the
/// initial direction, then bracketing refinement, 50-step fourth-order
/// integration per shot.
fn geodesic_distance_2d(
    spec: &MetricSpec,
    p: (f64, f64),
    q: (f64, f64),
    steps: usize,
) -> Result<f64> {
    if (p.0 - q.0).abs() < 1e-14 && (p.1 - q.1).abs() < 1e-14 {
        return Ok(0.0);
    }
    // exact-model distance guides the integration length and the misfit scale
    let dx = p.0 - q.0;
    let dr = p.1 - q.1;
    let guide = half_space_distance(dx * dx + dr * dr, p.1, q.1);
    let total_len = 1.5 * guide + 0.5;
    let h = total_len / steps as f64;

    // None marks a shot that left the chart; the scan treats it as a miss.
    let accel = |y: f64, rho: f64, v: (f64, f64)| -> Option<(f64, f64)> {
        let jet = eval_metric_jet(spec, &[y], rho).ok()?;
        let g = &jet.christoffel_g;
        let mut a = [0.0f64; 2];
        let vv = [v.0, v.1];
        for c in 0..2 {
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += g[c][(i, j)] * vv[i] * vv[j];
                }
            }
            a[c] = -s;
        }
        Some((a[0], a[1]))
    };

    // chart misfit measured with the exact-model distance (quasi-isometric to
    // the perturbed one at desk scale)
    let miss = |y: f64, rho: f64| -> f64 {
        let dx = y - q.0;
        let dr = rho - q.1;
        half_space_distance(dx * dx + dr * dr, rho.max(1e-12), q.1)
    };

    let shoot = |theta: f64| -> Result<(f64, f64)> {
        // unit direction in the h-orthonormal frame at p
        let jet = eval_metric_jet(spec, &[p.0], p.1)?;
        let hbar_yy = jet.gbar[(0, 0)];
        let mut y = p.0;
        let mut rho = p.1;
        let mut v = (theta.cos() * p.1 / hbar_yy.sqrt(), theta.sin() * p.1);
        let mut track: Vec<f64> = Vec::with_capacity(steps + 1);
        track.push(miss(y, rho));
        for _ in 0..steps {
            // classic RK4 on (y, rho, v)
            let Some(k1v) = accel(y, rho, v) else { break };
            let k1x = v;
            let k2x = (v.0 + 0.5 * h * k1v.0, v.1 + 0.5 * h * k1v.1);
            let Some(k2v) = accel(y + 0.5 * h * k1x.0, rho + 0.5 * h * k1x.1, k2x) else {
                break;
            };
            let k3x = (v.0 + 0.5 * h * k2v.0, v.1 + 0.5 * h * k2v.1);
            let Some(k3v) = accel(y + 0.5 * h * k2x.0, rho + 0.5 * h * k2x.1, k3x) else {
                break;
            };
            let k4x = (v.0 + h * k3v.0, v.1 + h * k3v.1);
            let Some(k4v) = accel(y + h * k3x.0, rho + h * k3x.1, k4x) else { break };
            y += h / 6.0 * (k1x.0 + 2.0 * k2x.0 + 2.0 * k3x.0 + k4x.0);
            rho += h / 6.0 * (k1x.1 + 2.0 * k2x.1 + 2.0 * k3x.1 + k4x.1);
            v = (
                v.0 + h / 6.0 * (k1v.0 + 2.0 * k2v.0 + 2.0 * k3v.0 + k4v.0),
                v.1 + h / 6.0 * (k1v.1 + 2.0 * k2v.1 + 2.0 * k3v.1 + k4v.1),
            );
            if !(rho > 1e-9) {
                break; // ran into the boundary; this shot misses
            }
            track.push(miss(y, rho));
        }
        // discrete closest approach, sharpened by a parabola fit of miss^2
        // (smooth near a transversal pass where miss itself has a kink)
        let mut bi = 0;
        for (i, mv) in track.iter().enumerate() {
            if *mv < track[bi] {
                bi = i;
            }
        }
        let t_bi = bi as f64 * h;
        if bi == 0 || bi + 1 >= track.len() {
            return Ok((track[bi], t_bi));
        }
        let (ym, y0, yp) = (
            track[bi - 1] * track[bi - 1],
            track[bi] * track[bi],
            track[bi + 1] * track[bi + 1],
        );
        let denom = ym - 2.0 * y0 + yp;
        if denom <= 0.0 {
            return Ok((track[bi], t_bi));
        }
        let delta = 0.5 * (ym - yp) / denom;
        let val = y0 - 0.125 * (ym - yp) * (ym - yp) / denom;
        Ok((val.max(0.0).sqrt(), t_bi + delta.clamp(-1.0, 1.0) * h))
    };

    // coarse directional scan
    let coarse = 96;
    let mut best_theta = 0.0;
    let mut best_miss = f64::INFINITY;
    for i in 0..coarse {
        let theta = -std::f64::consts::PI + std::f64::consts::TAU * i as f64 / coarse as f64;
        let (mv, _) = shoot(theta)?;
        if mv < best_miss {
            best_miss = mv;
            best_theta = theta;
        }
    }
    // bracketing bisection on the direction
    let mut lo = best_theta - std::f64::consts::TAU / coarse as f64;
    let mut hi = best_theta + std::f64::consts::TAU / coarse as f64;
    for _ in 0..70 {
        let t1 = lo + (hi - lo) / 3.0;
        let t2 = hi - (hi - lo) / 3.0;
        let (m1, _) = shoot(t1)?;
        let (m2, _) = shoot(t2)?;
        if m1 < m2 {
            hi = t2;
        } else {
            lo = t1;
        }
    }
    let theta = 0.5 * (lo + hi);
    let (mv, len) = shoot(theta)?;
    if mv > 1e-3 * (1.0 + guide) {
        return Err(Error::Geodesic(format!(
            "shooting failed to hit the endpoint: residual miss {mv:.3e} for guide length {guide:.3}"
        )));
    }
    Ok(len)
}

/// Solution of the comparison equation `s'' + mu s = 0`, `s(0) = 0`,
/// `s'(0) = 1`, with `mu <= 0`.
#[derive(Debug, Clone)]
pub struct ComparisonOde {
    pub ts: Vec<f64>,
    pub s: Vec<f64>,
    pub sp: Vec<f64>,
    mu: Vec<f64>,
}

impl ComparisonOde {
    pub fn length(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    fn locate(&self, t: f64) -> usize {
        let h = self.ts[1] - self.ts[0];
        ((t / h).floor() as usize).min(self.ts.len() - 2)
    }

    fn hermite(t: f64, t0: f64, t1: f64, f0: f64, f1: f64, d0: f64, d1: f64) -> f64 {
        let h = t1 - t0;
        let w = (t - t0) / h;
        let w2 = w * w;
        let w3 = w2 * w;
        (2.0 * w3 - 3.0 * w2 + 1.0) * f0
            + (w3 - 2.0 * w2 + w) * h * d0
            + (-2.0 * w3 + 3.0 * w2) * f1
            + (w3 - w2) * h * d1
    }

    pub fn s_at(&self, t: f64) -> f64 {
        let i = self.locate(t);
        Self::hermite(
            t,
            self.ts[i],
            self.ts[i + 1],
            self.s[i],
            self.s[i + 1],
            self.sp[i],
            self.sp[i + 1],
        )
    }

    pub fn sp_at(&self, t: f64) -> f64 {
        let i = self.locate(t);
        // s'' = -mu s supplies the derivative data for s'
        Self::hermite(
            t,
            self.ts[i],
            self.ts[i + 1],
            self.sp[i],
            self.sp[i + 1],
            -self.mu[i] * self.s[i],
            -self.mu[i + 1] * self.s[i + 1],
        )
    }

    /// `q(t) = s'(t)/s(t)` for `t > 0`.
    pub fn q_at(&self, t: f64) -> f64 {
        self.sp_at(t) / self.s_at(t)
    }

    /// Independent integration of the Riccati form `q' = -mu - q^2`; returns
    /// the sup gap against `s'/s` on `t >= max(0.2, L/10)`. The integration
    /// starts past the `1/t` pole from the short-time series; the Riccati flow
    /// is contracting, so the remaining seed error dies out downstream.
    pub fn riccati_gap(&self) -> f64 {
        let h = self.ts[1] - self.ts[0];
        let start = ((0.1 / h).ceil() as usize).clamp(1, self.ts.len() / 4);
        let t0 = self.ts[start];
        let mu0 = self.mu[0];
        let mut q = 1.0 / t0 - mu0 * t0 / 3.0 - mu0 * mu0 * t0.powi(3) / 45.0;
        let mut gap: f64 = 0.0;
        let lo = 0.2f64.max(self.length() / 10.0).max(2.0 * t0);
        for i in start..self.ts.len() - 1 {
            // RK4 with the sampled mu (midpoint value reused on half steps)
            let f = |q: f64, mu: f64| -> f64 { -mu - q * q };
            let mu0 = self.mu[i];
            let mu_half = 0.5 * (self.mu[i] + self.mu[i + 1]);
            let mu1 = self.mu[i + 1];
            let k1 = f(q, mu0);
            let k2 = f(q + 0.5 * h * k1, mu_half);
            let k3 = f(q + 0.5 * h * k2, mu_half);
            let k4 = f(q + h * k3, mu1);
            q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            let t = self.ts[i + 1];
            if t >= lo {
                gap = gap.max((q - self.sp[i + 1] / self.s[i + 1]).abs());
            }
        }
        gap
    }
}

/// Integrates the comparison ODE with fourth-order steps.
pub fn solve_comparison_ode(
    mu: impl Fn(f64) -> f64,
    l: f64,
    steps: usize,
) -> Result<ComparisonOde> {
    if !(l > 0.0) {
        return Err(Error::Domain(format!("interval length must be positive, got {l}")));
    }
    if steps < 4 {
        return Err(Error::Domain("need at least 4 integration steps".into()));
    }
    let h = l / steps as f64;
    // validate the curvature upper bound sign on a fine sample
    for i in 0..=4 * steps {
        let t = l * i as f64 / (4 * steps) as f64;
        if mu(t) > 1e-12 {
            return Err(Error::Domain(format!(
                "mu must be nonpositive (mu({t}) = {})",
                mu(t)
            )));
        }
    }
    let mut ts = Vec::with_capacity(steps + 1);
    let mut s = Vec::with_capacity(steps + 1);
    let mut sp = Vec::with_capacity(steps + 1);
    let mut mus = Vec::with_capacity(steps + 1);
    let (mut y, mut yp) = (0.0f64, 1.0f64);
    ts.push(0.0);
    s.push(y);
    sp.push(yp);
    mus.push(mu(0.0));
    for i in 0..steps {
        let t = i as f64 * h;
        let f = |s: f64, t: f64| -> f64 { -mu(t) * s };
        let k1 = (yp, f(y, t));
        let k2 = (yp + 0.5 * h * k1.1, f(y + 0.5 * h * k1.0, t + 0.5 * h));
        let k3 = (yp + 0.5 * h * k2.1, f(y + 0.5 * h * k2.0, t + 0.5 * h));
        let k4 = (yp + h * k3.1, f(y + h * k3.0, t + h));
        y += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        yp += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        ts.push(t + h);
        s.push(y);
        sp.push(yp);
        mus.push(mu(t + h));
        if !(y > 0.0 && yp > 0.0) {
            return Err(Error::Domain(format!(
                "comparison solution lost positivity at t = {} (s = {y}, s' = {yp})",
                t + h
            )));
        }
    }
    Ok(ComparisonOde {
        ts,
        s,
        sp,
        mu: mus,
    })
}

/// Certificate data for the two Jacobi comparison inequalities.
#[derive(Debug, Clone)]
pub struct ComparisonCertificate {
    pub checked: usize,
    pub worst_t: f64,
    pub worst_margin: f64,
}

/// Verifies `|Y|'(0) <= |Y(t)|/s(t)` and `<Y, Y'>(t) >= (s'/s)|Y(t)|^2` for a
/// Jacobi-type field supplied through its norm `|Y|`, the derivative at zero,
/// and the inner product `<Y, Y'>`.
pub fn comparison_bounds(
    ode: &ComparisonOde,
    y_norm: impl Fn(f64) -> f64,
    y_prime0: f64,
    y_inner: impl Fn(f64) -> f64,
    sample_ts: &[f64],
) -> Result<ComparisonCertificate> {
    let mut worst_t = 0.0;
    let mut worst_margin = f64::INFINITY;
    for &t in sample_ts {
        if !(t > 0.0 && t <= ode.length() * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!(
                "sample t = {t} outside (0, {}]",
                ode.length()
            )));
        }
        let s = ode.s_at(t);
        let q = ode.q_at(t);
        let yn = y_norm(t);
        let m1 = yn / s - y_prime0;
        let m2 = y_inner(t) - q * yn * yn;
        let scale = 1.0 + yn * yn;
        for m in [m1, m2] {
            if m < -1e-9 * scale {
                return Err(Error::Certification {
                    node: format!("t = {t}"),
                    value: m,
                });
            }
        }
        let m = m1.min(m2);
        if m < worst_margin {
            worst_margin = m;
            worst_t = t;
        }
    }
    Ok(ComparisonCertificate {
        checked: sample_ts.len(),
        worst_t,
        worst_margin,
    })
}

/// Constants of the Hessian lower bound: `c = 1/4` and
/// `l = diam(K) + 4` for the compact set `K` where the curvature exceeds `-1/2`.
pub fn hessian_lower_bound_constants() -> (f64, impl Fn(f64) -> f64) {
    (0.25, |diam_k: f64| diam_k + 4.0)
}

/// Trace of the product Hessian of the unwrapped distance for maps into the
/// exact 2-dimensional hyperbolic target, by the Jacobi closed form in
/// constant curvature. `du[i]`, `dv[i]` are the images (chart components) of a
/// `g`-orthonormal source frame at the two endpoints.
pub fn hessian_trace_h2(
    p: (f64, f64),
    q: (f64, f64),
    du: &[(f64, f64)],
    dv: &[(f64, f64)],
) -> Result<f64> {
    let dx = q.0 - p.0;
    let dr = q.1 - p.1;
    let l = half_space_distance(dx * dx + dr * dr, p.1, q.1);
    if l < 1e-12 {
        return Err(Error::Domain(
            "Hessian trace needs distinct endpoints".into(),
        ));
    }
    // forward unit tangents (h-normalized chart vectors) at p and q
    let (tp, tq) = if dx.abs() < 1e-14 {
        let s = dr.signum();
        ((0.0, s * p.1), (0.0, s * q.1))
    } else {
        let c = (q.0 * q.0 + q.1 * q.1 - p.0 * p.0 - p.1 * p.1) / (2.0 * dx);
        // Euclidean tangent at a point of the circle centered at (c, 0):
        // perpendicular to the radius, oriented toward q.
        let tangent = |pt: (f64, f64)| -> (f64, f64) {
            let rad = (pt.0 - c, pt.1);
            let mut t = (-rad.1, rad.0);
            if t.0 * dx < 0.0 {
                t = (-t.0, -t.1);
            }
            let norm = (t.0 * t.0 + t.1 * t.1).sqrt();
            (t.0 / norm * pt.1, t.1 / norm * pt.1)
        };
        (tangent(p), tangent(q))
    };
    // normal frame transported along the geodesic: rotate the forward tangent
    // by 90 degrees (conformal chart, orientation-preserving transport)
    let npf = (-tp.1, tp.0);
    let nqf = (-tq.1, tq.0);
    let inner = |a: (f64, f64), b: (f64, f64), rho: f64| (a.0 * b.0 + a.1 * b.1) / (rho * rho);
    let coth = 1.0 / l.tanh();
    let csch = 1.0 / l.sinh();
    let mut trace = 0.0;
    for i in 0..du.len() {
        let n0 = inner(du[i], npf, p.1);
        let n1 = inner(dv[i], nqf, q.1);
        trace += (n0 * n0 + n1 * n1) * coth - 2.0 * n0 * n1 * csch;
    }
    Ok(trace)
}

/// The distance profile function of the sharpened Laplacian estimate:
/// `f(x) = (cosh(x/2) - 1)/(2 sinh(x/2))`, extended by `f(0) = 0`.
pub fn laplacian_bound_f(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 1e-6 {
        return x / 8.0;
    }
    ((x / 2.0).cosh() - 1.0) / (2.0 * (x / 2.0).sinh())
}

/// Solves `f(d_eps) = 2 eps / m` by bisection; `+inf` when no finite root
/// exists (`f < 1/2` everywhere).
pub fn d_epsilon(eps: f64, m: usize) -> f64 {
    let target = 2.0 * eps / m as f64;
    if target >= 0.5 {
        return f64::INFINITY;
    }
    if target <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0f64;
    while laplacian_bound_f(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if laplacian_bound_f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Convexity-gain coefficient `kappa (cosh(kappa L) - 1)/sinh(kappa L)` of the
/// Laplacian lower bound under curvature `<= -kappa^2`.
pub fn kappa_bound(kappa: f64, l: f64) -> f64 {
    let t = kappa * l;
    if t < 1e-8 {
        return kappa * t / 2.0;
    }
    kappa * (t.cosh() - 1.0) / t.sinh()
}

/// Per-level distance diagnostics between two maps on the same grid.
#[derive(Debug, Clone)]
pub struct DistanceReport {
    pub level_indices: Vec<usize>,
    pub levels: Vec<f64>,
    pub sup_d: Vec<f64>,
    pub sup_d_tilde: Vec<f64>,
    pub overall_sup_d: f64,
    pub overall_sup_d_tilde: f64,
}

/// Quotient and unwrapped distance sups between `u` and `v` over a level
/// window. Aborts with a homotopy-ambiguity error when the unwrapped chart
/// displacement reaches half a target period.
pub fn map_distance_report(
    u: &MapField,
    v: &MapField,
    td: &TargetDistance,
    level_lo: usize,
    level_hi: usize,
) -> Result<DistanceReport> {
    if !u.same_class(v) {
        return Err(Error::Homotopy(
            "distance report needs maps in the same relative class".into(),
        ));
    }
    let grid = &u.grid;
    let n = u.n_target();
    let mut report = DistanceReport {
        level_indices: Vec::new(),
        levels: Vec::new(),
        sup_d: Vec::new(),
        sup_d_tilde: Vec::new(),
        overall_sup_d: 0.0,
        overall_sup_d_tilde: 0.0,
    };
    let mut yu = vec![0.0; n];
    let mut yv = vec![0.0; n];
    for level in level_lo..=level_hi {
        let mut sup_d: f64 = 0.0;
        let mut sup_dt: f64 = 0.0;
        for lat in 0..grid.lat_len() {
            let node = grid.node_index(level, lat);
            for c in 0..n {
                yu[c] = u.tangential[c].data[node];
                yv[c] = v.tangential[c].data[node];
                let half = 0.5 * u.target_lattice[c];
                if (yu[c] - yv[c]).abs() >= half {
                    return Err(Error::Homotopy(format!(
                        "unwrapped displacement {:.4} of component {c} reaches half a target \
                         period at level {level}; lifted class is ambiguous",
                        (yu[c] - yv[c]).abs()
                    )));
                }
            }
            let rho_u = u.rho.data[node];
            let rho_v = v.rho.data[node];
            let dt = td.distance((&yu, rho_u), (&yv, rho_v), true)?;
            let d = td.distance((&yu, rho_u), (&yv, rho_v), false)?;
            sup_d = sup_d.max(d);
            sup_dt = sup_dt.max(dt);
        }
        report.level_indices.push(level);
        report.levels.push(grid.levels()[level]);
        report.sup_d.push(sup_d);
        report.sup_d_tilde.push(sup_dt);
        report.overall_sup_d = report.overall_sup_d.max(sup_d);
        report.overall_sup_d_tilde = report.overall_sup_d_tilde.max(sup_dt);
    }
    Ok(report)
}
