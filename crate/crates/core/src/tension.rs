//! Tension fields, rescaled boundary-adapted components, energy densities,
//! and Neumann data extraction.


use rayon::prelude::*;

use crate::approx::MapField;
use crate::error::{Error, Result};
use crate::geometry::{eval_metric_jet, MetricSpec};
use crate::grid::{fd_weights, Field};
use crate::operator::SourceOperator;

/// Hard cap on target components (n + 1) so per-node work stays on the stack.
pub(crate) const MAX_COMPONENTS: usize = 8;

/// Target-side metric evaluation with a closed-form fast path for the exact
/// hyperbolic model.
pub(crate) struct TargetMetric<'a> {
    pub spec: &'a MetricSpec,
    hyperbolic: bool,
    n: usize,
}

impl<'a> TargetMetric<'a> {
    pub fn new(spec: &'a MetricSpec) -> Result<TargetMetric<'a>> {
        let n = spec.dim_boundary;
        if n + 1 > MAX_COMPONENTS {
            return Err(Error::Config(format!(
                "target dimension {} exceeds the supported component count",
                n + 1
            )));
        }
        Ok(TargetMetric {
            spec,
            hyperbolic: spec.is_exact_hyperbolic(),
            n,
        })
    }

    /// Diagonal of `hbar` at the image point; last entry is the radial one.
    #[inline]
    pub fn hbar_diag(&self, y: &[f64], rho: f64, out: &mut [f64]) {
        if self.hyperbolic {
            out[..=self.n].fill(1.0);
            return;
        }
        let hb = self.spec.gbar(y, rho);
        for a in 0..=self.n {
            out[a] = hb[(a, a)];
        }
    }

    /// Adds the Christoffel contraction `Gamma^gamma_{alpha beta} P^{alpha beta}`
    /// of the target connection (`h`, or `hbar` in compactified mode) into `tau`.
    #[inline]
    pub fn add_gamma_contraction(
        &self,
        y: &[f64],
        rho: f64,
        p: &[[f64; MAX_COMPONENTS]; MAX_COMPONENTS],
        tau: &mut [f64],
        compactified: bool,
    ) -> Result<()> {
        let n = self.n;
        if self.hyperbolic {
            if compactified {
                return Ok(()); // flat hbar has vanishing Christoffels
            }
            // Gamma(h) is the pure conformal tensor with hbar = identity.
            let inv_rho = 1.0 / rho;
            let mut trace = 0.0;
            for al in 0..=n {
                trace += p[al][al];
            }
            for c in 0..n {
                tau[c] += -2.0 * inv_rho * p[c][n];
            }
            tau[n] += -inv_rho * (2.0 * p[n][n] - trace);
            return Ok(());
        }
        let jet = eval_metric_jet(self.spec, &y[..n], rho)?;
        let gam = if compactified {
            &jet.christoffel_gbar
        } else {
            &jet.christoffel_g
        };
        for c in 0..=n {
            let mut v = 0.0;
            for al in 0..=n {
                for be in 0..=n {
                    v += gam[c][(al, be)] * p[al][be];
                }
            }
            tau[c] += v;
        }
        Ok(())
    }
}

/// Per-node tension evaluation result.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NodeTension {
    pub tau: [f64; MAX_COMPONENTS],
    pub norm_h: f64,
    /// Energy density of `u` with respect to `(g, h)`.
    pub energy: f64,
    /// Energy density with respect to `(gbar, hbar)`.
    pub energy_bar: f64,
}

/// Evaluates the tension components, `|tau|_h`, and energy densities at one
/// node. With `compactified` the tension is taken with respect to
/// `(gbar, hbar)` instead of `(g, h)`.
pub(crate) fn eval_node_tension(
    u: &MapField,
    op: &SourceOperator,
    target: &TargetMetric,
    level: usize,
    lat: usize,
    compactified: bool,
) -> Result<NodeTension> {
    let grid = &op.grid;
    let m = op.dim() - 1;
    let n = u.n_target();
    let nc = n + 1;
    debug_assert!(nc <= MAX_COMPONENTS && m + 1 <= MAX_COMPONENTS);
    let node = grid.node_index(level, lat);
    let rho = u.rho.data[node];
    let rho_star = target.spec.r_star;
    if !(rho > 0.0) || rho > rho_star * (1.0 + 1e-12) {
        let x = grid.lat_coords(lat);
        return Err(Error::ChartOverflow {
            node: format!("level {level} (r={:.4e}), x={:?}", grid.levels()[level], x),
            rho,
            rho_star,
        });
    }

    // Derivatives d1[gamma][k], d2[gamma][k]; radial direction last.
    let mut d1 = [[0.0f64; MAX_COMPONENTS]; MAX_COMPONENTS];
    let mut d2 = [[0.0f64; MAX_COMPONENTS]; MAX_COMPONENTS];
    for c in 0..nc {
        let f = if c < n { &u.tangential[c] } else { &u.rho };
        let f0 = f.data[node];
        for a in 0..m {
            let (pl, wp) = op.neighbor(lat, a, 1);
            let (ml, wm) = op.neighbor(lat, a, -1);
            let mut fp = f.at(level, pl);
            let mut fm = f.at(level, ml);
            if c < n {
                fp += wp as f64 * u.jump(c, a);
                fm += wm as f64 * u.jump(c, a);
            }
            d1[c][a] = (fp - fm) * op.inv_2h(a);
            d2[c][a] = (fp - 2.0 * f0 + fm) * op.inv_h2(a);
        }
        let st = op.radial_stencil(level);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (j, &lev) in st.levels.iter().enumerate() {
            let v = f.at(lev, lat) - f0;
            s1 += st.d1[j] * v;
            s2 += st.d2[j] * v;
        }
        d1[c][m] = s1;
        d2[c][m] = s2;
    }

    let (gd, cd) = if compactified {
        (op.gbar_diag(node), op.contraction_bar(node))
    } else {
        (op.g_diag(node), op.contraction(node))
    };

    let mut tau = [0.0f64; MAX_COMPONENTS];
    for c in 0..nc {
        let mut v = 0.0;
        for k in 0..=m {
            v += gd[k] * d2[c][k] - cd[k] * d1[c][k];
        }
        tau[c] = v;
    }

    // P^{alpha beta} = sum_k w_k du^alpha_k du^beta_k
    let mut p = [[0.0f64; MAX_COMPONENTS]; MAX_COMPONENTS];
    for al in 0..nc {
        for be in al..nc {
            let mut v = 0.0;
            for k in 0..=m {
                v += gd[k] * d1[al][k] * d1[be][k];
            }
            p[al][be] = v;
            p[be][al] = v;
        }
    }

    let mut y = [0.0f64; MAX_COMPONENTS];
    for c in 0..n {
        y[c] = u.tangential[c].data[node];
    }
    target.add_gamma_contraction(&y[..n.max(1)], rho, &p, &mut tau[..nc], compactified)?;

    let mut hb = [0.0f64; MAX_COMPONENTS];
    target.hbar_diag(&y[..n.max(1)], rho, &mut hb);
    let inv_rho2 = 1.0 / (rho * rho);
    let mut norm2 = 0.0;
    let mut e_raw = 0.0;
    for c in 0..nc {
        norm2 += hb[c] * tau[c] * tau[c];
        e_raw += hb[c] * p[c][c];
    }
    let r = grid.levels()[level];
    let (energy, energy_bar) = if compactified {
        (e_raw * inv_rho2 * r * r, e_raw)
    } else {
        // P was built with g-weights = r^2 gbar-weights
        (e_raw * inv_rho2, e_raw / (r * r))
    };
    Ok(NodeTension {
        tau,
        norm_h: (norm2 * inv_rho2).max(0.0).sqrt(),
        energy,
        energy_bar,
    })
}

/// Tension field of a map with its norm and rescaled components.
#[derive(Debug, Clone)]
pub struct TensionField {
    /// Components `tau^gamma`, normal component last.
    pub components: Vec<Field>,
    /// `|tau|_h` with the exact target metric at the image point.
    pub norm_h: Field,
    pub rescaled_tangential: Vec<Field>,
    pub rescaled_normal: Field,
}

fn tension_impl(
    u: &MapField,
    op: &SourceOperator,
    target: &MetricSpec,
    compactified: bool,
) -> Result<Vec<NodeTension>> {
    let grid = &op.grid;
    let tm = TargetMetric::new(target)?;
    let rows: Vec<Result<Vec<NodeTension>>> = (0..grid.num_levels())
        .into_par_iter()
        .map(|level| {
            (0..grid.lat_len())
                .map(|lat| eval_node_tension(u, op, &tm, level, lat, compactified))
                .collect()
        })
        .collect();
    let mut flat = Vec::with_capacity(grid.node_count());
    for row in rows {
        flat.extend(row?);
    }
    Ok(flat)
}

/// Tension of `u` with respect to `(g, h)` given a prebuilt source operator.
pub fn tension_with_op(
    u: &MapField,
    op: &SourceOperator,
    target: &MetricSpec,
) -> Result<TensionField> {
    let grid = op.grid.clone();
    let nodes = tension_impl(u, op, target, false)?;
    let n = u.n_target();
    let mut components: Vec<Field> = (0..=n).map(|_| Field::zeros(grid.clone())).collect();
    let mut norm_h = Field::zeros(grid.clone());
    let mut rescaled_tangential: Vec<Field> = (0..n).map(|_| Field::zeros(grid.clone())).collect();
    let mut rescaled_normal = Field::zeros(grid.clone());
    for (idx, nt) in nodes.iter().enumerate() {
        let (level, _) = grid.split_index(idx);
        let r = grid.levels()[level];
        for c in 0..=n {
            components[c].data[idx] = nt.tau[c];
        }
        norm_h.data[idx] = nt.norm_h;
        for c in 0..n {
            rescaled_tangential[c].data[idx] = nt.tau[c] / r;
        }
        rescaled_normal.data[idx] = nt.tau[n] / r;
    }
    Ok(TensionField {
        components,
        norm_h,
        rescaled_tangential,
        rescaled_normal,
    })
}

/// Tension of `u` with respect to `(g, h)`.
pub fn tension(u: &MapField, source: &MetricSpec, target: &MetricSpec) -> Result<TensionField> {
    let op = SourceOperator::new(source, u.grid.clone())?;
    tension_with_op(u, &op, target)
}

/// Tension components with respect to the compactified pair `(gbar, hbar)`.
pub fn tension_bar(
    u: &MapField,
    source: &MetricSpec,
    target: &MetricSpec,
) -> Result<Vec<Field>> {
    let op = SourceOperator::new(source, u.grid.clone())?;
    let nodes = tension_impl(u, &op, target, true)?;
    let n = u.n_target();
    let mut components: Vec<Field> = (0..=n).map(|_| Field::zeros(u.grid.clone())).collect();
    for (idx, nt) in nodes.iter().enumerate() {
        for c in 0..=n {
            components[c].data[idx] = nt.tau[c];
        }
    }
    Ok(components)
}

/// Energy densities of a map with respect to `(g, h)` and `(gbar, hbar)`.
#[derive(Debug, Clone)]
pub struct EnergyDensity {
    pub e_g_h: Field,
    pub e_bar: Field,
}

pub fn energy_density(
    u: &MapField,
    source: &MetricSpec,
    target: &MetricSpec,
) -> Result<EnergyDensity> {
    let op = SourceOperator::new(source, u.grid.clone())?;
    let nodes = tension_impl(u, &op, target, false)?;
    let mut e_g_h = Field::zeros(u.grid.clone());
    let mut e_bar = Field::zeros(u.grid.clone());
    for (idx, nt) in nodes.iter().enumerate() {
        e_g_h.data[idx] = nt.energy;
        e_bar.data[idx] = nt.energy_bar;
    }
    Ok(EnergyDensity { e_g_h, e_bar })
}

/// Per-level sup norms of tension and energy diagnostics. Wall rows carry
/// Dirichlet data rather than PDE residual and are excluded.
#[derive(Debug, Clone)]
pub struct LevelReport {
    pub level_indices: Vec<usize>,
    pub levels: Vec<f64>,
    pub sup_tension_h: Vec<f64>,
    pub sup_rescaled_tan: Vec<f64>,
    pub sup_rescaled_nor: Vec<f64>,
    pub sup_energy_minus: Vec<f64>,
}

impl LevelReport {
    /// Row nearest to radius `r`.
    pub fn row_at(&self, r: f64) -> usize {
        let mut best = 0;
        let mut gap = f64::INFINITY;
        for (i, &rl) in self.levels.iter().enumerate() {
            if (rl - r).abs() < gap {
                gap = (rl - r).abs();
                best = i;
            }
        }
        best
    }
}

/// Rescaled tension and energy report per interior radial level.
pub fn rescaled_tension_report(
    u: &MapField,
    source: &MetricSpec,
    target: &MetricSpec,
) -> Result<LevelReport> {
    let op = SourceOperator::new(source, u.grid.clone())?;
    let nodes = tension_impl(u, &op, target, false)?;
    let grid = &u.grid;
    let n = u.n_target();
    let m1 = (source.dim_boundary + 1) as f64;
    let nl = grid.num_levels();
    let mut report = LevelReport {
        level_indices: Vec::new(),
        levels: Vec::new(),
        sup_tension_h: Vec::new(),
        sup_rescaled_tan: Vec::new(),
        sup_rescaled_nor: Vec::new(),
        sup_energy_minus: Vec::new(),
    };
    for level in 1..nl.saturating_sub(1) {
        let r = grid.levels()[level];
        let mut s_norm: f64 = 0.0;
        let mut s_tan: f64 = 0.0;
        let mut s_nor: f64 = 0.0;
        let mut s_e: f64 = 0.0;
        for lat in 0..grid.lat_len() {
            let nt = &nodes[grid.node_index(level, lat)];
            s_norm = s_norm.max(nt.norm_h);
            for c in 0..n {
                s_tan = s_tan.max((nt.tau[c] / r).abs());
            }
            s_nor = s_nor.max((nt.tau[n] / r).abs());
            s_e = s_e.max((nt.energy - m1).abs());
        }
        report.level_indices.push(level);
        report.levels.push(r);
        report.sup_tension_h.push(s_norm);
        report.sup_rescaled_tan.push(s_tan);
        report.sup_rescaled_nor.push(s_nor);
        report.sup_energy_minus.push(s_e);
    }
    Ok(report)
}

/// Boundary Neumann data extracted from the innermost radial levels by
/// differentiating the quadratic interpolant at `r = 0`.
#[derive(Debug, Clone)]
pub struct NeumannData {
    /// `du^alpha/dr |_0` per tangential component, per lattice node.
    pub tangential_slope: Vec<Vec<f64>>,
    /// `drho/dr |_0` per lattice node.
    pub radial_slope: Vec<f64>,
}

pub fn neumann_extract(u: &MapField) -> Result<NeumannData> {
    let grid = &u.grid;
    let nl = grid.num_levels();
    let below = grid.levels().iter().filter(|&&r| r < 0.1).count();
    if below < 3 {
        return Err(Error::InsufficientLevels(format!(
            "Neumann extraction needs at least 3 radial levels below r = 0.1, found {below}"
        )));
    }
    let ks = [nl - 1, nl - 2, nl - 3];
    let rs: Vec<f64> = ks.iter().map(|&k| grid.levels()[k]).collect();
    let w = fd_weights(0.0, &rs, 1);
    let slope = |f: &Field, lat: usize| -> f64 {
        ks.iter()
            .enumerate()
            .map(|(j, &k)| w[1][j] * f.at(k, lat))
            .sum()
    };
    let tangential_slope: Vec<Vec<f64>> = u
        .tangential
        .iter()
        .map(|f| (0..grid.lat_len()).map(|lat| slope(f, lat)).collect())
        .collect();
    let radial_slope: Vec<f64> = (0..grid.lat_len()).map(|lat| slope(&u.rho, lat)).collect();
    Ok(NeumannData {
        tangential_slope,
        radial_slope,
    })
}

/// Internal helper for the flow: tension components plus sup data, restricted
/// to the interior rows of a level window.
pub(crate) struct FlowTension {
    pub tau: Vec<[f64; MAX_COMPONENTS]>,
    pub tension_sup: f64,
    pub energy_sup: f64,
}

pub(crate) fn flow_tension(
    u: &MapField,
    op: &SourceOperator,
    tm: &TargetMetric,
    level_lo: usize,
    level_hi: usize,
) -> Result<FlowTension> {
    let grid = &op.grid;
    let ll = grid.lat_len();
    let rows: Vec<Result<Vec<NodeTension>>> = (level_lo..=level_hi)
        .into_par_iter()
        .map(|level| {
            (0..ll)
                .map(|lat| eval_node_tension(u, op, tm, level, lat, false))
                .collect()
        })
        .collect();
    let mut tau = Vec::with_capacity((level_hi - level_lo + 1) * ll);
    let mut tension_sup = 0.0f64;
    let mut energy_sup = 0.0f64;
    for row in rows {
        for nt in row? {
            tension_sup = tension_sup.max(nt.norm_h);
            energy_sup = energy_sup.max(nt.energy);
            tau.push(nt.tau);
        }
    }
    Ok(FlowTension {
        tau,
        tension_sup,
        energy_sup,
    })
}
