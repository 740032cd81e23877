//! Conformally compact metrics in normal boundary coordinates on torus slabs.
//!
//! A spec describes `gbar = dr^2 + ghat(x) + r^p k(x)` on `T^m x (0, r_star]`;
//! the uncompactified metric is `g = r^{-2} gbar`. Index `m` (the last one) is
//! the radial direction throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;

/// Closed-form boundary metric `ghat` on the torus.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryMetric {
    /// `ghat = delta`
    Flat,
    /// `ghat = e^{2 lambda} delta` with `lambda = amplitude * sin(2 pi x^1 / L_1)`
    ConformallyFlat { amplitude: f64 },
}

/// Closed-form correction `r^p k(x)` with `k = amplitude * cos(2 pi x^1 / L_1) * delta`.
#[derive(Debug, Clone, PartialEq)]
pub enum Correction {
    None,
    /// `p = 2`; admissible for sources and targets.
    Quadratic { amplitude: f64 },
    /// `p = 1`; admissible for targets only.
    Linear { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricRole {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub dim_boundary: usize,
    /// Torus side lengths `L_a`.
    pub lattice: Vec<f64>,
    pub boundary_metric: BoundaryMetric,
    pub correction: Correction,
    /// Chart validity radius; evaluations require `0 < r <= r_star`.
    pub r_star: f64,
}

impl MetricSpec {
    pub fn exact_hyperbolic(dim_boundary: usize, lattice: Vec<f64>, r_star: f64) -> Self {
        MetricSpec {
            dim_boundary,
            lattice,
            boundary_metric: BoundaryMetric::Flat,
            correction: Correction::None,
            r_star,
        }
    }

    pub fn is_exact_hyperbolic(&self) -> bool {
        self.boundary_metric == BoundaryMetric::Flat && self.correction == Correction::None
    }

    pub fn lambda(&self, x: &[f64]) -> f64 {
        match self.boundary_metric {
            BoundaryMetric::Flat => 0.0,
            BoundaryMetric::ConformallyFlat { amplitude } => {
                amplitude * (TAU * x[0] / self.lattice[0]).sin()
            }
        }
    }

    pub fn dlambda(&self, x: &[f64]) -> DVector<f64> {
        let m = self.dim_boundary;
        let mut d = DVector::zeros(m);
        if let BoundaryMetric::ConformallyFlat { amplitude } = self.boundary_metric {
            let w = TAU / self.lattice[0];
            d[0] = amplitude * w * (w * x[0]).cos();
        }
        d
    }

    pub fn d2lambda(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.dim_boundary;
        let mut d = DMatrix::zeros(m, m);
        if let BoundaryMetric::ConformallyFlat { amplitude } = self.boundary_metric {
            let w = TAU / self.lattice[0];
            d[(0, 0)] = -amplitude * w * w * (w * x[0]).sin();
        }
        d
    }

    /// Correction scale factor `c(x)` and exponent `p` such that
    /// `r^p k_ab = r^p c(x) delta_ab`.
    fn correction_profile(&self, x: &[f64]) -> (f64, f64, f64, f64) {
        // (p, c, dc/dx1, dr-exponent handled by caller)
        match self.correction {
            Correction::None => (2.0, 0.0, 0.0, 0.0),
            Correction::Quadratic { amplitude } => {
                let w = TAU / self.lattice[0];
                let c = amplitude * (w * x[0]).cos();
                let dc = -amplitude * w * (w * x[0]).sin();
                (2.0, c, dc, -amplitude * w * w * (w * x[0]).cos())
            }
            Correction::Linear { amplitude } => {
                let w = TAU / self.lattice[0];
                let c = amplitude * (w * x[0]).cos();
                let dc = -amplitude * w * (w * x[0]).sin();
                (1.0, c, dc, -amplitude * w * w * (w * x[0]).cos())
            }
        }
    }

    pub fn correction_exponent(&self) -> f64 {
        match self.correction {
            Correction::None | Correction::Quadratic { .. } => 2.0,
            Correction::Linear { .. } => 1.0,
        }
    }

    /// Boundary metric matrix `ghat_ab(x)` (m x m).
    pub fn ghat(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.dim_boundary;
        let e2l = (2.0 * self.lambda(x)).exp();
        DMatrix::from_diagonal_element(m, m, e2l)
    }

    pub fn sqrt_det_ghat(&self, x: &[f64]) -> f64 {
        (self.dim_boundary as f64 * self.lambda(x)).exp()
    }

    /// Compactified metric `gbar_ij(x, r)` ((m+1) x (m+1), radial index last).
    pub fn gbar(&self, x: &[f64], r: f64) -> DMatrix<f64> {
        let m = self.dim_boundary;
        let mut g = DMatrix::zeros(m + 1, m + 1);
        let e2l = (2.0 * self.lambda(x)).exp();
        let (p, c, _, _) = self.correction_profile(x);
        let rp = r.powf(p);
        for a in 0..m {
            g[(a, a)] = e2l + rp * c;
        }
        g[(m, m)] = 1.0;
        g
    }

    /// First derivatives of `gbar` with respect to the m+1 chart coordinates.
    pub fn dgbar(&self, x: &[f64], r: f64) -> Vec<DMatrix<f64>> {
        let m = self.dim_boundary;
        let e2l = (2.0 * self.lambda(x)).exp();
        let dl = self.dlambda(x);
        let (p, c, dc, _) = self.correction_profile(x);
        let rp = r.powf(p);
        let drp = p * r.powf(p - 1.0);
        let mut out = Vec::with_capacity(m + 1);
        for d in 0..m {
            let mut dg = DMatrix::zeros(m + 1, m + 1);
            let dconf = 2.0 * dl[d] * e2l;
            let dcorr = if d == 0 { rp * dc } else { 0.0 };
            for a in 0..m {
                dg[(a, a)] = dconf + dcorr;
            }
            out.push(dg);
        }
        let mut dg = DMatrix::zeros(m + 1, m + 1);
        for a in 0..m {
            dg[(a, a)] = drp * c;
        }
        out.push(dg);
        out
    }

    /// `gbar^{ab} d_r gbar_ab`, the closed-form source of the barrier equation.
    pub fn radial_trace(&self, x: &[f64], r: f64) -> f64 {
        let m = self.dim_boundary;
        let e2l = (2.0 * self.lambda(x)).exp();
        let (p, c, _, _) = self.correction_profile(x);
        let diag = e2l + r.powf(p) * c;
        let ddiag = p * r.powf(p - 1.0) * c;
        m as f64 * ddiag / diag
    }

    /// Validates invariants on a sampling lattice: positive definiteness of
    /// `ghat` and of `gbar` through the chart, and the role-dependent
    /// correction exponent.
    pub fn validate(&self, role: MetricRole) -> Result<()> {
        if self.dim_boundary == 0 || self.dim_boundary != self.lattice.len() {
            return Err(Error::Config(format!(
                "boundary dimension {} does not match lattice length {}",
                self.dim_boundary,
                self.lattice.len()
            )));
        }
        if self.lattice.iter().any(|&l| l <= 0.0) {
            return Err(Error::Config("lattice periods must be positive".into()));
        }
        if self.r_star <= 0.0 {
            return Err(Error::Config("r_star must be positive".into()));
        }
        if role == MetricRole::Source {
            if let Correction::Linear { .. } = self.correction {
                return Err(Error::Config(
                    "sources require correction exponent p >= 2 (linear correction is target-only)"
                        .into(),
                ));
            }
        }
        let samples = 17usize;
        let radii = [self.r_star, self.r_star / 2.0, self.r_star / 8.0];
        for i in 0..samples {
            let x: Vec<f64> = self
                .lattice
                .iter()
                .map(|&l| l * i as f64 / samples as f64)
                .collect();
            let gh = self.ghat(&x);
            if gh.clone().cholesky().is_none() {
                return Err(Error::DegenerateMetric {
                    x,
                    r: 0.0,
                    what: "ghat not positive definite".into(),
                });
            }
            for &r in &radii {
                let gb = self.gbar(&x, r);
                if gb.clone().cholesky().is_none() {
                    return Err(Error::DegenerateMetric {
                        x,
                        r,
                        what: "gbar not positive definite".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Metric data at one point: `gbar`, its inverse, and the Christoffel symbols
/// of both `gbar` and `g = r^{-2} gbar`. `christoffel_*[k][(i,j)]` is
/// `Gamma^k_{ij}`.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub x: Vec<f64>,
    pub r: f64,
    pub gbar: DMatrix<f64>,
    pub gbar_inv: DMatrix<f64>,
    pub christoffel_gbar: Vec<DMatrix<f64>>,
    pub christoffel_g: Vec<DMatrix<f64>>,
}

/// The conformal-change tensor `X^k_{ij}` with
/// `Gamma(g) = Gamma(gbar) + X` for `g = r^{-2} gbar`.
pub fn conformal_x_tensor(gbar: &DMatrix<f64>, gbar_inv: &DMatrix<f64>, r: f64) -> Vec<DMatrix<f64>> {
    let n = gbar.nrows();
    let inf = n - 1;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut xk = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                if i == k && j == inf {
                    v += 1.0;
                }
                if j == k && i == inf {
                    v += 1.0;
                }
                v -= gbar[(i, j)] * gbar_inv[(k, inf)];
                xk[(i, j)] = -v / r;
            }
        }
        out.push(xk);
    }
    out
}

fn christoffel_from_derivatives(
    ginv: &DMatrix<f64>,
    dg: &[DMatrix<f64>],
) -> Vec<DMatrix<f64>> {
    let n = ginv.nrows();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut gk = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += ginv[(k, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                }
                gk[(i, j)] = 0.5 * s;
            }
        }
        out.push(gk);
    }
    out
}

/// Evaluates the metric jet at `(x, r)`.
pub fn eval_metric_jet(spec: &MetricSpec, x: &[f64], r: f64) -> Result<MetricJet> {
    if !(r > 0.0 && r <= spec.r_star) {
        return Err(Error::Domain(format!(
            "radius {r} outside chart range (0, {}]",
            spec.r_star
        )));
    }
    let gbar = spec.gbar(x, r);
    let chol = gbar.clone().cholesky().ok_or_else(|| Error::DegenerateMetric {
        x: x.to_vec(),
        r,
        what: "gbar not positive definite".into(),
    })?;
    let gbar_inv = chol.inverse();
    let dg = spec.dgbar(x, r);
    let christoffel_gbar = christoffel_from_derivatives(&gbar_inv, &dg);
    let xt = conformal_x_tensor(&gbar, &gbar_inv, r);
    let christoffel_g: Vec<DMatrix<f64>> = christoffel_gbar
        .iter()
        .zip(&xt)
        .map(|(g, x)| g + x)
        .collect();
    Ok(MetricJet {
        x: x.to_vec(),
        r,
        gbar,
        gbar_inv,
        christoffel_gbar,
        christoffel_g,
    })
}

/// Riemann tensor `R^l_{ijk}` of `g` at a point, by fourth-order central
/// differences of the Christoffel field with Richardson extrapolation in the
/// radial step. Steps scale with `r` so accuracy survives the metric blowup.
fn riemann_g(spec: &MetricSpec, x: &[f64], r: f64) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let with_step = |hr: f64| -> Result<Vec<Vec<DMatrix<f64>>>> {
        let n = spec.dim_boundary + 1;
        let base = eval_metric_jet(spec, x, r)?;
        // dgamma[d][k] = d_d Gamma^k
        let mut dgamma: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(n);
        for d in 0..n {
            let h = if d < spec.dim_boundary {
                spec.lattice[d] / 512.0
            } else {
                hr
            };
            let eval = |s: f64| -> Result<Vec<DMatrix<f64>>> {
                let mut xx = x.to_vec();
                let mut rr = r;
                if d < spec.dim_boundary {
                    xx[d] += s;
                } else {
                    rr += s;
                }
                Ok(eval_metric_jet(spec, &xx, rr)?.christoffel_g)
            };
            let m2 = eval(-2.0 * h)?;
            let m1 = eval(-h)?;
            let p1 = eval(h)?;
            let p2 = eval(2.0 * h)?;
            let der: Vec<DMatrix<f64>> = (0..n)
                .map(|k| {
                    (&m2[k] - &p2[k]) * (1.0 / (12.0 * h))
                        + (&p1[k] - &m1[k]) * (8.0 / (12.0 * h))
                })
                .collect();
            dgamma.push(der);
        }
        let gam = &base.christoffel_g;
        let mut riem = vec![vec![DMatrix::zeros(n, n); n]; n];
        for l in 0..n {
            for i in 0..n {
                let mut rm = DMatrix::zeros(n, n);
                for j in 0..n {
                    for k in 0..n {
                        let mut v = dgamma[i][l][(j, k)] - dgamma[j][l][(i, k)];
                        for s in 0..n {
                            v += gam[s][(j, k)] * gam[l][(i, s)]
                                - gam[s][(i, k)] * gam[l][(j, s)];
                        }
                        rm[(j, k)] = v;
                    }
                }
                riem[l][i] = rm;
            }
        }
        Ok(riem)
    };
    let cap = (spec.r_star - r).max(0.0) / 2.0;
    let hr = (r / 24.0).min(if cap > 0.0 { cap } else { r / 24.0 }).max(r * 1e-4);
    let coarse = with_step(hr)?;
    let fine = with_step(hr / 2.0)?;
    let n = spec.dim_boundary + 1;
    let mut out = vec![vec![DMatrix::zeros(n, n); n]; n];
    for l in 0..n {
        for i in 0..n {
            out[l][i] = (&fine[l][i] * 16.0 - &coarse[l][i]) * (1.0 / 15.0);
        }
    }
    Ok(out)
}

/// Sectional curvature `K_g` of the plane spanned by `v1`, `v2` at `(x, r)`.
pub fn sectional_curvature_probe(
    spec: &MetricSpec,
    x: &[f64],
    r: f64,
    v1: &[f64],
    v2: &[f64],
) -> Result<f64> {
    let n = spec.dim_boundary + 1;
    if v1.len() != n || v2.len() != n {
        return Err(Error::Domain(format!("plane vectors must have {n} components")));
    }
    let jet = eval_metric_jet(spec, x, r)?;
    let g = &jet.gbar * (1.0 / (r * r));
    let ip = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += g[(i, j)] * a[i] * b[j];
            }
        }
        s
    };
    let n1 = ip(v1, v1);
    let n2 = ip(v2, v2);
    let n12 = ip(v1, v2);
    let denom = n1 * n2 - n12 * n12;
    let gram = denom / (n1 * n2);
    if !(gram > 1e-10) {
        return Err(Error::DegeneratePlane { gram });
    }
    let riem = riemann_g(spec, x, r)?;
    // Rm(v1, v2, v2, v1) = g_{l.} R^l_{ijk} v1^i v2^j v2^k v1^.
    let mut num = 0.0;
    for l in 0..n {
        let mut rv = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    rv += riem[l][i][(j, k)] * v1[i] * v2[j] * v2[k];
                }
            }
        }
        let mut low = 0.0;
        for w in 0..n {
            low += g[(l, w)] * v1[w];
        }
        num += rv * low;
    }
    Ok(num / denom)
}

/// Sup over a boundary sampling lattice of `|Ric(g) + m g|_g` at radius `r`.
pub fn asymptotic_einstein_residual(
    spec: &MetricSpec,
    r: f64,
    samples_per_axis: usize,
) -> Result<f64> {
    let m = spec.dim_boundary;
    let n = m + 1;
    let mut sup: f64 = 0.0;
    let total: usize = samples_per_axis.pow(m as u32);
    for s in 0..total {
        let mut rem = s;
        let mut x = vec![0.0; m];
        for a in 0..m {
            let i = rem % samples_per_axis;
            rem /= samples_per_axis;
            x[a] = spec.lattice[a] * i as f64 / samples_per_axis as f64;
        }
        let riem = riemann_g(spec, &x, r)?;
        let jet = eval_metric_jet(spec, &x, r)?;
        let g = &jet.gbar * (1.0 / (r * r));
        let ginv = &jet.gbar_inv * (r * r);
        // Ric_jk = R^i_{ijk}
        let mut t = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                let mut v = 0.0;
                for i in 0..n {
                    v += riem[i][i][(j, k)];
                }
                t[(j, k)] = v + m as f64 * g[(j, k)];
            }
        }
        let mut norm2 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        norm2 += ginv[(i, k)] * ginv[(j, l)] * t[(i, j)] * t[(k, l)];
                    }
                }
            }
        }
        sup = sup.max(norm2.max(0.0).sqrt());
    }
    Ok(sup)
}

/// Decay diagnostic for the asymptotic Einstein condition: residuals at two
/// radii and the ratio of the r-normalized values
/// `(res(r_lo)/r_lo) / (res(r_hi)/r_hi)`. A ratio well below 1 certifies
/// `o(r)` decay at desk scale; a ratio near 1 refutes it.
pub fn einstein_decay_ratio(
    spec: &MetricSpec,
    r_hi: f64,
    r_lo: f64,
    samples_per_axis: usize,
) -> Result<(f64, f64, f64)> {
    let hi = asymptotic_einstein_residual(spec, r_hi, samples_per_axis)?;
    let lo = asymptotic_einstein_residual(spec, r_lo, samples_per_axis)?;
    Ok((hi, lo, (lo / r_lo) / (hi / r_hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat_spec() -> MetricSpec {
        MetricSpec::exact_hyperbolic(2, vec![TAU, TAU], 0.5)
    }

    #[test]
    fn gbar_identity_for_flat() {
        let spec = flat_spec();
        let jet = eval_metric_jet(&spec, &[0.3, 1.1], 0.2).unwrap();
        assert!((jet.gbar.clone() - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
        assert!((jet.gbar_inv.clone() - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
        for k in 0..3 {
            assert!(jet.christoffel_gbar[k].norm() < 1e-15);
        }
    }

    #[test]
    fn flat_g_christoffels_match_half_space_closed_form() {
        let spec = flat_spec();
        let r = 0.17;
        let jet = eval_metric_jet(&spec, &[0.5, 2.0], r).unwrap();
        let m = 2;
        let inf = m;
        for k in 0..=m {
            for i in 0..=m {
                for j in 0..=m {
                    let mut expect = 0.0;
                    if k == inf && i == inf && j == inf {
                        expect = -1.0 / r;
                    } else if k < m && ((i == k && j == inf) || (j == k && i == inf)) {
                        expect = -1.0 / r;
                    } else if k == inf && i == j && i < m {
                        expect = 1.0 / r;
                    }
                    assert_relative_eq!(jet.christoffel_g[k][(i, j)], expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn x_tensor_identity_holds_exactly() {
        let spec = MetricSpec {
            dim_boundary: 2,
            lattice: vec![TAU, TAU],
            boundary_metric: BoundaryMetric::ConformallyFlat { amplitude: 0.1 },
            correction: Correction::Quadratic { amplitude: 0.05 },
            r_star: 0.5,
        };
        let jet = eval_metric_jet(&spec, &[0.7, 0.2], 0.11).unwrap();
        let xt = conformal_x_tensor(&jet.gbar, &jet.gbar_inv, 0.11);
        for k in 0..3 {
            let diff = &jet.christoffel_g[k] - &jet.christoffel_gbar[k] - &xt[k];
            assert!(diff.norm() < 1e-12, "X-tensor mismatch in component {k}");
        }
    }

    #[test]
    fn christoffels_symmetric_in_lower_indices() {
        let spec = MetricSpec {
            dim_boundary: 2,
            lattice: vec![TAU, 4.0],
            boundary_metric: BoundaryMetric::ConformallyFlat { amplitude: 0.1 },
            correction: Correction::Quadratic { amplitude: 0.03 },
            r_star: 0.5,
        };
        let jet = eval_metric_jet(&spec, &[1.3, 0.4], 0.23).unwrap();
        for k in 0..3 {
            let asym = (&jet.christoffel_g[k] - jet.christoffel_g[k].transpose()).norm();
            assert!(asym < 1e-13);
            let asym = (&jet.christoffel_gbar[k] - jet.christoffel_gbar[k].transpose()).norm();
            assert!(asym < 1e-13);
        }
    }

    #[test]
    fn curvature_is_minus_one_on_exact_model() {
        let spec = flat_spec();
        for &(x0, x1, r) in &[(0.0, 0.0, 0.05), (1.0, 2.5, 0.1), (3.0, 0.3, 0.2)] {
            let k1 = sectional_curvature_probe(&spec, &[x0, x1], r, &[1.0, 0.0, 0.0], &[0.0, 0.5, 0.5]).unwrap();
            let k2 = sectional_curvature_probe(&spec, &[x0, x1], r, &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
            assert!((k1 + 1.0).abs() < 1e-6, "K={k1} at r={r}");
            assert!((k2 + 1.0).abs() < 1e-6, "K={k2} at r={r}");
        }
    }

    #[test]
    fn curvature_basis_independent() {
        let spec = MetricSpec {
            dim_boundary: 1,
            lattice: vec![TAU],
            boundary_metric: BoundaryMetric::Flat,
            correction: Correction::Quadratic { amplitude: 0.05 },
            r_star: 0.5,
        };
        let v1 = [1.0, 0.2];
        let v2 = [0.3, 1.0];
        // same plane, different basis
        let w1 = [1.3, 1.2]; // v1 + v2
        let w2 = [0.7, -0.6]; // v1 - 0.5 v2 ... any independent combo
        let ka = sectional_curvature_probe(&spec, &[0.4], 0.1, &v1, &v2).unwrap();
        let kb = sectional_curvature_probe(&spec, &[0.4], 0.1, &w1, &w2).unwrap();
        assert_relative_eq!(ka, kb, epsilon = 1e-8);
    }

    #[test]
    fn degenerate_plane_rejected() {
        let spec = flat_spec();
        let r = sectional_curvature_probe(&spec, &[0.0, 0.0], 0.1, &[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]);
        assert!(matches!(r, Err(Error::DegeneratePlane { .. })));
    }

    #[test]
    fn einstein_residual_vanishes_on_exact_model() {
        let spec = MetricSpec::exact_hyperbolic(1, vec![TAU], 0.5);
        for &r in &[0.2, 0.1, 0.05] {
            let res = asymptotic_einstein_residual(&spec, r, 5).unwrap();
            assert!(res < 1e-6, "residual {res} at r={r}");
        }
    }

    #[test]
    fn linear_correction_rejected_for_sources() {
        let spec = MetricSpec {
            dim_boundary: 1,
            lattice: vec![TAU],
            boundary_metric: BoundaryMetric::Flat,
            correction: Correction::Linear { amplitude: 0.05 },
            r_star: 0.5,
        };
        assert!(spec.validate(MetricRole::Source).is_err());
        assert!(spec.validate(MetricRole::Target).is_ok());
    }

    #[test]
    fn out_of_chart_radius_rejected() {
        let spec = flat_spec();
        assert!(eval_metric_jet(&spec, &[0.0, 0.0], 0.6).is_err());
        assert!(eval_metric_jet(&spec, &[0.0, 0.0], 0.0).is_err());
        assert!(eval_metric_jet(&spec, &[0.0, 0.0], -0.1).is_err());
    }
}
