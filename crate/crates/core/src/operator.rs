//! Precomputed source-side data for stencil operators on a slab grid: diagonal
//! inverse metric, Christoffel contractions, and radial stencil weights.
//!
//! The metric family is diagonal in normal boundary coordinates, so second
//! derivatives carry no cross terms and every operator here is a
//! `(2m + 3)`-point star stencil.

use std::sync::Arc;

use crate::error::Result;
use crate::geometry::{eval_metric_jet, MetricSpec};
use crate::grid::{Field, RadialStencil, SlabGrid};

pub struct SourceOperator {
    pub grid: Arc<SlabGrid>,
    pub spec: MetricSpec,
    dim: usize,
    /// `g^{kk}` per node, node-major (m+1 entries each).
    g_diag: Vec<f64>,
    /// `C^k = g^{ij} Gamma(g)^k_{ij}` per node.
    contraction: Vec<f64>,
    /// Same data for the compactified metric `gbar`.
    gbar_diag: Vec<f64>,
    contraction_bar: Vec<f64>,
    radial: Vec<RadialStencil>,
    inv_2h: Vec<f64>,
    inv_h2: Vec<f64>,
    /// Lattice neighbor tables per axis: (index, wrap count), lat-major.
    nb_plus: Vec<(u32, i8)>,
    nb_minus: Vec<(u32, i8)>,
}

impl SourceOperator {
    pub fn new(spec: &MetricSpec, grid: Arc<SlabGrid>) -> Result<Self> {
        let m = spec.dim_boundary;
        let dim = m + 1;
        let nodes = grid.node_count();
        let mut g_diag = vec![0.0; nodes * dim];
        let mut contraction = vec![0.0; nodes * dim];
        let mut gbar_diag = vec![0.0; nodes * dim];
        let mut contraction_bar = vec![0.0; nodes * dim];
        for k in 0..grid.num_levels() {
            let r = grid.levels()[k];
            for lat in 0..grid.lat_len() {
                let x = grid.lat_coords(lat);
                let jet = eval_metric_jet(spec, &x, r)?;
                let node = grid.node_index(k, lat);
                for d in 0..dim {
                    let gbar_dd = jet.gbar_inv[(d, d)];
                    gbar_diag[node * dim + d] = gbar_dd;
                    g_diag[node * dim + d] = r * r * gbar_dd;
                    let mut c = 0.0;
                    let mut cbar = 0.0;
                    for i in 0..dim {
                        c += r * r * jet.gbar_inv[(i, i)] * jet.christoffel_g[d][(i, i)];
                        cbar += jet.gbar_inv[(i, i)] * jet.christoffel_gbar[d][(i, i)];
                    }
                    contraction[node * dim + d] = c;
                    contraction_bar[node * dim + d] = cbar;
                }
            }
        }
        let radial = grid.radial_stencils();
        let inv_2h: Vec<f64> = (0..m).map(|a| 0.5 / grid.spacing(a)).collect();
        let inv_h2: Vec<f64> = (0..m)
            .map(|a| 1.0 / (grid.spacing(a) * grid.spacing(a)))
            .collect();
        let ll = grid.lat_len();
        let mut nb_plus = vec![(0u32, 0i8); ll * m];
        let mut nb_minus = vec![(0u32, 0i8); ll * m];
        for lat in 0..ll {
            for a in 0..m {
                let (p, wp) = grid.lat_neighbor(lat, a, 1);
                let (q, wq) = grid.lat_neighbor(lat, a, -1);
                nb_plus[lat * m + a] = (p as u32, wp as i8);
                nb_minus[lat * m + a] = (q as u32, wq as i8);
            }
        }
        Ok(SourceOperator {
            grid,
            spec: spec.clone(),
            dim,
            g_diag,
            contraction,
            gbar_diag,
            contraction_bar,
            radial,
            inv_2h,
            inv_h2,
            nb_plus,
            nb_minus,
        })
    }

    /// Cached lattice neighbor lookup: (lattice index, wrap count).
    #[inline]
    pub fn neighbor(&self, lat: usize, axis: usize, dir: i64) -> (usize, i64) {
        let m = self.dim - 1;
        let (i, w) = if dir > 0 {
            self.nb_plus[lat * m + axis]
        } else {
            self.nb_minus[lat * m + axis]
        };
        (i as usize, w as i64)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn g_diag(&self, node: usize) -> &[f64] {
        &self.g_diag[node * self.dim..(node + 1) * self.dim]
    }

    #[inline]
    pub fn contraction(&self, node: usize) -> &[f64] {
        &self.contraction[node * self.dim..(node + 1) * self.dim]
    }

    #[inline]
    pub fn gbar_diag(&self, node: usize) -> &[f64] {
        &self.gbar_diag[node * self.dim..(node + 1) * self.dim]
    }

    #[inline]
    pub fn contraction_bar(&self, node: usize) -> &[f64] {
        &self.contraction_bar[node * self.dim..(node + 1) * self.dim]
    }

    #[inline]
    pub fn radial_stencil(&self, level: usize) -> &RadialStencil {
        &self.radial[level]
    }

    #[inline]
    pub fn inv_2h(&self, axis: usize) -> f64 {
        self.inv_2h[axis]
    }

    #[inline]
    pub fn inv_h2(&self, axis: usize) -> f64 {
        self.inv_h2[axis]
    }

    /// First and second derivatives of a scalar field at `(level, lat)`:
    /// centered in the periodic directions, ladder stencils radially
    /// (one-sided at walls). Output per direction, radial last.
    pub fn scalar_derivs(
        &self,
        f: &Field,
        level: usize,
        lat: usize,
        d1: &mut [f64],
        d2: &mut [f64],
    ) {
        let m = self.dim - 1;
        let f0 = f.at(level, lat);
        for a in 0..m {
            let (pl, _) = self.grid.lat_neighbor(lat, a, 1);
            let (ml, _) = self.grid.lat_neighbor(lat, a, -1);
            let fp = f.at(level, pl);
            let fm = f.at(level, ml);
            d1[a] = (fp - fm) * self.inv_2h[a];
            d2[a] = (fp - 2.0 * f0 + fm) * self.inv_h2[a];
        }
        let st = &self.radial[level];
        // Apply weights to offsets from the center value: derivative weights
        // annihilate constants, and the subtraction avoids catastrophic
        // cancellation on dense ladders.
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (j, &lev) in st.levels.iter().enumerate() {
            let v = f.at(lev, lat) - f0;
            s1 += st.d1[j] * v;
            s2 += st.d2[j] * v;
        }
        d1[m] = s1;
        d2[m] = s2;
    }

    /// `Delta_g f` (or `Delta_gbar f` with `compactified = true`) on all nodes.
    pub fn laplacian(&self, f: &Field, compactified: bool) -> Field {
        let mut out = Field::zeros(self.grid.clone());
        let m = self.dim - 1;
        let mut d1 = vec![0.0; self.dim];
        let mut d2 = vec![0.0; self.dim];
        for level in 0..self.grid.num_levels() {
            for lat in 0..self.grid.lat_len() {
                let node = self.grid.node_index(level, lat);
                self.scalar_derivs(f, level, lat, &mut d1, &mut d2);
                let (gd, cd) = if compactified {
                    (self.gbar_diag(node), self.contraction_bar(node))
                } else {
                    (self.g_diag(node), self.contraction(node))
                };
                let mut v = 0.0;
                for k in 0..=m {
                    v += gd[k] * d2[k] - cd[k] * d1[k];
                }
                out.data[node] = v;
            }
        }
        out
    }

    /// Linear stencil row of `Delta_g` at an interior node: the center weight
    /// and the weighted neighbor list, so `Delta_g f (node) =
    /// center * f(node) + sum w_i f(node_i)`.
    pub fn stencil_row(&self, level: usize, lat: usize) -> (f64, Vec<(usize, f64)>) {
        let m = self.dim - 1;
        let node = self.grid.node_index(level, lat);
        let gd = self.g_diag(node);
        let cd = self.contraction(node);
        let mut center = 0.0;
        let mut neighbors = Vec::with_capacity(2 * m + 4);
        for a in 0..m {
            let (pl, _) = self.grid.lat_neighbor(lat, a, 1);
            let (ml, _) = self.grid.lat_neighbor(lat, a, -1);
            let w2 = gd[a] * self.inv_h2[a];
            let w1 = cd[a] * self.inv_2h[a];
            center += -2.0 * w2;
            neighbors.push((self.grid.node_index(level, pl), w2 - w1));
            neighbors.push((self.grid.node_index(level, ml), w2 + w1));
        }
        let st = &self.radial[level];
        for (j, &lev) in st.levels.iter().enumerate() {
            let w = gd[m] * st.d2[j] - cd[m] * st.d1[j];
            if lev == level {
                center += w;
            } else {
                neighbors.push((self.grid.node_index(lev, lat), w));
            }
        }
        (center, neighbors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TAU: f64 = std::f64::consts::TAU;

    #[test]
    fn laplacian_exact_model_closed_forms() {
        // Dense ladder over a narrow band so truncation on log r is tiny.
        let spec = MetricSpec::exact_hyperbolic(1, vec![TAU], 1.0);
        let grid = Arc::new(SlabGrid::from_levels(vec![TAU], vec![8], 0.7, 1.0, 2600).unwrap());
        let op = SourceOperator::new(&spec, grid.clone()).unwrap();

        // constant
        let c = Field::from_fn(grid.clone(), |_, _| 3.7);
        let lc = op.laplacian(&c, false);
        assert!(lc.sup_abs() < 1e-9);

        // f = r: Delta_g r = -(m-1) r = 0 for m = 1 (linear fields are exact
        // for the Taylor stencils)
        let fr = Field::from_fn(grid.clone(), |_, r| r);
        let lr = op.laplacian(&fr, false);
        assert!(lr.sup_abs() < 1e-9, "sup {}", lr.sup_abs());

        // f = log r: Delta_g log r = -m
        let fl = Field::from_fn(grid.clone(), |_, r| r.ln());
        let ll = op.laplacian(&fl, false);
        for level in 1..grid.num_levels() - 1 {
            for lat in 0..grid.lat_len() {
                let v = ll.at(level, lat);
                assert!((v + 1.0).abs() < 1e-8, "Delta log r = {v} at level {level}");
            }
        }
    }

    #[test]
    fn laplacian_exact_model_m2_log_r() {
        let spec = MetricSpec::exact_hyperbolic(2, vec![TAU, TAU], 1.0);
        let grid =
            Arc::new(SlabGrid::from_levels(vec![TAU, TAU], vec![4, 4], 0.7, 1.0, 2600).unwrap());
        let op = SourceOperator::new(&spec, grid.clone()).unwrap();
        let fl = Field::from_fn(grid.clone(), |_, r| r.ln());
        let ll = op.laplacian(&fl, false);
        for level in [1usize, 1300, 2599] {
            let v = ll.at(level, 0);
            assert!((v + 2.0).abs() < 1e-8, "Delta log r = {v}");
        }
        // f = r: Delta_g r = -(m-1) r = -r
        let fr = Field::from_fn(grid.clone(), |_, r| r);
        let lr = op.laplacian(&fr, false);
        for level in [1usize, 1300, 2599] {
            let r = grid.levels()[level];
            assert_relative_eq!(lr.at(level, 0), -r, epsilon = 1e-9);
        }
    }

    #[test]
    fn stencil_row_matches_laplacian_apply() {
        let spec = MetricSpec {
            dim_boundary: 1,
            lattice: vec![TAU],
            boundary_metric: crate::geometry::BoundaryMetric::ConformallyFlat { amplitude: 0.1 },
            correction: crate::geometry::Correction::Quadratic { amplitude: 0.05 },
            r_star: 0.5,
        };
        let grid = Arc::new(SlabGrid::from_levels(vec![TAU], vec![12], 0.05, 0.4, 10).unwrap());
        let op = SourceOperator::new(&spec, grid.clone()).unwrap();
        let f = Field::from_fn(grid.clone(), |x, r| (x[0]).sin() * r + 0.3 * r * r);
        let lf = op.laplacian(&f, false);
        for level in 1..grid.num_levels() - 1 {
            for lat in 0..grid.lat_len() {
                let (c, nb) = op.stencil_row(level, lat);
                let node = grid.node_index(level, lat);
                let mut v = c * f.data[node];
                for (j, w) in &nb {
                    v += w * f.data[*j];
                }
                assert_relative_eq!(v, lf.data[node], epsilon = 1e-10, max_relative = 1e-10);
            }
        }
    }
}
