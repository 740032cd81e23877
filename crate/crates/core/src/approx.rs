//! Boundary maps and the global approximate harmonic map built from them via
//! the kernel extension.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{MetricRole, MetricSpec};
use crate::grid::{wrap_diff, Field, SlabGrid};
use crate::kernel::KernelContext;

const TAU: f64 = std::f64::consts::TAU;

/// Closed-form periodic perturbation of the affine part.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    None,
    /// `s^alpha(x) = sin(2 pi x^{alpha mod m} / L_{alpha mod m})`, scaled by the amplitude.
    Sine { amplitude: f64 },
}

/// Boundary map `f: T^m -> T^n`, stored as an integer affine part plus a
/// closed-form periodic perturbation, with its differential.
#[derive(Debug, Clone)]
pub struct BoundaryMap {
    /// Integer matrix `A` (n x m); also the relative homotopy marker.
    pub matrix: Vec<Vec<i64>>,
    pub offset: Vec<f64>,
    pub perturbation: Perturbation,
    pub source_lattice: Vec<f64>,
    pub target_lattice: Vec<f64>,
}

impl BoundaryMap {
    pub fn identity(lattice: Vec<f64>) -> Self {
        let m = lattice.len();
        let mut matrix = vec![vec![0i64; m]; m];
        for a in 0..m {
            matrix[a][a] = 1;
        }
        BoundaryMap {
            matrix,
            offset: vec![0.0; m],
            perturbation: Perturbation::None,
            source_lattice: lattice.clone(),
            target_lattice: lattice,
        }
    }

    pub fn dim_source(&self) -> usize {
        self.source_lattice.len()
    }

    pub fn dim_target(&self) -> usize {
        self.target_lattice.len()
    }

    fn perturbation_value(&self, x: &[f64], alpha: usize) -> f64 {
        match self.perturbation {
            Perturbation::None => 0.0,
            Perturbation::Sine { amplitude } => {
                let a = alpha % self.dim_source();
                amplitude * (TAU * x[a] / self.source_lattice[a]).sin()
            }
        }
    }

    fn perturbation_diff(&self, x: &[f64], alpha: usize, a: usize) -> f64 {
        match self.perturbation {
            Perturbation::None => 0.0,
            Perturbation::Sine { amplitude } => {
                let ax = alpha % self.dim_source();
                if a == ax {
                    let w = TAU / self.source_lattice[a];
                    amplitude * w * (w * x[a]).cos()
                } else {
                    0.0
                }
            }
        }
    }

    /// Unwrapped lift `f^alpha(x) = (A x + b)^alpha + s^alpha(x)`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim_target())
            .map(|alpha| {
                let affine: f64 = (0..self.dim_source())
                    .map(|a| self.matrix[alpha][a] as f64 * x[a])
                    .sum();
                affine + self.offset[alpha] + self.perturbation_value(x, alpha)
            })
            .collect()
    }

    /// `df = A + ds` (n x m).
    pub fn differential(&self, x: &[f64]) -> DMatrix<f64> {
        let (n, m) = (self.dim_target(), self.dim_source());
        DMatrix::from_fn(n, m, |alpha, a| {
            self.matrix[alpha][a] as f64 + self.perturbation_diff(x, alpha, a)
        })
    }

    /// Checks lattice compatibility (`A` maps the source lattice into the
    /// target lattice) and the nowhere-vanishing differential on a sampling
    /// lattice (min singular value >= 1e-3).
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.dim_target(), self.dim_source());
        if self.matrix.len() != n || self.matrix.iter().any(|row| row.len() != m) {
            return Err(Error::Config(format!("boundary map matrix must be {n} x {m}")));
        }
        if self.offset.len() != n {
            return Err(Error::Config(format!("boundary map offset must have {n} entries")));
        }
        if n < m {
            return Err(Error::DegenerateData(format!(
                "differential cannot have full rank {m} into a {n}-dimensional boundary"
            )));
        }
        for a in 0..m {
            for alpha in 0..n {
                let ratio = self.matrix[alpha][a] as f64 * self.source_lattice[a]
                    / self.target_lattice[alpha];
                if (ratio - ratio.round()).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "lattice incompatibility: A[{alpha}][{a}] * L_{a} = {} is not a multiple \
                         of the target period {}",
                        self.matrix[alpha][a] as f64 * self.source_lattice[a],
                        self.target_lattice[alpha]
                    )));
                }
            }
        }
        let samples = 64usize;
        for i in 0..samples {
            let x: Vec<f64> = self
                .source_lattice
                .iter()
                .map(|&l| l * i as f64 / samples as f64)
                .collect();
            let df = self.differential(&x);
            let smin = df.svd(false, false).singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(smin >= 1e-3) {
                return Err(Error::DegenerateData(format!(
                    "differential nearly singular at x={x:?}: min singular value {smin:.3e}"
                )));
            }
        }
        Ok(())
    }
}

/// Boundary energy density of `f` with respect to `ghat` and `hhat`:
/// `e_hat(f) = ghat^{ab} hhat_{alpha beta}(f(x)) df^alpha_a df^beta_b`.
pub fn boundary_energy_density(
    f: &BoundaryMap,
    source: &MetricSpec,
    target: &MetricSpec,
    x: &[f64],
) -> Result<f64> {
    let df = f.differential(x);
    let smin = df
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(smin >= 1e-3) {
        return Err(Error::DegenerateData(format!(
            "differential nearly singular at x={x:?}: min singular value {smin:.3e}"
        )));
    }
    let ghat = source.ghat(x);
    let ghat_inv = ghat
        .cholesky()
        .ok_or_else(|| Error::DegenerateMetric {
            x: x.to_vec(),
            r: 0.0,
            what: "ghat not positive definite".into(),
        })?
        .inverse();
    let y = f.eval(x);
    let hhat = target.ghat(&y);
    let (m, n) = (f.dim_source(), f.dim_target());
    let mut e = 0.0;
    for a in 0..m {
        for b in 0..m {
            for al in 0..n {
                for be in 0..n {
                    e += ghat_inv[(a, b)] * hhat[(al, be)] * df[(al, a)] * df[(be, b)];
                }
            }
        }
    }
    Ok(e)
}

/// Discretized map `u = (u^1..u^n, rho)` on a slab grid. Tangential components
/// are stored as unwrapped real-valued lifts; reading across the periodic seam
/// adds the exact lattice jump determined by the homotopy marker.
#[derive(Debug, Clone)]
pub struct MapField {
    pub grid: Arc<SlabGrid>,
    pub tangential: Vec<Field>,
    pub rho: Field,
    /// Integer matrix `A`, the relative homotopy class marker.
    pub homotopy: Vec<Vec<i64>>,
    pub target_lattice: Vec<f64>,
}

impl MapField {
    pub fn n_target(&self) -> usize {
        self.tangential.len()
    }

    /// Seam jump of component `comp` across axis `axis`.
    pub fn jump(&self, comp: usize, axis: usize) -> f64 {
        self.homotopy[comp][axis] as f64 * self.grid.lattice()[axis]
    }

    /// Tangential value at the lattice neighbor, lift-corrected across the seam.
    #[inline]
    pub fn tangential_neighbor(
        &self,
        comp: usize,
        level: usize,
        lat: usize,
        axis: usize,
        dir: i64,
    ) -> f64 {
        let (nl, wrap) = self.grid.lat_neighbor(lat, axis, dir);
        self.tangential[comp].at(level, nl) + wrap as f64 * self.jump(comp, axis)
    }

    /// The identity map of the exact model (`u^alpha = x^alpha`, `rho = r`);
    /// requires equal source and target dimensions.
    pub fn identity(grid: Arc<SlabGrid>) -> Self {
        let m = grid.dim_boundary();
        let tangential: Vec<Field> = (0..m)
            .map(|a| Field::from_fn(grid.clone(), |x, _| x[a]))
            .collect();
        let rho = Field::from_fn(grid.clone(), |_, r| r);
        let mut homotopy = vec![vec![0i64; m]; m];
        for a in 0..m {
            homotopy[a][a] = 1;
        }
        let target_lattice = grid.lattice().to_vec();
        MapField {
            grid,
            tangential,
            rho,
            homotopy,
            target_lattice,
        }
    }

    pub fn same_class(&self, other: &MapField) -> bool {
        self.homotopy == other.homotopy
            && self.target_lattice == other.target_lattice
            && self.grid.lattice() == other.grid.lattice()
            && self.grid.n_axis() == other.grid.n_axis()
            && self.grid.num_levels() == other.grid.num_levels()
    }

    /// Sup over all nodes of the componentwise chart difference to `other`.
    pub fn sup_chart_distance(&self, other: &MapField) -> f64 {
        let mut sup: f64 = 0.0;
        for c in 0..self.n_target() {
            for (a, b) in self.tangential[c].data.iter().zip(&other.tangential[c].data) {
                sup = sup.max((a - b).abs());
            }
        }
        for (a, b) in self.rho.data.iter().zip(&other.rho.data) {
            sup = sup.max((a - b).abs());
        }
        sup
    }
}

/// Builds the approximate solution `v` from boundary data: tangential
/// components `v^alpha = w^alpha - r dw^alpha/dr` from the kernel extension of
/// the lifted boundary map, and `rho = r w` with `w` the extension of
/// `sqrt(e_hat(f)/m)`.
pub fn build_approximate_solution(
    f: &BoundaryMap,
    ctx: &KernelContext,
    target: &MetricSpec,
    grid: Arc<SlabGrid>,
) -> Result<MapField> {
    f.validate()?;
    target.validate(MetricRole::Target)?;
    let m = f.dim_source();
    let n = f.dim_target();
    let mut tangential = Vec::with_capacity(n);
    for alpha in 0..n {
        // Unwrap the affine part of the lift around the evaluation point; the
        // periodic remainder is read at the quadrature point directly.
        let ext = ctx.extend_with(grid.clone(), |x_eval, y, _| {
            let mut v = f.offset[alpha] + f.perturbation_value(y, alpha);
            for a in 0..m {
                let rep = x_eval[a] + wrap_diff(y[a] - x_eval[a], f.source_lattice[a]);
                v += f.matrix[alpha][a] as f64 * rep;
            }
            v
        })?;
        let mut comp = Field::zeros(grid.clone());
        for k in 0..grid.num_levels() {
            let r = grid.levels()[k];
            for lat in 0..grid.lat_len() {
                let nidx = grid.node_index(k, lat);
                comp.data[nidx] = ext.w.data[nidx] - r * ext.dw_dr.data[nidx];
            }
        }
        tangential.push(comp);
    }
    let mf = m as f64;
    let source = &ctx.spec;
    // Guard the Neumann data before integrating it.
    let e_min = (0..64)
        .map(|i| {
            let x: Vec<f64> = f
                .source_lattice
                .iter()
                .map(|&l| l * i as f64 / 64.0)
                .collect();
            boundary_energy_density(f, source, target, &x)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if !(e_min > 0.0) {
        return Err(Error::DegenerateData(format!(
            "boundary energy density not positive (min {e_min:.3e})"
        )));
    }
    // Neumann data at the quadrature nodes, tabulated once.
    let neumann: Vec<f64> = (0..ctx.quadrature.len())
        .map(|qi| {
            boundary_energy_density(f, source, target, ctx.quadrature.point(qi))
                .map(|e| (e / mf).sqrt())
        })
        .collect::<Result<_>>()?;
    let ext = ctx.extend_with(grid.clone(), |_, _, qi| neumann[qi])?;
    let mut rho = Field::zeros(grid.clone());
    for k in 0..grid.num_levels() {
        let r = grid.levels()[k];
        for lat in 0..grid.lat_len() {
            let nidx = grid.node_index(k, lat);
            rho.data[nidx] = r * ext.w.data[nidx];
        }
    }
    let rho_min = rho.data.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(rho_min > 0.0) {
        return Err(Error::DegenerateData(format!(
            "built radial component not positive (min {rho_min:.3e}); \
             boundary energy density or quadrature resolution is inconsistent"
        )));
    }
    Ok(MapField {
        grid,
        tangential,
        rho,
        homotopy: f.matrix.clone(),
        target_lattice: f.target_lattice.clone(),
    })
}

/// Convex blend of two maps in target chart coordinates:
/// `(1 - psi) v1 + psi v2` componentwise, including the radial component.
pub fn blend_maps(v1: &MapField, v2: &MapField, psi: &Field) -> Result<MapField> {
    if !v1.same_class(v2) {
        return Err(Error::Homotopy(
            "blend operands must share grid and homotopy class".into(),
        ));
    }
    if psi.data.len() != v1.grid.node_count() {
        return Err(Error::Config("cutoff field does not match the grid".into()));
    }
    if psi.data.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::Domain("cutoff field must take values in [0, 1]".into()));
    }
    let mut out = v1.clone();
    for c in 0..v1.n_target() {
        for i in 0..out.tangential[c].data.len() {
            let p = psi.data[i];
            out.tangential[c].data[i] =
                (1.0 - p) * v1.tangential[c].data[i] + p * v2.tangential[c].data[i];
        }
    }
    for i in 0..out.rho.data.len() {
        let p = psi.data[i];
        out.rho.data[i] = (1.0 - p) * v1.rho.data[i] + p * v2.rho.data[i];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat_pair() -> (MetricSpec, MetricSpec) {
        (
            MetricSpec::exact_hyperbolic(1, vec![TAU], 0.5),
            MetricSpec::exact_hyperbolic(1, vec![TAU], 0.5),
        )
    }

    #[test]
    fn energy_density_identity_is_m() {
        let (s, t) = flat_pair();
        let f = BoundaryMap::identity(vec![TAU]);
        let e = boundary_energy_density(&f, &s, &t, &[1.2]).unwrap();
        assert_relative_eq!(e, 1.0, epsilon = 1e-14);

        let s2 = MetricSpec::exact_hyperbolic(2, vec![TAU, TAU], 0.5);
        let f2 = BoundaryMap::identity(vec![TAU, TAU]);
        let e2 = boundary_energy_density(&f2, &s2, &s2, &[0.3, 2.2]).unwrap();
        assert_relative_eq!(e2, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn energy_density_sine_perturbation_closed_form() {
        let (s, t) = flat_pair();
        let a = 0.2;
        let f = BoundaryMap {
            matrix: vec![vec![1]],
            offset: vec![0.0],
            perturbation: Perturbation::Sine { amplitude: a },
            source_lattice: vec![TAU],
            target_lattice: vec![TAU],
        };
        for &x in &[0.0, 0.7, 2.0, 4.4] {
            let e = boundary_energy_density(&f, &s, &t, &[x]).unwrap();
            let expect = (1.0 + a * x.cos()).powi(2);
            assert_relative_eq!(e, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn energy_density_degree_two_is_four() {
        let (s, t) = flat_pair();
        let f = BoundaryMap {
            matrix: vec![vec![2]],
            offset: vec![0.1],
            perturbation: Perturbation::None,
            source_lattice: vec![TAU],
            target_lattice: vec![TAU],
        };
        f.validate().unwrap();
        let e = boundary_energy_density(&f, &s, &t, &[2.5]).unwrap();
        assert_relative_eq!(e, 4.0, epsilon = 1e-14);
    }

    #[test]
    fn constant_map_rejected() {
        let f = BoundaryMap {
            matrix: vec![vec![0]],
            offset: vec![1.0],
            perturbation: Perturbation::None,
            source_lattice: vec![TAU],
            target_lattice: vec![TAU],
        };
        assert!(matches!(f.validate(), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn lattice_incompatibility_rejected() {
        let f = BoundaryMap {
            matrix: vec![vec![1]],
            offset: vec![0.0],
            perturbation: Perturbation::None,
            source_lattice: vec![std::f64::consts::PI],
            target_lattice: vec![TAU],
        };
        assert!(matches!(f.validate(), Err(Error::Config(_))));
        // the reverse direction (period-halving cover) is fine
        let f = BoundaryMap {
            matrix: vec![vec![1]],
            offset: vec![0.0],
            perturbation: Perturbation::None,
            source_lattice: vec![TAU],
            target_lattice: vec![std::f64::consts::PI],
        };
        assert!(f.validate().is_ok());
    }

    #[test]
    fn blend_endpoints_and_idempotence() {
        let grid = Arc::new(
            SlabGrid::from_levels(vec![TAU], vec![8], 0.05, 0.2, 6).unwrap(),
        );
        let v1 = MapField::identity(grid.clone());
        let mut v2 = v1.clone();
        for d in v2.rho.data.iter_mut() {
            *d *= 1.1;
        }
        let zero = Field::zeros(grid.clone());
        let one = Field::from_fn(grid.clone(), |_, _| 1.0);
        let half = Field::from_fn(grid.clone(), |_, _| 0.5);
        let b0 = blend_maps(&v1, &v2, &zero).unwrap();
        assert_eq!(b0.rho.data, v1.rho.data);
        let b1 = blend_maps(&v1, &v2, &one).unwrap();
        assert_eq!(b1.rho.data, v2.rho.data);
        let bi = blend_maps(&v1, &v1, &half).unwrap();
        assert_eq!(bi.rho.data, v1.rho.data);
        assert_eq!(bi.tangential[0].data, v1.tangential[0].data);
    }

    #[test]
    fn blend_rejects_class_mismatch_and_bad_cutoff() {
        let grid = Arc::new(
            SlabGrid::from_levels(vec![TAU], vec![8], 0.05, 0.2, 6).unwrap(),
        );
        let v1 = MapField::identity(grid.clone());
        let mut v2 = v1.clone();
        v2.homotopy[0][0] = 2;
        let half = Field::from_fn(grid.clone(), |_, _| 0.5);
        assert!(matches!(blend_maps(&v1, &v2, &half), Err(Error::Homotopy(_))));
        let bad = Field::from_fn(grid.clone(), |_, _| 1.5);
        assert!(matches!(
            blend_maps(&v1, &v1, &bad),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn seam_reads_add_exact_lattice_jump() {
        let grid = Arc::new(
            SlabGrid::from_levels(vec![TAU], vec![16], 0.05, 0.2, 6).unwrap(),
        );
        let mut u = MapField::identity(grid.clone());
        u.homotopy = vec![vec![2]];
        for k in 0..grid.num_levels() {
            for lat in 0..grid.lat_len() {
                let n = grid.node_index(k, lat);
                u.tangential[0].data[n] = 2.0 * grid.lat_coords(lat)[0];
            }
        }
        // stepping left from lattice point 0 must see the lift continue linearly
        let v = u.tangential_neighbor(0, 0, 0, 0, -1);
        let expect = 2.0 * (grid.lat_coords(grid.lat_len() - 1)[0] - TAU);
        assert_relative_eq!(v, expect, epsilon = 1e-12);
    }
}
