//! Slab discretization: a periodic boundary lattice crossed with a geometric
//! radial ladder, plus scalar fields and finite-difference weights on it.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Finite-difference weights by the Fornberg recursion.
///
/// Returns `weights[d][j]`: the weight of sample `xs[j]` in the approximation
/// of the `d`-th derivative at `z`, for every `d <= max_order`.
pub fn fd_weights(z: f64, xs: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    assert!(n > max_order, "need more samples than derivative order");
    let mut c = vec![vec![vec![0.0; n]; max_order + 1]; n];
    c[0][0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k][i] = c1 * (k as f64 * c[i - 1][k - 1][i - 1]
                        - c5 * c[i - 1][k][i - 1])
                        / c2;
                }
                c[i][0][i] = -c1 * c5 * c[i - 1][0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[i][k][j] = (c4 * c[i - 1][k][j] - k as f64 * c[i - 1][k - 1][j]) / c3;
            }
            c[i][0][j] = c4 * c[i - 1][0][j] / c3;
        }
        c1 = c2;
    }
    (0..=max_order)
        .map(|d| (0..n).map(|j| c[n - 1][d][j]).collect())
        .collect()
}

/// Radial stencil for one ladder level: sample level offsets and per-derivative
/// weights (first and second derivative).
#[derive(Debug, Clone)]
pub struct RadialStencil {
    /// Level indices entering the stencil.
    pub levels: Vec<usize>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

/// Tensor-product grid on `T^m x [r_min, r_max]`: `n_axis[a]` uniformly spaced
/// points per periodic axis, radial levels `r_k = r_max * q^k` descending from
/// the outer wall (`k = 0`) to the inner wall near the boundary (`k = K`).
#[derive(Debug, Clone)]
pub struct SlabGrid {
    lattice: Vec<f64>,
    n_axis: Vec<usize>,
    levels: Vec<f64>,
    ratio: f64,
    strides: Vec<usize>,
    lat_len: usize,
}

impl SlabGrid {
    /// Builds a ladder with `num_levels` intervals, deriving the ratio so the
    /// last level lands exactly on `r_min`.
    pub fn from_levels(
        lattice: Vec<f64>,
        n_axis: Vec<usize>,
        r_min: f64,
        r_max: f64,
        num_levels: usize,
    ) -> Result<Self> {
        if num_levels == 0 {
            return Err(Error::Config("radial ladder needs at least one interval".into()));
        }
        if !(r_min > 0.0 && r_min < r_max) {
            return Err(Error::Config(format!(
                "need 0 < r_min < r_max, got r_min={r_min}, r_max={r_max}"
            )));
        }
        let q = (r_min / r_max).powf(1.0 / num_levels as f64);
        Self::build(lattice, n_axis, r_max, q, num_levels)
    }

    /// Builds a ladder from a ratio `q`; the number of intervals is chosen so
    /// the inner wall lands as close as possible to `r_min`, and `q` is then
    /// adjusted to hit it exactly.
    pub fn from_ratio(
        lattice: Vec<f64>,
        n_axis: Vec<usize>,
        r_min: f64,
        r_max: f64,
        q: f64,
    ) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Config(format!("ladder ratio must be in (0,1), got {q}")));
        }
        if !(r_min > 0.0 && r_min < r_max) {
            return Err(Error::Config(format!(
                "need 0 < r_min < r_max, got r_min={r_min}, r_max={r_max}"
            )));
        }
        let k = ((r_min / r_max).ln() / q.ln()).round().max(1.0) as usize;
        Self::from_levels(lattice, n_axis, r_min, r_max, k)
    }

    /// Rebuilds a grid from explicitly stored ladder levels (file loading).
    pub fn from_stored_levels(
        lattice: Vec<f64>,
        n_axis: Vec<usize>,
        levels: Vec<f64>,
    ) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::Format("stored ladder needs at least two levels".into()));
        }
        let q = levels[1] / levels[0];
        for w in levels.windows(2) {
            if !(w[1] > 0.0 && w[1] < w[0]) {
                return Err(Error::Format("stored ladder must be positive and descending".into()));
            }
            if (w[1] / w[0] - q).abs() > 1e-9 {
                return Err(Error::Format("stored ladder is not geometric".into()));
            }
        }
        let mut grid = Self::build(lattice, n_axis, levels[0], q, levels.len() - 1)?;
        grid.levels = levels;
        Ok(grid)
    }

    fn build(
        lattice: Vec<f64>,
        n_axis: Vec<usize>,
        r_max: f64,
        q: f64,
        num_levels: usize,
    ) -> Result<Self> {
        if lattice.is_empty() || lattice.len() != n_axis.len() {
            return Err(Error::Config(
                "lattice and per-axis node counts must agree and be nonempty".into(),
            ));
        }
        if lattice.iter().any(|&l| l <= 0.0) {
            return Err(Error::Config("lattice periods must be positive".into()));
        }
        if n_axis.iter().any(|&n| n < 4) {
            return Err(Error::Config("need at least 4 nodes per periodic axis".into()));
        }
        if !(q > 0.5 && q < 1.0) {
            return Err(Error::Config(format!(
                "ladder ratio must lie in (0.5, 1), got {q:.6}; adjust r range or level count"
            )));
        }
        let levels: Vec<f64> = (0..=num_levels).map(|k| r_max * q.powi(k as i32)).collect();
        let mut strides = vec![0usize; n_axis.len()];
        let mut acc = 1usize;
        for a in (0..n_axis.len()).rev() {
            strides[a] = acc;
            acc *= n_axis[a];
        }
        Ok(SlabGrid {
            lattice,
            n_axis,
            levels,
            ratio: q,
            strides,
            lat_len: acc,
        })
    }

    pub fn dim_boundary(&self) -> usize {
        self.lattice.len()
    }

    pub fn lattice(&self) -> &[f64] {
        &self.lattice
    }

    pub fn n_axis(&self) -> &[usize] {
        &self.n_axis
    }

    /// Radial levels, descending: `levels()[0] = r_max`, last entry `= r_min`.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn r_min(&self) -> f64 {
        *self.levels.last().unwrap()
    }

    pub fn r_max(&self) -> f64 {
        self.levels[0]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Nodes per radial level.
    pub fn lat_len(&self) -> usize {
        self.lat_len
    }

    pub fn node_count(&self) -> usize {
        self.lat_len * self.levels.len()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lattice[axis] / self.n_axis[axis] as f64
    }

    pub fn node_index(&self, level: usize, lat: usize) -> usize {
        level * self.lat_len + lat
    }

    pub fn split_index(&self, node: usize) -> (usize, usize) {
        (node / self.lat_len, node % self.lat_len)
    }

    pub fn lat_coords(&self, lat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n_axis.len()];
        let mut rem = lat;
        for a in 0..self.n_axis.len() {
            let i = rem / self.strides[a];
            rem %= self.strides[a];
            x[a] = i as f64 * self.spacing(a);
        }
        x
    }

    /// Neighbor along `axis` in direction `dir` (+1/-1), wrapping periodically.
    /// The second value is the wrap count ((+1 when stepping past the seam in
    /// the + direction, -1 past it in the - direction, else 0); components with
    /// an affine lift add `wrap * A * L` when reading across the seam.
    pub fn lat_neighbor(&self, lat: usize, axis: usize, dir: i64) -> (usize, i64) {
        let n = self.n_axis[axis] as i64;
        let i = ((lat / self.strides[axis]) % self.n_axis[axis]) as i64;
        let mut j = i + dir;
        let mut wrap = 0i64;
        while j < 0 {
            j += n;
            wrap -= 1;
        }
        while j >= n {
            j -= n;
            wrap += 1;
        }
        let base = lat as i64 - i * self.strides[axis] as i64;
        ((base + j * self.strides[axis] as i64) as usize, wrap)
    }

    /// Centered/one-sided radial stencils per level, from exact Taylor weights
    /// on the nonuniform ladder. Interior rows use 3 points; wall rows use
    /// one-sided 4-point stencils so second derivatives stay second order.
    pub fn radial_stencils(&self) -> Vec<RadialStencil> {
        let nk = self.levels.len();
        (0..nk)
            .map(|k| {
                let idx: Vec<usize> = if nk < 4 {
                    (0..nk).collect()
                } else if k == 0 {
                    vec![0, 1, 2, 3]
                } else if k == nk - 1 {
                    vec![nk - 4, nk - 3, nk - 2, nk - 1]
                } else {
                    vec![k - 1, k, k + 1]
                };
                let xs: Vec<f64> = idx.iter().map(|&j| self.levels[j]).collect();
                let w = fd_weights(self.levels[k], &xs, 2);
                RadialStencil {
                    levels: idx,
                    d1: w[1].clone(),
                    d2: w[2].clone(),
                }
            })
            .collect()
    }

    /// Index of the level closest to `r`.
    pub fn level_at(&self, r: f64) -> usize {
        let mut best = 0;
        let mut gap = f64::INFINITY;
        for (k, &rk) in self.levels.iter().enumerate() {
            let g = (rk - r).abs();
            if g < gap {
                gap = g;
                best = k;
            }
        }
        best
    }
}

/// Scalar field sampled on a [`SlabGrid`].
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: Arc<SlabGrid>,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Arc<SlabGrid>) -> Self {
        let n = grid.node_count();
        Field {
            grid,
            data: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<SlabGrid>, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.node_count());
        for k in 0..grid.num_levels() {
            let r = grid.levels()[k];
            for lat in 0..grid.lat_len() {
                data.push(f(&grid.lat_coords(lat), r));
            }
        }
        Field { grid, data }
    }

    pub fn at(&self, level: usize, lat: usize) -> f64 {
        self.data[self.grid.node_index(level, lat)]
    }

    pub fn sup_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Sup of |field| over one radial level.
    pub fn level_sup_abs(&self, level: usize) -> f64 {
        let s = self.grid.node_index(level, 0);
        self.data[s..s + self.grid.lat_len()]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Wraps a coordinate difference to the symmetric fundamental domain
/// `[-L/2, L/2)`.
pub fn wrap_diff(d: f64, period: f64) -> f64 {
    let mut w = d % period;
    if w < -period / 2.0 {
        w += period;
    } else if w >= period / 2.0 {
        w -= period;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fornberg_matches_uniform_stencils() {
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_relative_eq!(w[1][0], -0.5, epsilon = 1e-14);
        assert_relative_eq!(w[1][2], 0.5, epsilon = 1e-14);
        assert_relative_eq!(w[2][0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(w[2][1], -2.0, epsilon = 1e-14);
        assert_relative_eq!(w[2][2], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn fornberg_exact_on_polynomials_nonuniform() {
        // 4-point one-sided stencil must differentiate cubics exactly.
        let xs = [0.3, 0.45, 0.7, 1.1];
        let z = 0.3;
        let w = fd_weights(z, &xs, 2);
        let f = |x: f64| 2.0 - x + 3.0 * x * x + 0.5 * x * x * x;
        let df = |x: f64| -1.0 + 6.0 * x + 1.5 * x * x;
        let d2f = |x: f64| 6.0 + 3.0 * x;
        let d1: f64 = xs.iter().zip(&w[1]).map(|(&x, &c)| c * f(x)).sum();
        let d2: f64 = xs.iter().zip(&w[2]).map(|(&x, &c)| c * f(x)).sum();
        assert_relative_eq!(d1, df(z), epsilon = 1e-11);
        assert_relative_eq!(d2, d2f(z), epsilon = 1e-10);
    }

    #[test]
    fn ladder_lands_on_r_min() {
        let g = SlabGrid::from_levels(vec![2.0 * std::f64::consts::PI], vec![16], 0.0125, 0.2, 64)
            .unwrap();
        assert_eq!(g.num_levels(), 65);
        assert_relative_eq!(g.r_min(), 0.0125, epsilon = 1e-12);
        assert_relative_eq!(g.r_max(), 0.2, epsilon = 1e-15);
        assert!(g.ratio() > 0.5 && g.ratio() < 1.0);
        // strictly descending
        for k in 1..g.num_levels() {
            assert!(g.levels()[k] < g.levels()[k - 1]);
        }
    }

    #[test]
    fn ladder_ratio_out_of_range_rejected() {
        let r = SlabGrid::from_levels(vec![1.0], vec![8], 1e-6, 1.0, 4);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn wrap_neighbor_roundtrip() {
        let g = SlabGrid::from_levels(vec![1.0, 2.0], vec![4, 6], 0.1, 0.4, 8).unwrap();
        let lat = g.node_index(0, 0) + 5; // arbitrary lattice point
        let (fwd, w1) = g.lat_neighbor(lat, 1, 1);
        let (back, w2) = g.lat_neighbor(fwd, 1, -1);
        assert_eq!(back, lat);
        assert_eq!(w1 + w2, 0);
        // full cycle wraps exactly once
        let mut cur = lat;
        let mut wraps = 0;
        for _ in 0..6 {
            let (nxt, w) = g.lat_neighbor(cur, 1, 1);
            cur = nxt;
            wraps += w;
        }
        assert_eq!(cur, lat);
        assert_eq!(wraps, 1);
    }

    #[test]
    fn wrap_diff_symmetric_domain() {
        assert_relative_eq!(wrap_diff(5.9, 6.0), -0.1, epsilon = 1e-12);
        assert_relative_eq!(wrap_diff(-5.9, 6.0), 0.1, epsilon = 1e-12);
        assert_relative_eq!(wrap_diff(3.0, 6.0), -3.0, epsilon = 1e-12);
    }
}
