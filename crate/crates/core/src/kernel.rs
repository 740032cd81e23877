//! Modified squared distance, approximate Poisson kernel, torus quadrature,
//! and the boundary extension operator.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{eval_metric_jet, MetricRole, MetricSpec};
use crate::grid::{wrap_diff, Field, SlabGrid};

/// `Gamma(n/2)` for positive integer `n`, exact for integer and half-integer
/// arguments.
pub fn gamma_of_half(n: u32) -> f64 {
    assert!(n >= 1);
    if n % 2 == 0 {
        // Gamma(k) = (k-1)!
        let k = n / 2;
        (1..k).map(|i| i as f64).product()
    } else {
        // Gamma(j + 1/2) = (2j)! sqrt(pi) / (4^j j!)
        let j = (n - 1) / 2;
        let mut v = std::f64::consts::PI.sqrt();
        for i in 1..=j {
            v *= (i as f64) - 0.5;
        }
        v
    }
}

/// Normalization `c_m = 2 / sigma_m` where `sigma_m` is the volume of the unit
/// sphere in `R^{m+1}`.
pub fn poisson_normalization(m: usize) -> f64 {
    let half = (m + 1) as f64 / 2.0;
    gamma_of_half((m + 1) as u32) / std::f64::consts::PI.powf(half)
}

/// `C^infty` monotone step: 0 for `u <= 0`, 1 for `u >= 1`, built from
/// `exp(-1/u)`. Returns `(s, s', s'')`.
pub fn smoothstep_jet(u: f64) -> (f64, f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if u >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let e = |t: f64| (-1.0 / t).exp();
    let e1 = |t: f64| (-1.0 / t).exp() / (t * t);
    let e2 = |t: f64| (-1.0 / t).exp() * (1.0 / t.powi(4) - 2.0 / t.powi(3));
    let (a, b) = (e(u), e(1.0 - u));
    let (ap, bp) = (e1(u), -e1(1.0 - u));
    let (app, bpp) = (e2(u), e2(1.0 - u));
    let dn = a + b;
    let s = a / dn;
    let n1 = ap * b - a * bp;
    let sp = n1 / (dn * dn);
    let spp = ((app * b - a * bpp) * dn - 2.0 * n1 * (ap + bp)) / (dn * dn * dn);
    (s, sp, spp)
}

/// Modified squared distance `D` on the torus boundary: exactly the squared
/// geodesic-estimate distance near the diagonal, blended to the constant
/// plateau `delta^2` so the cut locus lies in the flat region.
#[derive(Debug, Clone)]
pub struct ModifiedDistance {
    spec: MetricSpec,
    /// Plateau threshold: half the shortest lattice period times the minimum
    /// conformal factor.
    pub injectivity_radius: f64,
    pub blend_width: f64,
    conformal: bool,
}

impl ModifiedDistance {
    pub fn new(spec: &MetricSpec) -> Self {
        let min_period = spec.lattice.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut min_factor: f64 = 1.0;
        let conformal = !matches!(
            spec.boundary_metric,
            crate::geometry::BoundaryMetric::Flat
        );
        if conformal {
            let samples = 512;
            for i in 0..samples {
                let x = vec![spec.lattice[0] * i as f64 / samples as f64; spec.dim_boundary];
                min_factor = min_factor.min(spec.lambda(&x).exp());
            }
        }
        let delta = 0.5 * min_period * min_factor;
        ModifiedDistance {
            spec: spec.clone(),
            injectivity_radius: delta,
            blend_width: delta / 4.0,
            conformal,
        }
    }

    /// Conformal-factor-weighted lattice distance used as `d_ghat`.
    pub fn geodesic_estimate(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut l2 = 0.0;
        for a in 0..x.len() {
            let d = wrap_diff(x[a] - y[a], self.spec.lattice[a]);
            l2 += d * d;
        }
        let m = if self.conformal {
            0.5 * (self.spec.lambda(x).exp() + self.spec.lambda(y).exp())
        } else {
            1.0
        };
        m * l2.sqrt()
    }

    /// `sigma = (M l)^2`, the squared weighted distance, with first and second
    /// derivatives in `x`. Smooth across the diagonal.
    fn sigma_jet(&self, x: &[f64], y: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let m = x.len();
        let mut dvec = vec![0.0; m];
        let mut l2 = 0.0;
        for a in 0..m {
            let d = wrap_diff(x[a] - y[a], self.spec.lattice[a]);
            dvec[a] = d;
            l2 += d * d;
        }
        if !self.conformal {
            let sigma = l2;
            let ds: Vec<f64> = dvec.iter().map(|&d| 2.0 * d).collect();
            let mut dds = vec![vec![0.0; m]; m];
            for a in 0..m {
                dds[a][a] = 2.0;
            }
            return (sigma, ds, dds);
        }
        let el = self.spec.lambda(x).exp();
        let ely = self.spec.lambda(y).exp();
        let mfac = 0.5 * (el + ely);
        let dl = self.spec.dlambda(x);
        let d2l = self.spec.d2lambda(x);
        let ma: Vec<f64> = (0..m).map(|a| 0.5 * el * dl[a]).collect();
        let sigma = mfac * mfac * l2;
        let mut ds = vec![0.0; m];
        for a in 0..m {
            ds[a] = 2.0 * mfac * ma[a] * l2 + 2.0 * mfac * mfac * dvec[a];
        }
        let mut dds = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in 0..m {
                let mab = 0.5 * el * (dl[a] * dl[b] + d2l[(a, b)]);
                let mut v = 2.0 * (ma[a] * ma[b] + mfac * mab) * l2;
                v += 4.0 * mfac * (ma[a] * dvec[b] + ma[b] * dvec[a]);
                if a == b {
                    v += 2.0 * mfac * mfac;
                }
                dds[a][b] = v;
            }
        }
        (sigma, ds, dds)
    }

    /// Blend profile in the squared-distance variable: `D = Gt(sigma)`.
    /// Returns `(Gt, Gt', Gt'')`.
    fn profile(&self, sigma: f64) -> (f64, f64, f64) {
        let delta = self.injectivity_radius;
        let w = self.blend_width;
        let lo = delta - w;
        if sigma <= lo * lo {
            return (sigma, 1.0, 0.0);
        }
        let d = sigma.sqrt();
        if d >= delta {
            return (delta * delta, 0.0, 0.0);
        }
        let u = (d - lo) / w;
        let (t, tp, tpp) = smoothstep_jet(u);
        // dT/dsigma and d2T/dsigma2 through u = (sqrt(sigma) - lo)/w
        let du = 1.0 / (2.0 * w * d);
        let d2u = -1.0 / (4.0 * w * sigma * d);
        let t1 = tp * du;
        let t2 = tpp * du * du + tp * d2u;
        let dd = delta * delta;
        let g = (1.0 - t) * sigma + t * dd;
        let g1 = (1.0 - t) + (dd - sigma) * t1;
        let g2 = -2.0 * t1 + (dd - sigma) * t2;
        (g, g1, g2)
    }

    /// `D(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let (sigma, _, _) = self.sigma_jet(x, y);
        self.profile(sigma).0
    }

    /// `D` with first and second `x`-derivatives.
    pub fn jet(&self, x: &[f64], y: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let (sigma, ds, dds) = self.sigma_jet(x, y);
        let (g, g1, g2) = self.profile(sigma);
        let m = x.len();
        let d1: Vec<f64> = ds.iter().map(|&s| g1 * s).collect();
        let mut d2 = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in 0..m {
                d2[a][b] = g2 * ds[a] * ds[b] + g1 * dds[a][b];
            }
        }
        (g, d1, d2)
    }
}

/// Uniform trapezoid quadrature on the periodic torus with metric volume
/// weights.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub n_axis: Vec<usize>,
    points: Vec<f64>,
    weights: Vec<f64>,
    m: usize,
}

impl Quadrature {
    fn build(spec: &MetricSpec, n_axis: &[usize]) -> Quadrature {
        let m = spec.dim_boundary;
        let total: usize = n_axis.iter().product();
        let cell: f64 = (0..m).map(|a| spec.lattice[a] / n_axis[a] as f64).product();
        let mut points = Vec::with_capacity(total * m);
        let mut weights = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let mut x = vec![0.0; m];
            for a in (0..m).rev() {
                let i = rem % n_axis[a];
                rem /= n_axis[a];
                x[a] = spec.lattice[a] * i as f64 / n_axis[a] as f64;
            }
            weights.push(cell * spec.sqrt_det_ghat(&x));
            points.extend_from_slice(&x);
        }
        Quadrature {
            n_axis: n_axis.to_vec(),
            points,
            weights,
            m,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.m..(i + 1) * self.m]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Quadrature of a function over the boundary torus.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|i| self.weight(i) * f(self.point(i))).sum()
    }
}

/// `q^{-n/2}` for positive integer `n`; one sqrt at most.
#[inline]
fn inv_half_pow(q: f64, n: u32) -> f64 {
    if n % 2 == 0 {
        q.powi(-((n / 2) as i32))
    } else {
        q.powi(-(((n + 1) / 2) as i32)) * q.sqrt()
    }
}

/// Scalar kernel derivatives needed in the extension hot loop.
#[derive(Debug, Clone, Copy)]
pub struct KernelRadialJet {
    pub k: f64,
    pub k_r: f64,
    pub k_rr: f64,
}

/// Full kernel derivative data at `(x, r; y)`.
#[derive(Debug, Clone)]
pub struct KernelJet {
    pub k: f64,
    pub k_x: Vec<f64>,
    pub k_r: f64,
    pub k_xx: Vec<Vec<f64>>,
    pub k_xr: Vec<f64>,
    pub k_rr: f64,
}

/// Kernel moments realized by quadrature.
#[derive(Debug, Clone, Copy)]
pub struct Moments {
    pub i0: f64,
    /// `r |integral of grad_gbar K|_gbar`
    pub i1: f64,
    /// `r * integral of Delta_gbar K` (signed)
    pub i2: f64,
}

/// Evaluation context: source boundary metric, modified distance, quadrature,
/// and the dimensional normalization.
#[derive(Debug)]
pub struct KernelContext {
    pub spec: MetricSpec,
    pub distance: ModifiedDistance,
    pub quadrature: Quadrature,
    pub c_m: f64,
    refined: OnceLock<Quadrature>,
}

impl KernelContext {
    pub fn new(spec: MetricSpec, n_quad: &[usize]) -> Result<Self> {
        spec.validate(MetricRole::Source)?;
        if n_quad.len() != spec.dim_boundary {
            return Err(Error::Config(format!(
                "quadrature axes {} do not match boundary dimension {}",
                n_quad.len(),
                spec.dim_boundary
            )));
        }
        let distance = ModifiedDistance::new(&spec);
        let quadrature = Quadrature::build(&spec, n_quad);
        let c_m = poisson_normalization(spec.dim_boundary);
        Ok(KernelContext {
            spec,
            distance,
            quadrature,
            c_m,
            refined: OnceLock::new(),
        })
    }

    fn refined_quadrature(&self) -> &Quadrature {
        self.refined.get_or_init(|| {
            let doubled: Vec<usize> = self.quadrature.n_axis.iter().map(|&n| 2 * n).collect();
            Quadrature::build(&self.spec, &doubled)
        })
    }

    /// Startup resolution guard: the lattice spacing must not exceed the
    /// smallest working radius, so the kernel peak keeps at least one node per
    /// width. (The dynamic doubling check in `kernel_moments` guards the rest.)
    pub fn check_resolution(&self, r_min: f64) -> Result<()> {
        for a in 0..self.spec.dim_boundary {
            let n = self.quadrature.n_axis[a];
            if (n as f64) * r_min < self.spec.lattice[a] {
                return Err(Error::Resolution(format!(
                    "axis {a}: {n} quadrature nodes cannot resolve the kernel at r={r_min} \
                     (need N*r_min >= L = {})",
                    self.spec.lattice[a]
                )));
            }
        }
        Ok(())
    }

    pub fn eval_kernel(&self, x: &[f64], r: f64, y: &[f64]) -> Result<f64> {
        if r <= 0.0 {
            return Err(Error::Domain(format!("kernel radius must be positive, got {r}")));
        }
        let m = self.spec.dim_boundary;
        let d = self.distance.eval(x, y);
        let q = d + r * r;
        Ok(self.c_m * r * inv_half_pow(q, (m + 1) as u32))
    }

    /// Kernel with radial derivatives only; the extension hot path.
    #[inline]
    pub fn kernel_radial_jet(&self, x: &[f64], r: f64, y: &[f64]) -> KernelRadialJet {
        let m = self.spec.dim_boundary as u32;
        let d = self.distance.eval(x, y);
        let q = d + r * r;
        let p1 = inv_half_pow(q, m + 1);
        let p3 = inv_half_pow(q, m + 3);
        let p5 = inv_half_pow(q, m + 5);
        let mf = (m + 1) as f64;
        let k = self.c_m * r * p1;
        let k_r = self.c_m * (p1 - mf * r * r * p3);
        let k_rr = self.c_m * (-3.0 * mf * r * p3 + mf * (mf + 2.0) * r.powi(3) * p5);
        KernelRadialJet { k, k_r, k_rr }
    }

    /// Full derivative jet of the kernel at `(x, r; y)`.
    pub fn kernel_jet(&self, x: &[f64], r: f64, y: &[f64]) -> KernelJet {
        let m = self.spec.dim_boundary;
        let mf = (m + 1) as f64;
        let (d, d1, d2) = self.distance.jet(x, y);
        let q = d + r * r;
        let p1 = inv_half_pow(q, (m + 1) as u32);
        let p3 = inv_half_pow(q, (m + 3) as u32);
        let p5 = inv_half_pow(q, (m + 5) as u32);
        let k = self.c_m * r * p1;
        let k_r = self.c_m * (p1 - mf * r * r * p3);
        let k_rr = self.c_m * (-3.0 * mf * r * p3 + mf * (mf + 2.0) * r.powi(3) * p5);
        let k_x: Vec<f64> = d1.iter().map(|&da| -self.c_m * r * 0.5 * mf * p3 * da).collect();
        let k_xr: Vec<f64> = d1
            .iter()
            .map(|&da| -self.c_m * 0.5 * mf * da * (p3 - (mf + 2.0) * r * r * p5))
            .collect();
        let mut k_xx = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in 0..m {
                k_xx[a][b] = self.c_m
                    * r
                    * (-0.5 * mf * p3 * d2[a][b] + 0.25 * mf * (mf + 2.0) * p5 * d1[a] * d1[b]);
            }
        }
        KernelJet {
            k,
            k_x,
            k_r,
            k_xx,
            k_xr,
            k_rr,
        }
    }

    /// `(K, r^2 |grad_gbar K|_gbar^2, Delta_gbar K)` at a sample point.
    pub fn kernel_invariants(&self, x: &[f64], r: f64, y: &[f64]) -> Result<(f64, f64, f64)> {
        let jet = self.kernel_jet(x, r, y);
        let mjet = eval_metric_jet(&self.spec, x, r)?;
        let m = self.spec.dim_boundary;
        let grad = |a: usize| if a < m { jet.k_x[a] } else { jet.k_r };
        let mut grad2 = 0.0;
        for i in 0..=m {
            for j in 0..=m {
                grad2 += mjet.gbar_inv[(i, j)] * grad(i) * grad(j);
            }
        }
        let hess = |i: usize, j: usize| -> f64 {
            match (i < m, j < m) {
                (true, true) => jet.k_xx[i][j],
                (true, false) => jet.k_xr[i],
                (false, true) => jet.k_xr[j],
                (false, false) => jet.k_rr,
            }
        };
        let mut lap = 0.0;
        for i in 0..=m {
            for j in 0..=m {
                let mut v = hess(i, j);
                for k in 0..=m {
                    v -= mjet.christoffel_gbar[k][(i, j)] * grad(k);
                }
                lap += mjet.gbar_inv[(i, j)] * v;
            }
        }
        Ok((jet.k, r * r * grad2, lap))
    }

    /// Kernel moments at `(x, r)` by torus quadrature, with the dynamic
    /// under-resolution check (doubling the lattice must not move `I0` by more
    /// than 1e-3).
    pub fn kernel_moments(&self, x: &[f64], r: f64) -> Result<Moments> {
        if !(r > 0.0 && r <= self.spec.r_star) {
            return Err(Error::Domain(format!(
                "moment radius {r} outside (0, {}]",
                self.spec.r_star
            )));
        }
        let m = self.spec.dim_boundary;
        let mjet = eval_metric_jet(&self.spec, x, r)?;
        let mut i0 = 0.0;
        let mut grad_sum = vec![0.0; m + 1];
        let mut lap_sum = 0.0;
        for qi in 0..self.quadrature.len() {
            let y = self.quadrature.point(qi);
            let wq = self.quadrature.weight(qi);
            let jet = self.kernel_jet(x, r, y);
            i0 += wq * jet.k;
            for a in 0..m {
                grad_sum[a] += wq * jet.k_x[a];
            }
            grad_sum[m] += wq * jet.k_r;
            let hess = |i: usize, j: usize| -> f64 {
                match (i < m, j < m) {
                    (true, true) => jet.k_xx[i][j],
                    (true, false) => jet.k_xr[i],
                    (false, true) => jet.k_xr[j],
                    (false, false) => jet.k_rr,
                }
            };
            let grad = |a: usize| if a < m { jet.k_x[a] } else { jet.k_r };
            let mut lap = 0.0;
            for i in 0..=m {
                for j in 0..=m {
                    let mut v = hess(i, j);
                    for k in 0..=m {
                        v -= mjet.christoffel_gbar[k][(i, j)] * grad(k);
                    }
                    lap += mjet.gbar_inv[(i, j)] * v;
                }
            }
            lap_sum += wq * lap;
        }
        // dynamic resolution check
        let fine = self.refined_quadrature();
        let mut i0_fine = 0.0;
        for qi in 0..fine.len() {
            let y = fine.point(qi);
            let d = self.distance.eval(x, y);
            let q = d + r * r;
            i0_fine += fine.weight(qi) * self.c_m * r * inv_half_pow(q, (m + 1) as u32);
        }
        if (i0 - i0_fine).abs() > 1e-3 {
            return Err(Error::Resolution(format!(
                "I0 moves by {:.3e} under quadrature doubling at r={r}",
                (i0 - i0_fine).abs()
            )));
        }
        let mut grad_norm2 = 0.0;
        for i in 0..=m {
            for j in 0..=m {
                grad_norm2 += mjet.gbar_inv[(i, j)] * grad_sum[i] * grad_sum[j];
            }
        }
        Ok(Moments {
            i0,
            i1: r * grad_norm2.max(0.0).sqrt(),
            i2: r * lap_sum,
        })
    }

    /// Empirical constants of the kernel bound: sup of `r |grad_gbar K| / K`
    /// and `|Delta_gbar K| / K` over the sample set.
    pub fn kernel_bounds_check(&self, samples: &[(Vec<f64>, f64, Vec<f64>)]) -> Result<(f64, f64)> {
        let mut c_grad: f64 = 0.0;
        let mut c_lap: f64 = 0.0;
        for (x, r, y) in samples {
            let (k, r2grad2, lap) = self.kernel_invariants(x, *r, y)?;
            c_grad = c_grad.max(r2grad2.max(0.0).sqrt() / k);
            c_lap = c_lap.max(lap.abs() / k);
        }
        Ok((c_grad, c_lap))
    }

    /// Extension of boundary data by the kernel. The integrand closure sees
    /// the evaluation point, the quadrature point, and the quadrature index
    /// (for table lookups), so callers can unwrap lifted data relative to the
    /// evaluation point.
    pub fn extend_with<F>(&self, grid: Arc<SlabGrid>, f: F) -> Result<Extension>
    where
        F: Fn(&[f64], &[f64], usize) -> f64 + Sync,
    {
        if grid.r_max() > self.spec.r_star * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "grid r_max {} exceeds chart radius {}",
                grid.r_max(),
                self.spec.r_star
            )));
        }
        self.check_resolution(grid.r_min())?;
        let nl = grid.num_levels();
        let ll = grid.lat_len();
        let rows: Vec<Vec<(f64, f64, f64, f64)>> = (0..nl)
            .into_par_iter()
            .map(|k| {
                let r = grid.levels()[k];
                (0..ll)
                    .map(|lat| {
                        let x = grid.lat_coords(lat);
                        let mut w = 0.0;
                        let mut wr = 0.0;
                        let mut wrr = 0.0;
                        let mut i0 = 0.0;
                        for qi in 0..self.quadrature.len() {
                            let y = self.quadrature.point(qi);
                            let wq = self.quadrature.weight(qi);
                            let kj = self.kernel_radial_jet(&x, r, y);
                            let fv = f(&x, y, qi);
                            w += wq * kj.k * fv;
                            wr += wq * kj.k_r * fv;
                            wrr += wq * kj.k_rr * fv;
                            i0 += wq * kj.k;
                        }
                        (w, wr, wrr, i0)
                    })
                    .collect()
            })
            .collect();
        let mut w = Field::zeros(grid.clone());
        let mut dw_dr = Field::zeros(grid.clone());
        let mut d2w_dr2 = Field::zeros(grid.clone());
        let mut i0 = Field::zeros(grid.clone());
        for k in 0..nl {
            for lat in 0..ll {
                let n = grid.node_index(k, lat);
                let (a, b, c, d) = rows[k][lat];
                w.data[n] = a;
                dw_dr.data[n] = b;
                d2w_dr2.data[n] = c;
                i0.data[n] = d;
            }
        }
        // 2-point Richardson extrapolation to r = 0 from the two innermost
        // levels (linear-in-r model).
        let k1 = nl - 1;
        let k2 = nl - 2;
        let (r1, r2) = (grid.levels()[k1], grid.levels()[k2]);
        let mut boundary_value = vec![0.0; ll];
        let mut boundary_slope = vec![0.0; ll];
        for lat in 0..ll {
            let w1 = w.at(k1, lat);
            let w2 = w.at(k2, lat);
            boundary_value[lat] = (w1 * r2 - w2 * r1) / (r2 - r1);
            let s1 = dw_dr.at(k1, lat);
            let s2 = dw_dr.at(k2, lat);
            boundary_slope[lat] = (s1 * r2 - s2 * r1) / (r2 - r1);
        }
        Ok(Extension {
            w,
            dw_dr,
            d2w_dr2,
            i0,
            boundary_value,
            boundary_slope,
        })
    }

    /// Extension `w(x, r) = integral of K(x, r; y) phi(y) dV_ghat(y)` of a
    /// periodic boundary function.
    pub fn extend<F>(&self, grid: Arc<SlabGrid>, phi: F) -> Result<Extension>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        self.extend_with(grid, |_, y, _| phi(y))
    }
}

/// Result of the extension operator: the field, its closed-form radial
/// derivatives, the per-node kernel mass `I0`, and Richardson boundary limits.
#[derive(Debug, Clone)]
pub struct Extension {
    pub w: Field,
    pub dw_dr: Field,
    pub d2w_dr2: Field,
    pub i0: Field,
    pub boundary_value: Vec<f64>,
    pub boundary_slope: Vec<f64>,
}
