//! Geometry checks against finite-difference oracles: Levi-Civita symbols of
//! the compactified metric, metric compatibility, curvature decay rates, and
//! the asymptotic Einstein residual including its negative control.

use ahhm_core::geometry::{
    asymptotic_einstein_residual, einstein_decay_ratio, eval_metric_jet, sectional_curvature_probe,
    BoundaryMetric, Correction, MetricSpec,
};
use nalgebra::DMatrix;

const TAU: f64 = std::f64::consts::TAU;

fn conformal_spec() -> MetricSpec {
    MetricSpec {
        dim_boundary: 2,
        lattice: vec![TAU, TAU],
        boundary_metric: BoundaryMetric::ConformallyFlat { amplitude: 0.1 },
        correction: Correction::Quadratic { amplitude: 0.05 },
        r_star: 0.5,
    }
}

/// Fourth-order central differences of the closed-form metric, step tied to
/// the sampling lattice spacing (L/128)/8.
fn fd_dgbar(spec: &MetricSpec, x: &[f64], r: f64, dir: usize) -> DMatrix<f64> {
    let m = spec.dim_boundary;
    let h = if dir < m {
        spec.lattice[dir] / 128.0 / 8.0
    } else {
        (r / 64.0).min(0.002)
    };
    let eval = |s: f64| {
        let mut xx = x.to_vec();
        let mut rr = r;
        if dir < m {
            xx[dir] += s;
        } else {
            rr += s;
        }
        spec.gbar(&xx, rr)
    };
    (eval(-2.0 * h) - eval(2.0 * h)) * (1.0 / (12.0 * h))
        + (eval(h) - eval(-h)) * (8.0 / (12.0 * h))
}

#[test]
fn christoffels_match_finite_difference_levi_civita_oracle() {
    let spec = conformal_spec();
    for &(x0, x1, r) in &[(0.3, 1.7, 0.2), (2.0, 0.1, 0.35), (5.5, 4.0, 0.1)] {
        let x = [x0, x1];
        let jet = eval_metric_jet(&spec, &x, r).unwrap();
        let n = 3;
        let dg: Vec<DMatrix<f64>> = (0..n).map(|d| fd_dgbar(&spec, &x, r, d)).collect();
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = 0.0;
                    for l in 0..n {
                        v += jet.gbar_inv[(k, l)]
                            * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                    }
                    v *= 0.5;
                    let got = jet.christoffel_gbar[k][(i, j)];
                    assert!(
                        (got - v).abs() < 1e-8,
                        "Gamma^{k}_{i}{j}: {got} vs oracle {v}"
                    );
                }
            }
        }
    }
}

#[test]
fn metric_compatibility_nabla_gbar_vanishes() {
    let spec = conformal_spec();
    let x = [1.2, 3.3];
    let r = 0.25;
    let jet = eval_metric_jet(&spec, &x, r).unwrap();
    let n = 3;
    for d in 0..n {
        let dg = fd_dgbar(&spec, &x, r, d);
        for i in 0..n {
            for j in 0..n {
                let mut v = dg[(i, j)];
                for l in 0..n {
                    v -= jet.christoffel_gbar[l][(d, i)] * jet.gbar[(l, j)];
                    v -= jet.christoffel_gbar[l][(d, j)] * jet.gbar[(i, l)];
                }
                assert!(v.abs() < 1e-7, "nabla gbar component {v:.3e}");
            }
        }
    }
}

#[test]
fn curvature_converges_to_minus_one_with_slope() {
    let spec = MetricSpec {
        dim_boundary: 1,
        lattice: vec![TAU],
        boundary_metric: BoundaryMetric::Flat,
        correction: Correction::Quadratic { amplitude: 0.05 },
        r_star: 0.5,
    };
    let radii = [0.2, 0.1, 0.05];
    let mut gaps = Vec::new();
    for &r in &radii {
        let mut sup: f64 = 0.0;
        for i in 0..8 {
            let x = [TAU * i as f64 / 8.0];
            let k = sectional_curvature_probe(&spec, &x, r, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
            sup = sup.max((k + 1.0).abs());
        }
        gaps.push(sup);
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "|K+1| not decreasing: {gaps:?}");
    // fitted slope on log-log axes across the endpoints
    let slope = (gaps[0] / gaps[2]).ln() / (radii[0] / radii[2]).ln();
    assert!(slope >= 0.9, "log-log slope {slope}");
}

#[test]
fn einstein_residual_decay_and_negative_control() {
    // p = 2 correction: the r-normalized residual decays (o(r) behavior)
    let p2 = MetricSpec {
        dim_boundary: 1,
        lattice: vec![TAU],
        boundary_metric: BoundaryMetric::Flat,
        correction: Correction::Quadratic { amplitude: 0.05 },
        r_star: 0.5,
    };
    let (hi, lo, ratio) = einstein_decay_ratio(&p2, 0.1, 0.05, 17).unwrap();
    assert!(lo < hi, "residual not decreasing: {hi} -> {lo}");
    assert!(ratio <= 0.7, "normalized ratio {ratio}");

    // p = 1 correction: residual is O(r) but not o(r); normalized ratio ~ 1
    let p1 = MetricSpec {
        dim_boundary: 1,
        lattice: vec![TAU],
        boundary_metric: BoundaryMetric::Flat,
        correction: Correction::Linear { amplitude: 0.05 },
        r_star: 0.5,
    };
    let (_, _, ratio1) = einstein_decay_ratio(&p1, 0.1, 0.05, 17).unwrap();
    assert!(ratio1 >= 0.9, "negative control unexpectedly decayed: {ratio1}");
}

#[test]
fn einstein_residual_scale_sanity() {
    // exact model: residual at differencing-noise level; perturbed m = 2
    // source: the O(r^2) term survives and is resolvable
    let exact = MetricSpec::exact_hyperbolic(1, vec![TAU], 0.5);
    let res = asymptotic_einstein_residual(&exact, 0.1, 9).unwrap();
    assert!(res < 1e-6);
    let p2 = MetricSpec {
        dim_boundary: 2,
        lattice: vec![TAU, TAU],
        boundary_metric: BoundaryMetric::Flat,
        correction: Correction::Quadratic { amplitude: 0.05 },
        r_star: 0.5,
    };
    let res2 = asymptotic_einstein_residual(&p2, 0.1, 9).unwrap();
    assert!(res2 > 1e-4, "perturbed residual suspiciously small: {res2}");
    let res2_lo = asymptotic_einstein_residual(&p2, 0.05, 9).unwrap();
    let ratio = (res2_lo / 0.05) / (res2 / 0.1);
    assert!(ratio <= 0.7, "m=2 normalized ratio {ratio}");
}
