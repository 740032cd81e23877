//! Kernel and extension checks against independent oracles: refined
//! quadrature, the periodic half-plane Poisson closed form, and finite
//! differences of the plain kernel evaluation.

use std::sync::Arc;

use ahhm_core::geometry::MetricSpec;
use ahhm_core::grid::SlabGrid;
use ahhm_core::kernel::KernelContext;
use ahhm_core::operator::SourceOperator;
use rand::{Rng, SeedableRng};

const TAU: f64 = std::f64::consts::TAU;

fn flat_ctx(n: usize) -> KernelContext {
    let spec = MetricSpec::exact_hyperbolic(1, vec![TAU], 0.5);
    KernelContext::new(spec, &[n]).unwrap()
}

#[test]
fn moments_against_refined_quadrature() {
    let ctx = flat_ctx(512);
    let fine = flat_ctx(4096);
    // |I0 - 1| <= 0.05 at r = 0.05, with the working-resolution value agreeing
    // with the refined oracle
    let m05 = ctx.kernel_moments(&[0.0], 0.05).unwrap();
    let m05_ref = fine.kernel_moments(&[0.0], 0.05).unwrap();
    assert!((m05.i0 - m05_ref.i0).abs() < 1e-6);
    assert!((m05.i0 - 1.0).abs() <= 0.05, "I0 = {}", m05.i0);

    // halving r from 0.1 to 0.05 shrinks |I0 - 1| by a factor in [1.5, 3]
    let m10 = ctx.kernel_moments(&[0.0], 0.1).unwrap();
    let factor = (m10.i0 - 1.0).abs() / (m05.i0 - 1.0).abs();
    assert!(
        (1.5..=3.0).contains(&factor),
        "|I0-1| factor {factor} (from {} to {})",
        (m10.i0 - 1.0).abs(),
        (m05.i0 - 1.0).abs()
    );

    // I1, I2 decrease monotonically toward the boundary
    let ms: Vec<_> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&r| ctx.kernel_moments(&[0.0], r).unwrap())
        .collect();
    assert!(ms[0].i1 > ms[1].i1 && ms[1].i1 > ms[2].i1, "I1 not decreasing: {:?}", ms.iter().map(|m| m.i1).collect::<Vec<_>>());
    assert!(
        ms[0].i2.abs() > ms[1].i2.abs() && ms[1].i2.abs() > ms[2].i2.abs(),
        "I2 not decreasing: {:?}",
        ms.iter().map(|m| m.i2).collect::<Vec<_>>()
    );
}

#[test]
fn moment_resolution_error_detected() {
    // far too few quadrature nodes for the requested radius
    let ctx = flat_ctx(48);
    let r = ctx.kernel_moments(&[0.0], 0.01);
    assert!(matches!(r, Err(ahhm_core::Error::Resolution(_))), "{r:?}");
}

#[test]
fn bounds_check_sup_constants() {
    let ctx = flat_ctx(256);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let sample = |rng: &mut rand_chacha::ChaCha8Rng, count: usize| {
        (0..count)
            .map(|_| {
                (
                    vec![rng.gen_range(0.0..TAU)],
                    rng.gen_range(0.01..0.5),
                    vec![rng.gen_range(0.0..TAU)],
                )
            })
            .collect::<Vec<_>>()
    };
    let s1 = sample(&mut rng, 10_000);
    let (c_grad, c_lap) = ctx.kernel_bounds_check(&s1).unwrap();
    assert!(c_grad.is_finite() && c_lap.is_finite());
    assert!(c_grad <= 4.0 * 2.0, "C_grad = {c_grad}");
    // refinement stability: doubling the samples moves C_grad by < 5%
    let s2 = sample(&mut rng, 10_000);
    let all: Vec<_> = s1.iter().chain(s2.iter()).cloned().collect();
    let (c_grad2, _) = ctx.kernel_bounds_check(&all).unwrap();
    assert!((c_grad2 - c_grad).abs() / c_grad < 0.05);

    // on-diagonal samples: tangential gradient vanishes, radial part <= m+1
    let x = [1.0];
    for &r in &[0.3, 0.1, 0.02] {
        let jet = ctx.kernel_jet(&x, r, &x);
        assert!(jet.k_x[0].abs() < 1e-14);
        let radial = (r * jet.k_r.abs()) / jet.k;
        assert!(radial <= 2.0 + 1e-12, "radial bound {radial}");
    }
}

#[test]
fn kernel_positive_and_symmetric() {
    let ctx = flat_ctx(128);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2000 {
        let x = [rng.gen_range(0.0..TAU)];
        let y = [rng.gen_range(0.0..TAU)];
        let r = rng.gen_range(0.005..0.5);
        let kxy = ctx.eval_kernel(&x, r, &y).unwrap();
        let kyx = ctx.eval_kernel(&y, r, &x).unwrap();
        assert!(kxy > 0.0);
        assert!((kxy - kyx).abs() <= 1e-12 * kxy);
    }
}

#[test]
fn closed_form_derivatives_match_kernel_differences() {
    // grad and Laplacian of K from the closed-form distance derivatives agree
    // with central differences of eval_kernel
    let ctx = flat_ctx(128);
    let h = 1e-5;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let x = [rng.gen_range(0.0..TAU)];
        let y = [rng.gen_range(0.0..TAU)];
        let r = rng.gen_range(0.05..0.4);
        let jet = ctx.kernel_jet(&x, r, &y);
        let kp = ctx.eval_kernel(&[x[0] + h], r, &y).unwrap();
        let km = ctx.eval_kernel(&[x[0] - h], r, &y).unwrap();
        let k0 = ctx.eval_kernel(&x, r, &y).unwrap();
        let fd_x = (kp - km) / (2.0 * h);
        let fd_xx = (kp - 2.0 * k0 + km) / (h * h);
        // 10x the expected differencing error
        let scale_x = h * h * k0 / (r * r * r) * 10.0 + 1e-10;
        assert!((jet.k_x[0] - fd_x).abs() <= scale_x.max(1e-6 * fd_x.abs()));
        let scale_xx = h * h * k0 / (r * r * r * r) * 10.0 + 1e-7;
        assert!((jet.k_xx[0][0] - fd_xx).abs() <= scale_xx.max(1e-5 * fd_xx.abs()));
    }
}

#[test]
fn extension_of_constant_is_kernel_mass() {
    let ctx = flat_ctx(512);
    let grid = Arc::new(SlabGrid::from_levels(vec![TAU], vec![64], 0.025, 0.1, 4).unwrap());
    let c = 2.3;
    let ext = ctx.extend(grid.clone(), |_| c).unwrap();
    for k in 0..grid.num_levels() {
        for lat in 0..grid.lat_len() {
            let node = grid.node_index(k, lat);
            let w = ext.w.data[node];
            let i0 = ext.i0.data[node];
            assert!((w - c * i0).abs() < 1e-12);
            assert!((w - c).abs() <= c.abs() * (i0 - 1.0).abs() + 1e-12);
        }
    }
    // boundary limit recovers the constant
    for lat in 0..grid.lat_len() {
        assert!((ext.boundary_value[lat] - c).abs() < 5e-3);
    }
}

#[test]
fn extension_of_sine_matches_periodic_poisson_sum() {
    // oracle: the periodic half-plane Poisson extension of sin is
    // e^{-r} sin(x)
    let ctx = flat_ctx(1024);
    let grid = Arc::new(SlabGrid::from_levels(vec![TAU], vec![128], 0.025, 0.1, 4).unwrap());
    let ext = ctx.extend(grid.clone(), |y| y[0].sin()).unwrap();
    let k_half = grid.level_at(0.05);
    let r = grid.levels()[k_half];
    let mut sup_err: f64 = 0.0;
    for lat in 0..grid.lat_len() {
        let x = grid.lat_coords(lat)[0];
        let oracle = (-r).exp() * x.sin();
        sup_err = sup_err.max((ext.w.at(k_half, lat) - oracle).abs());
    }
    let rel = sup_err / (-r).exp();
    assert!(rel <= 0.05, "relative sup error {rel}");
}

#[test]
fn extension_gradient_and_laplacian_decay() {
    // r |grad w| and r Delta w decrease across the ladder (the interior rows
    // around 0.1, 0.05, 0.025)
    let spec = MetricSpec::exact_hyperbolic(1, vec![TAU], 0.5);
    let ctx = KernelContext::new(spec.clone(), &[1024]).unwrap();
    let grid = Arc::new(SlabGrid::from_levels(vec![TAU], vec![128], 0.0177, 0.2, 14).unwrap());
    let ext = ctx.extend(grid.clone(), |y| y[0].sin()).unwrap();
    let op = SourceOperator::new(&spec, grid.clone()).unwrap();
    let lap = op.laplacian(&ext.w, true);
    let mut d1 = vec![0.0; 2];
    let mut d2 = vec![0.0; 2];
    let mut vals = Vec::new();
    for &target_r in &[0.1, 0.05, 0.025] {
        let k = grid.level_at(target_r);
        let r = grid.levels()[k];
        let mut sup_grad: f64 = 0.0;
        let mut sup_lap: f64 = 0.0;
        for lat in 0..grid.lat_len() {
            op.scalar_derivs(&ext.w, k, lat, &mut d1, &mut d2);
            let g2 = d1[0] * d1[0] + d1[1] * d1[1]; // gbar = identity
            sup_grad = sup_grad.max(r * g2.sqrt());
            sup_lap = sup_lap.max(r * lap.at(k, lat).abs());
        }
        vals.push((sup_grad, sup_lap));
    }
    assert!(vals[0].0 > vals[1].0 && vals[1].0 > vals[2].0, "r|grad w| {vals:?}");
    assert!(vals[0].1 > vals[1].1 && vals[1].1 > vals[2].1, "r|lap w| {vals:?}");
    // second radial derivative also tempered: r |d2w/dr2| decreasing
    let mut prev = f64::INFINITY;
    for &target_r in &[0.1, 0.05, 0.025] {
        let k = grid.level_at(target_r);
        let r = grid.levels()[k];
        let mut sup: f64 = 0.0;
        for lat in 0..grid.lat_len() {
            sup = sup.max(r * ext.d2w_dr2.at(k, lat).abs());
        }
        assert!(sup < prev);
        prev = sup;
    }
}

#[test]
fn extension_respects_maximum_principle() {
    let ctx = flat_ctx(512);
    let grid = Arc::new(SlabGrid::from_levels(vec![TAU], vec![64], 0.03, 0.3, 10).unwrap());
    let phi = |y: &[f64]| 0.7 * y[0].sin() + 0.3 * (2.0 * y[0]).cos();
    let ext = ctx.extend(grid.clone(), phi).unwrap();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut sup_abs: f64 = 0.0;
    for i in 0..512 {
        let v = phi(&[TAU * i as f64 / 512.0]);
        lo = lo.min(v);
        hi = hi.max(v);
        sup_abs = sup_abs.max(v.abs());
    }
    for k in 0..grid.num_levels() {
        for lat in 0..grid.lat_len() {
            let node = grid.node_index(k, lat);
            let slack = (1.0 - ext.i0.data[node]).abs() * sup_abs + 1e-12;
            assert!(ext.w.data[node] <= hi + slack);
            assert!(ext.w.data[node] >= lo - slack);
        }
    }
}
