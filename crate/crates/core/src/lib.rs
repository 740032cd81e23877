//! Numerical pipeline for approximate harmonic maps between asymptotically
//! hyperbolic torus slab models.
//!
//! The modules follow the stages of the construction: [`geometry`] evaluates
//! conformally compact metrics in normal boundary coordinates, [`kernel`]
//! builds the modified Poisson kernel and the boundary extension operator,
//! [`approx`] assembles approximate harmonic maps from boundary data,
//! [`tension`] measures tension fields and energy densities, [`barrier`]
//! certifies the superharmonic barrier, [`solver`] relaxes maps to
//! harmonicity on truncated slabs, and [`comparison`] provides target
//! distances and the Jacobi comparison machinery.

pub mod approx;
pub mod barrier;
pub mod comparison;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod operator;
pub mod solver;
pub mod tension;

pub use approx::{
    blend_maps, boundary_energy_density, build_approximate_solution, BoundaryMap, MapField,
    Perturbation,
};
pub use barrier::{laplacian_g, solve_barrier, BarrierFunction, EpsilonPolicy};
pub use comparison::{
    comparison_bounds, d_epsilon, hessian_lower_bound_constants, hessian_trace_h2, kappa_bound,
    laplacian_bound_f, map_distance_report, solve_comparison_ode, ComparisonCertificate,
    ComparisonOde, DistanceReport, TargetDistance,
};
pub use error::{Error, Result};
pub use geometry::{
    asymptotic_einstein_residual, einstein_decay_ratio, eval_metric_jet,
    sectional_curvature_probe, BoundaryMetric, Correction, MetricJet, MetricRole, MetricSpec,
};
pub use grid::{Field, SlabGrid};
pub use kernel::{Extension, KernelContext, ModifiedDistance, Moments};
pub use operator::SourceOperator;
pub use solver::{
    flow_steps, flow_to_harmonic, flow_with_params, run_exhaustion, uniqueness_probe,
    ExhaustionRecord, ExhaustionReport, FlowParams, FlowState, UniquenessReport,
};
pub use tension::{
    energy_density, neumann_extract, rescaled_tension_report, tension, tension_bar,
    tension_with_op, EnergyDensity, LevelReport, NeumannData, TensionField,
};
