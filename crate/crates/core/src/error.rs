use thiserror::Error;

/// Error type shared by all modules.
///
/// Variants are grouped into the families the CLI maps to exit codes:
/// configuration, resolution, solver, and certification failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate metric at x={x:?}, r={r}: {what}")]
    DegenerateMetric { x: Vec<f64>, r: f64, what: String },

    #[error("degenerate plane: normalized Gram determinant {gram:.3e} below 1e-10")]
    DegeneratePlane { gram: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate boundary data: {0}")]
    DegenerateData(String),

    #[error("quadrature under-resolved: {0}")]
    Resolution(String),

    #[error("insufficient radial levels: {0}")]
    InsufficientLevels(String),

    #[error("relative homotopy class mismatch: {0}")]
    Homotopy(String),

    #[error("map leaves target chart at node {node}: rho={rho:.6e}, rho_star={rho_star:.6e}")]
    ChartOverflow {
        node: String,
        rho: f64,
        rho_star: f64,
    },

    #[error("flow failed to converge within {max_steps} steps (tension_sup={tension_sup:.3e})")]
    FlowDivergence {
        max_steps: u64,
        tension_sup: f64,
        history: Vec<(u64, f64, f64)>,
    },

    #[error("linear solver stagnated: {0}")]
    SolverDivergence(String),

    #[error("barrier certification failed at node {node}: laplacian={value:.6e}")]
    Certification { node: String, value: f64 },

    #[error("geodesic solve failed: {0}")]
    Geodesic(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("bad file format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
