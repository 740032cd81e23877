//! Plain-text experiment configuration: `[section]` headers with `key = value`
//! lines, `#` comments. All physical defaults live in [`defaults`].

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use ahhm_core::approx::{BoundaryMap, Perturbation};
use ahhm_core::geometry::{BoundaryMetric, Correction, MetricRole, MetricSpec};
use ahhm_core::grid::SlabGrid;
use ahhm_core::io::fnv1a;
use ahhm_core::kernel::KernelContext;
use ahhm_core::{Error, Result};

/// The paper-gap constants in one place.
pub mod defaults {
    /// Flow safety factor.
    pub const SIGMA: f64 = 0.2;
    /// Flow convergence tolerance on `sup |tau|_h`.
    pub const TOL: f64 = 1e-6;
    /// Ladder ratio when neither `levels` nor `ratio` is given.
    pub const RATIO: f64 = 0.85;
    /// Step budget for flows.
    pub const MAX_STEPS: u64 = 2_000_000;
    /// Random samples for kernel bound scans.
    pub const SAMPLES: usize = 10_000;
    /// Quadrature sizing: nodes per axis satisfy
    /// `N_q * r_min >= QUADRATURE_WIDTHS * L` (and N_q a multiple of the grid).
    pub const QUADRATURE_WIDTHS: f64 = 2.5;
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub n: Vec<usize>,
    pub r_min: f64,
    pub r_max: f64,
    pub levels: Option<usize>,
    pub ratio: Option<f64>,
    pub quadrature: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_steps: u64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub delta_list: Vec<f64>,
    pub radii: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub resume: Option<PathBuf>,
    pub checkpoint_every: u64,
    pub wall_check: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: MetricSpec,
    pub target: MetricSpec,
    pub map: BoundaryMap,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub run: RunConfig,
    /// FNV-1a hash of the raw config text, stamped into every report.
    pub hash: u64,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<Sections> {
    let mut out: Sections = BTreeMap::new();
    let mut current = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(cfg_err(format!("line {}: malformed section header", lineno + 1)));
            }
            current = line[1..line.len() - 1].trim().to_string();
            out.entry(current.clone()).or_default();
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(cfg_err(format!("line {}: expected key = value", lineno + 1)));
        };
        if current.is_empty() {
            return Err(cfg_err(format!("line {}: key outside any section", lineno + 1)));
        }
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        out.get_mut(&current).unwrap().insert(key, value);
    }
    Ok(out)
}

struct Section<'a> {
    name: String,
    map: Option<&'a BTreeMap<String, String>>,
}

impl<'a> Section<'a> {
    fn get(&self, key: &str) -> Option<&'a str> {
        self.map.and_then(|m| m.get(key)).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&'a str> {
        self.get(key)
            .ok_or_else(|| cfg_err(format!("missing key `{key}` in section [{}]", self.name)))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| cfg_err(format!("[{}] {key}: bad number `{v}`", self.name)))
            })
            .transpose()
    }

    fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| cfg_err(format!("[{}] {key}: bad integer `{v}`", self.name)))
            })
            .transpose()
    }

    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| cfg_err(format!("[{}] {key}: bad number `{x}`", self.name)))
                    })
                    .collect()
            })
            .transpose()
    }

    fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<usize>()
                            .map_err(|_| cfg_err(format!("[{}] {key}: bad integer `{x}`", self.name)))
                    })
                    .collect()
            })
            .transpose()
    }
}

fn parse_metric(sec: &Section) -> Result<MetricSpec> {
    let dim = sec.require("dim")?.parse::<usize>().map_err(|_| {
        cfg_err(format!("[{}] dim: not an integer", sec.name))
    })?;
    let lattice = sec
        .f64_list("lattice")?
        .ok_or_else(|| cfg_err(format!("missing key `lattice` in section [{}]", sec.name)))?;
    let boundary_metric = match sec.get("boundary_metric").unwrap_or("flat") {
        "flat" => BoundaryMetric::Flat,
        other => {
            if let Some(rest) = other.strip_prefix("conformal:") {
                BoundaryMetric::ConformallyFlat {
                    amplitude: rest.parse().map_err(|_| {
                        cfg_err(format!("[{}] boundary_metric: bad amplitude `{rest}`", sec.name))
                    })?,
                }
            } else {
                return Err(cfg_err(format!(
                    "[{}] boundary_metric: expected `flat` or `conformal:<amplitude>`, got `{other}`",
                    sec.name
                )));
            }
        }
    };
    let correction = match sec.get("correction").unwrap_or("none") {
        "none" => Correction::None,
        other => {
            let parse_amp = |rest: &str| -> Result<f64> {
                rest.parse().map_err(|_| {
                    cfg_err(format!("[{}] correction: bad amplitude `{rest}`", sec.name))
                })
            };
            if let Some(rest) = other.strip_prefix("quadratic:") {
                Correction::Quadratic {
                    amplitude: parse_amp(rest)?,
                }
            } else if let Some(rest) = other.strip_prefix("linear:") {
                Correction::Linear {
                    amplitude: parse_amp(rest)?,
                }
            } else {
                return Err(cfg_err(format!(
                    "[{}] correction: expected `none`, `quadratic:<amp>` or `linear:<amp>`",
                    sec.name
                )));
            }
        }
    };
    let r_star = sec
        .f64("r_star")?
        .ok_or_else(|| cfg_err(format!("missing key `r_star` in section [{}]", sec.name)))?;
    Ok(MetricSpec {
        dim_boundary: dim,
        lattice,
        boundary_metric,
        correction,
        r_star,
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let hash = fnv1a(text.as_bytes());
        let sections = parse_sections(text)?;
        let sec = |name: &str| Section {
            name: name.to_string(),
            map: sections.get(name),
        };
        for required in ["source", "target", "grid"] {
            if !sections.contains_key(required) {
                return Err(cfg_err(format!("missing section [{required}]")));
            }
        }
        let source = parse_metric(&sec("source"))?;
        let target = parse_metric(&sec("target"))?;

        let map_sec = sec("map");
        let map = if map_sec.map.is_some() {
            let matrix_flat: Vec<i64> = map_sec
                .require("matrix")?
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<i64>()
                        .map_err(|_| cfg_err(format!("[map] matrix: bad integer `{x}`")))
                })
                .collect::<Result<_>>()?;
            let (n, m) = (target.dim_boundary, source.dim_boundary);
            if matrix_flat.len() != n * m {
                return Err(cfg_err(format!(
                    "[map] matrix: expected {n}x{m} = {} entries, got {}",
                    n * m,
                    matrix_flat.len()
                )));
            }
            let matrix: Vec<Vec<i64>> = matrix_flat.chunks(m).map(|c| c.to_vec()).collect();
            let offset = map_sec.f64_list("offset")?.unwrap_or_else(|| vec![0.0; n]);
            if offset.len() != n {
                return Err(cfg_err(format!("[map] offset: expected {n} entries")));
            }
            let perturbation = match map_sec.get("perturbation").unwrap_or("none") {
                "none" => Perturbation::None,
                other => {
                    if let Some(rest) = other.strip_prefix("sine:") {
                        Perturbation::Sine {
                            amplitude: rest.parse().map_err(|_| {
                                cfg_err(format!("[map] perturbation: bad amplitude `{rest}`"))
                            })?,
                        }
                    } else {
                        return Err(cfg_err(
                            "[map] perturbation: expected `none` or `sine:<amplitude>`",
                        ));
                    }
                }
            };
            BoundaryMap {
                matrix,
                offset,
                perturbation,
                source_lattice: source.lattice.clone(),
                target_lattice: target.lattice.clone(),
            }
        } else {
            BoundaryMap::identity(source.lattice.clone())
        };

        let grid_sec = sec("grid");
        let n = grid_sec
            .usize_list("n")?
            .ok_or_else(|| cfg_err("missing key `n` in section [grid]"))?;
        let n = if n.len() == 1 && source.dim_boundary > 1 {
            vec![n[0]; source.dim_boundary]
        } else {
            n
        };
        let grid = GridConfig {
            n,
            r_min: grid_sec
                .f64("r_min")?
                .ok_or_else(|| cfg_err("missing key `r_min` in section [grid]"))?,
            r_max: grid_sec
                .f64("r_max")?
                .ok_or_else(|| cfg_err("missing key `r_max` in section [grid]"))?,
            levels: grid_sec.u64("levels")?.map(|v| v as usize),
            ratio: grid_sec.f64("ratio")?,
            quadrature: grid_sec.usize_list("quadrature")?,
        };

        let solver_sec = sec("solver");
        let solver = SolverConfig {
            tol: solver_sec.f64("tol")?.unwrap_or(defaults::TOL),
            max_steps: solver_sec.u64("max_steps")?.unwrap_or(defaults::MAX_STEPS),
            sigma: solver_sec.f64("sigma")?.unwrap_or(defaults::SIGMA),
        };

        let run_sec = sec("run");
        let run = RunConfig {
            delta_list: run_sec.f64_list("delta_list")?.unwrap_or_default(),
            radii: run_sec
                .f64_list("radii")?
                .unwrap_or_else(|| vec![0.1, 0.05, 0.025]),
            samples: run_sec.u64("samples")?.unwrap_or(defaults::SAMPLES as u64) as usize,
            seed: run_sec.u64("seed")?.unwrap_or(0),
            out_dir: PathBuf::from(run_sec.get("out_dir").unwrap_or("out")),
            resume: run_sec.get("resume").map(PathBuf::from),
            checkpoint_every: run_sec.u64("checkpoint_every")?.unwrap_or(0),
            wall_check: run_sec.get("wall_check").map(|v| v == "true").unwrap_or(false),
        };

        let cfg = ExperimentConfig {
            source,
            target,
            map,
            grid,
            solver,
            run,
            hash,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse-time checks of every module precondition that is checkable here:
    /// metric admissibility, rank and lattice compatibility of the boundary
    /// map, ladder sanity, decreasing truncation radii, and the kernel
    /// resolution floor.
    pub fn validate(&self) -> Result<()> {
        self.source.validate(MetricRole::Source)?;
        self.target.validate(MetricRole::Target)?;
        self.map.validate()?;
        if self.grid.n.len() != self.source.dim_boundary {
            return Err(cfg_err(format!(
                "[grid] n: expected {} axes",
                self.source.dim_boundary
            )));
        }
        if !(self.grid.r_min > 0.0 && self.grid.r_min < self.grid.r_max) {
            return Err(cfg_err("[grid]: need 0 < r_min < r_max"));
        }
        if self.grid.r_max > self.source.r_star * (1.0 + 1e-12) {
            return Err(cfg_err(format!(
                "[grid] r_max {} exceeds the source chart radius {}",
                self.grid.r_max, self.source.r_star
            )));
        }
        // kernel resolution floor: at least one quadrature node per kernel
        // width at the innermost working radius
        for (a, &nq) in self.quadrature_axes().iter().enumerate() {
            if (nq as f64) * self.grid.r_min < self.source.lattice[a] {
                return Err(Error::Resolution(format!(
                    "axis {a}: {nq} quadrature nodes cannot resolve the kernel at r_min = {} \
                     (need N * r_min >= L = {})",
                    self.grid.r_min, self.source.lattice[a]
                )));
            }
        }
        if !self.run.delta_list.is_empty() {
            for w in self.run.delta_list.windows(2) {
                if !(w[1] < w[0]) {
                    return Err(cfg_err(format!(
                        "[run] delta_list must decrease strictly, got {} then {}",
                        w[0], w[1]
                    )));
                }
            }
            let dmax = self.run.delta_list[0];
            if dmax > self.grid.r_max {
                return Err(cfg_err("[run] delta_list exceeds the slab range"));
            }
        }
        for &r in &self.run.radii {
            if !(r > 0.0 && r <= self.source.r_star) {
                return Err(cfg_err(format!("[run] radii: {r} outside (0, r_star]")));
            }
        }
        Ok(())
    }

    /// Quadrature nodes per axis: explicit override, or the smallest multiple
    /// of the grid lattice with `N_q * r_min >= QUADRATURE_WIDTHS * L`.
    pub fn quadrature_axes(&self) -> Vec<usize> {
        if let Some(q) = &self.grid.quadrature {
            return q.clone();
        }
        (0..self.source.dim_boundary)
            .map(|a| {
                let n = self.grid.n[a];
                let need = defaults::QUADRATURE_WIDTHS * self.source.lattice[a] / self.grid.r_min;
                let k = (need / n as f64).ceil().max(1.0) as usize;
                k * n
            })
            .collect()
    }

    pub fn build_grid(&self) -> Result<Arc<SlabGrid>> {
        let g = if let Some(levels) = self.grid.levels {
            SlabGrid::from_levels(
                self.source.lattice.clone(),
                self.grid.n.clone(),
                self.grid.r_min,
                self.grid.r_max,
                levels,
            )?
        } else {
            SlabGrid::from_ratio(
                self.source.lattice.clone(),
                self.grid.n.clone(),
                self.grid.r_min,
                self.grid.r_max,
                self.grid.ratio.unwrap_or(defaults::RATIO),
            )?
        };
        Ok(Arc::new(g))
    }

    pub fn kernel_context(&self) -> Result<KernelContext> {
        KernelContext::new(self.source.clone(), &self.quadrature_axes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "
[source]
dim = 1
lattice = 6.283185307179586
boundary_metric = flat
correction = none
r_star = 0.6

[target]
dim = 1
lattice = 6.283185307179586
boundary_metric = flat
correction = none
r_star = 0.6

[map]
matrix = 1
offset = 0.0
perturbation = sine:0.2

[grid]
n = 64
r_min = 0.1
r_max = 0.4
levels = 8

[run]
delta_list = 0.4,0.2
seed = 7
";

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(cfg.source.dim_boundary, 1);
        assert_eq!(cfg.run.seed, 7);
        assert_eq!(cfg.solver.tol, defaults::TOL);
        let grid = cfg.build_grid().unwrap();
        assert_eq!(grid.num_levels(), 9);
        // auto quadrature: multiple of 64 with N r_min >= 2.5 L
        let q = cfg.quadrature_axes();
        assert_eq!(q[0] % 64, 0);
        assert!(q[0] as f64 * 0.1 >= 2.5 * 6.28);
    }

    #[test]
    fn missing_lattice_is_config_error() {
        let bad = BASE.replace("lattice = 6.283185307179586", "");
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn nondecreasing_deltas_rejected() {
        let bad = BASE.replace("delta_list = 0.4,0.2", "delta_list = 0.2,0.4");
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn under_resolved_quadrature_rejected() {
        let bad = BASE
            .replace("r_min = 0.1", "r_min = 0.01")
            .replace("levels = 8", "levels = 24\nquadrature = 64");
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn default_map_is_identity() {
        let no_map: String = BASE
            .lines()
            .skip_while(|_| false)
            .filter(|l| !l.contains("matrix") && !l.contains("offset") && !l.contains("perturbation") && !l.contains("[map]"))
            .collect::<Vec<_>>()
            .join("\n");
        let cfg = ExperimentConfig::parse(&no_map).unwrap();
        assert_eq!(cfg.map.matrix, vec![vec![1]]);
    }
}
