//! Case configuration, run driver, solution files and profile extraction.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{compute_rc, EstimateReport, MachineEpsilon, PerturbationRng};
use crate::gas::{FreestreamConditions, GasModel};
use crate::grid::{read_grid, BoundaryCondition, Grid, Point};
use crate::gridgen::{generate_flatplate_grid, generate_joukowsky_ogrid, FlatPlateGridSpec, JoukowskyGridSpec};
use crate::residual::{Discretization, NumericalFluxConfig};
use crate::solver::{solve, ConvergenceHistory, SamplingOptions, SolverConfig, TerminationReason};
use crate::state::{PrimitiveState, Vec4, P, T, U, V};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Physics {
    Euler,
    NavierStokes,
}

/// Exactly one of `file`, `flat_plate`, `joukowsky`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat_plate: Option<FlatPlateGridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joukowsky: Option<JoukowskyGridSpec>,
    /// Multiplies every coordinate.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub eps: MachineEpsilon,
    pub seed: u64,
    /// Sample `R_m` every `rm_stride` iterations; `0` disables sampling.
    pub rm_stride: usize,
    /// Evaluate `R_c` with free-stream conditions on every boundary.
    pub all_freestream_rc: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { eps: MachineEpsilon::DOUBLE, seed: 20_160_613, rm_stride: 1, all_freestream_rc: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    pub physics: Physics,
    pub grid: GridConfig,
    pub freestream: FreestreamConditions,
    #[serde(default)]
    pub scheme: NumericalFluxConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    /// Relative paths resolve against the current directory.
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Initial state from a solution file instead of the free stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart: Option<PathBuf>,
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

impl CaseConfig {
    /// Reads a TOML case file. A relative grid `file` resolves against the case file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = CaseConfig::from_toml(&text)?;
        if let (Some(file), Some(dir)) = (&cfg.grid.file, path.parent()) {
            if file.is_relative() {
                cfg.grid.file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: CaseConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("case configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        let sources = g.file.is_some() as u8 + g.flat_plate.is_some() as u8 + g.joukowsky.is_some() as u8;
        if sources != 1 {
            return Err(Error::InvalidConfig("grid needs exactly one of `file`, `flat_plate`, `joukowsky`".into()));
        }
        if !(g.scale > 0.0 && g.scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("grid scale must be positive, got {}", g.scale)));
        }
        if let Some(s) = &g.flat_plate {
            s.validate()?;
        }
        if let Some(s) = &g.joukowsky {
            s.validate()?;
        }
        self.freestream.validate()?;
        if self.physics == Physics::NavierStokes && !(self.freestream.reynolds > 0.0) {
            return Err(Error::InvalidConfig("navier_stokes needs a positive Reynolds number".into()));
        }
        self.scheme.validate()?;
        self.solver.validate()
    }

    pub fn build_grid(&self) -> Result<Grid> {
        let grid = if let Some(path) = &self.grid.file {
            if !path.exists() {
                return Err(Error::InvalidConfig(format!("grid file {} does not exist", path.display())));
            }
            read_grid(path)?
        } else if let Some(spec) = &self.grid.flat_plate {
            generate_flatplate_grid(spec)?
        } else if let Some(spec) = &self.grid.joukowsky {
            generate_joukowsky_ogrid(spec)?
        } else {
            unreachable!("validated grid source")
        };
        if self.grid.scale == 1.0 {
            Ok(grid)
        } else {
            grid.scaled(self.grid.scale)
        }
    }

    pub fn gas(&self) -> Result<GasModel> {
        match self.physics {
            Physics::Euler => Ok(GasModel::air()),
            Physics::NavierStokes => GasModel::air_from_reynolds(&self.freestream),
        }
    }

    pub fn discretization(&self) -> Result<Discretization> {
        Discretization::new(self.build_grid()?, self.gas()?, self.freestream, self.scheme.clone())
    }
}

/// Free-stream estimate for a case without solving.
pub fn estimate_case(cfg: &CaseConfig) -> Result<EstimateReport> {
    let disc = cfg.discretization()?;
    free_stream_report(&disc, cfg)
}

fn free_stream_report(disc: &Discretization, cfg: &CaseConfig) -> Result<EstimateReport> {
    let rng = PerturbationRng::new(cfg.estimator.seed);
    let eps = cfg.estimator.eps;
    let rc = if cfg.estimator.all_freestream_rc {
        compute_rc(&disc.with_all_boundaries(BoundaryCondition::Freestream)?, &rng, eps)?
    } else {
        compute_rc(disc, &rng, eps)?
    };
    Ok(EstimateReport::new(rc, eps, cfg.estimator.seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub physics: Physics,
    pub nodes: usize,
    pub termination: TerminationReason,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Accepted solver steps.
    pub iterations: usize,
    pub final_residual: Vec4,
    pub final_dw: Vec4,
    pub estimates: EstimateReport,
    /// `Res(i) / max(R_c(i), R_m(i))`.
    pub ratios: Vec4,
    pub rejected_steps: usize,
    pub first_order_fallbacks: usize,
    pub limiter_frozen_at: Option<usize>,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct CaseRun {
    pub summary: RunSummary,
    pub history: ConvergenceHistory,
    pub state: PrimitiveState,
    pub output_dir: PathBuf,
}

pub const HISTORY_FILE: &str = "history.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SOLUTION_FILE: &str = "solution.dat";

/// Computes `R_c`, iterates the solver while sampling `R_m`, and writes the
/// convergence history, run summary and solution into the output directory.
/// A solver abort still writes all three files and is reported through the summary.
pub fn run_case(cfg: &CaseConfig) -> Result<CaseRun> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut disc = cfg.discretization()?;
    let estimates = free_stream_report(&disc, cfg)?;
    log::info!(
        "{}: {} nodes, R_c = {:.3e} {:.3e} {:.3e} {:.3e}",
        cfg.name,
        disc.num_nodes(),
        estimates.rc[0],
        estimates.rc[1],
        estimates.rc[2],
        estimates.rc[3]
    );
    let w0 = match &cfg.restart {
        Some(path) => {
            let sol = read_solution(path)?;
            if sol.state.len() != disc.num_nodes() {
                return Err(Error::InvalidConfig(format!(
                    "restart file has {} nodes, grid has {}",
                    sol.state.len(),
                    disc.num_nodes()
                )));
            }
            sol.state
        }
        None => disc.initial_state(),
    };
    let sampling = SamplingOptions {
        stride: cfg.estimator.rm_stride,
        rng: PerturbationRng::new(cfg.estimator.seed),
        eps: cfg.estimator.eps,
    };
    let outcome = solve(&mut disc, w0, &cfg.solver, estimates, &sampling);
    if let Some(e) = &outcome.error {
        log::error!("{}: solver aborted: {e}", cfg.name);
    }

    let last = outcome.history.last();
    let final_residual = last.map(|r| r.res).unwrap_or([f64::NAN; 4]);
    let final_dw = last.map(|r| r.dw).unwrap_or([0.0; 4]);
    let level = outcome.estimates.level();
    let summary = RunSummary {
        name: cfg.name.clone(),
        physics: cfg.physics,
        nodes: disc.num_nodes(),
        termination: outcome.reason,
        exit_code: outcome.reason.exit_code(),
        error: outcome.error.clone(),
        iterations: outcome.steps,
        final_residual,
        final_dw,
        ratios: std::array::from_fn(|i| final_residual[i] / level[i]),
        estimates: outcome.estimates.clone(),
        rejected_steps: outcome.rejections,
        first_order_fallbacks: outcome.first_order_fallbacks,
        limiter_frozen_at: outcome.limiter_frozen_at,
        wall_time: start.elapsed().as_secs_f64(),
    };

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    outcome.history.write_csv(&dir.join(HISTORY_FILE), Some(&outcome.estimates))?;
    let json = serde_json::to_string_pretty(&summary)?;
    let summary_path = dir.join(SUMMARY_FILE);
    std::fs::write(&summary_path, json).map_err(|e| Error::io(&summary_path, e))?;
    write_solution(&dir.join(SOLUTION_FILE), &disc, &outcome.state)?;

    Ok(CaseRun { summary, history: outcome.history, state: outcome.state, output_dir: dir.clone() })
}

/// Free-stream data stored with a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionMeta {
    pub p_inf: f64,
    pub t_inf: f64,
    pub u_inf: f64,
    pub v_inf: f64,
    pub rho_inf: f64,
    /// Zero for inviscid runs.
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub meta: SolutionMeta,
    pub nodes: Vec<Point>,
    pub state: PrimitiveState,
}

const SOLUTION_MAGIC: &str = "mzres-solution 1";

pub fn format_solution(disc: &Discretization, state: &PrimitiveState) -> String {
    let fs = &disc.freestream;
    let [u, v] = fs.velocity(&disc.gas);
    let mu = if disc.gas.is_viscous() { disc.gas.viscosity.viscosity(fs.t_inf) } else { 0.0 };
    let mut out = String::new();
    let _ = writeln!(out, "{SOLUTION_MAGIC}");
    let _ = writeln!(out, "nodes {}", state.len());
    for (k, x) in [("p_inf", fs.p_inf), ("t_inf", fs.t_inf), ("u_inf", u), ("v_inf", v), ("rho_inf", fs.density(&disc.gas)), ("mu", mu)] {
        let _ = writeln!(out, "{k} {x:.16e}");
    }
    let _ = writeln!(out, "# x y p' u v T");
    for (p, w) in disc.grid.nodes.iter().zip(&state.nodes) {
        let _ = writeln!(
            out,
            "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
            p[0], p[1], w[P], w[U], w[V], w[T]
        );
    }
    out
}

pub fn write_solution(path: &Path, disc: &Discretization, state: &PrimitiveState) -> Result<()> {
    std::fs::write(path, format_solution(disc, state)).map_err(|e| Error::io(path, e))
}

pub fn parse_solution(text: &str, path: &Path) -> Result<Solution> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let mut next = |what: &str| lines.next().ok_or_else(|| err(text.lines().count() + 1, format!("missing {what}")));
    let (i, magic) = next("header")?;
    if magic.trim() != SOLUTION_MAGIC {
        return Err(err(i + 1, format!("expected '{SOLUTION_MAGIC}'")));
    }
    let mut key = |name: &str| -> Result<f64> {
        let (i, l) = next(name)?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 2 || f[0] != name {
            return Err(err(i + 1, format!("expected '{name} <value>'")));
        }
        f[1].parse().map_err(|_| err(i + 1, format!("cannot parse '{}'", f[1])))
    };
    let n = key("nodes")?;
    if n.fract() != 0.0 || n < 1.0 {
        return Err(err(2, "node count must be a positive integer".into()));
    }
    let meta = SolutionMeta {
        p_inf: key("p_inf")?,
        t_inf: key("t_inf")?,
        u_inf: key("u_inf")?,
        v_inf: key("v_inf")?,
        rho_inf: key("rho_inf")?,
        mu: key("mu")?,
    };
    let n = n as usize;
    let mut nodes = Vec::with_capacity(n);
    let mut state = Vec::with_capacity(n);
    for _ in 0..n {
        let (i, l) = next("node line")?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|_| err(i + 1, format!("cannot parse '{f}'"))))
            .collect::<Result<_>>()?;
        if v.len() != 6 {
            return Err(err(i + 1, format!("expected 6 values, found {}", v.len())));
        }
        nodes.push([v[0], v[1]]);
        state.push([v[2], v[3], v[4], v[5]]);
    }
    if let Some((i, _)) = lines.next() {
        return Err(err(i + 1, "trailing content".into()));
    }
    let state = PrimitiveState { nodes: state };
    state.validate(meta.p_inf)?;
    Ok(Solution { meta, nodes, state })
}

pub fn read_solution(path: &Path) -> Result<Solution> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_solution(&text, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub y: f64,
    /// `y sqrt(Re_x) / x`.
    pub eta: f64,
    pub u_ratio: f64,
    /// `(v / u_inf) sqrt(Re_x)`.
    pub v_scaled: f64,
    pub t: f64,
}

/// Samples along the vertical grid line nearest to `x`, sorted by height.
pub fn extract_profile(sol: &Solution, x: f64) -> Result<Vec<ProfileSample>> {
    let (xmin, xmax) = sol.nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[0]), b.max(p[0])));
    if !(x > 0.0 && x >= xmin && x <= xmax) {
        return Err(Error::Domain(format!("x = {x} outside the plate region (0, {xmax}] of the solution")));
    }
    if !(sol.meta.mu > 0.0) {
        return Err(Error::Domain("profile scaling needs a viscous solution".into()));
    }
    let line_x = sol
        .nodes
        .iter()
        .map(|p| p[0])
        .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
        .expect("non-empty solution");
    let tol = 1e-9 * (1.0 + line_x.abs());
    let q_inf = sol.meta.u_inf.hypot(sol.meta.v_inf);
    let re_x = sol.meta.rho_inf * q_inf * line_x / sol.meta.mu;
    let mut samples: Vec<ProfileSample> = sol
        .nodes
        .iter()
        .zip(&sol.state.nodes)
        .filter(|(p, _)| (p[0] - line_x).abs() <= tol)
        .map(|(p, w)| ProfileSample {
            y: p[1],
            eta: p[1] * re_x.sqrt() / line_x,
            u_ratio: w[U] / q_inf,
            v_scaled: w[V] / q_inf * re_x.sqrt(),
            t: w[T],
        })
        .collect();
    samples.sort_by(|a, b| a.y.total_cmp(&b.y));
    Ok(samples)
}

pub fn format_profile(samples: &[ProfileSample]) -> String {
    let mut out = String::from("eta,y,u_ratio,v_scaled,T\n");
    for s in samples {
        let _ = writeln!(out, "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}", s.eta, s.y, s.u_ratio, s.v_scaled, s.t);
    }
    out
}
