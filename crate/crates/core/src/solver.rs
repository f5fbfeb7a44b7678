//! Implicit defect-correction iteration and termination policies.
//!
//! Each step solves
//! `(V/dt + dR1/dw) dw = -R(w)`
//! where `R` is the full (second-order, viscous) residual and `dR1/dw` is the
//! Jacobian of a first-order edge flux, relaxed by symmetric block
//! Gauss-Seidel sweeps. The primitive variables are updated directly.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{compute_rm_with_base, EstimateReport, MachineEpsilon, PerturbationRng};
use crate::flux::{alpha_damping_viscous_flux, roe_flux, spectral_radius};
use crate::residual::{Discretization, WallConstraint};
use crate::state::{conservative_jacobian, is_physical, PrimitiveState, ResidualField, Vec4, NEQ, P, T};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationConfig {
    /// Stop when every `dw(i)` falls below this value.
    pub dw_tolerance: f64,
    /// Stop when every residual is within `10^margin` of the estimates.
    pub stop_on_estimate: bool,
    pub estimate_margin_orders: f64,
    /// Stall detection: iterations in the window and the minimum relative decrease.
    pub stall_window: usize,
    pub stall_decrease: f64,
    /// Residual floor: stop once no equation has improved its best residual by
    /// `floor_factor` over the last `floor_window` iterations. `0` disables.
    pub floor_window: usize,
    pub floor_factor: f64,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        TerminationConfig {
            dw_tolerance: 1e-16,
            stop_on_estimate: false,
            estimate_margin_orders: 5.0,
            stall_window: 200,
            stall_decrease: 0.01,
            floor_window: 0,
            floor_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub cfl_start: f64,
    pub cfl_max: f64,
    pub cfl_growth: f64,
    /// Rejected updates halve the CFL; below this the run aborts.
    pub cfl_min: f64,
    /// Symmetric (forward + backward) sweeps per linear solve.
    pub linear_sweeps: usize,
    pub max_iterations: usize,
    /// Largest accepted relative change of absolute pressure or temperature at a node.
    pub max_relative_change: f64,
    pub termination: TerminationConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cfl_start: 1.0,
            cfl_max: 1e5,
            cfl_growth: 1.2,
            cfl_min: 1e-6,
            linear_sweeps: 10,
            max_iterations: 2000,
            max_relative_change: 0.5,
            termination: TerminationConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.termination;
        let ok = self.cfl_start > 0.0
            && self.cfl_max >= self.cfl_start
            && self.cfl_growth >= 1.0
            && self.cfl_min > 0.0
            && self.cfl_min <= self.cfl_start
            && self.linear_sweeps >= 1
            && self.max_relative_change > 0.0
            && t.dw_tolerance > 0.0
            && t.dw_tolerance <= 1.0
            && t.estimate_margin_orders.is_finite()
            && t.stall_window >= 1
            && t.stall_decrease >= 0.0
            && t.floor_factor >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid solver settings: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub res: Vec4,
    pub dw: Vec4,
    pub rm: Option<Vec4>,
    pub cfl: f64,
    /// Seconds since the start of the run.
    pub wtime: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceHistory {
    pub records: Vec<IterationRecord>,
}

pub const CSV_HEADER: &str = "iter,res1,res2,res3,res4,dw1,dw2,dw3,dw4,rm1,rm2,rm3,rm4,cfl,wtime";

impl ConvergenceHistory {
    pub fn push(&mut self, record: IterationRecord) {
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV text. Estimates are echoed as `#`-prefixed labelled rows before the header.
    pub fn to_csv(&self, estimates: Option<&EstimateReport>) -> String {
        let mut out = String::new();
        if let Some(e) = estimates {
            let row = |v: &Vec4| v.iter().map(|x| format!("{x:.9e}")).collect::<Vec<_>>().join(",");
            out.push_str(&format!("# rc,{}\n", row(&e.rc)));
            out.push_str(&format!("# rm,{}\n", row(&e.rm)));
            out.push_str(&format!("# eps,{:e}\n# seed,{}\n", e.eps, e.seed));
        }
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let mut fields = vec![r.iter.to_string()];
            fields.extend(r.res.iter().map(|x| format!("{x:.9e}")));
            fields.extend(r.dw.iter().map(|x| format!("{x:.9e}")));
            match &r.rm {
                Some(rm) => fields.extend(rm.iter().map(|x| format!("{x:.9e}"))),
                None => fields.extend(std::iter::repeat_n(String::new(), 4)),
            }
            fields.push(format!("{:.6e}", r.cfl));
            fields.push(format!("{:.3}", r.wtime));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path, estimates: Option<&EstimateReport>) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv(estimates).as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Parses [`to_csv`](Self::to_csv) output. Returns the history and the
    /// labelled estimate rows (`rc`, `rm`) when present.
    pub fn parse_csv(text: &str, path: &Path) -> Result<(ConvergenceHistory, Option<(Vec4, Vec4)>)> {
        let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let parse_vec = |fields: &[&str], line: usize| -> Result<Vec4> {
            let v: Vec<f64> = fields
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|_| err(line, format!("cannot parse '{f}'"))))
                .collect::<Result<_>>()?;
            v.try_into().map_err(|_| err(line, "expected four values".into()))
        };
        let mut rc = None;
        let mut rm = None;
        let mut header_seen = false;
        let mut history = ConvergenceHistory::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() {
                continue;
            }
            if let Some(rest) = l.strip_prefix('#') {
                let fields: Vec<&str> = rest.trim().split(',').collect();
                match fields[0] {
                    "rc" => rc = Some(parse_vec(&fields[1..], line)?),
                    "rm" => rm = Some(parse_vec(&fields[1..], line)?),
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if l != CSV_HEADER {
                    return Err(err(line, format!("expected header '{CSV_HEADER}'")));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 15 {
                return Err(err(line, format!("expected 15 fields, found {}", f.len())));
            }
            let iter = f[0].parse().map_err(|_| err(line, format!("bad iteration '{}'", f[0])))?;
            let res = parse_vec(&f[1..5], line)?;
            let dw = parse_vec(&f[5..9], line)?;
            let rm_row = if f[9..13].iter().all(|s| s.trim().is_empty()) { None } else { Some(parse_vec(&f[9..13], line)?) };
            let cfl = f[13].parse().map_err(|_| err(line, "bad cfl".into()))?;
            let wtime = f[14].parse().map_err(|_| err(line, "bad wtime".into()))?;
            let values = res.iter().chain(dw.iter()).chain(rm_row.iter().flatten());
            if values.into_iter().any(|x| !x.is_finite()) {
                return Err(err(line, "non-finite entry".into()));
            }
            history.push(IterationRecord { iter, res, dw, rm: rm_row, cfl, wtime });
        }
        if !header_seen {
            return Err(err(text.lines().count().max(1), "missing header".into()));
        }
        Ok((history, rc.zip(rm)))
    }
}

/// `dw(i) = (1/N) sum_j |w_new(i) - w_old(i)| / w~(i)`, with
/// `w~(i) = max_j |w_new(i)|` if that is at least `1e-5`, else 1.
pub fn dw_metric(w_new: &PrimitiveState, w_old: &PrimitiveState) -> Vec4 {
    assert_eq!(w_new.len(), w_old.len(), "states on different grids");
    let mut sum = [0.0; 4];
    let mut max = [0.0f64; 4];
    for (a, b) in w_new.nodes.iter().zip(&w_old.nodes) {
        for i in 0..NEQ {
            sum[i] += (a[i] - b[i]).abs();
            max[i] = max[i].max(a[i].abs());
        }
    }
    let n = w_new.len().max(1) as f64;
    std::array::from_fn(|i| {
        let scale = if max[i] >= 1e-5 { max[i] } else { 1.0 };
        sum[i] / n / scale
    })
}

/// Block sparse matrix with the edge structure of the grid.
#[derive(Debug, Clone)]
pub struct BlockJacobian {
    pub diag: Vec<Matrix4<f64>>,
    /// Per edge `(j, k)`: `[dRes_j/dw_k, dRes_k/dw_j]`.
    pub off: Vec<[Matrix4<f64>; 2]>,
}

fn to_matrix(a: &[[f64; 4]; 4]) -> Matrix4<f64> {
    Matrix4::from_fn(|r, c| a[r][c])
}

/// First-order edge flux used for the implicit operator: Roe flux of the nodal
/// states minus the viscous flux evaluated with zero nodal gradients.
fn first_order_flux(disc: &Discretization, wj: &Vec4, wk: &Vec4, e: [f64; 2], n: [f64; 2]) -> Vec4 {
    let mut phi = roe_flux(wj, wk, n, &disc.gas, disc.p_inf(), disc.config.entropy_fix);
    if disc.gas.is_viscous() {
        let g = [[0.0; 2]; 4];
        let fv = alpha_damping_viscous_flux(wj, wk, &g, &g, e, n, &disc.gas, disc.config.alpha);
        for i in 0..4 {
            phi[i] -= fv[i];
        }
    }
    phi
}

fn fd_step(disc: &Discretization, w: &Vec4, var: usize) -> f64 {
    1e-7 * w[var].abs().max(disc.reference_scales()[var])
}

/// Forward-difference derivatives of `f` with respect to each slot of `w`.
fn fd_columns(disc: &Discretization, w: &Vec4, base: &Vec4, f: impl Fn(&Vec4) -> Vec4) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for var in 0..4 {
        let h = fd_step(disc, w, var);
        let mut wp = *w;
        wp[var] += h;
        let fp = f(&wp);
        for r in 0..4 {
            m[(r, var)] = (fp[r] - base[r]) / h;
        }
    }
    m
}

/// Jacobian of the first-order residual (without pseudo-time terms) and the
/// per-node pseudo-time matrices `lambda_j dU/dw` (to be divided by the CFL).
pub fn first_order_jacobian(disc: &Discretization, w: &PrimitiveState) -> (BlockJacobian, Vec<Matrix4<f64>>) {
    let grid = &disc.grid;
    let n = grid.num_nodes();
    let mut diag = vec![Matrix4::zeros(); n];
    let mut off = Vec::with_capacity(grid.edges.len());
    let mut lambda = vec![0.0; n];
    let viscous = disc.gas.is_viscous();
    let p_inf = disc.p_inf();
    let visc_factor = (4.0f64 / 3.0).max(disc.gas.gamma / disc.gas.prandtl);

    for e in &grid.edges {
        let [j, k] = e.nodes;
        let (wj, wk) = (&w.nodes[j], &w.nodes[k]);
        let ev = disc.edge_vector(j, k);
        let base = first_order_flux(disc, wj, wk, ev, e.normal);
        let dj = fd_columns(disc, wj, &base, |x| first_order_flux(disc, x, wk, ev, e.normal));
        let dk = fd_columns(disc, wk, &base, |x| first_order_flux(disc, wj, x, ev, e.normal));
        diag[j] += dj;
        diag[k] -= dk;
        off.push([dk, -dj]);

        let avg: Vec4 = std::array::from_fn(|i| 0.5 * (wj[i] + wk[i]));
        let sr = spectral_radius(&avg, e.normal, &disc.gas);
        lambda[j] += sr;
        lambda[k] += sr;
        if viscous {
            let rho = (avg[P] + p_inf) / (disc.gas.gas_constant * avg[T]);
            let nu = visc_factor * disc.gas.viscosity.viscosity(avg[T]) / rho;
            let s2 = e.normal[0] * e.normal[0] + e.normal[1] * e.normal[1];
            lambda[j] += nu * s2 / grid.dual_volumes[j];
            lambda[k] += nu * s2 / grid.dual_volumes[k];
        }
    }
    for f in &grid.boundary_faces {
        let wj = &w.nodes[f.node];
        let base = disc.boundary_flux(f.bc, wj, f.normal);
        diag[f.node] += fd_columns(disc, wj, &base, |x| disc.boundary_flux(f.bc, x, f.normal));
        lambda[f.node] += spectral_radius(wj, f.normal, &disc.gas);
    }

    let time: Vec<Matrix4<f64>> = (0..n)
        .map(|j| to_matrix(&conservative_jacobian(&w.nodes[j], &disc.gas, p_inf)) * lambda[j])
        .collect();
    (BlockJacobian { diag, off }, time)
}

impl BlockJacobian {
    /// Zeroes the momentum rows of no-slip nodes and puts ones on their diagonal.
    /// Replaces momentum rows at wall nodes: identity rows at no-slip nodes;
    /// at slip nodes a tangential momentum row and a `n . du` constraint row.
    fn impose_dirichlet(&mut self, disc: &Discretization) {
        let grid = &disc.grid;
        for j in 0..grid.num_nodes() {
            match disc.wall_constraint(j) {
                WallConstraint::None => {}
                WallConstraint::NoSlip => {
                    for r in 1..3 {
                        for c in 0..4 {
                            self.diag[j][(r, c)] = 0.0;
                        }
                        self.diag[j][(r, r)] = 1.0;
                    }
                }
                WallConstraint::Slip(n) => {
                    tangential_rows(&mut self.diag[j], n);
                    for c in 0..4 {
                        self.diag[j][(2, c)] = 0.0;
                    }
                    self.diag[j][(2, 1)] = n[0];
                    self.diag[j][(2, 2)] = n[1];
                }
            }
        }
        for (ei, e) in grid.edges.iter().enumerate() {
            for (side, node) in e.nodes.iter().enumerate() {
                let block = &mut self.off[ei][side];
                match disc.wall_constraint(*node) {
                    WallConstraint::None => continue,
                    WallConstraint::NoSlip => {}
                    WallConstraint::Slip(n) => tangential_rows(block, n),
                }
                for c in 0..4 {
                    if disc.wall_constraint(*node) == WallConstraint::NoSlip {
                        block[(1, c)] = 0.0;
                    }
                    block[(2, c)] = 0.0;
                }
            }
        }
    }

    /// Symmetric block Gauss-Seidel for `A x = rhs` from `x = 0`.
    pub fn solve_sgs(&self, disc: &Discretization, rhs: &[Vec4], sweeps: usize) -> Result<Vec<Vec4>> {
        let grid = &disc.grid;
        let n = grid.num_nodes();
        let inv: Vec<Matrix4<f64>> = self
            .diag
            .iter()
            .enumerate()
            .map(|(j, d)| d.try_inverse().ok_or_else(|| Error::Singular(format!("diagonal block of node {j}"))))
            .collect::<Result<_>>()?;
        let mut x = vec![Vector4::<f64>::zeros(); n];
        let b: Vec<Vector4<f64>> = rhs.iter().map(|r| Vector4::from(*r)).collect();
        let relax = |j: usize, x: &mut Vec<Vector4<f64>>| {
            let mut r = b[j];
            for &ei in grid.incident_edges(j) {
                let e = &grid.edges[ei];
                if e.nodes[0] == j {
                    r -= self.off[ei][0] * x[e.nodes[1]];
                } else {
                    r -= self.off[ei][1] * x[e.nodes[0]];
                }
            }
            x[j] = inv[j] * r;
        };
        for _ in 0..sweeps {
            for j in 0..n {
                relax(j, &mut x);
            }
            for j in (0..n).rev() {
                relax(j, &mut x);
            }
        }
        Ok(x.iter().map(|v| [v[0], v[1], v[2], v[3]]).collect())
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: PrimitiveState,
    pub residual: ResidualField,
    /// CFL of the accepted update.
    pub cfl: f64,
    pub rejections: usize,
    pub first_order_fallbacks: usize,
}

/// Moves the tangential projection `t . (row1, row2)` into row 1, `t = (-n_y, n_x)`.
fn tangential_rows(m: &mut Matrix4<f64>, n: [f64; 2]) {
    for c in 0..4 {
        m[(1, c)] = -n[1] * m[(1, c)] + n[0] * m[(2, c)];
    }
}

/// One defect-correction step from `w` with residual `residual = R(w)`.
pub fn implicit_iterate(
    disc: &Discretization,
    w: &PrimitiveState,
    residual: &ResidualField,
    cfl: f64,
    cfg: &SolverConfig,
    iteration: usize,
) -> Result<StepOutcome> {
    let p_inf = disc.p_inf();
    let (base, time) = first_order_jacobian(disc, w);
    let rhs: Vec<Vec4> = residual
        .values
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let mut b = r.map(|x| -x);
            let wj = &w.nodes[j];
            match disc.wall_constraint(j) {
                WallConstraint::None => {}
                WallConstraint::NoSlip => {
                    b[1] = -wj[1];
                    b[2] = -wj[2];
                }
                WallConstraint::Slip(n) => {
                    b[1] = -(r[1] * -n[1] + r[2] * n[0]);
                    b[2] = -(wj[1] * n[0] + wj[2] * n[1]);
                }
            }
            b
        })
        .collect();
    let mut cfl = cfl;
    let mut rejections = 0;
    loop {
        let mut jac = base.clone();
        for (d, t) in jac.diag.iter_mut().zip(&time) {
            *d += t / cfl;
        }
        jac.impose_dirichlet(disc);
        let dw = jac.solve_sgs(disc, &rhs, cfg.linear_sweeps)?;
        let mut next = w.clone();
        let mut ok = true;
        for (j, (wn, d)) in next.nodes.iter_mut().zip(&dw).enumerate() {
            for i in 0..NEQ {
                wn[i] += d[i];
            }
            let old = &w.nodes[j];
            if !is_physical(wn, p_inf)
                || (d[P].abs() > cfg.max_relative_change * (old[P] + p_inf))
                || (d[T].abs() > cfg.max_relative_change * old[T])
            {
                ok = false;
                break;
            }
        }
        if ok {
            disc.apply_strong_bcs(&mut next);
            let (residual, stats) = disc.assemble_with_stats(&next, None)?;
            return Ok(StepOutcome {
                state: next,
                residual,
                cfl,
                rejections,
                first_order_fallbacks: stats.first_order_fallbacks,
            });
        }
        rejections += 1;
        cfl *= 0.5;
        log::debug!("iteration {iteration}: update rejected, CFL reduced to {cfl:e}");
        if cfl < cfg.cfl_min {
            return Err(Error::CflUnderflow { cfl, iteration });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    ConvergedDw,
    ConvergedEstimate,
    Stalled,
}

/// Termination policy. Priority: converged_estimate, converged_dw, stalled.
///
/// `converged_dw` needs at least one completed solver step (the initial record
/// carries `dw = 0`).
pub fn terminate(history: &ConvergenceHistory, estimates: &EstimateReport, cfg: &TerminationConfig) -> Decision {
    let Some(last) = history.last() else {
        return Decision::Continue;
    };
    let level = estimates.level();
    let margin = 10f64.powf(cfg.estimate_margin_orders);
    if cfg.stop_on_estimate && (0..NEQ).all(|i| last.res[i] <= margin * level[i]) {
        return Decision::ConvergedEstimate;
    }
    if last.iter >= 1 && last.dw.iter().all(|&d| d < cfg.dw_tolerance) {
        return Decision::ConvergedDw;
    }
    let n = history.len();
    if n > cfg.stall_window {
        let then = &history.records[n - 1 - cfg.stall_window];
        let flat = (0..NEQ).all(|i| last.res[i] > (1.0 - cfg.stall_decrease) * then.res[i]);
        let above = (0..NEQ).any(|i| last.res[i] > margin * level[i]);
        if flat && above {
            return Decision::Stalled;
        }
    }
    Decision::Continue
}

/// True once no equation has lowered its best residual by `floor_factor` over
/// the last `floor_window` records.
pub fn floor_reached(history: &ConvergenceHistory, cfg: &TerminationConfig) -> bool {
    let w = cfg.floor_window;
    let n = history.len();
    if w == 0 || n <= 2 * w {
        return false;
    }
    (0..NEQ).all(|i| {
        let best = |rs: &[IterationRecord]| rs.iter().map(|r| r.res[i]).fold(f64::INFINITY, f64::min);
        let before = best(&history.records[..n - w]);
        let recent = best(&history.records[n - w..]);
        recent * cfg.floor_factor >= before
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    ConvergedDw,
    ConvergedEstimate,
    Stalled,
    ResidualFloor,
    MaxIterations,
    Aborted,
}

impl TerminationReason {
    pub fn exit_code(self) -> i32 {
        match self {
            TerminationReason::ConvergedDw | TerminationReason::ConvergedEstimate | TerminationReason::ResidualFloor => 0,
            TerminationReason::Aborted => 1,
            TerminationReason::Stalled => 2,
            TerminationReason::MaxIterations => 3,
        }
    }

    fn from_decision(d: Decision) -> Option<Self> {
        match d {
            Decision::Continue => None,
            Decision::ConvergedDw => Some(TerminationReason::ConvergedDw),
            Decision::ConvergedEstimate => Some(TerminationReason::ConvergedEstimate),
            Decision::Stalled => Some(TerminationReason::Stalled),
        }
    }
}

/// How the manufactured-solution estimate is sampled during a run.
#[derive(Debug, Clone, Copy)]
pub struct SamplingOptions {
    /// Sample every `stride` iterations; `0` disables sampling.
    pub stride: usize,
    pub rng: PerturbationRng,
    pub eps: MachineEpsilon,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub state: PrimitiveState,
    pub history: ConvergenceHistory,
    pub estimates: EstimateReport,
    pub reason: TerminationReason,
    pub error: Option<String>,
    /// Accepted solver steps.
    pub steps: usize,
    pub rejections: usize,
    pub first_order_fallbacks: usize,
    pub limiter_frozen_at: Option<usize>,
}

/// Iterates from `w0` until a termination policy fires. `estimates` must carry
/// `R_c`; `R_m` is refreshed according to `sampling`. Errors end the run with
/// reason `aborted`, keeping the history recorded so far.
pub fn solve(
    disc: &mut Discretization,
    w0: PrimitiveState,
    cfg: &SolverConfig,
    mut estimates: EstimateReport,
    sampling: &SamplingOptions,
) -> SolveOutcome {
    let start = std::time::Instant::now();
    let mut out = SolveOutcome {
        state: w0,
        history: ConvergenceHistory::default(),
        estimates: estimates.clone(),
        reason: TerminationReason::Aborted,
        error: None,
        steps: 0,
        rejections: 0,
        first_order_fallbacks: 0,
        limiter_frozen_at: None,
    };
    let result = (|| -> Result<TerminationReason> {
        let sample = |disc: &Discretization, w: &PrimitiveState, r: &ResidualField, iter: usize| -> Result<Option<Vec4>> {
            if sampling.stride > 0 && iter % sampling.stride == 0 {
                compute_rm_with_base(disc, w, r, &sampling.rng, sampling.eps).map(Some)
            } else {
                Ok(None)
            }
        };
        let (mut residual, stats) = disc.assemble_with_stats(&out.state, None)?;
        out.first_order_fallbacks = stats.first_order_fallbacks;
        let mut peak = residual.l1_norms();
        let mut cfl = cfg.cfl_start;
        let mut iter = 0;
        let mut pending_dw = [0.0; 4];
        loop {
            let rm = sample(disc, &out.state, &residual, iter)?;
            if let Some(rm) = rm {
                estimates.update_rm(rm, iter);
            }
            let res = residual.l1_norms();
            let record = IterationRecord {
                iter,
                res,
                dw: pending_dw,
                rm,
                cfl,
                wtime: start.elapsed().as_secs_f64(),
            };
            out.history.push(record);
            if res.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("non-finite residual at iteration {iter}")));
            }
            if let Some(reason) = TerminationReason::from_decision(terminate(&out.history, &estimates, &cfg.termination)) {
                return Ok(reason);
            }
            if floor_reached(&out.history, &cfg.termination) {
                return Ok(TerminationReason::ResidualFloor);
            }
            if iter >= cfg.max_iterations {
                return Ok(TerminationReason::MaxIterations);
            }
            for i in 0..NEQ {
                peak[i] = peak[i].max(res[i]);
            }
            if disc.limiter_freezable() {
                let drop = 10f64.powf(-disc.config.limiter_freeze_orders);
                if (0..NEQ).all(|i| res[i] <= drop * peak[i]) {
                    disc.freeze_limiter(&out.state);
                    residual = disc.assemble(&out.state, None)?;
                    out.limiter_frozen_at = Some(iter);
                    log::info!("limiter frozen at iteration {iter}");
                }
            }

            let step = implicit_iterate(disc, &out.state, &residual, cfl, cfg, iter + 1)?;
            pending_dw = dw_metric(&step.state, &out.state);
            out.rejections += step.rejections;
            out.first_order_fallbacks = step.first_order_fallbacks;
            cfl = (step.cfl * cfg.cfl_growth).min(cfg.cfl_max);
            out.state = step.state;
            residual = step.residual;
            out.steps += 1;
            iter += 1;
            if iter % 50 == 0 {
                log::info!("iter {iter}: res {:.3e} {:.3e} {:.3e} {:.3e}, cfl {cfl:.2e}", res[0], res[1], res[2], res[3]);
            }
        }
    })();
    match result {
        Ok(reason) => out.reason = reason,
        Err(e) => {
            out.reason = TerminationReason::Aborted;
            out.error = Some(e.to_string());
        }
    }
    out.estimates = estimates;
    out
}
