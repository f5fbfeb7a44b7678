//! Edge-based residual assembly on median-dual cells.
//!
//! `Res_j = sum_k Phi_jk(n_jk) + sum_b Phi_b(n_b) + S_j`, where each edge flux
//! enters its first node with a plus sign and its second with a minus sign,
//! boundary fluxes are evaluated weakly, and `S_j` is an optional integrated
//! source. Wall velocities are imposed strongly: at no-slip nodes both
//! momentum rows are excluded (zero) and the solver holds `u = v = 0`; at slip
//! nodes the wall flux is the consistent flux of the nodal state, the normal
//! momentum component is excluded and the solver holds `u . n = 0`. A uniform
//! stream therefore leaves no residual at walls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{alpha_damping_viscous_flux, euler_flux, roe_flux, Grad4};
use crate::gas::{FreestreamConditions, GasModel};
use crate::gradient::LsqStencil;
use crate::grid::{norm, BoundaryCondition, Grid};
use crate::real::{lift4, Real};
use crate::state::{is_physical, PrimitiveState, ResidualField, Vec4, P, T, U, V};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limiter {
    None,
    VanAlbada,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericalFluxConfig {
    /// Linear reconstruction of face states from nodal gradients.
    pub second_order: bool,
    pub limiter: Limiter,
    /// Limiter smoothing scale relative to `(p_inf, a_inf, a_inf, T_inf)`.
    pub limiter_delta: f64,
    /// Freeze the limiter once every residual norm has dropped this many orders.
    pub limiter_freeze_orders: f64,
    /// Harten entropy-fix fraction of the sound speed.
    pub entropy_fix: f64,
    /// Alpha-damping coefficient of the viscous flux.
    pub alpha: f64,
}

impl Default for NumericalFluxConfig {
    fn default() -> Self {
        NumericalFluxConfig {
            second_order: true,
            limiter: Limiter::None,
            limiter_delta: 1e-2,
            limiter_freeze_orders: 4.0,
            entropy_fix: 0.05,
            alpha: 4.0 / 3.0,
        }
    }
}

impl NumericalFluxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.limiter_delta > 0.0 && self.entropy_fix >= 0.0 && self.alpha >= 0.0 && self.limiter_freeze_orders > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid numerical flux settings: {self:?}")));
        }
        Ok(())
    }
}

/// Source contribution already integrated over each dual cell (`s_j V_j`).
///
/// Storing the integrated value means that a source built as `-R(w)` cancels
/// the assembled residual of the same state exactly: `x + (-x) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceField {
    pub integrated: Vec<Vec4>,
}

impl SourceField {
    pub fn zeros(n: usize) -> Self {
        SourceField { integrated: vec![[0.0; 4]; n] }
    }

    /// From pointwise source densities `s_j`.
    pub fn from_density(density: &[Vec4], grid: &Grid) -> Self {
        let integrated = density.iter().zip(&grid.dual_volumes).map(|(s, &v)| s.map(|x| x * v)).collect();
        SourceField { integrated }
    }

    /// The manufactured source making `w` an exact discrete solution: `S = -R(w)`.
    pub fn manufactured(residual: &ResidualField) -> Self {
        SourceField { integrated: residual.values.iter().map(|r| r.map(|x| -x)).collect() }
    }
}

/// Velocity condition imposed strongly at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WallConstraint {
    None,
    NoSlip,
    /// Zero velocity along the unit normal.
    Slip([f64; 2]),
}

/// Slip nodes whose face normals turn by more than about 120 degrees (a cusp)
/// have no usable normal and keep only the consistent wall flux.
fn wall_constraints(grid: &Grid) -> Vec<WallConstraint> {
    let n = grid.num_nodes();
    let mut sum = vec![[0.0f64; 2]; n];
    let mut total = vec![0.0f64; n];
    for f in grid.boundary_faces.iter().filter(|f| f.bc == BoundaryCondition::SlipWall) {
        sum[f.node][0] += f.normal[0];
        sum[f.node][1] += f.normal[1];
        total[f.node] += norm(f.normal);
    }
    let out: Vec<_> = (0..n)
        .map(|j| {
            if grid.is_no_slip(j) {
                WallConstraint::NoSlip
            } else if total[j] > 0.0 && norm(sum[j]) >= 0.5 * total[j] {
                let s = norm(sum[j]);
                WallConstraint::Slip([sum[j][0] / s, sum[j][1] / s])
            } else {
                WallConstraint::None
            }
        })
        .collect();
    let cusps = (0..n).filter(|&j| total[j] > 0.0 && out[j] == WallConstraint::None).count();
    if cusps > 0 {
        log::debug!("{cusps} slip-wall node(s) without a usable normal");
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssemblyStats {
    /// Edges that fell back to first order because a reconstructed state was non-physical.
    pub first_order_fallbacks: usize,
}

/// A grid together with the physical model and scheme settings.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Grid,
    pub gas: GasModel,
    pub freestream: FreestreamConditions,
    pub config: NumericalFluxConfig,
    pub(crate) w_inf: Vec4,
    pub(crate) reference: Vec4,
    pub(crate) lsq: LsqStencil,
    walls: Vec<WallConstraint>,
    /// Frozen limiter factors per edge, side and variable.
    limiter_ratios: Option<Vec<[Vec4; 2]>>,
}

/// Van Albada limiter factor for the slope `a` against the edge difference `b`,
/// smoothed by `delta2`. The limited slope is `phi a` with `|phi| <= 1`.
#[inline]
fn van_albada<S: Real>(a: S, b: S, delta2: S) -> S {
    (S::lift(2.0) * a * b + delta2) / (a * a + b * b + delta2)
}

impl Discretization {
    pub fn new(grid: Grid, gas: GasModel, freestream: FreestreamConditions, config: NumericalFluxConfig) -> Result<Self> {
        gas.validate()?;
        freestream.validate()?;
        config.validate()?;
        let w_inf = freestream.primitive(&gas);
        let a_inf = freestream.sound_speed(&gas);
        let reference = [freestream.p_inf, a_inf, a_inf, freestream.t_inf];
        let lsq = LsqStencil::new(&grid);
        let walls = wall_constraints(&grid);
        Ok(Discretization { grid, gas, freestream, config, w_inf, reference, lsq, walls, limiter_ratios: None })
    }

    /// Same scheme on the same grid with every boundary relabelled.
    pub fn with_all_boundaries(&self, bc: BoundaryCondition) -> Result<Self> {
        Discretization::new(self.grid.with_all_boundaries(bc)?, self.gas, self.freestream, self.config.clone())
    }

    pub fn num_nodes(&self) -> usize {
        self.grid.num_nodes()
    }

    pub fn p_inf(&self) -> f64 {
        self.freestream.p_inf
    }

    /// Primitive free-stream state `(0, u_inf, v_inf, T_inf)`.
    pub fn freestream_state(&self) -> Vec4 {
        self.w_inf
    }

    /// Per-variable reference magnitudes `(p_inf, a_inf, a_inf, T_inf)`.
    pub fn reference_scales(&self) -> Vec4 {
        self.reference
    }

    /// Uniform free stream at every node.
    pub fn uniform_state(&self) -> PrimitiveState {
        PrimitiveState::uniform(self.num_nodes(), self.w_inf)
    }

    /// Uniform free stream with the wall velocity imposed.
    pub fn initial_state(&self) -> PrimitiveState {
        let mut w = self.uniform_state();
        self.apply_strong_bcs(&mut w);
        w
    }

    pub fn wall_constraint(&self, j: usize) -> WallConstraint {
        self.walls[j]
    }

    /// Sets `u = v = 0` at no-slip nodes and removes the normal velocity at slip nodes.
    pub fn apply_strong_bcs(&self, w: &mut PrimitiveState) {
        for (wj, c) in w.nodes.iter_mut().zip(&self.walls) {
            match *c {
                WallConstraint::None => {}
                WallConstraint::NoSlip => {
                    wj[U] = 0.0;
                    wj[V] = 0.0;
                }
                WallConstraint::Slip(n) => {
                    let un = wj[U] * n[0] + wj[V] * n[1];
                    wj[U] -= un * n[0];
                    wj[V] -= un * n[1];
                }
            }
        }
    }

    /// Removes the momentum components replaced by the wall condition.
    #[inline]
    pub(crate) fn constrain_row<S: Real>(&self, j: usize, r: &mut [S; 4]) {
        match self.walls[j] {
            WallConstraint::None => {}
            WallConstraint::NoSlip => {
                r[U] = S::zero();
                r[V] = S::zero();
            }
            WallConstraint::Slip(n) => {
                let (nx, ny) = (S::lift(n[0]), S::lift(n[1]));
                let rn = r[U] * nx + r[V] * ny;
                r[U] -= rn * nx;
                r[V] -= rn * ny;
            }
        }
    }

    fn uses_limiter(&self) -> bool {
        self.config.second_order && self.config.limiter == Limiter::VanAlbada
    }

    pub fn limiter_frozen(&self) -> bool {
        self.limiter_ratios.is_some()
    }

    /// True when a limiter is active and still free to change.
    pub fn limiter_freezable(&self) -> bool {
        self.uses_limiter() && self.limiter_ratios.is_none()
    }

    /// Records the current limiter ratios so that later residuals use them unchanged.
    pub fn freeze_limiter(&mut self, w: &PrimitiveState) {
        if !self.uses_limiter() {
            return;
        }
        let grads = self.lsq.gradients(&self.grid, &w.nodes);
        let ratios = self
            .grid
            .edges
            .iter()
            .map(|e| {
                let [j, k] = e.nodes;
                let ev = self.edge_vector(j, k);
                let mut out = [[1.0; 4]; 2];
                for var in 0..4 {
                    let d2 = (self.config.limiter_delta * self.reference[var]).powi(2);
                    let b = w.nodes[k][var] - w.nodes[j][var];
                    for (side, g) in [(0, &grads[j]), (1, &grads[k])] {
                        let a = g[var][0] * ev[0] + g[var][1] * ev[1];
                        out[side][var] = van_albada(a, b, d2);
                    }
                }
                out
            })
            .collect();
        self.limiter_ratios = Some(ratios);
    }

    pub fn unfreeze_limiter(&mut self) {
        self.limiter_ratios = None;
    }

    #[inline]
    pub(crate) fn edge_vector(&self, j: usize, k: usize) -> [f64; 2] {
        let (a, b) = (self.grid.nodes[j], self.grid.nodes[k]);
        [b[0] - a[0], b[1] - a[1]]
    }

    /// Face states at edge `ei` from nodal values and gradients.
    fn reconstruct<S: Real>(
        &self,
        ei: usize,
        wj: &[S; 4],
        wk: &[S; 4],
        gj: &Grad4<S>,
        gk: &Grad4<S>,
        ev: [f64; 2],
    ) -> ([S; 4], [S; 4]) {
        let (ex, ey) = (S::lift(ev[0]), S::lift(ev[1]));
        let half = S::lift(0.5);
        let mut wl = *wj;
        let mut wr = *wk;
        for var in 0..4 {
            let aj = gj[var][0] * ex + gj[var][1] * ey;
            let ak = gk[var][0] * ex + gk[var][1] * ey;
            let (sj, sk) = match (&self.limiter_ratios, self.uses_limiter()) {
                (Some(r), true) => (S::lift(r[ei][0][var]) * aj, S::lift(r[ei][1][var]) * ak),
                (None, true) => {
                    let d2 = S::lift((self.config.limiter_delta * self.reference[var]).powi(2));
                    let b = wk[var] - wj[var];
                    (van_albada(aj, b, d2) * aj, van_albada(ak, b, d2) * ak)
                }
                _ => (aj, ak),
            };
            wl[var] += half * sj;
            wr[var] -= half * sk;
        }
        (wl, wr)
    }

    /// Weak boundary flux leaving node `w` through `n`.
    #[inline]
    pub(crate) fn boundary_flux<S: Real>(&self, bc: BoundaryCondition, w: &[S; 4], n: [f64; 2]) -> [S; 4] {
        let p_inf = self.freestream.p_inf;
        match bc {
            BoundaryCondition::Freestream => {
                roe_flux(w, &lift4(&self.w_inf), n, &self.gas, p_inf, self.config.entropy_fix)
            }
            BoundaryCondition::SlipWall => euler_flux(w, n, &self.gas, p_inf),
            BoundaryCondition::NoSlipWall => [S::zero(), w[P] * S::lift(n[0]), w[P] * S::lift(n[1]), S::zero()],
            BoundaryCondition::Outflow => euler_flux(&[S::zero(), w[U], w[V], w[T]], n, &self.gas, p_inf),
        }
    }

    pub fn assemble(&self, w: &PrimitiveState, source: Option<&SourceField>) -> Result<ResidualField> {
        self.assemble_with_stats(w, source).map(|(r, _)| r)
    }

    pub fn assemble_with_stats(
        &self,
        w: &PrimitiveState,
        source: Option<&SourceField>,
    ) -> Result<(ResidualField, AssemblyStats)> {
        let (values, stats) = self.residual_in(&w.nodes, source)?;
        Ok((ResidualField { values }, stats))
    }

    /// The residual evaluated in the scalar type `S`. With `S = f64` this is
    /// [`Discretization::assemble_with_stats`].
    pub fn residual_in<S: Real>(
        &self,
        w: &[[S; 4]],
        source: Option<&SourceField>,
    ) -> Result<(Vec<[S; 4]>, AssemblyStats)> {
        let n = self.num_nodes();
        if w.len() != n {
            return Err(Error::InvalidConfig(format!("state has {} nodes, grid has {n}", w.len())));
        }
        if let Some(s) = source {
            if s.integrated.len() != n {
                return Err(Error::InvalidConfig(format!("source has {} nodes, grid has {n}", s.integrated.len())));
            }
        }
        let p_inf = self.freestream.p_inf;
        for (node, wj) in w.iter().enumerate() {
            if !is_physical(wj, p_inf) {
                return Err(Error::NonPhysical { node, pressure: wj[P].lower() + p_inf, temperature: wj[T].lower() });
            }
        }
        let viscous = self.gas.is_viscous();
        let grads = if self.config.second_order || viscous { self.lsq.gradients(&self.grid, w) } else { Vec::new() };
        let zero_grad = [[S::zero(); 2]; 4];
        let mut stats = AssemblyStats::default();
        let mut res = vec![[S::zero(); 4]; n];

        for (ei, e) in self.grid.edges.iter().enumerate() {
            let [j, k] = e.nodes;
            let (wj, wk) = (&w[j], &w[k]);
            let ev = self.edge_vector(j, k);
            let (gj, gk) = if grads.is_empty() { (&zero_grad, &zero_grad) } else { (&grads[j], &grads[k]) };
            let (wl, wr) = if self.config.second_order {
                let (wl, wr) = self.reconstruct(ei, wj, wk, gj, gk, ev);
                if is_physical(&wl, p_inf) && is_physical(&wr, p_inf) {
                    (wl, wr)
                } else {
                    stats.first_order_fallbacks += 1;
                    (*wj, *wk)
                }
            } else {
                (*wj, *wk)
            };
            let mut phi = roe_flux(&wl, &wr, e.normal, &self.gas, p_inf, self.config.entropy_fix);
            if viscous {
                let fv = alpha_damping_viscous_flux(wj, wk, gj, gk, ev, e.normal, &self.gas, self.config.alpha);
                for i in 0..4 {
                    phi[i] -= fv[i];
                }
            }
            for i in 0..4 {
                res[j][i] += phi[i];
                res[k][i] -= phi[i];
            }
        }

        for f in &self.grid.boundary_faces {
            let phi = self.boundary_flux(f.bc, &w[f.node], f.normal);
            for i in 0..4 {
                res[f.node][i] += phi[i];
            }
        }

        for (j, r) in res.iter_mut().enumerate() {
            self.constrain_row(j, r);
        }

        if let Some(s) = source {
            for (r, s) in res.iter_mut().zip(&s.integrated) {
                for i in 0..4 {
                    r[i] += S::lift(s[i]);
                }
            }
        }
        if stats.first_order_fallbacks > 0 {
            log::debug!("{} edge(s) fell back to first order", stats.first_order_fallbacks);
        }
        Ok((res, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::ViscosityLaw;
    use crate::gridgen::{generate_flatplate_grid, generate_joukowsky_ogrid, FlatPlateGridSpec, JoukowskyGridSpec};

    fn square_grid(n: usize, stretching: f64) -> Grid {
        let spec = FlatPlateGridSpec { nx: n, ny: n, x_min: 0.0, plate_start: 0.5, x_max: 1.0, height: 1.0, stretching };
        generate_flatplate_grid(&spec).unwrap().with_all_boundaries(BoundaryCondition::Freestream).unwrap()
    }

    fn euler_disc(grid: Grid, mach: f64, aoa: f64, second_order: bool) -> Discretization {
        let cfg = NumericalFluxConfig { second_order, ..Default::default() };
        Discretization::new(grid, GasModel::air(), FreestreamConditions::standard(mach, aoa), cfg).unwrap()
    }

    #[test]
    fn freestream_is_preserved() {
        let grids = [
            square_grid(9, 1.1),
            generate_joukowsky_ogrid(&JoukowskyGridSpec { n_circumferential: 32, n_radial: 9, ..Default::default() })
                .unwrap()
                .with_all_boundaries(BoundaryCondition::Freestream)
                .unwrap(),
        ];
        for g in grids {
            for (mach, aoa) in [(0.15, 0.0), (0.85, 1.25), (2.0, -7.0)] {
                let d = euler_disc(g.clone(), mach, aoa, true);
                let fs = &d.freestream;
                let scale = fs.density(&d.gas) * fs.sound_speed(&d.gas).powi(2) * d.grid.mean_face_area();
                let r = d.assemble(&d.uniform_state(), None).unwrap();
                for (i, v) in r.l1_norms().iter().enumerate() {
                    assert!(*v <= 1e-12 * scale, "mach {mach} eq {i}: {v:e} vs scale {scale:e}");
                }
            }
        }
    }

    #[test]
    fn manufactured_source_annihilates_exactly() {
        let mut g = square_grid(7, 1.0);
        g = g.scaled(0.3).unwrap();
        let mut gas = GasModel::air();
        gas.viscosity = ViscosityLaw::Constant { mu: 1e-3 };
        let d = Discretization::new(g, gas, FreestreamConditions::standard(0.3, 2.0), NumericalFluxConfig::default())
            .unwrap();
        let mut w = d.uniform_state();
        for (j, p) in d.grid.nodes.iter().enumerate() {
            w.nodes[j][P] += 300.0 * (3.0 * p[0]).sin();
            w.nodes[j][U] += 5.0 * p[1];
            w.nodes[j][T] += 2.0 * (p[0] * p[1]).cos();
        }
        let r = d.assemble(&w, None).unwrap();
        assert!(r.l1_norms().iter().all(|&x| x > 0.0));
        let s = SourceField::manufactured(&r);
        let zero = d.assemble(&w, Some(&s)).unwrap();
        for row in &zero.values {
            for x in row {
                assert_eq!(x.to_bits() & !(1u64 << 63), 0);
            }
        }
    }

    #[test]
    fn interior_sum_equals_boundary_flux() {
        let d = euler_disc(square_grid(8, 1.0), 0.5, 10.0, true);
        let mut w = d.uniform_state();
        for (j, p) in d.grid.nodes.iter().enumerate() {
            w.nodes[j][P] = 2000.0 * p[0] * p[1];
            w.nodes[j][V] += 20.0 * p[0];
        }
        let r = d.assemble(&w, None).unwrap();
        let mut total = [0.0; 4];
        let mut boundary = [0.0; 4];
        let mut scale = [0.0f64; 4];
        for v in &r.values {
            for i in 0..4 {
                total[i] += v[i];
                scale[i] += v[i].abs();
            }
        }
        for f in &d.grid.boundary_faces {
            let phi = d.boundary_flux(f.bc, &w.nodes[f.node], f.normal);
            for i in 0..4 {
                boundary[i] += phi[i];
                scale[i] = scale[i].max(phi[i].abs());
            }
        }
        for i in 0..4 {
            assert!((total[i] - boundary[i]).abs() <= 1e-11 * scale[i], "eq {i}: {} vs {}", total[i], boundary[i]);
        }
    }

    #[test]
    fn no_slip_momentum_rows_are_dirichlet() {
        let spec = FlatPlateGridSpec { nx: 9, ny: 6, ..Default::default() };
        let g = generate_flatplate_grid(&spec).unwrap();
        let fs = FreestreamConditions::standard(0.15, 0.0).with_reynolds(1e4, 1.0);
        let gas = GasModel::air_from_reynolds(&fs).unwrap();
        let d = Discretization::new(g, gas, fs, NumericalFluxConfig::default()).unwrap();
        let w = d.initial_state();
        let walls: Vec<usize> = (0..d.num_nodes()).filter(|&j| d.grid.is_no_slip(j)).collect();
        assert_eq!(walls.len(), 6);
        let r = d.assemble(&w, None).unwrap();
        for &j in &walls {
            assert_eq!((w.nodes[j][U], w.nodes[j][V]), (0.0, 0.0));
            assert_eq!((r.values[j][1], r.values[j][2]), (0.0, 0.0));
            assert_ne!(r.values[j][0], 0.0);
        }
        // the uniform state still has zero momentum rows at the wall
        let r = d.assemble(&d.uniform_state(), None).unwrap();
        assert_eq!(r.values[walls[3]][1], 0.0);
    }

    #[test]
    fn non_physical_state_is_rejected() {
        let d = euler_disc(square_grid(5, 1.0), 0.5, 0.0, true);
        let mut w = d.uniform_state();
        w.nodes[3][T] = -1.0;
        assert!(matches!(d.assemble(&w, None), Err(Error::NonPhysical { node: 3, .. })));
    }

    #[test]
    fn strong_jump_falls_back_to_first_order() {
        let d = euler_disc(square_grid(9, 1.0), 0.5, 0.0, true);
        let mut w = d.uniform_state();
        // a steep ramp onto a low-pressure plateau: the unlimited extrapolation
        // from the plateau's first node overshoots below zero pressure
        for (j, p) in d.grid.nodes.iter().enumerate() {
            let p_abs = 1000.0 + 1.0e6 * (0.5 - p[0]).max(0.0);
            w.nodes[j][P] = p_abs - d.p_inf();
        }
        let (_, stats) = d.assemble_with_stats(&w, None).unwrap();
        assert!(stats.first_order_fallbacks > 0);
    }

    #[test]
    fn frozen_limiter_reproduces_live_limiter() {
        let cfg = NumericalFluxConfig { limiter: Limiter::VanAlbada, ..Default::default() };
        let mut d =
            Discretization::new(square_grid(9, 1.0), GasModel::air(), FreestreamConditions::standard(0.8, 0.0), cfg)
                .unwrap();
        let mut w = d.uniform_state();
        for (j, p) in d.grid.nodes.iter().enumerate() {
            w.nodes[j][P] = if p[0] > 0.5 { 20000.0 } else { 0.0 };
        }
        let live = d.assemble(&w, None).unwrap();
        d.freeze_limiter(&w);
        let frozen = d.assemble(&w, None).unwrap();
        for (a, b) in live.values.iter().zip(&frozen.values) {
            for i in 0..4 {
                assert!((a[i] - b[i]).abs() <= 1e-9 * (1.0 + a[i].abs()), "{a:?} {b:?}");
            }
        }
        // limiting removes overshoots: the unlimited residual differs
        let mut plain = d.clone();
        plain.unfreeze_limiter();
        plain.config.limiter = Limiter::None;
        assert_ne!(plain.assemble(&w, None).unwrap(), live);
    }

    #[test]
    fn assembly_is_deterministic() {
        let d = euler_disc(square_grid(10, 1.05), 0.7, 3.0, true);
        let mut w = d.uniform_state();
        for (j, p) in d.grid.nodes.iter().enumerate() {
            w.nodes[j][P] = 1000.0 * (5.0 * p[0]).sin() * p[1];
        }
        assert_eq!(d.assemble(&w, None).unwrap(), d.assemble(&w, None).unwrap());
    }
}
