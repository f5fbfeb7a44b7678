//! Estimates of the residual level reachable at machine precision.
//!
//! A converged discrete solution stored in floating point carries relative
//! errors of order `eps`, so its residual cannot fall below roughly
//! `|| (dR/dU) eps r U ||`. Two estimates of that level are computed:
//!
//! * `R_c`: the residual of a randomly perturbed uniform free stream, available
//!   before any iteration;
//! * `R_m`: the residual change caused by randomly perturbing the current
//!   iterate, i.e. the free-stream construction applied to the problem for
//!   which the current iterate is the exact solution.

use std::ops::Mul;

use num::{BigRational, Signed};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::residual::Discretization;
use crate::state::{PrimitiveState, ResidualField, Vec4, NEQ, T};

/// Relative perturbation magnitude, `0 < eps <= 1e-2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MachineEpsilon(f64);

impl MachineEpsilon {
    pub const DOUBLE: MachineEpsilon = MachineEpsilon(1e-16);

    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps <= 1e-2 {
            Ok(MachineEpsilon(eps))
        } else {
            Err(Error::InvalidConfig(format!("perturbation eps must lie in (0, 1e-2], got {eps}")))
        }
    }

    /// The zero perturbation, used to check the unperturbed limit.
    pub fn unperturbed() -> Self {
        MachineEpsilon(0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for MachineEpsilon {
    type Error = Error;
    fn try_from(eps: f64) -> Result<Self> {
        MachineEpsilon::new(eps)
    }
}

impl From<MachineEpsilon> for f64 {
    fn from(eps: MachineEpsilon) -> f64 {
        eps.0
    }
}

/// Node-indexed random numbers in `[0, 1)`. Each node reads the first word of
/// its own ChaCha stream, so draws depend only on `(seed, node)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationRng {
    seed: u64,
    fixed: Option<f64>,
}

impl PerturbationRng {
    pub fn new(seed: u64) -> Self {
        PerturbationRng { seed, fixed: None }
    }

    /// Every node draws `r`.
    pub fn fixed(r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidConfig(format!("fixed draw must lie in [0, 1], got {r}")));
        }
        Ok(PerturbationRng { seed: 0, fixed: Some(r) })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draw(&self, node: usize) -> f64 {
        if let Some(r) = self.fixed {
            return r;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(node as u64);
        rng.random::<f64>()
    }
}

/// Scalars the perturbation formulas can be evaluated in: `f64` for the flow
/// solver and exact rationals for reference computations.
pub trait PerturbScalar: Clone + PartialOrd + Signed + for<'a> Mul<&'a Self, Output = Self> {
    fn from_f64(x: f64) -> Self;
}

impl PerturbScalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
}

impl PerturbScalar for BigRational {
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite value")
    }
}

/// `a` if `|a| >= |b|`, else `b`.
#[inline]
pub fn maxmod<S: PerturbScalar>(a: S, b: S) -> S {
    if a.abs() >= b.abs() {
        a
    } else {
        b
    }
}

/// `x (1 + er)` evaluated as `x + x er`, one rounding in floating point.
#[inline]
pub fn scale_up<S: PerturbScalar>(x: S, er: &S) -> S {
    let dx = x.clone() * er;
    x + dx
}

/// `maxmod(x (1 + eps r), eps r)`: relative perturbation with an absolute floor.
#[inline]
pub fn floored_perturbation<S: PerturbScalar>(x: S, eps: f64, r: f64) -> S {
    let er = S::from_f64(eps * r);
    maxmod(scale_up(x, &er), er)
}

#[inline]
fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Perturbed free stream at node `j`:
/// `(eps(1+eps r), maxmod(u, sign(u) eps)(1+eps r), maxmod(v, sign(v) eps)(1+eps r), T(1+eps r))`.
pub fn perturb_freestream(w_inf: &Vec4, rng: &PerturbationRng, eps: MachineEpsilon, j: usize) -> Vec4 {
    let e = eps.value();
    let er = e * rng.draw(j);
    [
        scale_up(e, &er),
        scale_up(maxmod(w_inf[1], sign(w_inf[1]) * e), &er),
        scale_up(maxmod(w_inf[2], sign(w_inf[2]) * e), &er),
        scale_up(w_inf[T], &er),
    ]
}

/// Perturbed current solution at node `j`: floored perturbation of `p'`, `u`,
/// `v` and a pure relative perturbation of `T`.
pub fn perturb_current(w: &Vec4, rng: &PerturbationRng, eps: MachineEpsilon, j: usize) -> Vec4 {
    let e = eps.value();
    let r = rng.draw(j);
    [
        floored_perturbation(w[0], e, r),
        floored_perturbation(w[1], e, r),
        floored_perturbation(w[2], e, r),
        scale_up(w[T], &(e * r)),
    ]
}

/// A discrete residual with `block` unknowns and equations per node.
pub trait ResidualOperator {
    type Scalar: PerturbScalar;

    fn block(&self) -> usize;

    /// Residual rows, node-major, rounded to `f64`.
    fn residual(&self, state: &[Self::Scalar]) -> Result<Vec<f64>>;

    /// Perturbation rule for unknown `slot` of a node.
    fn perturb(&self, value: Self::Scalar, slot: usize, eps: f64, r: f64) -> Self::Scalar;
}

/// Per-equation arithmetic means of `|a - b|`, node-major layout.
pub fn difference_norms(a: &[f64], b: &[f64], block: usize) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    let mut sums = vec![0.0; block];
    for (x, y) in a.chunks_exact(block).zip(b.chunks_exact(block)) {
        for i in 0..block {
            sums[i] += (x[i] - y[i]).abs();
        }
    }
    let n = (a.len() / block).max(1) as f64;
    sums.into_iter().map(|s| s / n).collect()
}

/// `|| R(U + eps r U) - S ||` per equation, with `S = R(U)` unless supplied.
pub fn manufactured_estimate<O: ResidualOperator>(
    op: &O,
    state: &[O::Scalar],
    base: Option<&[f64]>,
    rng: &PerturbationRng,
    eps: MachineEpsilon,
) -> Result<Vec<f64>> {
    let block = op.block();
    let owned;
    let base = match base {
        Some(b) => b,
        None => {
            owned = op.residual(state)?;
            &owned
        }
    };
    let perturbed: Vec<O::Scalar> = state
        .iter()
        .enumerate()
        .map(|(i, x)| op.perturb(x.clone(), i % block, eps.value(), rng.draw(i / block)))
        .collect();
    let r = op.residual(&perturbed)?;
    Ok(difference_norms(&r, base, block))
}

impl ResidualOperator for Discretization {
    type Scalar = f64;

    fn block(&self) -> usize {
        NEQ
    }

    fn residual(&self, state: &[f64]) -> Result<Vec<f64>> {
        let nodes = state.chunks_exact(NEQ).map(|c| [c[0], c[1], c[2], c[3]]).collect();
        let r = self.assemble(&PrimitiveState { nodes }, None)?;
        Ok(r.values.as_flattened().to_vec())
    }

    fn perturb(&self, value: f64, slot: usize, eps: f64, r: f64) -> f64 {
        if slot == T {
            scale_up(value, &(eps * r))
        } else {
            floored_perturbation(value, eps, r)
        }
    }
}

/// Free-stream estimate with the discretization's boundary conditions.
pub fn compute_rc(disc: &Discretization, rng: &PerturbationRng, eps: MachineEpsilon) -> Result<Vec4> {
    let w_inf = disc.freestream_state();
    let nodes = (0..disc.num_nodes()).map(|j| perturb_freestream(&w_inf, rng, eps, j)).collect();
    Ok(disc.assemble(&PrimitiveState { nodes }, None)?.l1_norms())
}

/// Manufactured-solution estimate at the state `w`.
pub fn compute_rm(disc: &Discretization, w: &PrimitiveState, rng: &PerturbationRng, eps: MachineEpsilon) -> Result<Vec4> {
    let base = disc.assemble(w, None)?;
    compute_rm_with_base(disc, w, &base, rng, eps)
}

/// As [`compute_rm`], reusing an already assembled `S = R(w)`.
pub fn compute_rm_with_base(
    disc: &Discretization,
    w: &PrimitiveState,
    base: &ResidualField,
    rng: &PerturbationRng,
    eps: MachineEpsilon,
) -> Result<Vec4> {
    let nodes = w.nodes.iter().enumerate().map(|(j, wj)| perturb_current(wj, rng, eps, j)).collect();
    let perturbed = disc.assemble(&PrimitiveState { nodes }, None)?;
    Ok(perturbed.difference(base).l1_norms())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub rc: Vec4,
    /// Latest manufactured-solution estimate (zero until sampled).
    pub rm: Vec4,
    pub eps: f64,
    pub seed: u64,
    /// Iteration at which `rm` was sampled.
    pub rm_iteration: Option<usize>,
}

impl EstimateReport {
    pub fn new(rc: Vec4, eps: MachineEpsilon, seed: u64) -> Self {
        EstimateReport { rc, rm: [0.0; 4], eps: eps.value(), seed, rm_iteration: None }
    }

    pub fn update_rm(&mut self, rm: Vec4, iteration: usize) {
        self.rm = rm;
        self.rm_iteration = Some(iteration);
    }

    /// `max(R_c, R_m)` per equation.
    pub fn level(&self) -> Vec4 {
        std::array::from_fn(|i| self.rc[i].max(self.rm[i]))
    }
}
