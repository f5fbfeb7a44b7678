//! Node-wise primitive states and residual fields.
//!
//! A node carries `w = (p', u, v, T)` where `p' = p - p_inf` is the gauge
//! pressure. Residual rows are ordered continuity, x-momentum, y-momentum,
//! energy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::GasModel;
use crate::real::Real;

/// One node's worth of four values (primitive, conservative or residual).
pub type Vec4 = [f64; 4];

pub const NEQ: usize = 4;

/// Slot indices of the primitive vector.
pub const P: usize = 0;
pub const U: usize = 1;
pub const V: usize = 2;
pub const T: usize = 3;

#[inline]
pub fn is_physical<S: Real>(w: &[S; 4], p_inf: f64) -> bool {
    w[T] > S::zero() && w[P] + S::lift(p_inf) > S::zero() && w.iter().all(|x| x.is_finite())
}

/// `(p', u, v, T)` to `(rho, rho u, rho v, rho E)`. The caller guarantees a physical state.
#[inline]
pub fn primitive_to_conservative(w: &Vec4, gas: &GasModel, p_inf: f64) -> Vec4 {
    let p = w[P] + p_inf;
    let rho = p / (gas.gas_constant * w[T]);
    let ke = 0.5 * (w[U] * w[U] + w[V] * w[V]);
    [rho, rho * w[U], rho * w[V], p / (gas.gamma - 1.0) + rho * ke]
}

/// Inverse of [`primitive_to_conservative`]. Returns `None` for non-positive density or pressure.
#[inline]
pub fn conservative_to_primitive(q: &Vec4, gas: &GasModel, p_inf: f64) -> Option<Vec4> {
    let rho = q[0];
    if !(rho > 0.0) {
        return None;
    }
    let u = q[1] / rho;
    let v = q[2] / rho;
    let p = (gas.gamma - 1.0) * (q[3] - 0.5 * rho * (u * u + v * v));
    if !(p > 0.0) {
        return None;
    }
    Some([p - p_inf, u, v, p / (rho * gas.gas_constant)])
}

/// Jacobian `dU/dw` of the conservative vector with respect to the primitive vector.
pub fn conservative_jacobian(w: &Vec4, gas: &GasModel, p_inf: f64) -> [[f64; 4]; 4] {
    let r = gas.gas_constant;
    let p = w[P] + p_inf;
    let t = w[T];
    let rho = p / (r * t);
    let drho_dp = 1.0 / (r * t);
    let drho_dt = -rho / t;
    let (u, v) = (w[U], w[V]);
    let ke = 0.5 * (u * u + v * v);
    [
        [drho_dp, 0.0, 0.0, drho_dt],
        [u * drho_dp, rho, 0.0, u * drho_dt],
        [v * drho_dp, 0.0, rho, v * drho_dt],
        [1.0 / (gas.gamma - 1.0) + ke * drho_dp, rho * u, rho * v, ke * drho_dt],
    ]
}

/// Primitive variables at every grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveState {
    pub nodes: Vec<Vec4>,
}

impl PrimitiveState {
    pub fn uniform(n: usize, w: Vec4) -> Self {
        PrimitiveState { nodes: vec![w; n] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Checks `T > 0` and `p' + p_inf > 0` everywhere, naming the first offending node.
    pub fn validate(&self, p_inf: f64) -> Result<()> {
        match self.nodes.iter().position(|w| !is_physical(w, p_inf)) {
            None => Ok(()),
            Some(node) => {
                let w = self.nodes[node];
                Err(Error::NonPhysical { node, pressure: w[P] + p_inf, temperature: w[T] })
            }
        }
    }

    pub fn conservative(&self, node: usize, gas: &GasModel, p_inf: f64) -> Result<Vec4> {
        let w = &self.nodes[node];
        if !is_physical(w, p_inf) {
            return Err(Error::NonPhysical { node, pressure: w[P] + p_inf, temperature: w[T] });
        }
        Ok(primitive_to_conservative(w, gas, p_inf))
    }
}

/// Per-node residual values (one row per equation) with their L1 norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    pub values: Vec<Vec4>,
}

impl ResidualField {
    pub fn zeros(n: usize) -> Self {
        ResidualField { values: vec![[0.0; 4]; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l1_norms(&self) -> Vec4 {
        l1_norms(&self.values)
    }

    /// Field-wise difference `self - other`.
    pub fn difference(&self, other: &ResidualField) -> ResidualField {
        assert_eq!(self.len(), other.len(), "residual fields on different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]])
            .collect();
        ResidualField { values }
    }
}

/// Arithmetic mean of absolute values over nodes, per equation.
pub fn l1_norms(values: &[Vec4]) -> Vec4 {
    let mut sum = [0.0; 4];
    for r in values {
        for i in 0..NEQ {
            sum[i] += r[i].abs();
        }
    }
    let n = values.len().max(1) as f64;
    sum.map(|s| s / n)
}
