//! Brute-force references for testing: dense finite-difference Jacobians and a
//! linear model system whose machine-zero residual is known exactly.

use nalgebra::{DMatrix, DVector};
use num::{BigRational, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::estimator::{manufactured_estimate, scale_up, MachineEpsilon, PerturbScalar, PerturbationRng, ResidualOperator};
use crate::real::{DoubleDouble, Real};
use crate::residual::Discretization;
use crate::state::PrimitiveState;

/// Largest node count accepted by [`fd_jacobian`].
pub const MAX_DENSE_NODES: usize = 500;

/// `d Res / d w`, rows and columns in node-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseJacobian {
    pub matrix: DMatrix<f64>,
    /// Columns evaluated with a one-sided difference.
    pub one_sided_columns: Vec<usize>,
}

impl DenseJacobian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(v)).as_slice().to_vec()
    }
}

/// Column-by-column central differences of `residual` around `state`, taken
/// in the scalar type `S`. Column `i` uses the step
/// `step * max(|state_i|, scales[i % block])`. When one side of the stencil is
/// rejected by `residual` the other side is used alone.
pub fn fd_jacobian_with<S, F>(residual: F, state: &[f64], scales: &[f64], step: f64) -> Result<DenseJacobian>
where
    S: Real,
    F: Fn(&[S]) -> Result<Vec<S>>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {step}")));
    }
    let block = scales.len();
    let n = state.len();
    let x0: Vec<S> = state.iter().map(|&v| S::lift(v)).collect();
    let base = residual(&x0)?;
    let mut matrix = DMatrix::zeros(base.len(), n);
    let mut one_sided = Vec::new();
    let mut x = x0.clone();
    for i in 0..n {
        let h = S::lift(step * state[i].abs().max(scales[i % block]));
        // divide by the spacing actually realised in floating point
        let (xp, xm) = (x0[i] + h, x0[i] - h);
        x[i] = xp;
        let plus = residual(&x);
        x[i] = xm;
        let minus = residual(&x);
        x[i] = x0[i];
        let (col, denom): (Vec<S>, S) = match (plus, minus) {
            (Ok(p), Ok(m)) => (p.iter().zip(&m).map(|(&a, &b)| a - b).collect(), xp - xm),
            (Ok(p), Err(_)) => {
                one_sided.push(i);
                (p.iter().zip(&base).map(|(&a, &b)| a - b).collect(), xp - x0[i])
            }
            (Err(_), Ok(m)) => {
                one_sided.push(i);
                (base.iter().zip(&m).map(|(&a, &b)| a - b).collect(), x0[i] - xm)
            }
            (Err(e), Err(_)) => return Err(e),
        };
        for (r, &d) in col.iter().enumerate() {
            matrix[(r, i)] = (d / denom).lower();
        }
    }
    Ok(DenseJacobian { matrix, one_sided_columns: one_sided })
}

fn check_dense_size(disc: &Discretization) -> Result<()> {
    if disc.num_nodes() > MAX_DENSE_NODES {
        return Err(Error::InvalidConfig(format!(
            "dense Jacobian limited to {MAX_DENSE_NODES} nodes, grid has {}",
            disc.num_nodes()
        )));
    }
    Ok(())
}

fn flat_residual<S: Real>(disc: &Discretization, x: &[S]) -> Result<Vec<S>> {
    let nodes: Vec<[S; 4]> = x.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
    Ok(disc.residual_in(&nodes, None)?.0.into_flattened())
}

/// Dense Jacobian of the full residual at `w`, with steps relative to
/// `max(|w|, (p_inf, a_inf, a_inf, T_inf))`.
pub fn fd_jacobian(disc: &Discretization, w: &PrimitiveState, step: f64) -> Result<DenseJacobian> {
    fd_jacobian_in::<f64>(disc, w, step)
}

/// [`fd_jacobian`] with the residual and differences evaluated in `S`.
/// `S = DoubleDouble` keeps roundoff far below the truncation error for steps
/// down to about `1e-10`.
pub fn fd_jacobian_in<S: Real>(disc: &Discretization, w: &PrimitiveState, step: f64) -> Result<DenseJacobian> {
    check_dense_size(disc)?;
    fd_jacobian_with::<S, _>(|x| flat_residual(disc, x), w.nodes.as_flattened(), &disc.reference_scales(), step)
}

/// `(R(w + h v) - R(w - h v)) / 2h` evaluated in double-double and rounded.
pub fn directional_difference(disc: &Discretization, w: &PrimitiveState, v: &[f64], h: f64) -> Result<Vec<f64>> {
    let x = w.nodes.as_flattened();
    if v.len() != x.len() {
        return Err(Error::InvalidConfig(format!("direction has {} entries, state has {}", v.len(), x.len())));
    }
    let h = DoubleDouble::lift(h);
    let shifted = |sign: f64| -> Vec<DoubleDouble> {
        x.iter().zip(v).map(|(&a, &b)| DoubleDouble::lift(a) + h * DoubleDouble::lift(sign * b)).collect()
    };
    let plus = flat_residual(disc, &shifted(1.0))?;
    let minus = flat_residual(disc, &shifted(-1.0))?;
    let two_h = h + h;
    Ok(plus.iter().zip(&minus).map(|(&p, &m)| ((p - m) / two_h).lower()).collect())
}

/// `R(U) = A U - b`, evaluated exactly and rounded once.
#[derive(Debug, Clone)]
pub struct LinearModelSystem {
    a: Vec<Vec<BigRational>>,
    b: Vec<BigRational>,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// `A^-1 b` rounded to double precision.
    pub solution: DVector<f64>,
}

impl LinearModelSystem {
    pub fn new(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n || rhs.len() != n {
            return Err(Error::InvalidConfig(format!(
                "linear model needs a square matrix and matching right-hand side, got {}x{} and {}",
                matrix.nrows(),
                matrix.ncols(),
                rhs.len()
            )));
        }
        if matrix.iter().chain(rhs.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("linear model entries must be finite".into()));
        }
        let lu = matrix.clone().lu();
        let u = lu.u();
        let scale = matrix.amax();
        if (0..n).any(|i| u[(i, i)].abs() <= 1e-14 * n as f64 * scale) {
            return Err(Error::Singular("linear model matrix".into()));
        }
        let solution = lu.solve(&rhs).ok_or_else(|| Error::Singular("linear model matrix".into()))?;
        let a = (0..n).map(|i| (0..n).map(|j| BigRational::from_f64(matrix[(i, j)])).collect()).collect();
        let b = rhs.iter().map(|&x| BigRational::from_f64(x)).collect();
        Ok(LinearModelSystem { a, b, matrix, rhs, solution })
    }

    pub fn size(&self) -> usize {
        self.b.len()
    }

    fn exact_residual(&self, u: &[BigRational]) -> Vec<BigRational> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| row.iter().zip(u).fold(-bi.clone(), |acc, (aij, uj)| acc + aij * uj))
            .collect()
    }

    /// `A (eps r o U)` averaged in absolute value over rows, evaluated exactly.
    pub fn predicted_machine_zero(&self, rng: &PerturbationRng, eps: MachineEpsilon) -> f64 {
        let du: Vec<BigRational> = self
            .solution
            .iter()
            .enumerate()
            .map(|(j, &x)| BigRational::from_f64(x) * BigRational::from_f64(eps.value() * rng.draw(j)))
            .collect();
        let total = self.a.iter().fold(BigRational::zero(), |acc, row| {
            acc + row.iter().zip(&du).fold(BigRational::zero(), |s, (aij, d)| s + aij * d).abs()
        });
        let mean = total / BigRational::from_integer(self.size().into());
        mean.to_f64().unwrap_or(f64::NAN)
    }
}

impl ResidualOperator for LinearModelSystem {
    type Scalar = BigRational;

    fn block(&self) -> usize {
        1
    }

    fn residual(&self, state: &[BigRational]) -> Result<Vec<f64>> {
        Ok(self.exact_residual(state).iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect())
    }

    /// Pure relative perturbation `x (1 + eps r)`.
    fn perturb(&self, value: BigRational, _slot: usize, eps: f64, r: f64) -> BigRational {
        scale_up(value, &BigRational::from_f64(eps * r))
    }
}

/// `(predicted, measured)` machine-zero residual of the linear model `A U = b`:
/// the exact `|| A (eps r o U) ||` and the manufactured-solution estimate
/// obtained through the estimator.
pub fn linear_machine_zero(
    matrix: DMatrix<f64>,
    rhs: DVector<f64>,
    eps: MachineEpsilon,
    rng: &PerturbationRng,
) -> Result<(f64, f64)> {
    let system = LinearModelSystem::new(matrix, rhs)?;
    let state: Vec<BigRational> = system.solution.iter().map(|&x| BigRational::from_f64(x)).collect();
    let predicted = system.predicted_machine_zero(rng, eps);
    let measured = manufactured_estimate(&system, &state, None, rng, eps)?[0];
    Ok((predicted, measured))
}
