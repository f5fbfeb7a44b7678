use mzres::estimator::{EstimateReport, MachineEpsilon};
use mzres::gas::{FreestreamConditions, GasModel};
use mzres::grid::BoundaryCondition;
use mzres::gridgen::{generate_flatplate_grid, FlatPlateGridSpec};
use mzres::oracle::{fd_jacobian_with, LinearModelSystem};
use mzres::residual::{Discretization, NumericalFluxConfig};
use mzres::solver::{dw_metric, implicit_iterate, terminate, ConvergenceHistory, Decision, IterationRecord, SolverConfig, TerminationConfig};
use mzres::state::{PrimitiveState, NEQ};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn freestream_disc() -> Discretization {
    let spec = FlatPlateGridSpec { nx: 12, ny: 9, ..FlatPlateGridSpec::default() };
    let fs = FreestreamConditions::standard(0.5, 2.0);
    let disc = Discretization::new(generate_flatplate_grid(&spec).unwrap(), GasModel::air(), fs, NumericalFluxConfig::default()).unwrap();
    disc.with_all_boundaries(BoundaryCondition::Freestream).unwrap()
}

#[test]
fn converged_state_is_a_fixed_point() {
    let disc = freestream_disc();
    let w = disc.uniform_state();
    let res = disc.assemble(&w, None).unwrap();
    let cfg = SolverConfig::default();
    let step = implicit_iterate(&disc, &w, &res, 1e5, &cfg, 1).unwrap();
    let scale = disc.reference_scales();
    for (a, b) in step.state.nodes.iter().zip(&w.nodes) {
        for i in 0..NEQ {
            assert!((a[i] - b[i]).abs() <= 1e-13 * scale[i], "{a:?} vs {b:?}");
        }
    }
    assert_eq!(step.rejections, 0);
}

#[test]
fn exact_jacobian_defect_correction_converges_in_one_step() {
    let n = 8;
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 4.0 + i as f64 } else { 1.0 / (1.0 + (i + 2 * j) as f64) });
    let b = DVector::from_fn(n, |i, _| 1.0 + 0.25 * i as f64);
    let system = LinearModelSystem::new(a.clone(), b.clone()).unwrap();
    let residual = |u: &DVector<f64>| &a * u - &b;
    let jac = fd_jacobian_with::<f64, _>(
        |x: &[f64]| Ok(residual(&DVector::from_column_slice(x)).as_slice().to_vec()),
        &vec![0.0; n],
        &[1.0],
        1e-3,
    )
    .unwrap();
    let u0 = DVector::zeros(n);
    let du = jac.matrix.clone().lu().solve(&(-residual(&u0))).unwrap();
    let u1 = &u0 + du;
    assert!(residual(&u1).amax() <= 1e-13 * b.amax(), "{:e}", residual(&u1).amax());
    assert!((&u1 - &system.solution).amax() <= 1e-13 * system.solution.amax());
}

fn record(iter: usize, res: f64, dw: f64) -> IterationRecord {
    IterationRecord { iter, res: [res; NEQ], dw: [dw; NEQ], rm: Some([1e-15; NEQ]), cfl: 1.0, wtime: 0.0 }
}

fn history(values: &[(f64, f64)]) -> ConvergenceHistory {
    let mut h = ConvergenceHistory::default();
    for (k, &(r, d)) in values.iter().enumerate() {
        h.push(record(k, r, d));
    }
    h
}

fn estimates() -> EstimateReport {
    let mut e = EstimateReport::new([1e-15; NEQ], MachineEpsilon::DOUBLE, 1);
    e.update_rm([1e-15; NEQ], 0);
    e
}

#[test]
fn stall_needs_a_flat_window_far_above_the_estimates() {
    let cfg = TerminationConfig { stall_window: 20, ..TerminationConfig::default() };
    let near = history(&vec![(1e-12, 1e-3); 30]);
    let far = history(&vec![(1e-7, 1e-3); 30]);
    assert_eq!(terminate(&near, &estimates(), &cfg), Decision::Continue);
    assert_eq!(terminate(&far, &estimates(), &cfg), Decision::Stalled);
}

proptest! {
    #[test]
    fn dw_is_zero_only_for_identical_states(
        base in prop::collection::vec((-100.0..100.0f64, 0.0..300.0f64, -50.0..50.0f64, 200.0..300.0f64), 1..20),
        node in 0usize..20,
        slot in 0usize..NEQ,
        delta in 1e-6..1.0f64,
    ) {
        let w = PrimitiveState { nodes: base.iter().map(|&(p, u, v, t)| [p, u, v, t]).collect() };
        prop_assert_eq!(dw_metric(&w, &w), [0.0; NEQ]);
        let mut moved = w.clone();
        let j = node % w.len();
        moved.nodes[j][slot] += delta;
        let dw = dw_metric(&moved, &w);
        prop_assert!(dw[slot] > 0.0);
        for i in (0..NEQ).filter(|&i| i != slot) {
            prop_assert_eq!(dw[i], 0.0);
        }
    }

    #[test]
    fn dw_is_linear_in_the_change_for_a_fixed_scale(
        t in prop::collection::vec(250.0..300.0f64, 2..20),
        scale in 1e-5..1e-2f64,
        factor in 1.0..8.0f64,
    ) {
        // the largest temperature is left untouched so the divisor is fixed
        let w = PrimitiveState { nodes: t.iter().map(|&t| [0.0, 0.0, 0.0, t]).collect() };
        let top = t.iter().cloned().fold(f64::MIN, f64::max);
        let shift = |s: f64| PrimitiveState {
            nodes: w.nodes.iter().map(|n| if n[3] == top { *n } else { [n[0], n[1], n[2], n[3] - s] }).collect(),
        };
        let one = dw_metric(&shift(scale), &w)[3];
        let many = dw_metric(&shift(factor * scale), &w)[3];
        prop_assert!((many - factor * one).abs() <= 1e-6 * many.max(1e-300), "{} vs {}", many, factor * one);
    }

    #[test]
    fn terminate_is_pure(res in prop::collection::vec((1e-18..1.0f64, 1e-18..1.0f64), 1..60), margin in 0.0..6.0f64) {
        let h = history(&res);
        let cfg = TerminationConfig { stop_on_estimate: true, estimate_margin_orders: margin, stall_window: 10, ..TerminationConfig::default() };
        let e = estimates();
        let first = terminate(&h, &e, &cfg);
        prop_assert_eq!(first, terminate(&h.clone(), &e.clone(), &cfg.clone()));
        let last = h.last().unwrap();
        if last.res[0] <= 10f64.powf(margin) * 1e-15 {
            prop_assert_eq!(first, Decision::ConvergedEstimate);
        }
    }
}
