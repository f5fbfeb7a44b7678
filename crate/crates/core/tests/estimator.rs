use mzres::estimator::{compute_rc, compute_rm, maxmod, MachineEpsilon, PerturbationRng};
use mzres::gas::{FreestreamConditions, GasModel};
use mzres::gridgen::{generate_flatplate_grid, FlatPlateGridSpec};
use mzres::real::{DoubleDouble, Real};
use mzres::residual::{Discretization, NumericalFluxConfig};
use mzres::state::NEQ;

fn plate(nx: usize, ny: usize) -> Discretization {
    let spec = FlatPlateGridSpec { nx, ny, ..FlatPlateGridSpec::default() };
    let fs = FreestreamConditions::standard(0.15, 0.0).with_reynolds(1e4, 1.0);
    let gas = GasModel::air_from_reynolds(&fs).unwrap();
    Discretization::new(generate_flatplate_grid(&spec).unwrap(), gas, fs, NumericalFluxConfig::default()).unwrap()
}

#[test]
fn estimates_are_deterministic() {
    let disc = plate(40, 30);
    let rng = PerturbationRng::new(99);
    let eps = MachineEpsilon::DOUBLE;
    assert_eq!(compute_rc(&disc, &rng, eps).unwrap(), compute_rc(&disc, &PerturbationRng::new(99), eps).unwrap());
    let w = disc.initial_state();
    assert_eq!(compute_rm(&disc, &w, &rng, eps).unwrap(), compute_rm(&disc, &w, &rng, eps).unwrap());
}

#[test]
fn free_stream_estimate_is_robust_to_the_seed() {
    let disc = plate(137, 97);
    let runs: Vec<_> = (0..10u64).map(|s| compute_rc(&disc, &PerturbationRng::new(1000 + s), MachineEpsilon::DOUBLE).unwrap()).collect();
    for i in 0..NEQ {
        let max = runs.iter().map(|r| r[i]).fold(f64::MIN, f64::max);
        let min = runs.iter().map(|r| r[i]).fold(f64::MAX, f64::min);
        assert!(min > 0.0 && max / min < 5.0, "equation {}: spread {}", i + 1, max / min);
    }
}

/// `|| R(U_inf (1 + eps r)) - R(U_inf) ||` with the perturbed state built and
/// the residual evaluated in double-double, so `eps` is not rounded away.
fn extended_rc(disc: &Discretization, rng: &PerturbationRng, eps: f64) -> [f64; NEQ] {
    type D = DoubleDouble;
    let w_inf = disc.freestream_state();
    let n = disc.num_nodes();
    let perturbed: Vec<[D; 4]> = (0..n)
        .map(|j| {
            let er = D::lift(eps) * D::lift(rng.draw(j));
            let one = D::lift(1.0) + er;
            let floor = |x: f64| D::lift(maxmod(x, eps.copysign(if x == 0.0 { 1.0 } else { x })));
            [floor(0.0) * one, floor(w_inf[1]) * one, floor(w_inf[2]) * one, D::lift(w_inf[3]) * one]
        })
        .collect();
    let base: Vec<[D; 4]> = vec![w_inf.map(D::lift); n];
    let (r, _) = disc.residual_in(&perturbed, None).unwrap();
    let (r0, _) = disc.residual_in(&base, None).unwrap();
    let mut norms = [0.0; NEQ];
    for (a, b) in r.iter().zip(&r0) {
        for i in 0..NEQ {
            norms[i] += (a[i] - b[i]).lower().abs();
        }
    }
    norms.map(|s| s / n as f64)
}

#[test]
fn free_stream_estimate_is_linear_in_eps_in_extended_precision() {
    let disc = plate(60, 40);
    let rng = PerturbationRng::new(20160613);
    let levels: Vec<_> = [1e-16, 1e-15, 1e-14].iter().map(|&e| extended_rc(&disc, &rng, e)).collect();
    for pair in levels.windows(2) {
        for i in 0..NEQ {
            let ratio = pair[1][i] / pair[0][i];
            assert!((ratio - 10.0).abs() <= 2.5, "equation {}: ratio {ratio}", i + 1);
        }
    }
}
