mod common;

use std::f64::consts::PI;

use heatrisk::fem::{FemSpace, TimeGrid};
use heatrisk::field::{AffineDiffusion, FieldSpec, ParamPoint};
use heatrisk::parabolic::{phi, ControlFunction, ProblemData, Propagator};
use heatrisk::Error;

use common::*;

fn free_decay_ratio(level: u32, n_steps: usize) -> f64 {
    let space = FemSpace::new(level, TimeGrid::new(1.0, n_steps).unwrap()).unwrap();
    let aff = AffineDiffusion::build(&space, FieldSpec::new(1.3).unwrap(), 1).unwrap();
    let data = ProblemData::standard(&space, ALPHAS).unwrap();
    let prop = Propagator::new(&space, &aff, &ParamPoint::zeros(1)).unwrap();
    let u = prop.state(&ControlFunction::zero(&space), &data.u0).unwrap();
    let k = space.grid().nearest_step(0.05);
    space.norm_l2d(u.row(k)) / space.norm_l2d(u.row(0))
}

#[test]
fn free_decay_converges_at_first_order_in_time() {
    // at dt = 0.002 the implicit Euler damping error dominates; a tenfold
    // smaller step brings the ratio within a few percent
    let exact = (-8.0 * PI * PI * 0.05).exp();
    let errs: Vec<f64> = [500, 5000].iter().map(|&n| (free_decay_ratio(5, n) / exact - 1.0).abs()).collect();
    assert!(errs[0] > 0.2, "{errs:?}");
    assert!(errs[1] < 0.02, "{errs:?}");
}

#[test]
fn state_is_affine_in_the_control() {
    let fx = Fixture::new(3, 10, 3, 1.3);
    let y = ParamPoint::new(vec![0.3, -0.2, 0.1]).unwrap();
    let prop = Propagator::new(&fx.space, &fx.aff, &y).unwrap();
    let mut r = rng(3);
    let w1 = random_trajectory(&fx.space, &mut r, 1.0);
    let w2 = random_trajectory(&fx.space, &mut r, 1.0);
    let zero_u0 = vec![0.0; fx.space.n_dof()];
    let u1 = prop.state(&ControlFunction::Riesz(w1.clone()), &zero_u0).unwrap();
    let u2 = prop.state(&ControlFunction::Riesz(w2.clone()), &zero_u0).unwrap();
    let mut sum = w1.clone();
    sum.axpy(2.0, &w2);
    let u12 = prop.state(&ControlFunction::Riesz(sum), &zero_u0).unwrap();
    let mut expect = u1;
    expect.axpy(2.0, &u2);
    assert!(u12.sub(&expect).max_abs() < 1e-12 * expect.max_abs());
}

#[test]
fn adjoint_gives_directional_derivative_of_phi() {
    let fx = Fixture::new(3, 12, 2, 1.3);
    let y = ParamPoint::new(vec![-0.4, 0.25]).unwrap();
    let prop = Propagator::new(&fx.space, &fx.aff, &y).unwrap();
    let mut r = rng(9);
    let w = random_trajectory(&fx.space, &mut r, 0.1);
    let d = random_trajectory(&fx.space, &mut r, 0.1);
    let u = prop.state(&ControlFunction::Riesz(w.clone()), &fx.data.u0).unwrap();
    let q = prop.adjoint(&u, &fx.data).unwrap();
    let analytic = fx.space.inner_l2v_i(&q, &d).unwrap();
    let phi_at = |h: f64| {
        let mut p = w.clone();
        p.axpy(h, &d);
        let u = prop.state(&ControlFunction::Riesz(p), &fx.data.u0).unwrap();
        phi(&fx.space, &u, &fx.data).unwrap()
    };
    // Φ is quadratic in w, so central differences are exact up to rounding
    let fd = (phi_at(1e-3) - phi_at(-1e-3)) / 2e-3;
    assert!((fd - analytic).abs() < 1e-8 * analytic.abs());
}

#[test]
fn loads_and_riesz_controls_agree() {
    let fx = Fixture::new(3, 8, 1, 1.3);
    let prop = Propagator::new(&fx.space, &fx.aff, &ParamPoint::zeros(1)).unwrap();
    let loads = ControlFunction::from_source(&fx.space, |x, t| x[0] * x[1] * (1.0 + t));
    let w = loads.riesz_preimage(&fx.space).unwrap();
    let u_loads = prop.state(&loads, &fx.data.u0).unwrap();
    let u_riesz = prop.state(&ControlFunction::Riesz(w.clone()), &fx.data.u0).unwrap();
    assert!(u_loads.sub(&u_riesz).max_abs() < 1e-10);
    let n1 = loads.dual_norm_sq(&fx.space).unwrap();
    let n2 = fx.space.norm_l2v_i(&w).unwrap().powi(2);
    assert!((n1 - n2).abs() < 1e-10 * n1);
}

#[test]
fn non_elliptic_parameter_rejected() {
    let space = FemSpace::new(2, TimeGrid::new(1.0, 4).unwrap()).unwrap();
    let mut spec = FieldSpec::new(1.3).unwrap();
    spec.amplitude = 6.0;
    let aff = AffineDiffusion::build(&space, spec, 2).unwrap();
    let y = ParamPoint::new(vec![-0.5, -0.5]).unwrap();
    let err = Propagator::new(&space, &aff, &y).unwrap_err();
    assert!(matches!(err, Error::StepOperator { .. } | Error::Ellipticity { .. } | Error::NotPositiveDefinite { .. }), "{err}");
}
