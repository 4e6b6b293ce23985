mod common;

use heatrisk::fem::{FemSpace, TimeGrid};
use heatrisk::field::{AffineDiffusion, FieldSpec};
use heatrisk::lattice::{cbc_construct, GeneratingVector};
use heatrisk::parabolic::{ControlFunction, ProblemData};
use heatrisk::risk::{RiskConfig, RiskKind, RiskProblem};
use heatrisk::Error;

use common::*;

fn gv(n: u64, s: usize) -> GeneratingVector {
    cbc_construct(n, s, &pod_weights(s, 1.3, 0.65, s)).unwrap().gv
}

#[test]
fn gradients_match_finite_differences() {
    let fx = Fixture::new(2, 10, 3, 1.3);
    for kind in [RiskKind::Expected, RiskKind::Entropic { theta: 10.0 }, RiskKind::Entropic { theta: 1e3 }] {
        let problem = fx.risk(kind, gv(8, 3), 1);
        let mut r = rng(5);
        let w = random_trajectory(&fx.space, &mut r, 0.1);
        for _ in 0..3 {
            let d = random_trajectory(&fx.space, &mut r, 0.1);
            let err = best_fd_error(&problem, &w, &d);
            assert!(err < 1e-6, "{kind:?}: {err}");
        }
    }
}

#[test]
fn entropic_dominates_expectation_and_tends_to_it() {
    let fx = Fixture::new(2, 10, 3, 1.3);
    let ctrl = ControlFunction::zero(&fx.space);
    let mean = fx.risk(RiskKind::Expected, gv(16, 3), 2).objective(&ctrl).unwrap();
    let mut prev = f64::INFINITY;
    for theta in [100.0, 10.0, 1.0, 1e-3] {
        let v = fx.risk(RiskKind::Entropic { theta }, gv(16, 3), 2).objective(&ctrl).unwrap();
        assert!(v >= mean * (1.0 - 1e-14) && v <= prev, "θ={theta}: {v} vs mean {mean}");
        prev = v;
    }
    assert!((prev - mean).abs() < 1e-5 * mean);
}

#[test]
fn gradient_is_tilted_adjoint_plus_penalty() {
    let fx = Fixture::new(2, 8, 2, 1.3);
    let problem = fx.risk(RiskKind::Entropic { theta: 10.0 }, gv(8, 2), 3);
    let w = random_trajectory(&fx.space, &mut rng(1), 1.0);
    let ctrl = ControlFunction::Riesz(w.clone());
    let acc = problem.accumulate_s_t(&ctrl).unwrap();
    assert!(acc.t_sn >= 1.0);
    assert!((acc.t_sn.ln() - acc.ln_t_sn).abs() < 1e-14);
    let mut expect = acc.s_sn.scaled(1.0 / acc.t_sn);
    expect.axpy(fx.data.alpha3, &w);
    let grad = problem.gradient(&ctrl).unwrap();
    assert!(grad.sub(&expect).max_abs() <= 1e-12 * expect.max_abs());
    assert_eq!(acc.phis.len(), 8);
}

#[test]
fn evaluation_independent_of_thread_count() {
    let fx = Fixture::new(2, 6, 4, 1.3);
    let problem = fx.risk(RiskKind::Entropic { theta: 10.0 }, gv(64, 4), 4);
    let ctrl = ControlFunction::Riesz(random_trajectory(&fx.space, &mut rng(2), 1.0));
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| problem.evaluate(&ctrl).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.gradient, b.gradient);
}

#[test]
fn diagnostics_weights_sum_to_one() {
    let fx = Fixture::new(2, 6, 2, 1.3);
    let problem = fx.risk(RiskKind::Entropic { theta: 50.0 }, gv(16, 2), 6);
    let mut out = Vec::new();
    problem.write_sample_diagnostics(&ControlFunction::zero(&fx.space), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("i,phi,weight"));
    let weights: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(weights.len(), 16);
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn failing_sample_is_identified() {
    let space = FemSpace::new(2, TimeGrid::new(1.0, 4).unwrap()).unwrap();
    let mut spec = FieldSpec::new(1.3).unwrap();
    spec.amplitude = 8.0;
    let aff = AffineDiffusion::build(&space, spec, 2).unwrap();
    let data = ProblemData::standard(&space, ALPHAS).unwrap();
    let cfg = RiskConfig::new(RiskKind::Expected, 2, gv(16, 2), vec![0.0, 0.0]).unwrap();
    let problem = RiskProblem::new(&space, &aff, &data, cfg).unwrap();
    match problem.objective(&ControlFunction::zero(&space)) {
        Err(Error::Sample { index, y, .. }) => {
            assert!(index < 16);
            assert_eq!(y.len(), 2);
        }
        other => panic!("expected a sample failure, got {other:?}"),
    }
}

#[test]
fn config_validation() {
    let g = gv(8, 2);
    assert!(RiskConfig::new(RiskKind::Entropic { theta: 0.0 }, 2, g.clone(), vec![0.0; 2]).is_err());
    assert!(RiskConfig::new(RiskKind::Expected, 3, g.clone(), vec![0.0; 3]).is_err());
    assert!(RiskConfig::new(RiskKind::Expected, 2, g, vec![0.0]).is_err());
}
