#![allow(dead_code)]

use heatrisk::fem::{FemSpace, FieldTrajectory, TimeGrid};
use heatrisk::field::{AffineDiffusion, FieldSpec};
use heatrisk::lattice::{bernoulli2, candidates, GeneratingVector, ShiftSet, WeightSpec};
use heatrisk::parabolic::{ControlFunction, ProblemData};
use heatrisk::risk::{RiskConfig, RiskKind, RiskProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALPHAS: [f64; 3] = [1e-3, 1e-2, 1e-7];

pub fn pod_weights(s: usize, decay: f64, lambda: f64, order_cap: usize) -> WeightSpec {
    let rho: Vec<f64> = (1..=s).map(|j| 0.5 * (j as f64).powf(-decay)).collect();
    WeightSpec::pod(&rho, lambda, order_cap).unwrap()
}

/// Squared shift-averaged worst-case error by summing over every nonempty
/// coordinate subset explicitly.
pub fn wce_by_enumeration(gv: &GeneratingVector, weights: &WeightSpec) -> f64 {
    let s = gv.dim();
    let n = gv.n();
    let g = gv.components();
    let mut total = 0.0;
    for mask in 1u32..(1 << s) {
        let u: Vec<usize> = (0..s).filter(|j| mask & (1 << j) != 0).map(|j| j + 1).collect();
        let gamma = weights.gamma(&u);
        if gamma == 0.0 {
            continue;
        }
        let mut avg = 0.0;
        for i in 0..n {
            let mut prod = 1.0;
            for &j in &u {
                let x = ((i as u128 * g[j - 1] as u128) % n as u128) as f64 / n as f64;
                prod *= bernoulli2(x);
            }
            avg += prod;
        }
        total += gamma * avg / n as f64;
    }
    total
}

/// Component-by-component choice by exhaustive search, scoring each
/// candidate with the subset enumeration.
pub fn cbc_by_brute_force(n: u64, s: usize, weights: &WeightSpec) -> Vec<u64> {
    let mut g: Vec<u64> = Vec::new();
    for _ in 0..s {
        let scores: Vec<(u64, f64)> = candidates(n)
            .into_iter()
            .map(|c| {
                let mut trial = g.clone();
                trial.push(c);
                (c, wce_by_enumeration(&GeneratingVector::new(n, trial).unwrap(), weights))
            })
            .collect();
        let min = scores.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let best = scores.iter().find(|p| p.1 <= min * (1.0 + 1e-11)).unwrap().0;
        g.push(best);
    }
    g
}

pub fn random_trajectory(space: &FemSpace, rng: &mut ChaCha8Rng, scale: f64) -> FieldTrajectory {
    FieldTrajectory::from_fn(space.grid(), space.n_dof(), |_, _| {
        (0..space.n_dof()).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small problem: mesh, affine field and tracking data.
pub struct Fixture {
    pub space: FemSpace,
    pub aff: AffineDiffusion,
    pub data: ProblemData,
}

impl Fixture {
    pub fn new(level: u32, n_steps: usize, s: usize, decay: f64) -> Self {
        let space = FemSpace::new(level, TimeGrid::new(1.0, n_steps).unwrap()).unwrap();
        let aff = AffineDiffusion::build(&space, FieldSpec::new(decay).unwrap(), s).unwrap();
        let data = ProblemData::standard(&space, ALPHAS).unwrap();
        Self { space, aff, data }
    }

    pub fn risk(&self, kind: RiskKind, gv: GeneratingVector, seed: u64) -> RiskProblem<'_> {
        let s = gv.dim();
        let shift = ShiftSet::generate(1, s, seed).get(0).to_vec();
        RiskProblem::new(&self.space, &self.aff, &self.data, RiskConfig::new(kind, s, gv, shift).unwrap()).unwrap()
    }
}

/// Relative discrepancy between `⟨J'(w), d⟩` and central differences of
/// `J`, minimized over a ladder of step sizes.
pub fn best_fd_error(problem: &RiskProblem<'_>, w: &FieldTrajectory, dir: &FieldTrajectory) -> f64 {
    let space = problem.space();
    let grad = problem.gradient(&ControlFunction::Riesz(w.clone())).unwrap();
    let analytic = space.inner_l2v_i(&grad, dir).unwrap();
    let eval = |h: f64| {
        let mut p = w.clone();
        p.axpy(h, dir);
        problem.objective(&ControlFunction::Riesz(p)).unwrap()
    };
    let mut best = f64::INFINITY;
    for k in 1..=8 {
        let h = 10f64.powi(-k);
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        best = best.min((fd - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE));
    }
    best
}
