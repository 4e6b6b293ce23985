//! Implicit Euler for the state equation and its exact discrete adjoint.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fem::{BandedCholesky, FemSpace, FieldTrajectory, SparseSpd};
use crate::field::{coefficient_range, AffineDiffusion, ParamPoint};

/// Source term of the state equation.
#[derive(Debug, Clone)]
pub enum ControlFunction {
    /// Control `z = R_V w` given by its Riesz preimage `w`.
    Riesz(FieldTrajectory),
    /// Closed-form source, stored as P1 load vectors `∫ z(·,t_k) φ_i`.
    Loads(FieldTrajectory),
}

impl ControlFunction {
    pub fn zero(space: &FemSpace) -> Self {
        ControlFunction::Riesz(space.zero_trajectory())
    }

    /// Precomputes the load vectors of a closed-form source `z(x, t)`.
    pub fn from_source(space: &FemSpace, z: impl Fn([f64; 2], f64) -> f64) -> Self {
        let grid = space.grid();
        let loads = FieldTrajectory::from_fn(grid, space.n_dof(), |_, t| {
            space.assembler().load(space.mesh(), |x| z(x, t))
        });
        ControlFunction::Loads(loads)
    }

    fn trajectory(&self) -> &FieldTrajectory {
        match self {
            ControlFunction::Riesz(w) | ControlFunction::Loads(w) => w,
        }
    }

    /// Dual coefficients of `z(·, t_k)` added into `out` with a scale.
    fn add_load(&self, space: &FemSpace, k: usize, scale: f64, out: &mut [f64]) {
        match self {
            ControlFunction::Riesz(w) => space.stiffness().matvec_add(w.row(k), scale, out),
            ControlFunction::Loads(f) => {
                for (o, v) in out.iter_mut().zip(f.row(k)) {
                    *o += scale * v;
                }
            }
        }
    }

    /// The Riesz preimage `w = R_V⁻¹ z` at every grid time.
    pub fn riesz_preimage(&self, space: &FemSpace) -> Result<FieldTrajectory> {
        match self {
            ControlFunction::Riesz(w) => Ok(w.clone()),
            ControlFunction::Loads(f) => {
                let mut w = space.zero_trajectory();
                for k in 0..=space.grid().n_steps() {
                    let row = space.riesz_solve(f.row(k))?;
                    w.row_mut(k).copy_from_slice(&row);
                }
                Ok(w)
            }
        }
    }

    /// `‖z‖²_{L²(V';I)}`; closed-form sources are mapped back through `K₁⁻¹`.
    pub fn dual_norm_sq(&self, space: &FemSpace) -> Result<f64> {
        match self {
            ControlFunction::Riesz(w) => Ok(space.norm_l2v_i(w)?.powi(2)),
            ControlFunction::Loads(f) => {
                let dt = space.grid().dt();
                let mut sum = 0.0;
                for k in 1..=space.grid().n_steps() {
                    let w = space.riesz_solve(f.row(k))?;
                    sum += dt * f.row(k).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
                }
                Ok(sum)
            }
        }
    }
}

/// Initial state, target and tracking weights.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub u0: Vec<f64>,
    pub target: FieldTrajectory,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl ProblemData {
    pub fn new(u0: Vec<f64>, target: FieldTrajectory, alphas: [f64; 3]) -> Result<Self> {
        let [alpha1, alpha2, alpha3] = alphas;
        if alpha1 < 0.0 || alpha2 < 0.0 || alpha3 < 0.0 || !(alpha1 + alpha2 > 0.0) {
            return Err(Error::invalid(format!(
                "tracking weights need α₁, α₂ ≥ 0 with α₁ + α₂ > 0 (got {alpha1}, {alpha2})"
            )));
        }
        if u0.len() != target.n_dof() {
            return Err(Error::DimensionMismatch {
                what: "initial state",
                expected: target.n_dof(),
                got: u0.len(),
            });
        }
        Ok(Self {
            u0,
            target,
            alpha1,
            alpha2,
            alpha3,
        })
    }

    /// Experiment setup: `u₀ = sin(2πx₁)sin(2πx₂)` and the moving two-blob
    /// target, interpolated on the space-time grid.
    pub fn standard(space: &FemSpace, alphas: [f64; 3]) -> Result<Self> {
        let u0 = space.mesh().interpolate(initial_state);
        let target = space.interpolate_trajectory(target_state);
        Self::new(u0, target, alphas)
    }
}

pub fn initial_state(x: [f64; 2]) -> f64 {
    (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()
}

/// Fixed source used by the truncation and QMC studies.
pub fn study_source(x: [f64; 2], _t: f64) -> f64 {
    10.0 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])
}

/// Two square bumps of half-width 1/10 circling the centre in opposite
/// phase, fading as `t → 1`.
pub fn target_state(x: [f64; 2], t: f64) -> f64 {
    let r = 0.25 * (1.0 - t.powi(10));
    let phase = 4.0 * PI * t * t;
    let c1 = 0.5 + r * phase.cos();
    let c2 = 0.5 + r * phase.sin();
    let bump = |d1: f64, d2: f64| {
        if d1.abs() <= 0.1 && d2.abs() <= 0.1 {
            10240.0 * (d1 - 0.1) * (d2 - 0.1) * (d1 + 0.1) * (d2 + 0.1)
        } else {
            0.0
        }
    };
    // second bump is centred at (1 - c1, 1 - c2)
    bump(x[0] - c1, x[1] - c2) + bump(x[0] + c1 - 1.0, x[1] + c2 - 1.0)
}

/// Factorized time-step operator `M + dt·A(y)` for one parameter.
#[derive(Debug, Clone)]
pub struct Propagator<'a> {
    space: &'a FemSpace,
    stiffness: SparseSpd,
    step: BandedCholesky,
}

impl<'a> Propagator<'a> {
    pub fn new(space: &'a FemSpace, aff: &AffineDiffusion, y: &ParamPoint) -> Result<Self> {
        if !aff.certainly_elliptic(y) {
            coefficient_range(aff.spec(), y, space.mesh())?;
        }
        let stiffness = aff.combine(y)?;
        let dt = space.grid().dt();
        let operator = space.mass().add_scaled(dt, &stiffness)?;
        let step = operator.cholesky().map_err(|_| {
            match coefficient_range(aff.spec(), y, space.mesh()) {
                Ok(r) => Error::StepOperator { min: r.min, max: r.max },
                Err(e) => e,
            }
        })?;
        Ok(Self {
            space,
            stiffness,
            step,
        })
    }

    /// `A(y)` for this parameter.
    pub fn stiffness(&self) -> &SparseSpd {
        &self.stiffness
    }

    /// `(M + dt A) u^{k+1} = M u^k + dt F^{k+1}`
    pub fn state(&self, ctrl: &ControlFunction, u0: &[f64]) -> Result<FieldTrajectory> {
        let space = self.space;
        space.check(ctrl.trajectory())?;
        if u0.len() != space.n_dof() {
            return Err(Error::DimensionMismatch {
                what: "initial state",
                expected: space.n_dof(),
                got: u0.len(),
            });
        }
        let grid = space.grid();
        let dt = grid.dt();
        let mut u = space.zero_trajectory();
        u.row_mut(0).copy_from_slice(u0);
        let mut rhs = vec![0.0; space.n_dof()];
        for k in 0..grid.n_steps() {
            space.mass().matvec_into(u.row(k), &mut rhs);
            ctrl.add_load(space, k + 1, dt, &mut rhs);
            self.step.solve_in_place(&mut rhs);
            u.row_mut(k + 1).copy_from_slice(&rhs);
        }
        Ok(u)
    }

    /// Adjoint of the discrete tracking functional.
    ///
    /// With `e^k = u^k - û^k`, row `k ≥ 1` is the multiplier of the `k`-th
    /// state step, so that `∂Φ/∂w^k = dt·K₁ q^k`:
    ///
    /// ```text
    /// (M + dt A) q^N = α₂ M e^N + α₁ dt K₁ e^N
    /// (M + dt A) q^k = M q^{k+1} + α₁ dt K₁ e^k,   k = N-1, …, 0
    /// ```
    pub fn adjoint(&self, u: &FieldTrajectory, data: &ProblemData) -> Result<FieldTrajectory> {
        let space = self.space;
        space.check(u)?;
        u.check_shape(&data.target, "adjoint target")?;
        let grid = space.grid();
        let n = grid.n_steps();
        let dt = grid.dt();
        let mut q = space.zero_trajectory();
        let mut err = vec![0.0; space.n_dof()];
        let mut rhs = vec![0.0; space.n_dof()];
        for k in (0..=n).rev() {
            for ((e, a), b) in err.iter_mut().zip(u.row(k)).zip(data.target.row(k)) {
                *e = a - b;
            }
            if k == n {
                space.mass().matvec_into(&err, &mut rhs);
                rhs.iter_mut().for_each(|r| *r *= data.alpha2);
            } else {
                space.mass().matvec_into(q.row(k + 1), &mut rhs);
            }
            if data.alpha1 != 0.0 {
                space.stiffness().matvec_add(&err, data.alpha1 * dt, &mut rhs);
            }
            self.step.solve_in_place(&mut rhs);
            q.row_mut(k).copy_from_slice(&rhs);
        }
        Ok(q)
    }
}

pub fn solve_state(
    space: &FemSpace,
    aff: &AffineDiffusion,
    y: &ParamPoint,
    ctrl: &ControlFunction,
    u0: &[f64],
) -> Result<FieldTrajectory> {
    Propagator::new(space, aff, y)?.state(ctrl, u0)
}

pub fn solve_adjoint(
    space: &FemSpace,
    aff: &AffineDiffusion,
    y: &ParamPoint,
    u: &FieldTrajectory,
    data: &ProblemData,
) -> Result<FieldTrajectory> {
    Propagator::new(space, aff, y)?.adjoint(u, data)
}

/// Tracking functional
/// `Φ = α₁/2 ‖u - û‖²_{L²(V;I)} + α₂/2 ‖u(T) - û(T)‖²_{L²(D)}`.
pub fn phi(space: &FemSpace, u: &FieldTrajectory, data: &ProblemData) -> Result<f64> {
    space.check(u)?;
    u.check_shape(&data.target, "phi target")?;
    let diff = u.sub(&data.target);
    let n = space.grid().n_steps();
    let mut value = 0.0;
    if data.alpha1 != 0.0 {
        value += 0.5 * data.alpha1 * space.norm_l2v_i(&diff)?.powi(2);
    }
    if data.alpha2 != 0.0 {
        value += 0.5 * data.alpha2 * space.mass().quad_form(diff.row(n));
    }
    Ok(value)
}
