//! Lattice-rule estimators of the risk objective and its gradient.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{FemSpace, FieldTrajectory};
use crate::field::{AffineDiffusion, ParamPoint};
use crate::lattice::{lattice_points, GeneratingVector};
use crate::parabolic::{phi, ControlFunction, ProblemData, Propagator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskKind {
    Expected,
    /// `(1/θ) ln E[exp(θ Φ)]`
    Entropic { theta: f64 },
}

impl RiskKind {
    /// Exponential tilt used for `S` and `T`; zero for the expectation.
    pub fn theta(&self) -> f64 {
        match self {
            RiskKind::Expected => 0.0,
            RiskKind::Entropic { theta } => *theta,
        }
    }
}

/// Risk measure plus the frozen lattice rule that discretizes it.
#[derive(Debug, Clone)]
pub struct RiskConfig {
    kind: RiskKind,
    s: usize,
    gv: GeneratingVector,
    shift: Vec<f64>,
}

impl RiskConfig {
    pub fn new(kind: RiskKind, s: usize, gv: GeneratingVector, shift: Vec<f64>) -> Result<Self> {
        if let RiskKind::Entropic { theta } = kind {
            if !(theta > 0.0 && theta.is_finite()) {
                return Err(Error::invalid(format!("entropic risk needs θ > 0, got {theta}")));
            }
        }
        if s == 0 || s > gv.dim() {
            return Err(Error::invalid(format!(
                "truncation dimension {s} outside 1..={}",
                gv.dim()
            )));
        }
        if shift.len() < s {
            return Err(Error::DimensionMismatch {
                what: "shift",
                expected: s,
                got: shift.len(),
            });
        }
        Ok(Self { kind, s, gv, shift })
    }

    pub fn kind(&self) -> RiskKind {
        self.kind
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn gv(&self) -> &GeneratingVector {
        &self.gv
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift[..self.s]
    }

    pub fn points(&self) -> Result<Vec<ParamPoint>> {
        lattice_points(&self.gv.truncated(self.s)?, self.shift())
    }
}

/// Raw `T_{s,n} = (1/n) Σ exp(θΦ_i)` and `S_{s,n} = (1/n) Σ exp(θΦ_i) q_i`,
/// together with the plain sample means of state and adjoint.
#[derive(Debug, Clone)]
pub struct RiskAccumulators {
    pub t_sn: f64,
    /// `ln T_{s,n}`, exact even when `T` itself would overflow.
    pub ln_t_sn: f64,
    pub s_sn: FieldTrajectory,
    pub mean_state: FieldTrajectory,
    pub mean_adjoint: FieldTrajectory,
    pub phis: Vec<f64>,
}

const BLOCK: usize = 16;

/// Evaluates `eval(i)` for `i < n` in parallel blocks and hands the results
/// to `consume` in index order, so reductions are independent of threading.
pub(crate) fn for_each_sample<R: Send>(
    n: usize,
    eval: impl Fn(usize) -> Result<R> + Sync,
    mut consume: impl FnMut(usize, R) -> Result<()>,
) -> Result<()> {
    let mut start = 0;
    while start < n {
        let end = (start + BLOCK).min(n);
        let results: Vec<Result<R>> = (start..end).into_par_iter().map(&eval).collect();
        for (i, r) in (start..end).zip(results) {
            consume(i, r?)?;
        }
        start = end;
    }
    Ok(())
}

/// Streaming sums with a running max-shift for the exponential weights.
#[derive(Debug, Clone)]
pub(crate) struct Accumulator {
    theta: f64,
    count: usize,
    // largest θΦ seen; weights are stored as exp(θΦ - max)
    max_exponent: f64,
    weight_sum: f64,
    weighted_adjoint: Option<FieldTrajectory>,
    sum_state: Option<FieldTrajectory>,
    sum_adjoint: Option<FieldTrajectory>,
    phis: Vec<f64>,
}

impl Accumulator {
    pub(crate) fn new(theta: f64) -> Self {
        Self {
            theta,
            count: 0,
            max_exponent: f64::NEG_INFINITY,
            weight_sum: 0.0,
            weighted_adjoint: None,
            sum_state: None,
            sum_adjoint: None,
            phis: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, phi: f64, state: Option<&FieldTrajectory>, adjoint: Option<&FieldTrajectory>) {
        let a = self.theta * phi;
        if a > self.max_exponent {
            let rescale = (self.max_exponent - a).exp();
            self.weight_sum *= rescale;
            if let Some(s) = &mut self.weighted_adjoint {
                s.scale(rescale);
            }
            self.max_exponent = a;
        }
        let w = (a - self.max_exponent).exp();
        self.weight_sum += w;
        if let Some(q) = adjoint {
            add_into(&mut self.weighted_adjoint, w, q);
            add_into(&mut self.sum_adjoint, 1.0, q);
        }
        if let Some(u) = state {
            add_into(&mut self.sum_state, 1.0, u);
        }
        self.phis.push(phi);
        self.count += 1;
    }

    /// `ln((1/n) Σ exp(θΦ_i))`
    pub(crate) fn ln_mean_weight(&self) -> f64 {
        self.max_exponent + (self.weight_sum / self.count as f64).ln()
    }

    /// Risk term of the objective. The entropic value is evaluated as
    /// `Φ̄ + (1/θ) ln mean exp(θ(Φ_i − Φ̄))`, which stays accurate as θ → 0.
    pub(crate) fn risk_value(&self) -> f64 {
        let n = self.count as f64;
        let mean = self.phis.iter().sum::<f64>() / n;
        if self.theta == 0.0 {
            return mean;
        }
        let centered: Vec<f64> = self.phis.iter().map(|p| self.theta * (p - mean)).collect();
        let top = centered.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_mean = if top < 1.0 {
            (centered.iter().map(|c| c.exp_m1()).sum::<f64>() / n).ln_1p()
        } else {
            top + (centered.iter().map(|c| (c - top).exp()).sum::<f64>() / n).ln()
        };
        mean + log_mean / self.theta
    }

    /// `S/T`, the tilted mean of the adjoints.
    pub(crate) fn tilted_adjoint(&self) -> Option<FieldTrajectory> {
        self.weighted_adjoint.as_ref().map(|s| s.scaled(1.0 / self.weight_sum))
    }

    /// Normalized sample weights `exp(θΦ_i) / Σ_j exp(θΦ_j)`.
    pub(crate) fn weights(&self) -> Vec<f64> {
        self.phis
            .iter()
            .map(|p| (self.theta * p - self.max_exponent).exp() / self.weight_sum)
            .collect()
    }

    pub(crate) fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub(crate) fn finish(self, space: &FemSpace) -> RiskAccumulators {
        let n = self.count as f64;
        let ln_t = self.ln_mean_weight();
        let t_sn = ln_t.exp().max(1.0);
        let scale = (self.max_exponent).exp() / n;
        let zero = || space.zero_trajectory();
        RiskAccumulators {
            t_sn,
            ln_t_sn: ln_t.max(0.0),
            s_sn: self.weighted_adjoint.map_or_else(zero, |s| s.scaled(scale)),
            mean_state: self.sum_state.map_or_else(zero, |s| s.scaled(1.0 / n)),
            mean_adjoint: self.sum_adjoint.map_or_else(zero, |s| s.scaled(1.0 / n)),
            phis: self.phis,
        }
    }
}

fn add_into(slot: &mut Option<FieldTrajectory>, w: f64, v: &FieldTrajectory) {
    match slot {
        Some(s) => s.axpy(w, v),
        None => *slot = Some(v.scaled(w)),
    }
}

/// Everything needed to evaluate `J_{s,n}` at a control.
#[derive(Debug, Clone)]
pub struct RiskProblem<'a> {
    space: &'a FemSpace,
    aff: &'a AffineDiffusion,
    data: &'a ProblemData,
    cfg: RiskConfig,
    points: Vec<ParamPoint>,
}

/// Objective value and gradient (in the `w`-representation).
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: FieldTrajectory,
}

#[derive(Clone, Copy, PartialEq)]
enum Want {
    Value,
    Gradient,
    Everything,
}

impl<'a> RiskProblem<'a> {
    pub fn new(
        space: &'a FemSpace,
        aff: &'a AffineDiffusion,
        data: &'a ProblemData,
        cfg: RiskConfig,
    ) -> Result<Self> {
        if cfg.s() > aff.s_max() {
            return Err(Error::invalid(format!(
                "truncation dimension {} exceeds the {} assembled fluctuations",
                cfg.s(),
                aff.s_max()
            )));
        }
        space.check(&data.target)?;
        let points = cfg.points()?;
        Ok(Self {
            space,
            aff,
            data,
            cfg,
            points,
        })
    }

    pub fn space(&self) -> &FemSpace {
        self.space
    }

    pub fn config(&self) -> &RiskConfig {
        &self.cfg
    }

    pub fn points(&self) -> &[ParamPoint] {
        &self.points
    }

    fn accumulate(&self, ctrl: &ControlFunction, want: Want) -> Result<Accumulator> {
        let mut acc = Accumulator::new(self.cfg.kind().theta());
        let solve = |i: usize| -> Result<(f64, Option<FieldTrajectory>, Option<FieldTrajectory>)> {
            let y = &self.points[i];
            let run = || -> Result<_> {
                let prop = Propagator::new(self.space, self.aff, y)?;
                let u = prop.state(ctrl, &self.data.u0)?;
                let p = phi(self.space, &u, self.data)?;
                let q = match want {
                    Want::Value => None,
                    _ => Some(prop.adjoint(&u, self.data)?),
                };
                let u = (want == Want::Everything).then_some(u);
                Ok((p, u, q))
            };
            run().map_err(|e| Error::Sample {
                index: i,
                y: y.as_slice().to_vec(),
                source: Box::new(e),
            })
        };
        for_each_sample(self.points.len(), solve, |_, (p, u, q)| {
            acc.push(p, u.as_ref(), q.as_ref());
            Ok(())
        })?;
        Ok(acc)
    }

    fn penalty(&self, ctrl: &ControlFunction) -> Result<f64> {
        Ok(0.5 * self.data.alpha3 * ctrl.dual_norm_sq(self.space)?)
    }

    /// `J_{s,n}(z) = R_{s,n}(Φ) + (α₃/2)‖z‖²_{L²(V';I)}`
    pub fn objective(&self, ctrl: &ControlFunction) -> Result<f64> {
        let acc = self.accumulate(ctrl, Want::Value)?;
        Ok(acc.risk_value() + self.penalty(ctrl)?)
    }

    /// Value and gradient `S/T + α₃ w` (`S/T` is the sample mean of the
    /// adjoints for the expectation).
    pub fn evaluate(&self, ctrl: &ControlFunction) -> Result<Evaluation> {
        let acc = self.accumulate(ctrl, Want::Gradient)?;
        let mut gradient = acc.tilted_adjoint().expect("adjoints accumulated");
        if self.data.alpha3 != 0.0 {
            gradient.axpy(self.data.alpha3, &ctrl.riesz_preimage(self.space)?);
        }
        Ok(Evaluation {
            value: acc.risk_value() + self.penalty(ctrl)?,
            gradient,
        })
    }

    pub fn gradient(&self, ctrl: &ControlFunction) -> Result<FieldTrajectory> {
        Ok(self.evaluate(ctrl)?.gradient)
    }

    /// Raw `S_{s,n}`, `T_{s,n}` and sample means at a fixed control.
    pub fn accumulate_s_t(&self, ctrl: &ControlFunction) -> Result<RiskAccumulators> {
        Ok(self.accumulate(ctrl, Want::Everything)?.finish(self.space))
    }

    /// Per-sample diagnostics `i, Φ_i, weight_i` as CSV.
    pub fn write_sample_diagnostics(&self, ctrl: &ControlFunction, out: &mut impl Write) -> Result<()> {
        let acc = self.accumulate(ctrl, Want::Value)?;
        writeln!(out, "i,phi,weight")?;
        for (i, (p, w)) in acc.phis().iter().zip(acc.weights()).enumerate() {
            writeln!(out, "{},{p:e},{w:e}", i + 1)?;
        }
        Ok(())
    }

    /// Normalized entropic weights of the samples at a control.
    pub fn sample_weights(&self, ctrl: &ControlFunction) -> Result<Vec<f64>> {
        Ok(self.accumulate(ctrl, Want::Value)?.weights())
    }
}
