//! Projected gradient descent with the projected Armijo rule.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fem::FieldTrajectory;
use crate::parabolic::ControlFunction;
use crate::risk::RiskProblem;

/// Steps below this are treated as a failed line search.
pub const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    pub eta0: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Stationarity tolerance; `None` means `1e-6 · (1 + stationarity at w₀)`.
    pub tol: Option<f64>,
    pub max_iters: usize,
    /// Radius of the feasible ball; `None` is unconstrained.
    pub radius: Option<f64>,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            eta0: 100.0,
            gamma: 1e-4,
            beta: 0.1,
            tol: None,
            max_iters: 25,
            radius: None,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.gamma) || !open_unit(self.beta) {
            return Err(Error::invalid(format!(
                "γ and β must lie in (0, 1), got γ = {}, β = {}",
                self.gamma, self.beta
            )));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::invalid(format!("η₀ must be positive, got {}", self.eta0)));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::invalid(format!("radius must be positive, got {r}")));
            }
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0) {
                return Err(Error::invalid(format!("tolerance must be nonnegative, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub j: f64,
    /// Accepted step; zero for the initial guess.
    pub eta: f64,
    pub stationarity: f64,
    pub control_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescentTrace {
    pub records: Vec<IterationRecord>,
}

impl DescentTrace {
    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].j <= w[0].j)
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,J,eta,stationarity,control_norm\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.17e},{:e},{:.17e},{:.17e}",
                r.iter, r.j, r.eta, r.stationarity, r.control_norm
            );
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "iter,J,eta,stationarity,control_norm" => {}
            other => return Err(Error::format("descent trace", format!("unexpected header {other:?}"))),
        }
        let mut records = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::format("descent trace", format!("expected 5 fields in {line:?}")));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::format("descent trace", format!("bad number {s:?}")))
            };
            records.push(IterationRecord {
                iter: f[0]
                    .trim()
                    .parse()
                    .map_err(|_| Error::format("descent trace", format!("bad iteration {:?}", f[0])))?,
                j: num(f[1])?,
                eta: num(f[2])?,
                stationarity: num(f[3])?,
                control_norm: num(f[4])?,
            });
        }
        Ok(Self { records })
    }
}

/// A smooth objective over controls in the `w`-representation.
pub trait ControlObjective {
    fn value(&self, w: &FieldTrajectory) -> Result<f64>;

    /// Value and gradient, the gradient expressed in the same geometry as `w`.
    fn value_and_gradient(&self, w: &FieldTrajectory) -> Result<(f64, FieldTrajectory)>;

    /// Inner product of the control space.
    fn inner(&self, a: &FieldTrajectory, b: &FieldTrajectory) -> Result<f64>;

    fn norm(&self, w: &FieldTrajectory) -> Result<f64> {
        Ok(self.inner(w, w)?.max(0.0).sqrt())
    }
}

impl ControlObjective for RiskProblem<'_> {
    fn value(&self, w: &FieldTrajectory) -> Result<f64> {
        self.objective(&ControlFunction::Riesz(w.clone()))
    }

    fn value_and_gradient(&self, w: &FieldTrajectory) -> Result<(f64, FieldTrajectory)> {
        let e = self.evaluate(&ControlFunction::Riesz(w.clone()))?;
        Ok((e.value, e.gradient))
    }

    fn inner(&self, a: &FieldTrajectory, b: &FieldTrajectory) -> Result<f64> {
        self.space().inner_l2v_i(a, b)
    }
}

/// `min{1, r/‖w‖} w`; unconstrained when `radius` is `None`.
pub fn project<O: ControlObjective + ?Sized>(obj: &O, w: &FieldTrajectory, radius: Option<f64>) -> Result<FieldTrajectory> {
    let Some(r) = radius else {
        return Ok(w.clone());
    };
    let norm = obj.norm(w)?;
    if norm <= r {
        Ok(w.clone())
    } else {
        Ok(w.scaled(r / norm))
    }
}

/// `‖w − P(w − g)‖`
pub fn stationarity<O: ControlObjective + ?Sized>(
    obj: &O,
    w: &FieldTrajectory,
    grad: &FieldTrajectory,
    radius: Option<f64>,
) -> Result<f64> {
    let mut trial = w.clone();
    trial.axpy(-1.0, grad);
    let p = project(obj, &trial, radius)?;
    obj.norm(&w.sub(&p))
}

#[derive(Debug, Clone)]
pub struct ArmijoStep {
    pub eta: f64,
    pub w: FieldTrajectory,
    pub j: f64,
    /// Objective evaluations spent.
    pub trials: usize,
}

/// Backtracks from `η₀` until
/// `J(P(w − ηg)) − J(w) ≤ −(γ/η) ‖w − P(w − ηg)‖²`.
pub fn armijo_step<O: ControlObjective + ?Sized>(
    obj: &O,
    w: &FieldTrajectory,
    j_w: f64,
    grad: &FieldTrajectory,
    cfg: &DescentConfig,
) -> Result<ArmijoStep> {
    let mut eta = cfg.eta0;
    let mut trials = 0;
    loop {
        let mut trial = w.clone();
        trial.axpy(-eta, grad);
        let w_new = project(obj, &trial, cfg.radius)?;
        let j_new = obj.value(&w_new)?;
        trials += 1;
        let dist_sq = obj.norm(&w.sub(&w_new))?.powi(2);
        let insufficient = !j_new.is_finite() || j_new - j_w > -(cfg.gamma / eta) * dist_sq;
        if !insufficient {
            return Ok(ArmijoStep {
                eta,
                w: w_new,
                j: j_new,
                trials,
            });
        }
        eta *= cfg.beta;
        if eta < MIN_STEP {
            return Err(Error::LineSearch {
                eta,
                trace: Box::default(),
            });
        }
    }
}

/// Projected gradient descent from `w0`. The step search restarts from `η₀`
/// at every iteration.
pub fn descend<O: ControlObjective + ?Sized>(
    obj: &O,
    w0: &FieldTrajectory,
    cfg: &DescentConfig,
) -> Result<(FieldTrajectory, DescentTrace)> {
    cfg.validate()?;
    let mut w = project(obj, w0, cfg.radius)?;
    let (mut j, mut grad) = obj.value_and_gradient(&w)?;
    let mut stat = stationarity(obj, &w, &grad, cfg.radius)?;
    let tol = cfg.tol.unwrap_or(1e-6 * (1.0 + stat));
    let mut trace = DescentTrace::default();
    trace.records.push(IterationRecord {
        iter: 0,
        j,
        eta: 0.0,
        stationarity: stat,
        control_norm: obj.norm(&w)?,
    });

    for iter in 1..=cfg.max_iters {
        if stat <= tol {
            break;
        }
        let step = match armijo_step(obj, &w, j, &grad, cfg) {
            Ok(s) => s,
            Err(Error::LineSearch { eta, .. }) => {
                return Err(Error::LineSearch {
                    eta,
                    trace: Box::new(trace),
                })
            }
            Err(e) => return Err(e),
        };
        w = step.w;
        (j, grad) = obj.value_and_gradient(&w)?;
        stat = stationarity(obj, &w, &grad, cfg.radius)?;
        trace.records.push(IterationRecord {
            iter,
            j,
            eta: step.eta,
            stationarity: stat,
            control_norm: obj.norm(&w)?,
        });
    }
    Ok((w, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::TimeGrid;

    /// `J(w) = ½ a ‖w − c‖²` in the Euclidean geometry.
    struct Quadratic {
        a: f64,
        center: FieldTrajectory,
    }

    impl ControlObjective for Quadratic {
        fn value(&self, w: &FieldTrajectory) -> Result<f64> {
            Ok(0.5 * self.a * self.norm(&w.sub(&self.center))?.powi(2))
        }
        fn value_and_gradient(&self, w: &FieldTrajectory) -> Result<(f64, FieldTrajectory)> {
            let d = w.sub(&self.center);
            Ok((self.value(w)?, d.scaled(self.a)))
        }
        fn inner(&self, a: &FieldTrajectory, b: &FieldTrajectory) -> Result<f64> {
            Ok(a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum())
        }
    }

    fn traj(vals: Vec<f64>) -> FieldTrajectory {
        let n = vals.len() / 2;
        FieldTrajectory::from_values(TimeGrid::new(1.0, 1).unwrap(), n, vals).unwrap()
    }

    fn quad(a: f64, c: Vec<f64>) -> Quadratic {
        Quadratic { a, center: traj(c) }
    }

    #[test]
    fn projection_scales_onto_ball() {
        let q = quad(1.0, vec![0.0; 2]);
        let w = traj(vec![4.0, 0.0]);
        let p = project(&q, &w, Some(2.0)).unwrap();
        assert!((q.norm(&p).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(project(&q, &p, Some(2.0)).unwrap(), p);
        let small = traj(vec![0.5, 0.5]);
        assert_eq!(project(&q, &small, Some(2.0)).unwrap(), small);
        assert_eq!(project(&q, &w, None).unwrap(), w);
    }

    #[test]
    fn zero_gradient_accepts_first_trial() {
        let q = quad(1.0, vec![1.0, 2.0]);
        let w = traj(vec![1.0, 2.0]);
        let (j, g) = q.value_and_gradient(&w).unwrap();
        let step = armijo_step(&q, &w, j, &g, &DescentConfig::default()).unwrap();
        assert_eq!(step.eta, 100.0);
        assert_eq!(step.trials, 1);
    }

    #[test]
    fn small_eta0_accepted_on_quadratic() {
        // J(w − ηw) − J(w) = ½‖w‖²((1−η)² − 1), sufficient when η ≤ 2(1 − γ)/(1)
        let q = quad(1.0, vec![0.0, 0.0]);
        let w = traj(vec![3.0, -1.0]);
        let (j, g) = q.value_and_gradient(&w).unwrap();
        let cfg = DescentConfig {
            eta0: 0.5,
            ..Default::default()
        };
        let step = armijo_step(&q, &w, j, &g, &cfg).unwrap();
        assert_eq!((step.eta, step.trials), (0.5, 1));
        // η₀ = 100 overshoots twice before 1.0 lands exactly on the minimizer
        let step = armijo_step(&q, &w, j, &g, &DescentConfig::default()).unwrap();
        assert_eq!((step.eta, step.trials), (1.0, 3));
        assert!(step.j.abs() < 1e-30);
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let q = quad(2.0, vec![0.0, 0.0]);
        let w0 = traj(vec![0.0, 0.0]);
        let (w, trace) = descend(&q, &w0, &DescentConfig::default()).unwrap();
        assert_eq!(w, w0);
        assert_eq!(trace.records.len(), 1);
    }

    #[test]
    fn constrained_quadratic_stays_feasible() {
        let q = quad(0.3, vec![5.0, 5.0, 1.0, -2.0]);
        let cfg = DescentConfig {
            radius: Some(2.0),
            max_iters: 50,
            ..Default::default()
        };
        let (w, trace) = descend(&q, &traj(vec![0.0; 4]), &cfg).unwrap();
        assert!(trace.is_monotone());
        assert!(trace.records.iter().all(|r| r.control_norm <= 2.0 + 1e-12));
        // minimizer over the ball is the radial projection of the center
        let expect = project(&q, &q.center, Some(2.0)).unwrap();
        assert!(q.norm(&w.sub(&expect)).unwrap() < 1e-6);
    }

    #[test]
    fn trace_csv_round_trip() {
        let q = quad(0.7, vec![1.0, 2.0]);
        let (_, trace) = descend(&q, &traj(vec![0.0, 0.0]), &DescentConfig::default()).unwrap();
        assert_eq!(DescentTrace::parse_csv(&trace.to_csv()).unwrap(), trace);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            DescentConfig { beta: 1.0, ..Default::default() },
            DescentConfig { gamma: 0.0, ..Default::default() },
            DescentConfig { eta0: -1.0, ..Default::default() },
            DescentConfig { radius: Some(0.0), ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
