//! Convergence and optimization studies, with manifests that tie every CSV
//! to the exact inputs that produced it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::descent::{descend, DescentConfig, DescentTrace};
use crate::error::{Error, Result};
use crate::fem::{FemSpace, FieldTrajectory, TimeGrid};
use crate::field::{AffineDiffusion, FieldSpec};
use crate::lattice::{
    cbc_construct, choose_lambda, lattice_points, rms_over_shifts, GeneratingVector, ShiftSet, WeightSpec,
    DEFAULT_ORDER_CAP,
};
use crate::parabolic::{phi, study_source, ControlFunction, ProblemData, Propagator};
use crate::risk::{for_each_sample, Accumulator, RiskConfig, RiskKind, RiskProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Truncation,
    QmcRms,
    Optimize,
    CbcBuild,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Truncation => "truncation",
            StudyKind::QmcRms => "qmc_rms",
            StudyKind::Optimize => "optimize",
            StudyKind::CbcBuild => "cbc_build",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationConfig {
    pub s_list: Vec<usize>,
    pub s_ref: usize,
    pub n: u64,
    /// Trailing points left out of the slope fit.
    pub exclude_tail: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            s_list: vec![2, 4, 8, 16, 32, 64],
            s_ref: 256,
            n: 1 << 11,
            exclude_tail: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QmcRmsConfig {
    pub s: usize,
    pub m_min: u32,
    pub m_max: u32,
    pub shifts: usize,
    pub exclude_tail: usize,
}

impl Default for QmcRmsConfig {
    fn default() -> Self {
        Self {
            s: 20,
            m_min: 4,
            m_max: 10,
            shifts: 8,
            exclude_tail: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub s: usize,
    pub n: u64,
    pub radius: f64,
    pub eta0: f64,
    pub gamma: f64,
    pub beta: f64,
    pub tol: Option<f64>,
    pub max_iters: usize,
    /// Times at which the final controls are written as CSV.
    pub dump_times: Vec<f64>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            s: 32,
            n: 1 << 7,
            radius: 2.0,
            eta0: 100.0,
            gamma: 1e-4,
            beta: 0.1,
            tol: None,
            max_iters: 25,
            dump_times: vec![0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbcConfig {
    pub n: u64,
    pub s: usize,
}

impl Default for CbcConfig {
    fn default() -> Self {
        Self { n: 1 << 10, s: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub level: u32,
    pub n_steps: usize,
    pub horizon: f64,
    /// Decay exponent `ϑ` of the fluctuations.
    pub decay: f64,
    pub theta: f64,
    pub alpha: [f64; 3],
    pub seed: u64,
    /// Summability exponent behind the lattice weights; defaults to just above `1/ϑ`.
    pub p: Option<f64>,
    pub delta: f64,
    pub order_cap: usize,
    /// Pre-built generating vector, used when its `n` matches and it has enough components.
    pub vector_file: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub truncation: TruncationConfig,
    pub qmc_rms: QmcRmsConfig,
    pub optimize: OptimizeConfig,
    pub cbc: CbcConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            level: 4,
            n_steps: 50,
            horizon: 1.0,
            decay: 1.3,
            theta: 10.0,
            alpha: [1e-3, 1e-2, 1e-7],
            seed: 20_240_601,
            p: None,
            delta: 0.05,
            order_cap: DEFAULT_ORDER_CAP,
            vector_file: None,
            cache_dir: None,
            out_dir: PathBuf::from("out"),
            truncation: TruncationConfig::default(),
            qmc_rms: QmcRmsConfig::default(),
            optimize: OptimizeConfig::default(),
            cbc: CbcConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("study config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("study config", e.to_string()))
    }

    /// Full-size discretization and sample counts (hours to days of compute).
    pub fn paper_scale(mut self) -> Self {
        self.level = 5;
        self.n_steps = 500;
        self.truncation.s_list = (1..=9).map(|k| 1 << k).collect();
        self.truncation.s_ref = 2048;
        self.truncation.n = 1 << 15;
        self.qmc_rms.s = 100;
        self.qmc_rms.m_max = 15;
        self.qmc_rms.shifts = 16;
        self.optimize.s = 100;
        self.optimize.n = 1 << 10;
        self
    }

    pub fn field_spec(&self) -> Result<FieldSpec> {
        FieldSpec::new(self.decay)
    }

    pub fn summability(&self) -> f64 {
        self.p.unwrap_or_else(|| (1.0 / self.decay + 0.01).min(0.99))
    }

    pub fn weights(&self, s: usize) -> Result<WeightSpec> {
        let lambda = choose_lambda(self.summability(), self.delta)?;
        WeightSpec::pod(&self.field_spec()?.b_sequence(s), lambda, self.order_cap)
    }

    pub fn space(&self) -> Result<FemSpace> {
        FemSpace::new(self.level, TimeGrid::new(self.horizon, self.n_steps)?)
    }

    pub fn validate(&self, kind: StudyKind) -> Result<()> {
        self.field_spec()?;
        choose_lambda(self.summability(), self.delta)?;
        if self.order_cap == 0 {
            return Err(Error::invalid("order_cap must be at least 1"));
        }
        match kind {
            StudyKind::Truncation => {
                let t = &self.truncation;
                if t.s_list.is_empty() {
                    return Err(Error::invalid("truncation s_list is empty"));
                }
                if let Some(&s) = t.s_list.iter().find(|&&s| s == 0 || s >= t.s_ref) {
                    return Err(Error::invalid(format!(
                        "truncation dimension {s} must lie in 1..{} (below the reference)",
                        t.s_ref
                    )));
                }
                check_points(t.n)?;
            }
            StudyKind::QmcRms => {
                let q = &self.qmc_rms;
                if q.shifts < 2 {
                    return Err(Error::invalid("RMS estimates need at least 2 shifts"));
                }
                if q.s == 0 || q.m_min == 0 || q.m_min > q.m_max || q.m_max > 24 {
                    return Err(Error::invalid("qmc_rms needs s ≥ 1 and 1 ≤ m_min ≤ m_max ≤ 24"));
                }
                if !(self.theta > 0.0) {
                    return Err(Error::invalid("qmc_rms needs θ > 0"));
                }
            }
            StudyKind::Optimize => {
                let o = &self.optimize;
                if o.s == 0 {
                    return Err(Error::invalid("optimize needs s ≥ 1"));
                }
                check_points(o.n)?;
                self.descent(Some(o.radius)).validate()?;
                if !(self.theta > 0.0) {
                    return Err(Error::invalid("optimize uses the entropic risk and needs θ > 0"));
                }
            }
            StudyKind::CbcBuild => {
                check_points(self.cbc.n)?;
                if self.cbc.s == 0 {
                    return Err(Error::invalid("cbc s must be at least 1"));
                }
            }
        }
        Ok(())
    }

    pub fn descent(&self, radius: Option<f64>) -> DescentConfig {
        let o = &self.optimize;
        DescentConfig {
            eta0: o.eta0,
            gamma: o.gamma,
            beta: o.beta,
            tol: o.tol,
            max_iters: o.max_iters,
            radius,
        }
    }

    fn affine(&self, space: &FemSpace, s_max: usize) -> Result<AffineDiffusion> {
        let spec = self.field_spec()?;
        match &self.cache_dir {
            Some(dir) => AffineDiffusion::load_or_build(space, spec, s_max, dir),
            None => AffineDiffusion::build(space, spec, s_max),
        }
    }

    /// Lattice rule for `n` points in `s` dimensions: the configured vector
    /// file when it fits, a fresh CBC construction otherwise.
    pub fn generating_vector(&self, n: u64, s: usize) -> Result<GeneratingVector> {
        if let Some(path) = &self.vector_file {
            let gv = GeneratingVector::parse(&std::fs::read_to_string(path)?)?;
            if gv.n() == n && gv.dim() >= s {
                return gv.truncated(s);
            }
        }
        Ok(cbc_construct(n, s, &self.weights(s)?)?.gv)
    }
}

fn check_points(n: u64) -> Result<()> {
    if !(2..=1 << 24).contains(&n) {
        return Err(Error::invalid(format!("lattice size {n} outside 2..=2^24")));
    }
    Ok(())
}

const HASH_KEY: &str = "manifest_hash";
const CREATED_KEY: &str = "created_unix";

/// `key = value` record of a run. The hash covers every entry except itself
/// and the creation time, so identical inputs give identical hashes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn for_run(kind: StudyKind, cfg: &StudyConfig) -> Result<Self> {
        let value = toml::Value::try_from(cfg).map_err(|e| Error::format("study config", e.to_string()))?;
        let mut entries = BTreeMap::new();
        flatten("", &value, &mut entries);
        entries.insert("study".into(), kind.name().into());
        entries.insert("code_version".into(), env!("CARGO_PKG_VERSION").into());
        entries.insert("p_effective".into(), format!("{}", cfg.summability()));
        let mut m = Self { entries };
        m.entries.insert(HASH_KEY.into(), m.compute_hash());
        Ok(m)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn hash(&self) -> &str {
        self.get(HASH_KEY).unwrap_or("")
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn with_timestamp(mut self, unix_seconds: u64) -> Self {
        self.entries.insert(CREATED_KEY.into(), unix_seconds.to_string());
        self
    }

    pub fn compute_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in &self.entries {
            if k != HASH_KEY && k != CREATED_KEY {
                hasher.update(k.as_bytes());
                hasher.update(b" = ");
                hasher.update(v.as_bytes());
                hasher.update(b"\n");
            }
        }
        hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::format("manifest", format!("line {} lacks ' = '", no + 1)))?;
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::format("manifest", format!("bad key {k:?} on line {}", no + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::format("manifest", format!("duplicate key {k:?}")));
            }
        }
        if !entries.contains_key(HASH_KEY) {
            return Err(Error::format("manifest", "missing manifest_hash"));
        }
        Ok(Self { entries })
    }

    /// Checks the stored hash against the entries.
    pub fn verify(&self) -> Result<()> {
        let computed = self.compute_hash();
        if computed != self.hash() {
            return Err(Error::CacheMismatch(format!(
                "manifest hash {} does not match its contents ({computed})",
                self.hash()
            )));
        }
        Ok(())
    }

    /// The `# manifest_hash=` line carried at the top of every output CSV.
    pub fn csv_tag(&self) -> String {
        format!("# {HASH_KEY}={}\n", self.hash())
    }

    /// Verifies the manifest and that `csv` was produced under it.
    pub fn check_csv(&self, csv: &str) -> Result<()> {
        self.verify()?;
        match embedded_hash(csv) {
            Some(h) if h == self.hash() => Ok(()),
            Some(h) => Err(Error::CacheMismatch(format!(
                "CSV carries hash {h}, manifest has {}",
                self.hash()
            ))),
            None => Err(Error::format("CSV", "no manifest_hash line")),
        }
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut BTreeMap<String, String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

/// The hash from a CSV's `# manifest_hash=` comment, if present.
pub fn embedded_hash(csv: &str) -> Option<&str> {
    csv.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# manifest_hash="))
        .map(str::trim)
}

/// Least-squares slope of `log₂ y` against `log₂ x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            what: "slope fit",
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::invalid("slope fit needs at least two points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("slope fit needs positive finite data"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.log2()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.log2()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope fit needs distinct abscissae"));
    }
    Ok(sxy / sxx)
}

fn fitted(xs: &[f64], ys: &[f64], exclude_tail: usize) -> Option<f64> {
    let keep = xs.len().saturating_sub(exclude_tail);
    fit_loglog_slope(&xs[..keep], &ys[..keep]).ok()
}

fn slope_lines(columns: &[&str], slopes: &[Option<f64>]) -> String {
    let mut out = String::new();
    for (c, s) in columns.iter().zip(slopes) {
        match s {
            Some(v) => writeln!(out, "# slope_{c}={v:.6}"),
            None => writeln!(out, "# slope_{c}=nan"),
        }
        .expect("writing to a String");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationRow {
    pub s: usize,
    pub err_state: f64,
    pub err_adjoint: f64,
    pub err_s: f64,
    pub err_t: f64,
}

#[derive(Debug, Clone)]
pub struct TruncationReport {
    pub rows: Vec<TruncationRow>,
    /// Slopes for `err_state, err_adjoint, err_S, err_T`.
    pub slopes: [Option<f64>; 4],
}

impl TruncationReport {
    pub fn to_csv(&self, manifest: &Manifest) -> String {
        let mut out = manifest.csv_tag();
        out.push_str("s,err_state,err_adjoint,err_S,err_T\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.s, r.err_state, r.err_adjoint, r.err_s, r.err_t
            );
        }
        out + &slope_lines(&["err_state", "err_adjoint", "err_S", "err_T"], &self.slopes)
    }
}

/// Dimension truncation errors of the sample means of state and adjoint and
/// of the entropic `S`, `T` against the `s_ref` reference, all computed with
/// one lattice rule and one shift.
pub fn truncation_study(cfg: &StudyConfig) -> Result<TruncationReport> {
    cfg.validate(StudyKind::Truncation)?;
    let t = &cfg.truncation;
    let space = cfg.space()?;
    let aff = cfg.affine(&space, t.s_ref)?;
    let data = ProblemData::standard(&space, cfg.alpha)?;
    let ctrl = ControlFunction::from_source(&space, study_source);
    let gv = cfg.generating_vector(t.n, t.s_ref)?;
    let shift = ShiftSet::generate(1, t.s_ref, cfg.seed);
    let points = lattice_points(&gv, shift.get(0))?;

    let mut dims = t.s_list.clone();
    dims.push(t.s_ref);
    let mut accs: Vec<Accumulator> = dims.iter().map(|_| Accumulator::new(cfg.theta)).collect();
    let solve_all = |i: usize| -> Result<Vec<(f64, FieldTrajectory, FieldTrajectory)>> {
        dims.iter()
            .map(|&d| {
                let y = points[i].truncated(d);
                let run = || -> Result<_> {
                    let prop = Propagator::new(&space, &aff, &y)?;
                    let u = prop.state(&ctrl, &data.u0)?;
                    let p = phi(&space, &u, &data)?;
                    let q = prop.adjoint(&u, &data)?;
                    Ok((p, u, q))
                };
                run().map_err(|e| Error::Sample {
                    index: i,
                    y: y.as_slice().to_vec(),
                    source: Box::new(e),
                })
            })
            .collect()
    };
    for_each_sample(points.len(), solve_all, |_, per_dim| {
        for (acc, (p, u, q)) in accs.iter_mut().zip(&per_dim) {
            acc.push(*p, Some(u), Some(q));
        }
        Ok(())
    })?;

    let mut finished: Vec<_> = accs.into_iter().map(|a| a.finish(&space)).collect();
    let reference = finished.pop().expect("reference accumulator");
    let mut rows = Vec::with_capacity(finished.len());
    for (&s, acc) in dims.iter().zip(&finished) {
        rows.push(TruncationRow {
            s,
            err_state: space.norm_l2v_i(&reference.mean_state.sub(&acc.mean_state))?,
            err_adjoint: space.norm_l2v_i(&reference.mean_adjoint.sub(&acc.mean_adjoint))?,
            err_s: space.norm_l2v_i(&reference.s_sn.sub(&acc.s_sn))?,
            err_t: (reference.t_sn - acc.t_sn).abs(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.s as f64).collect();
    let col = |f: fn(&TruncationRow) -> f64| -> Vec<f64> { rows.iter().map(f).collect() };
    let slopes = [
        fitted(&xs, &col(|r| r.err_state), t.exclude_tail),
        fitted(&xs, &col(|r| r.err_adjoint), t.exclude_tail),
        fitted(&xs, &col(|r| r.err_s), t.exclude_tail),
        fitted(&xs, &col(|r| r.err_t), t.exclude_tail),
    ];
    Ok(TruncationReport { rows, slopes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsRow {
    pub m: u32,
    pub n: u64,
    pub rms_state: f64,
    pub rms_adjoint: f64,
    pub rms_s: f64,
    pub rms_t: f64,
}

#[derive(Debug, Clone)]
pub struct RmsReport {
    pub rows: Vec<RmsRow>,
    /// Slopes against `n` for `rms_state, rms_adjoint, rms_S, rms_T`.
    pub slopes: [Option<f64>; 4],
}

impl RmsReport {
    pub fn to_csv(&self, manifest: &Manifest) -> String {
        let mut out = manifest.csv_tag();
        out.push_str("m,n,rms_state,rms_adjoint,rms_S,rms_T\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.m, r.n, r.rms_state, r.rms_adjoint, r.rms_s, r.rms_t
            );
        }
        out + &slope_lines(&["rms_state", "rms_adjoint", "rms_S", "rms_T"], &self.slopes)
    }
}

/// Root-mean-square error over random shifts of the lattice estimates of the
/// mean state, mean adjoint, `S` and `T`, for `n = 2^m`.
pub fn qmc_rms_study(cfg: &StudyConfig) -> Result<RmsReport> {
    cfg.validate(StudyKind::QmcRms)?;
    let q = &cfg.qmc_rms;
    let space = cfg.space()?;
    let aff = cfg.affine(&space, q.s)?;
    let data = ProblemData::standard(&space, cfg.alpha)?;
    let ctrl = ControlFunction::from_source(&space, study_source);
    let shifts = ShiftSet::generate(q.shifts, q.s, cfg.seed);
    let kind = RiskKind::Entropic { theta: cfg.theta };

    let mut rows = Vec::new();
    for m in q.m_min..=q.m_max {
        let n = 1u64 << m;
        let gv = cfg.generating_vector(n, q.s)?;
        let mut per_shift = Vec::with_capacity(shifts.len());
        for shift in shifts.iter() {
            let risk_cfg = RiskConfig::new(kind, q.s, gv.clone(), shift.to_vec())?;
            let problem = RiskProblem::new(&space, &aff, &data, risk_cfg)?;
            per_shift.push(problem.accumulate_s_t(&ctrl)?);
        }
        let traj_rms = |pick: fn(&crate::risk::RiskAccumulators) -> &FieldTrajectory| -> Result<f64> {
            let v: Vec<FieldTrajectory> = per_shift.iter().map(|a| pick(a).clone()).collect();
            Ok(rms_over_shifts(&v, |t| space.norm_l2v_i(t))?.1)
        };
        let ts: Vec<f64> = per_shift.iter().map(|a| a.t_sn).collect();
        rows.push(RmsRow {
            m,
            n,
            rms_state: traj_rms(|a| &a.mean_state)?,
            rms_adjoint: traj_rms(|a| &a.mean_adjoint)?,
            rms_s: traj_rms(|a| &a.s_sn)?,
            rms_t: rms_over_shifts(&ts, |v| Ok(v.abs()))?.1,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let col = |f: fn(&RmsRow) -> f64| -> Vec<f64> { rows.iter().map(f).collect() };
    let slopes = [
        fitted(&xs, &col(|r| r.rms_state), q.exclude_tail),
        fitted(&xs, &col(|r| r.rms_adjoint), q.exclude_tail),
        fitted(&xs, &col(|r| r.rms_s), q.exclude_tail),
        fitted(&xs, &col(|r| r.rms_t), q.exclude_tail),
    ];
    Ok(RmsReport { rows, slopes })
}

#[derive(Debug, Clone)]
pub struct OptimizationRun {
    pub radius: Option<f64>,
    pub control: FieldTrajectory,
    pub trace: DescentTrace,
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub constrained: OptimizationRun,
    pub unconstrained: OptimizationRun,
}

/// Entropic-risk optimal control from `w₀ = 0`, once on the ball of the
/// configured radius and once unconstrained, with one frozen lattice rule.
pub fn optimize_study(cfg: &StudyConfig) -> Result<OptimizeReport> {
    cfg.validate(StudyKind::Optimize)?;
    let o = &cfg.optimize;
    let space = cfg.space()?;
    let aff = cfg.affine(&space, o.s)?;
    let data = ProblemData::standard(&space, cfg.alpha)?;
    let gv = cfg.generating_vector(o.n, o.s)?;
    let shift = ShiftSet::generate(1, o.s, cfg.seed);
    let risk_cfg = RiskConfig::new(RiskKind::Entropic { theta: cfg.theta }, o.s, gv, shift.get(0).to_vec())?;
    let problem = RiskProblem::new(&space, &aff, &data, risk_cfg)?;
    let w0 = space.zero_trajectory();
    let run = |radius: Option<f64>| -> Result<OptimizationRun> {
        let (control, trace) = descend(&problem, &w0, &cfg.descent(radius))?;
        Ok(OptimizationRun {
            radius,
            control,
            trace,
        })
    };
    Ok(OptimizeReport {
        constrained: run(Some(o.radius))?,
        unconstrained: run(None)?,
    })
}

#[derive(Debug, Clone)]
pub struct CbcReport {
    pub gv: GeneratingVector,
    pub errors: Vec<f64>,
}

impl CbcReport {
    pub fn errors_csv(&self, manifest: &Manifest) -> String {
        let mut out = manifest.csv_tag();
        out.push_str("d,e2\n");
        for (d, e) in self.errors.iter().enumerate() {
            let _ = writeln!(out, "{},{e:.17e}", d + 1);
        }
        out
    }
}

pub fn cbc_study(cfg: &StudyConfig) -> Result<CbcReport> {
    cfg.validate(StudyKind::CbcBuild)?;
    let c = &cfg.cbc;
    let result = cbc_construct(c.n, c.s, &cfg.weights(c.s)?)?;
    Ok(CbcReport {
        gv: result.gv,
        errors: result.errors,
    })
}

/// Files written by one study run.
#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub manifest: Manifest,
    pub files: Vec<PathBuf>,
}

struct OutDir {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl OutDir {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }

    fn finish(mut self, kind: StudyKind, manifest: Manifest) -> Result<StudyOutput> {
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let stamped = manifest.clone().with_timestamp(created);
        self.write(&format!("{}.manifest", kind.name()), stamped.render())?;
        Ok(StudyOutput {
            manifest,
            files: self.files,
        })
    }
}

pub fn run_truncation(cfg: &StudyConfig) -> Result<StudyOutput> {
    let manifest = Manifest::for_run(StudyKind::Truncation, cfg)?;
    let report = truncation_study(cfg)?;
    let mut out = OutDir::new(&cfg.out_dir)?;
    out.write("truncation.csv", report.to_csv(&manifest))?;
    out.finish(StudyKind::Truncation, manifest)
}

pub fn run_qmc_rms(cfg: &StudyConfig) -> Result<StudyOutput> {
    let manifest = Manifest::for_run(StudyKind::QmcRms, cfg)?;
    let report = qmc_rms_study(cfg)?;
    let mut out = OutDir::new(&cfg.out_dir)?;
    out.write("qmc_rms.csv", report.to_csv(&manifest))?;
    out.finish(StudyKind::QmcRms, manifest)
}

pub fn run_optimize(cfg: &StudyConfig) -> Result<StudyOutput> {
    let manifest = Manifest::for_run(StudyKind::Optimize, cfg)?;
    let report = optimize_study(cfg)?;
    let level = cfg.level;
    let mut out = OutDir::new(&cfg.out_dir)?;
    for (label, run) in [("constrained", &report.constrained), ("unconstrained", &report.unconstrained)] {
        out.write(
            &format!("optimize_{label}_trace.csv"),
            manifest.csv_tag() + &run.trace.to_csv(),
        )?;
        let grid = run.control.grid();
        let mut steps: Vec<usize> = cfg.optimize.dump_times.iter().map(|&t| grid.nearest_step(t)).collect();
        steps.dedup();
        out.write(
            &format!("optimize_{label}_control.csv"),
            manifest.csv_tag() + &run.control.to_csv(level, Some(&steps))?,
        )?;
        out.write(&format!("optimize_{label}_control.bin"), run.control.to_bytes(level)?)?;
    }
    out.finish(StudyKind::Optimize, manifest)
}

pub fn run_cbc_build(cfg: &StudyConfig) -> Result<StudyOutput> {
    let manifest = Manifest::for_run(StudyKind::CbcBuild, cfg)?;
    let report = cbc_study(cfg)?;
    let mut out = OutDir::new(&cfg.out_dir)?;
    out.write(
        &format!("lattice_n{}_s{}.txt", cfg.cbc.n, cfg.cbc.s),
        manifest.csv_tag() + &report.gv.to_text(),
    )?;
    out.write("cbc_errors.csv", report.errors_csv(&manifest))?;
    out.finish(StudyKind::CbcBuild, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.6)).collect();
        assert!((fit_loglog_slope(&xs, &ys).unwrap() + 1.6).abs() < 1e-12);
        assert!(fit_loglog_slope(&xs, &[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(fit_loglog_slope(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn excluded_tail_drops_saturated_points() {
        let xs = [2.0, 4.0, 8.0, 16.0];
        let ys = [1.0, 0.25, 0.0625, 0.06];
        assert!((fitted(&xs, &ys, 1).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn config_toml_round_trip_and_overrides() {
        let cfg = StudyConfig::default();
        assert_eq!(StudyConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
        let partial = StudyConfig::from_toml("level = 3\n[truncation]\ns_ref = 128\n").unwrap();
        assert_eq!(partial.level, 3);
        assert_eq!(partial.truncation.s_ref, 128);
        assert_eq!(partial.truncation.n, 2048);
        assert!(StudyConfig::from_toml("levle = 3").is_err());
    }

    #[test]
    fn validation_rejects_reference_not_above_list() {
        let mut cfg = StudyConfig::default();
        cfg.truncation.s_list = vec![2, 256];
        assert!(cfg.validate(StudyKind::Truncation).is_err());
        cfg.qmc_rms.shifts = 1;
        assert!(cfg.validate(StudyKind::QmcRms).is_err());
    }

    #[test]
    fn manifest_hash_ignores_timestamp() {
        let cfg = StudyConfig::default();
        let m = Manifest::for_run(StudyKind::QmcRms, &cfg).unwrap();
        let stamped = m.clone().with_timestamp(12345);
        assert_eq!(stamped.compute_hash(), m.hash());
        let parsed = Manifest::parse(&stamped.render()).unwrap();
        parsed.verify().unwrap();
        assert_eq!(parsed.get("qmc_rms.shifts"), Some("8"));
        assert_eq!(parsed.get("study"), Some("qmc_rms"));
    }

    #[test]
    fn tampered_manifest_detected() {
        let m = Manifest::for_run(StudyKind::Optimize, &StudyConfig::default()).unwrap();
        let text = m.render().replace("level = 4", "level = 5");
        assert!(Manifest::parse(&text).unwrap().verify().is_err());
    }

    #[test]
    fn csv_hash_check() {
        let m = Manifest::for_run(StudyKind::CbcBuild, &StudyConfig::default()).unwrap();
        let csv = m.csv_tag() + "d,e2\n1,0.5\n";
        m.check_csv(&csv).unwrap();
        let other = m.csv_tag().replace(&m.hash()[..4], "zzzz") + "d,e2\n";
        assert!(m.check_csv(&other).is_err());
        assert!(m.check_csv("d,e2\n").is_err());
    }

    #[test]
    fn paper_scale_values() {
        let cfg = StudyConfig::default().paper_scale();
        assert_eq!((cfg.level, cfg.n_steps), (5, 500));
        assert_eq!(cfg.truncation.s_ref, 2048);
        assert_eq!(*cfg.truncation.s_list.last().unwrap(), 512);
        assert_eq!(cfg.truncation.n, 1 << 15);
        assert_eq!((cfg.qmc_rms.s, cfg.qmc_rms.m_max, cfg.qmc_rms.shifts), (100, 15, 16));
    }
}
