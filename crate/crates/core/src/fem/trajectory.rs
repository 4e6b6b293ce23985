use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::util::{put_f64, put_u32, put_u64, ByteReader};

/// Uniform partition of `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("invalid horizon {horizon}")));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    /// Index of the grid time closest to `t`.
    pub fn nearest_step(&self, t: f64) -> usize {
        ((t / self.dt()).round().max(0.0) as usize).min(self.n_steps)
    }
}

/// Nodal coefficient vectors at every time `t_k = k·dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrajectory {
    grid: TimeGrid,
    n_dof: usize,
    values: Vec<f64>,
}

impl FieldTrajectory {
    pub fn zeros(grid: TimeGrid, n_dof: usize) -> Self {
        Self {
            grid,
            n_dof,
            values: vec![0.0; (grid.n_steps() + 1) * n_dof],
        }
    }

    pub fn from_values(grid: TimeGrid, n_dof: usize, values: Vec<f64>) -> Result<Self> {
        let expected = (grid.n_steps() + 1) * n_dof;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "trajectory values",
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            grid,
            n_dof,
            values,
        })
    }

    /// Fills row `k` with `f(k, t_k)`.
    pub fn from_fn(grid: TimeGrid, n_dof: usize, mut f: impl FnMut(usize, f64) -> Vec<f64>) -> Self {
        let mut traj = Self::zeros(grid, n_dof);
        for k in 0..=grid.n_steps() {
            let row = f(k, grid.time(k));
            assert_eq!(row.len(), n_dof, "row length");
            traj.row_mut(k).copy_from_slice(&row);
        }
        traj
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_dof..(k + 1) * self.n_dof]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.n_dof..(k + 1) * self.n_dof]
    }

    pub fn same_shape(&self, other: &FieldTrajectory) -> bool {
        self.grid == other.grid && self.n_dof == other.n_dof
    }

    pub(crate) fn check_shape(&self, other: &FieldTrajectory, what: &'static str) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.grid.n_steps(),
                got: other.grid.n_steps(),
            });
        }
        if self.n_dof != other.n_dof {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.n_dof,
                got: other.n_dof,
            });
        }
        Ok(())
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &FieldTrajectory) {
        assert!(self.same_shape(other), "trajectory shape mismatch");
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|x| *x *= a);
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn sub(&self, other: &FieldTrajectory) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

const TRAJ_MAGIC: &[u8; 4] = b"HRTJ";
const TRAJ_VERSION: u32 = 1;
// refuse dumps larger than this many values (roughly 1 GiB)
const MAX_DUMP_VALUES: usize = 1 << 27;

/// Grid metadata carried by every trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpMeta {
    pub level: u32,
    pub grid: TimeGrid,
}

impl DumpMeta {
    pub fn n_dof(&self) -> usize {
        let m = (1usize << self.level) - 1;
        m * m
    }

    fn validate(level: u32, n_steps: usize, horizon: f64, what: &'static str) -> Result<Self> {
        if level == 0 || level > 12 {
            return Err(Error::format(what, format!("unsupported level {level}")));
        }
        let grid = TimeGrid::new(horizon, n_steps).map_err(|e| Error::format(what, e.to_string()))?;
        let meta = Self { level, grid };
        let total = (n_steps as u128 + 1) * meta.n_dof() as u128;
        if total > MAX_DUMP_VALUES as u128 {
            return Err(Error::format(what, "dump too large"));
        }
        Ok(meta)
    }

    /// Interior unknown index of a global node id, if interior.
    pub fn interior_of(&self, node: usize) -> Option<usize> {
        let cells = 1usize << self.level;
        let np = cells + 1;
        let (j, i) = (node / np, node % np);
        (j < np && i > 0 && i < cells && j > 0 && j < cells).then(|| (j - 1) * (cells - 1) + (i - 1))
    }

    /// Global node id of interior unknown `d`.
    pub fn node_of(&self, d: usize) -> usize {
        let cells = 1usize << self.level;
        let m = cells - 1;
        let (j, i) = (d / m + 1, d % m + 1);
        j * (cells + 1) + i
    }
}

impl FieldTrajectory {
    fn meta_for(&self, level: u32) -> Result<DumpMeta> {
        let meta = DumpMeta {
            level,
            grid: self.grid,
        };
        if meta.n_dof() != self.n_dof {
            return Err(Error::DimensionMismatch {
                what: "dump level",
                expected: meta.n_dof(),
                got: self.n_dof,
            });
        }
        Ok(meta)
    }

    /// Binary dump: magic, version, level, n_steps, horizon, n_dof, values.
    pub fn to_bytes(&self, level: u32) -> Result<Vec<u8>> {
        let meta = self.meta_for(level)?;
        let mut out = Vec::with_capacity(36 + 8 * self.values.len());
        out.extend_from_slice(TRAJ_MAGIC);
        put_u32(&mut out, TRAJ_VERSION);
        put_u32(&mut out, meta.level);
        put_u64(&mut out, meta.grid.n_steps() as u64);
        put_f64(&mut out, meta.grid.horizon());
        put_u64(&mut out, self.n_dof as u64);
        for v in &self.values {
            put_f64(&mut out, *v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(DumpMeta, Self)> {
        const WHAT: &str = "trajectory dump";
        let mut r = ByteReader::new(bytes, WHAT);
        r.magic(TRAJ_MAGIC)?;
        let version = r.u32()?;
        if version != TRAJ_VERSION {
            return Err(Error::format(WHAT, format!("unsupported version {version}")));
        }
        let level = r.u32()?;
        let n_steps = usize::try_from(r.u64()?).map_err(|_| Error::format(WHAT, "n_steps"))?;
        let horizon = r.f64()?;
        let meta = DumpMeta::validate(level, n_steps, horizon, WHAT)?;
        let n_dof = r.u64()?;
        if n_dof != meta.n_dof() as u64 {
            return Err(Error::format(WHAT, "n_dof does not match level"));
        }
        let values = r.f64_vec((n_steps + 1) * meta.n_dof())?;
        r.finish()?;
        let traj = Self::from_values(meta.grid, meta.n_dof(), values)?;
        Ok((meta, traj))
    }

    /// CSV dump with columns `k,t_k,node_id,value`, restricted to the given
    /// time indices (all when `None`).
    pub fn to_csv(&self, level: u32, steps: Option<&[usize]>) -> Result<String> {
        let meta = self.meta_for(level)?;
        let all: Vec<usize> = (0..=self.grid.n_steps()).collect();
        let steps = steps.unwrap_or(&all);
        let mut out = String::new();
        writeln!(out, "# heatrisk trajectory v{TRAJ_VERSION}").unwrap();
        writeln!(
            out,
            "# level={} n_steps={} horizon={} n_dof={}",
            level,
            self.grid.n_steps(),
            self.grid.horizon(),
            self.n_dof
        )
        .unwrap();
        out.push_str("k,t_k,node_id,value\n");
        for &k in steps {
            if k > self.grid.n_steps() {
                return Err(Error::invalid(format!("time index {k} out of range")));
            }
            let t = self.grid.time(k);
            for (d, v) in self.row(k).iter().enumerate() {
                writeln!(out, "{k},{t},{},{v:e}", meta.node_of(d)).unwrap();
            }
        }
        Ok(out)
    }
}

/// Parsed CSV dump; may hold any subset of time rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCsv {
    pub meta: DumpMeta,
    /// `(k, interior index, value)` in file order.
    pub entries: Vec<(usize, usize, f64)>,
}

impl TrajectoryCsv {
    pub fn parse(text: &str) -> Result<Self> {
        const WHAT: &str = "trajectory csv";
        // study outputs prepend the hash of their run manifest
        let mut lines = text.lines().skip_while(|l| l.starts_with("# manifest_hash="));
        let first = lines.next().ok_or_else(|| Error::format(WHAT, "empty"))?;
        let version = first
            .strip_prefix("# heatrisk trajectory v")
            .ok_or_else(|| Error::format(WHAT, "missing banner"))?;
        if version.trim() != TRAJ_VERSION.to_string() {
            return Err(Error::format(WHAT, "unsupported version"));
        }
        let meta_line = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| Error::format(WHAT, "missing metadata"))?;
        let (mut level, mut n_steps, mut horizon, mut n_dof) = (None, None, None, None);
        for kv in meta_line.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::format(WHAT, format!("bad metadata item {kv:?}")))?;
            let bad = || Error::format(WHAT, format!("bad value for {k}"));
            match k {
                "level" => level = Some(v.parse::<u32>().map_err(|_| bad())?),
                "n_steps" => n_steps = Some(v.parse::<usize>().map_err(|_| bad())?),
                "horizon" => horizon = Some(v.parse::<f64>().map_err(|_| bad())?),
                "n_dof" => n_dof = Some(v.parse::<usize>().map_err(|_| bad())?),
                _ => return Err(Error::format(WHAT, format!("unknown metadata key {k}"))),
            }
        }
        let missing = |k: &str| Error::format(WHAT, format!("missing {k}"));
        let meta = DumpMeta::validate(
            level.ok_or_else(|| missing("level"))?,
            n_steps.ok_or_else(|| missing("n_steps"))?,
            horizon.ok_or_else(|| missing("horizon"))?,
            WHAT,
        )?;
        if n_dof.ok_or_else(|| missing("n_dof"))? != meta.n_dof() {
            return Err(Error::format(WHAT, "n_dof does not match level"));
        }
        if lines.next() != Some("k,t_k,node_id,value") {
            return Err(Error::format(WHAT, "missing column header"));
        }
        let mut entries = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |d: &str| Error::format(WHAT, format!("row {}: {d}", lineno + 1));
            let mut cols = line.split(',');
            let mut next = |name: &str| cols.next().ok_or_else(|| bad(&format!("missing {name}")));
            let k: usize = next("k")?.trim().parse().map_err(|_| bad("k"))?;
            let t: f64 = next("t_k")?.trim().parse().map_err(|_| bad("t_k"))?;
            let node: usize = next("node_id")?.trim().parse().map_err(|_| bad("node_id"))?;
            let value: f64 = next("value")?.trim().parse().map_err(|_| bad("value"))?;
            if cols.next().is_some() {
                return Err(bad("too many columns"));
            }
            if k > meta.grid.n_steps() {
                return Err(bad("time index out of range"));
            }
            if (t - meta.grid.time(k)).abs() > 1e-9 * meta.grid.horizon() {
                return Err(bad("t_k inconsistent with grid"));
            }
            let d = meta
                .interior_of(node)
                .ok_or_else(|| bad("node is not an interior node"))?;
            entries.push((k, d, value));
        }
        Ok(Self { meta, entries })
    }

    /// Rebuilds a full trajectory; every `(k, node)` must appear exactly once.
    pub fn into_trajectory(self) -> Result<FieldTrajectory> {
        const WHAT: &str = "trajectory csv";
        let n_dof = self.meta.n_dof();
        let total = (self.meta.grid.n_steps() + 1) * n_dof;
        if self.entries.len() != total {
            return Err(Error::format(
                WHAT,
                format!("expected {total} rows, found {}", self.entries.len()),
            ));
        }
        let mut values = vec![f64::NAN; total];
        let mut seen = vec![false; total];
        for (k, d, v) in self.entries {
            let idx = k * n_dof + d;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::format(WHAT, "duplicate row"));
            }
            values[idx] = v;
        }
        FieldTrajectory::from_values(self.meta.grid, n_dof, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FieldTrajectory {
        let grid = TimeGrid::new(1.0, 3).unwrap();
        FieldTrajectory::from_fn(grid, 9, |k, t| (0..9).map(|d| t + d as f64 * 0.1 + k as f64).collect())
    }

    #[test]
    fn grid_spacing() {
        let g = TimeGrid::new(1.0, 500).unwrap();
        assert!((g.dt() * 500.0 - 1.0).abs() < 1e-15);
        assert_eq!(g.time(500), 1.0);
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let t = sample();
        let bytes = t.to_bytes(2).unwrap();
        let (meta, back) = FieldTrajectory::from_bytes(&bytes).unwrap();
        assert_eq!(meta.level, 2);
        assert_eq!(back, t);
        assert!(FieldTrajectory::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = sample();
        let csv = t.to_csv(2, None).unwrap();
        let back = TrajectoryCsv::parse(&csv).unwrap().into_trajectory().unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_subset_is_not_a_full_trajectory() {
        let csv = sample().to_csv(2, Some(&[0, 3])).unwrap();
        let parsed = TrajectoryCsv::parse(&csv).unwrap();
        assert_eq!(parsed.entries.len(), 18);
        assert!(parsed.into_trajectory().is_err());
    }

    #[test]
    fn wrong_level_rejected() {
        assert!(sample().to_bytes(3).is_err());
    }

    #[test]
    fn node_mapping_inverts() {
        let meta = DumpMeta {
            level: 3,
            grid: TimeGrid::new(1.0, 1).unwrap(),
        };
        for d in 0..meta.n_dof() {
            assert_eq!(meta.interior_of(meta.node_of(d)), Some(d));
        }
        assert_eq!(meta.interior_of(0), None);
    }
}
