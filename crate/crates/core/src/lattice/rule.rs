use crate::error::{Error, Result};
use crate::field::ParamPoint;
use crate::util::gcd;

/// Rank-1 lattice generating vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratingVector {
    n: u64,
    g: Vec<u64>,
}

/// Largest point count accepted from files.
pub const MAX_POINTS: u64 = 1 << 32;

impl GeneratingVector {
    pub fn new(n: u64, g: Vec<u64>) -> Result<Self> {
        if !(2..=MAX_POINTS).contains(&n) {
            return Err(Error::invalid(format!("point count {n} outside [2, 2^32]")));
        }
        if g.is_empty() {
            return Err(Error::invalid("generating vector is empty"));
        }
        for (j, &c) in g.iter().enumerate() {
            if c == 0 || c >= n || gcd(c, n) != 1 {
                return Err(Error::invalid(format!(
                    "component {} = {c} is not a unit modulo {n}",
                    j + 1
                )));
            }
        }
        Ok(Self { n, g })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn components(&self) -> &[u64] {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// The first `s` components.
    pub fn truncated(&self, s: usize) -> Result<Self> {
        if s == 0 || s > self.dim() {
            return Err(Error::invalid(format!("cannot truncate {}-dim vector to {s}", self.dim())));
        }
        Ok(Self {
            n: self.n,
            g: self.g[..s].to_vec(),
        })
    }

    /// Text form: `n s` on the first line, then one component per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.g.len());
        for c in &self.g {
            out.push_str(&c.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        const WHAT: &str = "generating vector file";
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::format(WHAT, "empty file"))?;
        let mut parts = header.split_whitespace();
        let n: u64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(WHAT, "bad point count"))?;
        let s: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(WHAT, "bad dimension"))?;
        if parts.next().is_some() {
            return Err(Error::format(WHAT, "extra fields in header"));
        }
        let mut g = Vec::new();
        for line in lines {
            if g.len() == s {
                return Err(Error::format(WHAT, "more components than declared"));
            }
            g.push(line.parse().map_err(|_| Error::format(WHAT, format!("bad component {line:?}")))?);
        }
        if g.len() != s {
            return Err(Error::format(WHAT, format!("declared {s} components, found {}", g.len())));
        }
        Self::new(n, g).map_err(|e| Error::format(WHAT, e.to_string()))
    }
}

/// Shifted lattice points `frac(i g / n + Δ) - 1/2`, `i = 1..=n`.
pub fn lattice_points(gv: &GeneratingVector, shift: &[f64]) -> Result<Vec<ParamPoint>> {
    if shift.len() != gv.dim() {
        return Err(Error::DimensionMismatch {
            what: "shift",
            expected: gv.dim(),
            got: shift.len(),
        });
    }
    if let Some(d) = shift.iter().find(|d| !(**d >= 0.0 && **d < 1.0)) {
        return Err(Error::invalid(format!("shift component {d} outside [0, 1)")));
    }
    let n = gv.n();
    let inv = 1.0 / n as f64;
    (1..=n)
        .map(|i| {
            let y = gv
                .components()
                .iter()
                .zip(shift)
                .map(|(&g, &d)| {
                    let r = ((i as u128 * g as u128) % n as u128) as f64 * inv + d;
                    let frac = if r >= 1.0 { r - 1.0 } else { r };
                    frac - 0.5
                })
                .collect();
            ParamPoint::new(y)
        })
        .collect()
}
