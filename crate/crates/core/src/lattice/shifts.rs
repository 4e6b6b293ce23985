use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::FieldTrajectory;
use crate::util::{put_f64, put_u32, put_u64, ByteReader};

/// Independent uniform random shifts in `[0,1)^s`, reproducible from a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSet {
    seed: u64,
    dim: usize,
    shifts: Vec<Vec<f64>>,
}

const SHIFT_MAGIC: &[u8; 4] = b"HRSH";
const SHIFT_VERSION: u32 = 1;

impl ShiftSet {
    /// Draws `count` shifts from a ChaCha8 stream keyed by `seed`.
    pub fn generate(count: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts = (0..count)
            .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
            .collect();
        Self { seed, dim, shifts }
    }

    /// Wraps explicit shifts (seed recorded for provenance only).
    pub fn from_shifts(shifts: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let dim = shifts.first().map_or(0, Vec::len);
        for s in &shifts {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "shift",
                    expected: dim,
                    got: s.len(),
                });
            }
            if s.iter().any(|v| !(*v >= 0.0 && *v < 1.0)) {
                return Err(Error::invalid("shift component outside [0, 1)"));
            }
        }
        Ok(Self { seed, dim, shifts })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    pub fn get(&self, r: usize) -> &[f64] {
        &self.shifts[r]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.shifts.iter().map(Vec::as_slice)
    }

    /// Binary form: magic, version, `R`, `s`, seed, then `R·s` doubles.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.len() * self.dim);
        out.extend_from_slice(SHIFT_MAGIC);
        put_u32(&mut out, SHIFT_VERSION);
        put_u64(&mut out, self.len() as u64);
        put_u64(&mut out, self.dim as u64);
        put_u64(&mut out, self.seed);
        for v in self.shifts.iter().flatten() {
            put_f64(&mut out, *v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "shift file";
        let mut r = ByteReader::new(bytes, WHAT);
        r.magic(SHIFT_MAGIC)?;
        let version = r.u32()?;
        if version != SHIFT_VERSION {
            return Err(Error::format(WHAT, format!("unsupported version {version}")));
        }
        let count = usize::try_from(r.u64()?).map_err(|_| Error::format(WHAT, "count"))?;
        let dim = usize::try_from(r.u64()?).map_err(|_| Error::format(WHAT, "dimension"))?;
        let seed = r.u64()?;
        let total = count
            .checked_mul(dim)
            .ok_or_else(|| Error::format(WHAT, "length overflow"))?;
        let flat = r.f64_vec(total)?;
        r.finish()?;
        if dim == 0 && count > 0 {
            return Err(Error::format(WHAT, "zero-dimensional shifts"));
        }
        let shifts = if dim == 0 {
            Vec::new()
        } else {
            flat.chunks_exact(dim).map(<[f64]>::to_vec).collect()
        };
        let mut set = Self::from_shifts(shifts, seed).map_err(|e| Error::format(WHAT, e.to_string()))?;
        set.dim = dim;
        Ok(set)
    }
}

/// Quantities that can be averaged across shifts.
pub trait ShiftEstimate: Clone {
    fn add_scaled(&mut self, scale: f64, other: &Self);
    fn scale(&mut self, factor: f64);
}

impl ShiftEstimate for f64 {
    fn add_scaled(&mut self, scale: f64, other: &Self) {
        *self += scale * other;
    }

    fn scale(&mut self, factor: f64) {
        *self *= factor;
    }
}

impl ShiftEstimate for FieldTrajectory {
    fn add_scaled(&mut self, scale: f64, other: &Self) {
        self.axpy(scale, other);
    }

    fn scale(&mut self, factor: f64) {
        FieldTrajectory::scale(self, factor);
    }
}

/// Mean over shifts `Q̄` and the root-mean-square error estimate
/// `sqrt( Σ_r ‖Q̄ - Q^{(r)}‖² / (R(R-1)) )` under the caller's norm.
pub fn rms_over_shifts<T: ShiftEstimate>(
    results: &[T],
    norm: impl Fn(&T) -> Result<f64>,
) -> Result<(T, f64)> {
    let r = results.len();
    if r < 2 {
        return Err(Error::invalid(format!("need at least two shifts, got {r}")));
    }
    let mut mean = results[0].clone();
    for q in &results[1..] {
        mean.add_scaled(1.0, q);
    }
    mean.scale(1.0 / r as f64);
    let mut sum = 0.0;
    for q in results {
        let mut diff = mean.clone();
        diff.add_scaled(-1.0, q);
        sum += norm(&diff)?.powi(2);
    }
    Ok((mean, (sum / (r * (r - 1)) as f64).sqrt()))
}
