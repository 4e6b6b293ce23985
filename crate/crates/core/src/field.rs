//! Affine parametric diffusion coefficient
//! `a^y(x) = a₀ + Σ_j y_j ψ_j(x)` with `ψ_j(x) = A j^{-ϑ} sin(πjx₁) sin(πjx₂)`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{FemSpace, Mesh, Pattern, SparseSpd};
use crate::util::{put_f64, put_u32, put_u64, ByteReader};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSpec {
    /// Constant mean field `a₀`.
    pub mean: f64,
    /// Decay exponent `ϑ > 1`.
    pub decay: f64,
    pub amplitude: f64,
    /// Ellipticity-derived scaling of the `b_j` sequence.
    pub beta1: f64,
}

impl FieldSpec {
    pub fn new(decay: f64) -> Result<Self> {
        let spec = Self {
            mean: 1.0,
            decay,
            amplitude: 0.5,
            beta1: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 1.0) {
            return Err(Error::invalid(format!("decay exponent {} must exceed 1", self.decay)));
        }
        if !(self.amplitude >= 0.0) || !(self.beta1 > 0.0) || !self.mean.is_finite() {
            return Err(Error::invalid("amplitude must be nonnegative and beta1 positive"));
        }
        Ok(())
    }

    /// `sup_x |ψ_j(x)|`
    pub fn sup_norm(&self, j: usize) -> f64 {
        self.amplitude * (j as f64).powf(-self.decay)
    }

    /// `b_j = sup|ψ_j| / β₁`
    pub fn b(&self, j: usize) -> f64 {
        self.sup_norm(j) / self.beta1
    }

    pub fn b_sequence(&self, s: usize) -> Vec<f64> {
        (1..=s).map(|j| self.b(j)).collect()
    }

    /// Evaluates the `j`-th fluctuation (`j ≥ 1`).
    pub fn fluctuation(&self, j: usize, x: [f64; 2]) -> Result<f64> {
        if j == 0 {
            return Err(Error::invalid("fluctuations are indexed from 1"));
        }
        Ok(self.fluctuation_unchecked(j, x))
    }

    fn fluctuation_unchecked(&self, j: usize, x: [f64; 2]) -> f64 {
        let jf = j as f64;
        self.sup_norm(j) * (PI * jf * x[0]).sin() * (PI * jf * x[1]).sin()
    }

    /// Pointwise `a^y(x)`; `y` is truncated to its length.
    pub fn coefficient(&self, y: &[f64], x: [f64; 2]) -> f64 {
        self.mean
            + y.iter()
                .enumerate()
                .map(|(k, &yj)| if yj == 0.0 { 0.0 } else { yj * self.fluctuation_unchecked(k + 1, x) })
                .sum::<f64>()
    }
}

/// Parameter vector in `[-1/2, 1/2]^s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint(Vec<f64>);

impl ParamPoint {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if let Some((j, v)) = y.iter().enumerate().find(|(_, v)| !(v.abs() <= 0.5)) {
            return Err(Error::invalid(format!("parameter y[{j}] = {v} outside [-1/2, 1/2]")));
        }
        Ok(Self(y))
    }

    pub fn zeros(s: usize) -> Self {
        Self(vec![0.0; s])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// First `s` coordinates; the rest are implicitly zero.
    pub fn truncated(&self, s: usize) -> ParamPoint {
        ParamPoint(self.0[..s.min(self.0.len())].to_vec())
    }
}

/// Extremes of `a^y` over all quadrature points of the mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientRange {
    pub min: f64,
    pub max: f64,
    pub argmin: [f64; 2],
}

/// Scans `a^y` over every edge midpoint; fails if it is not positive.
pub fn coefficient_range(spec: &FieldSpec, y: &ParamPoint, mesh: &Mesh) -> Result<CoefficientRange> {
    let mut range = CoefficientRange {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        argmin: [0.0; 2],
    };
    for t in 0..mesh.triangles().len() {
        for q in mesh.edge_midpoints(t) {
            let a = spec.coefficient(y.as_slice(), q);
            if a < range.min {
                range.min = a;
                range.argmin = q;
            }
            range.max = range.max.max(a);
        }
    }
    if !(range.min > 0.0) {
        return Err(Error::Ellipticity {
            value: range.min,
            x: range.argmin[0],
            y: range.argmin[1],
        });
    }
    Ok(range)
}

/// Stiffness family `A₀, A₁, …, A_{s_max}` on a shared pattern, so that
/// `A(y) = A₀ + Σ y_j A_j` is one pass over the value arrays.
#[derive(Debug, Clone)]
pub struct AffineDiffusion {
    spec: FieldSpec,
    level: u32,
    pattern: Arc<Pattern>,
    mean: Vec<f64>,
    // s_max blocks of nnz values
    fluctuations: Vec<f64>,
    b: Vec<f64>,
    s_max: usize,
}

/// Largest fluctuation count accepted by [`AffineDiffusion::build`].
pub const MAX_FLUCTUATIONS: usize = 4096;

impl AffineDiffusion {
    pub fn build(space: &FemSpace, spec: FieldSpec, s_max: usize) -> Result<Self> {
        spec.validate()?;
        if s_max == 0 {
            return Err(Error::invalid("s_max must be at least 1"));
        }
        let mesh = space.mesh();
        let nnz = space.assembler().pattern().nnz();
        if s_max > MAX_FLUCTUATIONS || (s_max as u64) * (nnz as u64) > (1u64 << 28) {
            return Err(Error::invalid(format!(
                "{s_max} fluctuations at level {} exceed the matrix memory budget \
                 (at most {MAX_FLUCTUATIONS} terms at level 5 or coarser)",
                mesh.level()
            )));
        }
        let assembler = space.assembler();
        let mut mean = vec![0.0; nnz];
        assembler.stiffness_into(mesh, |_| spec.mean, &mut mean)?;
        let mut fluctuations = vec![0.0; s_max * nnz];
        for (j, block) in fluctuations.chunks_exact_mut(nnz).enumerate() {
            assembler.stiffness_into(mesh, |x| spec.fluctuation_unchecked(j + 1, x), block)?;
        }
        Ok(Self {
            spec,
            level: mesh.level(),
            pattern: assembler.pattern().clone(),
            mean,
            fluctuations,
            b: spec.b_sequence(s_max),
            s_max,
        })
    }

    /// Loads the family from `dir` when a matching cache file exists, else
    /// builds it and writes the cache.
    pub fn load_or_build(space: &FemSpace, spec: FieldSpec, s_max: usize, dir: &Path) -> Result<Self> {
        let path = Self::cache_path(dir, space.mesh().level(), &spec, s_max);
        if path.exists() {
            let bytes = std::fs::read(&path)?;
            return Self::from_cache_bytes(&bytes, space, spec, s_max);
        }
        let aff = Self::build(space, spec, s_max)?;
        std::fs::create_dir_all(dir)?;
        std::fs::write(&path, aff.to_cache_bytes())?;
        Ok(aff)
    }

    pub fn cache_path(dir: &Path, level: u32, spec: &FieldSpec, s_max: usize) -> PathBuf {
        dir.join(format!(
            "affine-l{level}-theta{}-s{s_max}-a{}.bin",
            spec.decay, spec.amplitude
        ))
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn s_max(&self) -> usize {
        self.s_max
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn mean_matrix(&self) -> SparseSpd {
        SparseSpd::new(self.pattern.clone(), self.mean.clone()).expect("pattern length")
    }

    pub fn fluctuation_matrix(&self, j: usize) -> Result<SparseSpd> {
        if j == 0 || j > self.s_max {
            return Err(Error::invalid(format!("fluctuation index {j} outside 1..={}", self.s_max)));
        }
        let nnz = self.pattern.nnz();
        SparseSpd::new(
            self.pattern.clone(),
            self.fluctuations[(j - 1) * nnz..j * nnz].to_vec(),
        )
    }

    /// Values of `scale·A(y)` added into `out`.
    pub fn add_combination(&self, y: &ParamPoint, scale: f64, out: &mut [f64]) -> Result<()> {
        if y.dim() > self.s_max {
            return Err(Error::DimensionMismatch {
                what: "parameter dimension",
                expected: self.s_max,
                got: y.dim(),
            });
        }
        let nnz = self.pattern.nnz();
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += scale * m;
        }
        for (j, &yj) in y.as_slice().iter().enumerate() {
            if yj == 0.0 {
                continue;
            }
            let block = &self.fluctuations[j * nnz..(j + 1) * nnz];
            let c = scale * yj;
            for (o, a) in out.iter_mut().zip(block) {
                *o += c * a;
            }
        }
        Ok(())
    }

    /// `A(y) = A₀ + Σ_{j ≤ dim y} y_j A_j`
    pub fn combine(&self, y: &ParamPoint) -> Result<SparseSpd> {
        let mut values = vec![0.0; self.pattern.nnz()];
        self.add_combination(y, 1.0, &mut values)?;
        SparseSpd::new(self.pattern.clone(), values)
    }

    /// Fast sufficient ellipticity check: `a₀ - Σ |y_j| sup|ψ_j| > 0`.
    pub fn certainly_elliptic(&self, y: &ParamPoint) -> bool {
        let worst: f64 = y
            .as_slice()
            .iter()
            .enumerate()
            .map(|(j, v)| v.abs() * self.spec.sup_norm(j + 1))
            .sum();
        self.spec.mean - worst > 0.0
    }
}

const CACHE_MAGIC: &[u8; 4] = b"HRAF";
const CACHE_VERSION: u32 = 1;

/// Header of a fluctuation-matrix cache file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheHeader {
    pub level: u32,
    pub decay: f64,
    pub s_max: usize,
    pub amplitude: f64,
    pub mean: f64,
    pub nnz: usize,
}

/// Decoded cache payload, not yet checked against a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheFile {
    pub header: CacheHeader,
    pub mean: Vec<f64>,
    pub fluctuations: Vec<f64>,
}

impl CacheFile {
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "affine cache";
        let mut r = ByteReader::new(bytes, WHAT);
        r.magic(CACHE_MAGIC)?;
        let version = r.u32()?;
        if version != CACHE_VERSION {
            return Err(Error::format(WHAT, format!("unsupported version {version}")));
        }
        let level = r.u32()?;
        let decay = r.f64()?;
        let s_max = r.u64()?;
        let amplitude = r.f64()?;
        let mean = r.f64()?;
        let nnz = r.u64()?;
        if s_max == 0 || s_max > MAX_FLUCTUATIONS as u64 {
            return Err(Error::format(WHAT, "s_max out of range"));
        }
        let nnz = usize::try_from(nnz).map_err(|_| Error::format(WHAT, "nnz"))?;
        let s_max = s_max as usize;
        let mean_vals = r.f64_vec(nnz)?;
        let count = nnz
            .checked_mul(s_max)
            .ok_or_else(|| Error::format(WHAT, "length overflow"))?;
        let fluctuations = r.f64_vec(count)?;
        r.finish()?;
        Ok(Self {
            header: CacheHeader {
                level,
                decay,
                s_max,
                amplitude,
                mean,
                nnz,
            },
            mean: mean_vals,
            fluctuations,
        })
    }
}

impl AffineDiffusion {
    pub fn to_cache_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * (self.mean.len() + self.fluctuations.len()));
        out.extend_from_slice(CACHE_MAGIC);
        put_u32(&mut out, CACHE_VERSION);
        put_u32(&mut out, self.level);
        put_f64(&mut out, self.spec.decay);
        put_u64(&mut out, self.s_max as u64);
        put_f64(&mut out, self.spec.amplitude);
        put_f64(&mut out, self.spec.mean);
        put_u64(&mut out, self.pattern.nnz() as u64);
        for v in self.mean.iter().chain(&self.fluctuations) {
            put_f64(&mut out, *v);
        }
        out
    }

    /// Restores a cached family, refusing any header that differs from the
    /// requested configuration.
    pub fn from_cache_bytes(bytes: &[u8], space: &FemSpace, spec: FieldSpec, s_max: usize) -> Result<Self> {
        let file = CacheFile::decode(bytes)?;
        let h = file.header;
        let pattern = space.assembler().pattern().clone();
        let mut mismatches = Vec::new();
        if h.level != space.mesh().level() {
            mismatches.push(format!("level {} != {}", h.level, space.mesh().level()));
        }
        if h.decay != spec.decay {
            mismatches.push(format!("decay {} != {}", h.decay, spec.decay));
        }
        if h.s_max != s_max {
            mismatches.push(format!("s_max {} != {s_max}", h.s_max));
        }
        if h.amplitude != spec.amplitude {
            mismatches.push(format!("amplitude {} != {}", h.amplitude, spec.amplitude));
        }
        if h.mean != spec.mean {
            mismatches.push(format!("mean {} != {}", h.mean, spec.mean));
        }
        if h.nnz != pattern.nnz() {
            mismatches.push(format!("nnz {} != {}", h.nnz, pattern.nnz()));
        }
        if !mismatches.is_empty() {
            return Err(Error::CacheMismatch(mismatches.join(", ")));
        }
        Ok(Self {
            spec,
            level: h.level,
            pattern,
            mean: file.mean,
            fluctuations: file.fluctuations,
            b: spec.b_sequence(s_max),
            s_max,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_stiffness, TimeGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space(level: u32) -> FemSpace {
        FemSpace::new(level, TimeGrid::new(1.0, 1).unwrap()).unwrap()
    }

    #[test]
    fn fluctuation_values() {
        let spec = FieldSpec::new(1.3).unwrap();
        assert!((spec.fluctuation(1, [0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(spec.fluctuation(3, [0.0, 0.3]).unwrap().abs() < 1e-15);
        assert!(spec.fluctuation(7, [0.4, 1.0]).unwrap().abs() < 1e-14);
        let spec = FieldSpec::new(2.6).unwrap();
        let v = spec.fluctuation(2, [0.25, 0.25]).unwrap();
        assert!((v - 2f64.powf(-3.6)).abs() < 1e-15);
        assert!(spec.fluctuation(0, [0.1, 0.1]).is_err());
    }

    #[test]
    fn b_sequence_decays() {
        let spec = FieldSpec::new(1.3).unwrap();
        assert_eq!(spec.b(1), 0.5);
        let b = spec.b_sequence(100);
        assert!(b.windows(2).all(|w| w[0] >= w[1]));
        assert!(FieldSpec::new(1.0).is_err());
    }

    #[test]
    fn partial_sums_bounded_by_zeta() {
        let spec = FieldSpec::new(1.3).unwrap();
        let p = 0.9;
        let bound = 0.5f64.powf(p) * crate::util::zeta(p * 1.3);
        let mut sum = 0.0;
        for j in 1..=5000 {
            let next = sum + spec.b(j).powf(p);
            assert!(next >= sum);
            sum = next;
        }
        assert!(sum <= bound);
    }

    #[test]
    fn affine_sum_matches_direct_assembly() {
        let s = space(2);
        let spec = FieldSpec::new(1.3).unwrap();
        let aff = AffineDiffusion::build(&s, spec, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let y = ParamPoint::new((0..3).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap();
            let direct = assemble_stiffness(s.mesh(), |x| spec.coefficient(y.as_slice(), x)).unwrap();
            assert!(aff.combine(&y).unwrap().max_abs_diff(&direct) <= 1e-12);
        }
    }

    #[test]
    fn single_term_combination() {
        let s = space(3);
        let aff = AffineDiffusion::build(&s, FieldSpec::new(1.3).unwrap(), 1).unwrap();
        let y = ParamPoint::new(vec![0.5]).unwrap();
        let expected = aff.mean_matrix().add_scaled(0.5, &aff.fluctuation_matrix(1).unwrap()).unwrap();
        assert!(aff.combine(&y).unwrap().max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn zero_padding_leaves_matrix_unchanged() {
        let s = space(3);
        let aff = AffineDiffusion::build(&s, FieldSpec::new(2.6).unwrap(), 6).unwrap();
        let short = ParamPoint::new(vec![0.3, -0.2, 0.1]).unwrap();
        let long = ParamPoint::new(vec![0.3, -0.2, 0.1, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(aff.combine(&short).unwrap().values(), aff.combine(&long).unwrap().values());
        assert!(aff.combine(&ParamPoint::zeros(7)).is_err());
    }

    #[test]
    fn range_of_mean_field() {
        let mesh = Mesh::new(3).unwrap();
        let spec = FieldSpec::new(1.3).unwrap();
        let r = coefficient_range(&spec, &ParamPoint::zeros(10), &mesh).unwrap();
        assert_eq!((r.min, r.max), (1.0, 1.0));
    }

    #[test]
    fn ellipticity_violation_reported() {
        let mesh = Mesh::new(3).unwrap();
        let spec = FieldSpec {
            mean: 0.1,
            ..FieldSpec::new(1.3).unwrap()
        };
        let y = ParamPoint::new(vec![-0.5]).unwrap();
        assert!(matches!(
            coefficient_range(&spec, &y, &mesh),
            Err(Error::Ellipticity { .. })
        ));
    }

    #[test]
    fn strong_decay_bounded_below() {
        let mesh = Mesh::new(3).unwrap();
        let spec = FieldSpec::new(2.6).unwrap();
        let bound = 1.0 - 0.25 * crate::util::zeta(2.6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let y = ParamPoint::new((0..64).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap();
            assert!(coefficient_range(&spec, &y, &mesh).unwrap().min >= bound);
        }
        assert!(bound > 0.67);
    }

    #[test]
    fn cache_round_trip_and_mismatch() {
        let s = space(2);
        let spec = FieldSpec::new(1.3).unwrap();
        let aff = AffineDiffusion::build(&s, spec, 4).unwrap();
        let bytes = aff.to_cache_bytes();
        let back = AffineDiffusion::from_cache_bytes(&bytes, &s, spec, 4).unwrap();
        let y = ParamPoint::new(vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        assert_eq!(back.combine(&y).unwrap().values(), aff.combine(&y).unwrap().values());
        let other = FieldSpec::new(2.6).unwrap();
        assert!(matches!(
            AffineDiffusion::from_cache_bytes(&bytes, &s, other, 4),
            Err(Error::CacheMismatch(_))
        ));
        assert!(AffineDiffusion::from_cache_bytes(&bytes, &s, spec, 5).is_err());
    }

    #[test]
    fn load_or_build_uses_cache() {
        let dir = tempfile::tempdir().unwrap();
        let s = space(2);
        let spec = FieldSpec::new(1.3).unwrap();
        let a = AffineDiffusion::load_or_build(&s, spec, 2, dir.path()).unwrap();
        assert!(AffineDiffusion::cache_path(dir.path(), 2, &spec, 2).exists());
        let b = AffineDiffusion::load_or_build(&s, spec, 2, dir.path()).unwrap();
        assert_eq!(a.to_cache_bytes(), b.to_cache_bytes());
    }
}
