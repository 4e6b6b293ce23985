use std::sync::Arc;

use crate::error::{Error, Result};

/// Compressed-row sparsity structure with sorted column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Pattern {
    /// Builds a pattern from (row, col) pairs; duplicates are merged.
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); dim];
        for (r, c) in entries {
            rows[r].push(c);
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut cols in rows {
            cols.sort_unstable();
            cols.dedup();
            col_idx.extend(cols);
            row_ptr.push(col_idx.len());
        }
        Self {
            dim,
            row_ptr,
            col_idx,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, r: usize) -> (usize, &[usize]) {
        let start = self.row_ptr[r];
        (start, &self.col_idx[start..self.row_ptr[r + 1]])
    }

    /// Position of entry (r, c) in the value array.
    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let (start, cols) = self.row(r);
        cols.binary_search(&c).ok().map(|k| start + k)
    }

    pub fn bandwidth(&self) -> usize {
        (0..self.dim)
            .flat_map(|r| self.row(r).1.iter().map(move |&c| r.abs_diff(c)))
            .max()
            .unwrap_or(0)
    }
}

/// Symmetric sparse matrix stored in full CSR form.
///
/// Matrices assembled on the same mesh share one [`Pattern`], so affine
/// combinations are plain vector operations on the value arrays.
#[derive(Debug, Clone)]
pub struct SparseSpd {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl SparseSpd {
    pub fn new(pattern: Arc<Pattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::DimensionMismatch {
                what: "sparse values",
                expected: pattern.nnz(),
                got: values.len(),
            });
        }
        Ok(Self { pattern, values })
    }

    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pattern.slot(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        for (r, o) in out.iter_mut().enumerate() {
            let (start, cols) = self.pattern.row(r);
            let vals = &self.values[start..start + cols.len()];
            *o = cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out += scale * A x`
    pub fn matvec_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let (start, cols) = self.pattern.row(r);
            let vals = &self.values[start..start + cols.len()];
            let dot: f64 = cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum();
            *o += scale * dot;
        }
    }

    /// `xᵀ A x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.dim())
            .map(|r| {
                let (start, cols) = self.pattern.row(r);
                let vals = &self.values[start..start + cols.len()];
                let row: f64 = cols.iter().zip(vals).map(|(&c, v)| v * y[c]).sum();
                x[r] * row
            })
            .sum()
    }

    /// `self + scale * other`; both must share a pattern.
    pub fn add_scaled(&self, scale: f64, other: &SparseSpd) -> Result<SparseSpd> {
        if self.pattern != other.pattern {
            return Err(Error::invalid("sparse matrices have different patterns"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(SparseSpd {
            pattern: self.pattern.clone(),
            values,
        })
    }

    pub fn max_abs_diff(&self, other: &SparseSpd) -> f64 {
        assert_eq!(self.pattern, other.pattern);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim()).all(|r| {
            let (start, cols) = self.pattern.row(r);
            cols.iter()
                .enumerate()
                .all(|(k, &c)| (self.values[start + k] - self.get(c, r)).abs() <= tol)
        })
    }

    pub fn cholesky(&self) -> Result<BandedCholesky> {
        BandedCholesky::factor(self)
    }
}

/// Cholesky factor `A = L Lᵀ` of a banded SPD matrix.
///
/// P1 matrices on the structured mesh have half bandwidth `2^level`, so a
/// band factorization has no fill outside the envelope and costs
/// `O(n · bw²)`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    dim: usize,
    bw: usize,
    // row i holds L[i][i-bw ..= i], left-padded for the first rows
    band: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &SparseSpd) -> Result<Self> {
        let dim = a.dim();
        let bw = a.pattern().bandwidth();
        let width = bw + 1;
        let mut band = vec![0.0; dim * width];
        for r in 0..dim {
            let (start, cols) = a.pattern().row(r);
            for (k, &c) in cols.iter().enumerate() {
                if c <= r {
                    band[r * width + (c + bw - r)] = a.values()[start + k];
                }
            }
        }
        for i in 0..dim {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let jlo = j.saturating_sub(bw).max(lo);
                let mut sum = band[i * width + (j + bw - i)];
                for k in jlo..j {
                    sum -= band[i * width + (k + bw - i)] * band[j * width + (k + bw - j)];
                }
                if j == i {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(Error::NotPositiveDefinite {
                            pivot: i,
                            value: sum,
                        });
                    }
                    band[i * width + bw] = sum.sqrt();
                } else {
                    band[i * width + (j + bw - i)] = sum / band[j * width + bw];
                }
            }
        }
        Ok(Self { dim, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        let width = self.bw + 1;
        for i in 0..self.dim {
            let lo = i.saturating_sub(self.bw);
            let row = &self.band[i * width..(i + 1) * width];
            let mut sum = x[i];
            for k in lo..i {
                sum -= row[k + self.bw - i] * x[k];
            }
            x[i] = sum / row[self.bw];
        }
        for i in (0..self.dim).rev() {
            x[i] /= self.band[i * width + self.bw];
            let xi = x[i];
            let lo = i.saturating_sub(self.bw);
            let row = &self.band[i * width..(i + 1) * width];
            for k in lo..i {
                x[k] -= row[k + self.bw - i] * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, d: f64, o: f64) -> SparseSpd {
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i));
            if i > 0 {
                entries.push((i, i - 1));
                entries.push((i - 1, i));
            }
        }
        let p = Arc::new(Pattern::from_entries(n, entries));
        let mut m = SparseSpd::zeros(p.clone());
        for i in 0..n {
            let k = p.slot(i, i).unwrap();
            m.values_mut()[k] = d;
            if i > 0 {
                let k = p.slot(i, i - 1).unwrap();
                m.values_mut()[k] = o;
                let k = p.slot(i - 1, i).unwrap();
                m.values_mut()[k] = o;
            }
        }
        m
    }

    #[test]
    fn cholesky_solves_tridiagonal() {
        let a = tridiag(10, 2.0, -1.0);
        let x: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&x);
        let y = a.cholesky().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = tridiag(5, 1.0, -1.0);
        assert!(matches!(
            a.cholesky(),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
