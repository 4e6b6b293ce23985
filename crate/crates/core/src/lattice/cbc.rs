use rayon::prelude::*;

use super::rule::GeneratingVector;
use super::weights::WeightSpec;
use crate::error::{Error, Result};
use crate::util::gcd;

/// Bernoulli polynomial `B₂(x) = x² - x + 1/6`.
pub fn bernoulli2(x: f64) -> f64 {
    x * x - x + 1.0 / 6.0
}

/// `B₂(k/n)` for `k = 0..n`, symmetric under `k ↦ n - k` bit for bit.
fn kernel_table(n: u64) -> Vec<f64> {
    (0..n)
        .map(|k| bernoulli2(k.min(n - k) as f64 / n as f64))
        .collect()
}

pub fn is_prime_power(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            let mut m = n;
            while m.is_multiple_of(p) {
                m /= p;
            }
            return m == 1;
        }
        p += 1;
    }
    true
}

/// Product-and-order state of the POD recursion: `P_ℓ(i) = Γ_ℓ e_ℓ(i)`,
/// where `e_ℓ(i)` is the `ℓ`-th elementary symmetric sum of
/// `β_j B₂({i g_j / n})` over the components fixed so far.
struct PodState<'w> {
    weights: &'w WeightSpec,
    n: usize,
    orders: usize,
    // row ℓ = 0..=orders, each of length n
    p: Vec<f64>,
}

impl<'w> PodState<'w> {
    fn new(weights: &'w WeightSpec, n: usize, dim: usize) -> Self {
        let orders = weights.order_cap().min(dim);
        let mut p = vec![0.0; (orders + 1) * n];
        let gamma0 = weights.ln_order_factor(0).unwrap().exp();
        p[..n].iter_mut().for_each(|v| *v = gamma0);
        Self {
            weights,
            n,
            orders,
            p,
        }
    }

    /// `V(i) = Σ_{ℓ≥1} (Γ_ℓ/Γ_{ℓ-1}) P_{ℓ-1}(i)`: the factor multiplying
    /// `β_d B₂` when component `d` is appended.
    fn extension_factor(&self) -> Vec<f64> {
        let n = self.n;
        let mut v = vec![0.0; n];
        for l in 1..=self.orders {
            let ratio = self.weights.order_ratio(l);
            let prev = &self.p[(l - 1) * n..l * n];
            v.iter_mut().zip(prev).for_each(|(a, b)| *a += ratio * b);
        }
        v
    }

    fn append(&mut self, beta: f64, omega: &[f64], g: u64) {
        let n = self.n;
        let gm = g as usize % n;
        let column: Vec<f64> = (0..n).map(|i| beta * omega[(i * gm) % n]).collect();
        for l in (1..=self.orders).rev() {
            let ratio = self.weights.order_ratio(l);
            let (lower, upper) = self.p.split_at_mut(l * n);
            let prev = &lower[(l - 1) * n..];
            let cur = &mut upper[..n];
            for i in 0..n {
                cur[i] += ratio * column[i] * prev[i];
            }
        }
    }

    /// `(1/n) Σ_i Σ_{ℓ≥1} P_ℓ(i)`
    fn error_sq(&self) -> f64 {
        self.p[self.n..].iter().sum::<f64>() / self.n as f64
    }
}

/// Shift-averaged squared worst-case error of a lattice rule in the
/// unanchored weighted Sobolev space with POD weights:
/// `Σ_{∅≠u, |u|≤L} γ_u (1/n) Σ_i Π_{j∈u} B₂({i g_j / n})`.
pub fn shift_avg_wce_sq(gv: &GeneratingVector, weights: &WeightSpec) -> Result<f64> {
    if gv.dim() > weights.dim() {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: gv.dim(),
            got: weights.dim(),
        });
    }
    let n = gv.n() as usize;
    let omega = kernel_table(gv.n());
    let mut state = PodState::new(weights, n, gv.dim());
    for (j, &g) in gv.components().iter().enumerate() {
        state.append(weights.product_factor(j + 1), &omega, g);
    }
    Ok(state.error_sq())
}

/// Output of [`cbc_construct`].
#[derive(Debug, Clone, PartialEq)]
pub struct CbcResult {
    pub gv: GeneratingVector,
    /// Squared worst-case error after fixing each component.
    pub errors: Vec<f64>,
}

// candidates within this relative distance of the minimum count as tied
const TIE_TOLERANCE: f64 = 1e-11;

/// Smallest-index candidate among the (near-)minimizers.
pub fn select_minimizer(errors: &[f64]) -> usize {
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = TIE_TOLERANCE * min.abs().max(f64::MIN_POSITIVE);
    errors.iter().position(|&e| e <= min + tol).expect("nonempty candidate set")
}

/// Units modulo `n` in increasing order (odd residues when `n = 2^m`).
pub fn candidates(n: u64) -> Vec<u64> {
    (1..n).filter(|&g| gcd(g, n) == 1).collect()
}

/// Component-by-component construction: each `g_d` minimizes the
/// shift-averaged worst-case error with `g_1..g_{d-1}` held fixed.
pub fn cbc_construct(n: u64, s: usize, weights: &WeightSpec) -> Result<CbcResult> {
    if !is_prime_power(n) {
        return Err(Error::invalid(format!("point count {n} is not a prime power")));
    }
    if n > 1 << 24 {
        return Err(Error::invalid(format!("point count {n} too large for plain CBC")));
    }
    if s == 0 || s > weights.dim() {
        return Err(Error::invalid(format!(
            "dimension {s} outside 1..={} covered by the weights",
            weights.dim()
        )));
    }
    let nu = n as usize;
    let omega = kernel_table(n);
    let cands = candidates(n);
    let mut state = PodState::new(weights, nu, s);
    let mut g = Vec::with_capacity(s);
    let mut errors = Vec::with_capacity(s);
    let mut current = 0.0;
    for d in 1..=s {
        let beta = weights.product_factor(d);
        let v = state.extension_factor();
        let scores: Vec<f64> = cands
            .par_iter()
            .map(|&c| {
                let c = c as usize;
                let mut idx = 0usize;
                let mut acc = 0.0;
                for vi in &v {
                    acc += omega[idx] * vi;
                    idx += c;
                    if idx >= nu {
                        idx -= nu;
                    }
                }
                current + beta * acc / nu as f64
            })
            .collect();
        let best = cands[select_minimizer(&scores)];
        state.append(beta, &omega, best);
        current = state.error_sq();
        g.push(best);
        errors.push(current);
    }
    Ok(CbcResult {
        gv: GeneratingVector::new(n, g)?,
        errors,
    })
}
