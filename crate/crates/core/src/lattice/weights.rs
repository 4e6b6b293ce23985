use std::f64::consts::{E, PI};

use crate::error::{Error, Result};
use crate::util::{ln_factorial, zeta};

/// Order shift `r₁` in the derivative bound `(|u| + r₁)! Π r₂ρ_j`.
pub const ORDER_SHIFT: usize = 2;
/// Product factor `r₂` of the derivative bound.
pub const PRODUCT_SCALE: f64 = E;
pub const DEFAULT_ORDER_CAP: usize = 40;

/// `λ` from the summability exponent `p` of the `b_j` sequence.
///
/// `1/(2 - 2δ)` when `p ≤ 2/3`, otherwise `p/(2 - p)`; always in `(1/2, 1]`.
pub fn choose_lambda(p: f64, delta: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("summability exponent p = {p} must lie in (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta = {delta} must lie in (0, 1)")));
    }
    Ok(if p <= 2.0 / 3.0 {
        1.0 / (2.0 - 2.0 * delta)
    } else {
        p / (2.0 - p)
    })
}

/// Product-and-order-dependent weights
/// `γ_u = ((|u| + r₁)! Π_{j∈u} r₂ρ_j / √c_λ)^{2/(1+λ)}`, `c_λ = 2ζ(2λ)/(2π²)^λ`,
/// kept as `Γ_ℓ` (log domain) and `β_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    lambda: f64,
    rho: Vec<f64>,
    zeta_factor: f64,
    ln_order: Vec<f64>,
    product: Vec<f64>,
    order_cap: usize,
}

impl WeightSpec {
    pub fn pod(rho: &[f64], lambda: f64, order_cap: usize) -> Result<Self> {
        if order_cap < 1 {
            return Err(Error::invalid("order cap must be at least 1"));
        }
        if !(lambda > 0.5 && lambda <= 1.0) {
            return Err(Error::invalid(format!("lambda = {lambda} must lie in (1/2, 1]")));
        }
        if rho.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::invalid("weight sequence must be positive"));
        }
        if rho.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("weight sequence must be nonincreasing"));
        }
        let exponent = 2.0 / (1.0 + lambda);
        let zeta_factor = 2.0 * zeta(2.0 * lambda) / (2.0 * PI * PI).powf(lambda);
        let ln_order = (0..=order_cap)
            .map(|l| exponent * ln_factorial(l + ORDER_SHIFT))
            .collect();
        let product = rho
            .iter()
            .map(|r| (PRODUCT_SCALE * r / zeta_factor.sqrt()).powf(exponent))
            .collect();
        Ok(Self {
            lambda,
            rho: rho.to_vec(),
            zeta_factor,
            ln_order,
            product,
            order_cap,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// `c_λ = 2ζ(2λ)/(2π²)^λ`
    pub fn zeta_factor(&self) -> f64 {
        self.zeta_factor
    }

    pub fn order_cap(&self) -> usize {
        self.order_cap
    }

    /// Number of coordinates the weights cover.
    pub fn dim(&self) -> usize {
        self.product.len()
    }

    /// `ln Γ_ℓ` for `ℓ ≤ L_max`.
    pub fn ln_order_factor(&self, order: usize) -> Option<f64> {
        self.ln_order.get(order).copied()
    }

    /// `β_j`, 1-based.
    pub fn product_factor(&self, j: usize) -> f64 {
        self.product[j - 1]
    }

    pub fn product_factors(&self) -> &[f64] {
        &self.product
    }

    /// `Γ_ℓ / Γ_{ℓ-1} = (ℓ + r₁)^{2/(1+λ)}`
    pub(crate) fn order_ratio(&self, order: usize) -> f64 {
        (self.ln_order[order] - self.ln_order[order - 1]).exp()
    }

    /// `ln γ_u` for a set of 1-based coordinates; `γ_∅ = 1`, and sets above
    /// the order cap have zero weight.
    pub fn ln_gamma(&self, u: &[usize]) -> f64 {
        if u.is_empty() {
            return 0.0;
        }
        match self.ln_order_factor(u.len()) {
            Some(lo) => lo + u.iter().map(|&j| self.product_factor(j).ln()).sum::<f64>(),
            None => f64::NEG_INFINITY,
        }
    }

    pub fn gamma(&self, u: &[usize]) -> f64 {
        self.ln_gamma(u).exp()
    }
}
