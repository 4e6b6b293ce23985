//! Randomly shifted rank-1 lattice rules with component-by-component
//! construction under POD weights.

mod cbc;
mod rule;
mod shifts;
mod weights;

pub use cbc::{bernoulli2, candidates, cbc_construct, is_prime_power, select_minimizer, shift_avg_wce_sq, CbcResult};
pub use rule::{lattice_points, GeneratingVector, MAX_POINTS};
pub use shifts::{rms_over_shifts, ShiftEstimate, ShiftSet};
pub use weights::{choose_lambda, WeightSpec, DEFAULT_ORDER_CAP, ORDER_SHIFT, PRODUCT_SCALE};
