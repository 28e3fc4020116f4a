//! Inequality-constraint residuals and Kreisselmeier–Steinhauser aggregation.
//!
//! A residual `g_i(x, u)` is feasible iff `g_i <= 0`. Several residuals are
//! folded into one smooth upper envelope of their maximum:
//!
//! ```text
//! KS(g) = g_max + (1/rho) * ln( sum_i exp(rho * (g_i - g_max)) )
//! ```
//!
//! which satisfies `max(g) <= KS(g) <= max(g) + ln(n)/rho`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Scalar residual evaluator `(state, action) -> g`.
pub type Residual = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Ordered list of residual evaluators plus the aggregation sharpness.
#[derive(Clone)]
pub struct ConstraintSet {
    residuals: Vec<Residual>,
    rho: f64,
}

impl fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintSet")
            .field("len", &self.residuals.len())
            .field("rho", &self.rho)
            .finish()
    }
}

impl ConstraintSet {
    pub fn new(residuals: Vec<Residual>, rho: f64) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::InvalidArgument(
                "constraint set needs at least one residual".into(),
            ));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
        }
        Ok(Self { residuals, rho })
    }

    /// Box bounds `lo_j <= state[j] <= hi_j`, decomposed into two residuals
    /// per coordinate: `lo_j - x_j` then `x_j - hi_j`.
    pub fn state_box(bounds: &[(f64, f64)], rho: f64) -> Result<Self> {
        let mut residuals: Vec<Residual> = Vec::with_capacity(2 * bounds.len());
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "bound {j}: lower {lo} exceeds upper {hi}"
                )));
            }
            residuals.push(Arc::new(move |x: &[f64], _: &[f64]| lo - x[j]));
            residuals.push(Arc::new(move |x: &[f64], _: &[f64]| x[j] - hi));
        }
        Self::new(residuals, rho)
    }

    /// The vehicle constraints: `-1 <= x1 <= 1`, `-0.25 <= x2 <= 1`.
    pub fn vehicle(rho: f64) -> Self {
        Self::state_box(&[(-1.0, 1.0), (-0.25, 1.0)], rho).expect("static bounds are valid")
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Evaluate every residual in list order.
    pub fn evaluate(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        if state.iter().chain(action).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("constraint input"));
        }
        Ok(self.residuals.iter().map(|g| g(state, action)).collect())
    }

    /// `ks_aggregate(evaluate(state, action), rho)`.
    pub fn aggregate(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        ks_aggregate(&self.evaluate(state, action)?, self.rho)
    }

    /// True when any residual is strictly positive.
    pub fn violated(&self, state: &[f64], action: &[f64]) -> Result<bool> {
        Ok(self.evaluate(state, action)?.iter().any(|&g| g > 0.0))
    }
}

/// KS aggregation of `residuals` with sharpness `rho`.
///
/// Exponents are shifted by the maximum so every argument is `<= 0`.
pub fn ks_aggregate(residuals: &[f64], rho: f64) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::InvalidArgument("empty residual vector".into()));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    if residuals.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("residual"));
    }
    let g_max = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = residuals.iter().map(|&g| (rho * (g - g_max)).exp()).sum();
    Ok(g_max + sum.ln() / rho)
}
