//! Penalty terms for constraint violation and the dynamic penalty-factor
//! schedule.
//!
//! The schedule starts at `mu_min`. Whenever a training loss falls strictly
//! below `(100 - alpha)%` of the largest loss seen since the last change, the
//! factor is multiplied by `c`. The first time it reaches `mu_max` it is
//! clamped there and never moves again.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleEvent {
    Unchanged,
    Updated,
    Saturated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub mu_min: f64,
    pub mu_max: f64,
    pub growth: f64,
    /// Trigger percentage in (0, 100).
    pub alpha: f64,
    /// Number of recent losses averaged before the trigger test.
    pub window: usize,
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu_min > 0.0
            && self.mu_min <= self.mu_max
            && self.mu_max.is_finite()
            && self.growth > 1.0
            && self.growth.is_finite()
            && self.alpha > 0.0
            && self.alpha < 100.0
            && self.window >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid schedule parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySchedule {
    params: ScheduleParams,
    mu: f64,
    max_loss_seen: f64,
    saturated: bool,
    recent: VecDeque<f64>,
}

impl PenaltySchedule {
    pub fn new(params: ScheduleParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            mu: params.mu_min,
            max_loss_seen: 0.0,
            saturated: params.mu_min >= params.mu_max,
            recent: VecDeque::with_capacity(params.window),
        })
    }

    /// Schedule resumed at an arbitrary point, e.g. for testing single steps.
    pub fn with_state(params: ScheduleParams, mu: f64, max_loss_seen: f64) -> Result<Self> {
        let mut s = Self::new(params)?;
        if !(params.mu_min..=params.mu_max).contains(&mu) {
            return Err(Error::InvalidArgument(format!("mu {mu} outside [mu_min, mu_max]")));
        }
        s.mu = mu;
        s.max_loss_seen = max_loss_seen;
        s.saturated = mu >= params.mu_max;
        Ok(s)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn max_loss_seen(&self) -> f64 {
        self.max_loss_seen
    }

    pub fn is_saturated(&self) -> bool {
        self.saturated
    }

    /// Feed the loss of one parameter update.
    pub fn observe(&mut self, loss: f64) -> ScheduleEvent {
        debug_assert!(loss.is_finite() && loss >= 0.0, "loss must be finite and non-negative");
        if self.recent.len() == self.params.window {
            self.recent.pop_front();
        }
        self.recent.push_back(loss);
        let loss = self.recent.iter().sum::<f64>() / self.recent.len() as f64;

        self.max_loss_seen = self.max_loss_seen.max(loss);
        if self.saturated {
            return ScheduleEvent::Unchanged;
        }
        let threshold = (100.0 - self.params.alpha) / 100.0 * self.max_loss_seen;
        if !(loss < threshold) {
            return ScheduleEvent::Unchanged;
        }
        self.max_loss_seen = loss;
        let next = self.params.growth * self.mu;
        if next >= self.params.mu_max {
            self.mu = self.params.mu_max;
            self.saturated = true;
            ScheduleEvent::Saturated
        } else {
            self.mu = next;
            ScheduleEvent::Updated
        }
    }
}

/// Penalty regime applied to the aggregated constraint value.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyKind {
    Uniform { level: f64 },
    Linear { factor: f64 },
    Dynamic(PenaltySchedule),
}

impl PenaltyKind {
    pub fn uniform(level: f64) -> Result<Self> {
        if !(level >= 0.0 && level.is_finite()) {
            return Err(Error::InvalidArgument(format!("uniform level must be >= 0, got {level}")));
        }
        Ok(Self::Uniform { level })
    }

    pub fn linear(factor: f64) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(Error::InvalidArgument(format!("linear factor must be >= 0, got {factor}")));
        }
        Ok(Self::Linear { factor })
    }

    pub fn dynamic(params: ScheduleParams) -> Result<Self> {
        Ok(Self::Dynamic(PenaltySchedule::new(params)?))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform { .. } => "uniform",
            Self::Linear { .. } => "linear",
            Self::Dynamic(_) => "dynamic",
        }
    }

    /// Current slope (linear/dynamic) or level (uniform).
    pub fn mu(&self) -> f64 {
        match self {
            Self::Uniform { level } => *level,
            Self::Linear { factor } => *factor,
            Self::Dynamic(s) => s.mu(),
        }
    }

    /// Penalty for an aggregated violation `ks`; zero whenever `ks <= 0`.
    pub fn value(&self, ks: f64) -> f64 {
        if !(ks > 0.0) {
            return 0.0;
        }
        match self {
            Self::Uniform { level } => *level,
            Self::Linear { factor } => factor * ks,
            Self::Dynamic(s) => s.mu() * ks,
        }
    }

    /// Forward a training loss to the schedule; no-op for static kinds.
    pub fn observe_loss(&mut self, loss: f64) -> ScheduleEvent {
        match self {
            Self::Dynamic(s) => s.observe(loss),
            _ => ScheduleEvent::Unchanged,
        }
    }
}

/// Checked form of [`PenaltyKind::value`].
pub fn penalty_value(kind: &PenaltyKind, ks: f64) -> Result<f64> {
    if !ks.is_finite() {
        return Err(Error::NonFinite("aggregated constraint value"));
    }
    Ok(kind.value(ks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vehicle_params() -> ScheduleParams {
        ScheduleParams { mu_min: 0.05, mu_max: 20.0, growth: 2.0, alpha: 60.0, window: 1 }
    }

    #[test]
    fn feasible_points_cost_nothing() {
        let kinds = [
            PenaltyKind::uniform(20.0).unwrap(),
            PenaltyKind::linear(20.0).unwrap(),
            PenaltyKind::dynamic(vehicle_params()).unwrap(),
        ];
        for k in &kinds {
            assert_eq!(penalty_value(k, -0.1).unwrap(), 0.0);
            assert_eq!(penalty_value(k, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn linear_and_uniform_values() {
        assert_eq!(penalty_value(&PenaltyKind::linear(20.0).unwrap(), 0.5).unwrap(), 10.0);
        assert_eq!(penalty_value(&PenaltyKind::uniform(20.0).unwrap(), 0.001).unwrap(), 20.0);
        assert!(penalty_value(&PenaltyKind::uniform(20.0).unwrap(), f64::NAN).is_err());
    }

    #[test]
    fn rejects_negative_levels() {
        assert!(PenaltyKind::uniform(-1.0).is_err());
        assert!(PenaltyKind::linear(-1.0).is_err());
        let mut p = vehicle_params();
        p.growth = 1.0;
        assert!(PenaltyKind::dynamic(p).is_err());
        p = vehicle_params();
        p.alpha = 100.0;
        assert!(PenaltyKind::dynamic(p).is_err());
    }

    #[test]
    fn trigger_fires_below_threshold() {
        let mut s = PenaltySchedule::with_state(vehicle_params(), 0.05, 10.0).unwrap();
        assert_eq!(s.observe(3.9), ScheduleEvent::Updated);
        assert_eq!(s.mu(), 0.1);
        assert_eq!(s.max_loss_seen(), 3.9);
    }

    #[test]
    fn trigger_is_strict() {
        let mut s = PenaltySchedule::with_state(vehicle_params(), 0.05, 10.0).unwrap();
        assert_eq!(s.observe(4.0), ScheduleEvent::Unchanged);
        assert_eq!(s.mu(), 0.05);
    }

    #[test]
    fn clamps_at_mu_max() {
        let mut s = PenaltySchedule::with_state(vehicle_params(), 12.8, 10.0).unwrap();
        assert_eq!(s.observe(1.0), ScheduleEvent::Saturated);
        assert_eq!(s.mu(), 20.0);
        assert!(s.is_saturated());
        for loss in [100.0, 0.0, 50.0, 0.0] {
            assert_eq!(s.observe(loss), ScheduleEvent::Unchanged);
            assert_eq!(s.mu(), 20.0);
        }
    }

    #[test]
    fn synthetic_stream_gives_geometric_trajectory() {
        let mut s = PenaltySchedule::new(vehicle_params()).unwrap();
        let mut mus = vec![s.mu()];
        for i in 0..40 {
            let loss = if i % 2 == 0 { 10.0 } else { 3.9 };
            if s.observe(loss) != ScheduleEvent::Unchanged {
                mus.push(s.mu());
            }
        }
        let expected: Vec<f64> = (0..9).map(|k| 0.05 * 2f64.powi(k)).chain([20.0]).collect();
        assert_eq!(mus, expected);
        assert_eq!(mus[8], 12.8);
    }

    #[test]
    fn smoothing_window_averages() {
        let mut p = vehicle_params();
        p.window = 2;
        let mut s = PenaltySchedule::new(p).unwrap();
        s.observe(10.0);
        // mean(10, 1) = 5.5 is not below 4.0
        assert_eq!(s.observe(1.0), ScheduleEvent::Unchanged);
        // mean(1, 1) = 1.0 is
        assert_eq!(s.observe(1.0), ScheduleEvent::Updated);
    }

    proptest! {
        #[test]
        fn mu_walks_clamped_geometric_prefix(losses in prop::collection::vec(0.0f64..100.0, 0..300)) {
            let p = vehicle_params();
            let mut s = PenaltySchedule::new(p).unwrap();
            let mut k = 0;
            let mut prev = s.mu();
            for l in losses {
                s.observe(l);
                let mu = s.mu();
                prop_assert!(mu >= prev);
                prop_assert!(mu >= p.mu_min && mu <= p.mu_max);
                if mu != prev {
                    k += 1;
                    let geometric = p.mu_min * p.growth.powi(k);
                    prop_assert!(mu == geometric.min(p.mu_max));
                }
                prev = mu;
            }
        }

        #[test]
        fn observe_is_deterministic(mu_exp in 0i32..8, max in 0.0f64..50.0, loss in 0.0f64..50.0) {
            let mu = 0.05 * 2f64.powi(mu_exp);
            let mut a = PenaltySchedule::with_state(vehicle_params(), mu, max).unwrap();
            let mut b = a.clone();
            prop_assert_eq!(a.observe(loss), b.observe(loss));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn penalty_monotone_in_ks(a in -2.0f64..2.0, b in -2.0f64..2.0, mu in 0.0f64..50.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for k in [
                PenaltyKind::uniform(mu).unwrap(),
                PenaltyKind::linear(mu).unwrap(),
                PenaltyKind::dynamic(vehicle_params()).unwrap(),
            ] {
                prop_assert!(k.value(lo) <= k.value(hi));
                prop_assert!(k.value(lo) >= 0.0);
            }
        }
    }

    #[test]
    fn slope_kinds_continuous_at_zero() {
        let eps = 1e-12;
        for k in [PenaltyKind::linear(50.0).unwrap(), PenaltyKind::dynamic(vehicle_params()).unwrap()] {
            assert!(k.value(eps) < 1e-9);
        }
        assert_eq!(PenaltyKind::uniform(50.0).unwrap().value(eps), 50.0);
    }
}
