//! Problem definitions: a penalized 1-D target function and a
//! double-integrator vehicle with a discrete acceleration grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::penalty::PenaltyKind;

/// Position and velocity. Never clamped; leaving the box is penalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x1: f64,
    pub x2: f64,
}

impl VehicleState {
    pub fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.x1, self.x2]
    }
}

/// Uniformly spaced accelerations in `[-0.25, 0.25]`, step `0.0125`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    values: Vec<f64>,
}

impl ActionGrid {
    pub const LEN: usize = 41;

    pub fn vehicle() -> Self {
        let values = (0..Self::LEN).map(|i| (i as f64 - 20.0) / 80.0).collect();
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the grid value nearest to `u`.
    pub fn nearest(&self, u: f64) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if (v - u).abs() < (self.values[best] - u).abs() {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// `x1' = x1 + x2*dt`, `x2' = x2 + u*dt`.
    #[default]
    Euler,
    /// Exact zero-order hold: `x1' = x1 + x2*dt + u*dt^2/2`.
    Zoh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: VehicleState,
    pub cost: f64,
    /// Aggregated constraint value at `next`.
    pub ks: f64,
}

#[derive(Debug, Clone)]
pub struct VehicleEnv {
    constraints: ConstraintSet,
    actions: ActionGrid,
    pub horizon: usize,
    pub dt: f64,
    pub integrator: Integrator,
}

impl VehicleEnv {
    pub const INITIAL_LOW: [f64; 2] = [-1.0, -0.25];
    pub const INITIAL_HIGH: [f64; 2] = [1.0, 1.0];

    pub fn new(rho: f64, horizon: usize, dt: f64, integrator: Integrator) -> Self {
        assert!(horizon >= 1, "horizon must be at least one step");
        Self {
            constraints: ConstraintSet::vehicle(rho),
            actions: ActionGrid::vehicle(),
            horizon,
            dt,
            integrator,
        }
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn actions(&self) -> &ActionGrid {
        &self.actions
    }

    pub fn dynamics(&self, s: VehicleState, u: f64) -> VehicleState {
        let dt = self.dt;
        let x1 = match self.integrator {
            Integrator::Euler => s.x1 + s.x2 * dt,
            Integrator::Zoh => s.x1 + s.x2 * dt + 0.5 * u * dt * dt,
        };
        VehicleState { x1, x2: s.x2 + u * dt }
    }

    /// Advance one control interval. Stage cost `x1^2 + u^2` uses the
    /// current state; the constraint value uses the state reached.
    pub fn step(&self, s: VehicleState, action: usize) -> StepOutcome {
        let u = self.actions.value(action);
        let next = self.dynamics(s, u);
        let cost = s.x1 * s.x1 + u * u;
        let ks = self
            .constraints
            .aggregate(&next.to_array(), &[u])
            .unwrap_or(f64::INFINITY);
        StepOutcome { next, cost, ks }
    }

    pub fn is_violated(&self, s: VehicleState) -> bool {
        // Non-finite states count as violations.
        self.constraints.violated(&s.to_array(), &[]).unwrap_or(true)
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> VehicleState {
        sample_initial(rng)
    }
}

impl Default for VehicleEnv {
    fn default() -> Self {
        Self::new(50.0, 20, 1.0, Integrator::Euler)
    }
}

/// `x1 ~ U(-1, 1)`, `x2 ~ U(-0.25, 1)`.
pub fn sample_initial<R: Rng + ?Sized>(rng: &mut R) -> VehicleState {
    let lo = VehicleEnv::INITIAL_LOW;
    let hi = VehicleEnv::INITIAL_HIGH;
    VehicleState { x1: rng.gen_range(lo[0]..hi[0]), x2: rng.gen_range(lo[1]..hi[1]) }
}

/// Reward to maximize: the negated penalized stage cost.
pub fn reward(cost: f64, ks: f64, kind: &PenaltyKind) -> f64 {
    -(cost + kind.value(ks))
}

/// Penalized 1-D function fitted in the regression study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionTarget {
    pub lower: f64,
    pub upper: f64,
    pub sample_low: f64,
    pub sample_high: f64,
    pub points_per_episode: usize,
}

impl Default for RegressionTarget {
    fn default() -> Self {
        Self { lower: -5.0, upper: 5.0, sample_low: -10.0, sample_high: 10.0, points_per_episode: 20 }
    }
}

impl RegressionTarget {
    /// Unpenalized part `1 + cos(x/2) + 0.05 (x - 1)(x + 2)`.
    pub fn objective(x: f64) -> f64 {
        1.0 + (0.5 * x).cos() + 0.05 * (x - 1.0) * (x + 2.0)
    }

    /// Signed distance outside `[lower, upper]`; positive only when violated.
    pub fn violation(&self, x: f64) -> f64 {
        (self.lower - x).max(x - self.upper)
    }

    pub fn value(&self, x: f64, kind: &PenaltyKind) -> f64 {
        Self::objective(x) + kind.value(self.violation(x))
    }

    pub fn sample_episode<R: Rng + ?Sized>(&self, kind: &PenaltyKind, rng: &mut R) -> Vec<(f64, f64)> {
        (0..self.points_per_episode)
            .map(|_| {
                let x = rng.gen_range(self.sample_low..=self.sample_high);
                (x, self.value(x, kind))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::ScheduleParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dynamic_at(mu: f64) -> PenaltyKind {
        let p = ScheduleParams { mu_min: 0.05, mu_max: 20.0, growth: 2.0, alpha: 60.0, window: 1 };
        PenaltyKind::Dynamic(crate::penalty::PenaltySchedule::with_state(p, mu, 0.0).unwrap())
    }

    #[test]
    fn action_grid_shape() {
        let g = ActionGrid::vehicle();
        assert_eq!(g.len(), 41);
        assert_eq!(g.value(0), -0.25);
        assert_eq!(g.value(1), -0.2375);
        assert_eq!(g.value(20), 0.0);
        assert_eq!(g.value(40), 0.25);
        for w in g.values().windows(2) {
            assert!((w[1] - w[0] - 0.0125).abs() < 1e-15);
        }
        assert_eq!(g.nearest(0.24), 39);
    }

    #[test]
    fn equilibrium_step() {
        let env = VehicleEnv::default();
        let out = env.step(VehicleState::new(0.0, 0.0), 20);
        assert_eq!(out.next, VehicleState::new(0.0, 0.0));
        assert_eq!(out.cost, 0.0);
        // -0.25 dominates; the other terms are e^{-37.5} smaller.
        assert!((out.ks + 0.25).abs() < 1e-12);
    }

    #[test]
    fn euler_step_arithmetic() {
        let env = VehicleEnv::default();
        let out = env.step(VehicleState::new(0.5, 0.2), 40);
        assert!((out.next.x1 - 0.7).abs() < 1e-15);
        assert!((out.next.x2 - 0.45).abs() < 1e-15);
        assert!((out.cost - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn crossing_upper_position_bound() {
        let env = VehicleEnv::default();
        let out = env.step(VehicleState::new(0.9, 0.2), 20);
        assert!((out.next.x1 - 1.1).abs() < 1e-15);
        assert!(out.ks >= 0.1 - 1e-12);
        assert!(out.ks <= 0.1 + 4f64.ln() / 50.0);
    }

    #[test]
    fn zoh_integrator() {
        let env = VehicleEnv::new(50.0, 20, 1.0, Integrator::Zoh);
        let out = env.step(VehicleState::new(0.0, 0.0), 40);
        assert_eq!(out.next, VehicleState::new(0.125, 0.25));
    }

    #[test]
    fn initial_states_in_rectangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut m1, mut m2) = (0.0, 0.0);
        let n = 100_000;
        for _ in 0..n {
            let s = sample_initial(&mut rng);
            assert!((-1.0..1.0).contains(&s.x1) && (-0.25..1.0).contains(&s.x2));
            m1 += s.x1;
            m2 += s.x2;
        }
        assert!((m1 / n as f64).abs() < 0.01);
        assert!((m2 / n as f64 - 0.375).abs() < 0.01);
        let a = sample_initial(&mut ChaCha8Rng::seed_from_u64(8));
        let b = sample_initial(&mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(a, b);
    }

    #[test]
    fn reward_composition() {
        assert_eq!(reward(0.0, -0.25, &PenaltyKind::uniform(20.0).unwrap()), 0.0);
        assert!((reward(0.3125, 0.1, &dynamic_at(20.0)) + 2.3125).abs() < 1e-15);
        assert_eq!(reward(1.0, 0.5, &PenaltyKind::uniform(20.0).unwrap()), -21.0);
    }

    #[test]
    fn regression_target_values() {
        let t = RegressionTarget::default();
        let lin = PenaltyKind::linear(50.0).unwrap();
        assert!((t.value(0.0, &lin) - 1.9).abs() < 1e-15);
        assert_eq!(t.value(5.0, &lin), RegressionTarget::objective(5.0));
        assert_eq!(t.value(-5.0, &dynamic_at(20.0)), RegressionTarget::objective(-5.0));
        let expected = 1.0 + 3f64.cos() + 2.0 + 50.0;
        assert!((t.value(6.0, &lin) - expected).abs() < 1e-12);
        assert!((t.value(6.0, &lin) - 52.0100).abs() < 1e-4);
    }

    #[test]
    fn uniform_target_jumps_at_bound() {
        let t = RegressionTarget::default();
        let uni = PenaltyKind::uniform(50.0).unwrap();
        let inside = t.value(5.0, &uni);
        let outside = t.value(5.0 + 1e-9, &uni);
        assert!((outside - inside - 50.0).abs() < 1e-6);
        let lin = PenaltyKind::linear(50.0).unwrap();
        assert!((t.value(5.0 + 1e-9, &lin) - t.value(5.0, &lin)).abs() < 1e-6);
    }

    #[test]
    fn regression_episode() {
        let t = RegressionTarget::default();
        let kind = PenaltyKind::linear(50.0).unwrap();
        let a = t.sample_episode(&kind, &mut ChaCha8Rng::seed_from_u64(3));
        let b = t.sample_episode(&kind, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a.len(), 20);
        assert_eq!(a, b);
        assert!(a.iter().all(|(x, r)| (-10.0..=10.0).contains(x) && *r == t.value(*x, &kind)));
    }
}
