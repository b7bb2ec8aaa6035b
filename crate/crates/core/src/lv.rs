//! Lotka-Volterra predator-prey dynamics.
//!
//! Prey abundance `x`, predator abundance `y`:
//!
//! ```text
//! dx/dt = alpha*x - beta*x*y
//! dy/dt = delta*x*y - gamma*y
//! ```
//!
//! Trajectories come from classical fixed-step RK4. A state leaving the
//! positive quadrant is reported as an error, never clamped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LvParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LvParams {
    fn default() -> Self {
        Self {
            alpha: 1.1,
            beta: 0.4,
            gamma: 0.4,
            delta: 0.1,
        }
    }
}

impl LvParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let params = Self {
            alpha,
            beta,
            gamma,
            delta,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "LV parameter {name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// The coexistence equilibrium `(gamma/delta, alpha/beta)`.
    pub fn fixed_point(&self) -> LvState {
        LvState {
            x: self.gamma / self.delta,
            y: self.alpha / self.beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LvState {
    pub x: f64,
    pub y: f64,
}

impl LvState {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn is_positive(&self) -> bool {
        self.x > 0.0 && self.y > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<LvState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn xs(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.y).collect()
    }

    /// Keep every `stride`-th state, starting from the first.
    pub fn subsample(&self, stride: usize) -> Result<Trajectory> {
        if stride == 0 {
            return Err(Error::InvalidConfig("subsample stride must be >= 1".into()));
        }
        Ok(Trajectory {
            t0: self.t0,
            dt: self.dt * stride as f64,
            states: self.states.iter().step_by(stride).copied().collect(),
        })
    }
}

/// Right-hand side of the LV system at `state`.
pub fn lv_derivative(state: LvState, params: &LvParams) -> Result<(f64, f64)> {
    if !state.is_finite() {
        return Err(Error::InvalidInput(format!(
            "non-finite LV state ({}, {})",
            state.x, state.y
        )));
    }
    Ok(rhs(state, params))
}

#[inline]
fn rhs(s: LvState, p: &LvParams) -> (f64, f64) {
    (
        p.alpha * s.x - p.beta * s.x * s.y,
        p.delta * s.x * s.y - p.gamma * s.y,
    )
}

fn rk4_step(s: LvState, p: &LvParams, dt: f64) -> LvState {
    let half = 0.5 * dt;
    let (k1x, k1y) = rhs(s, p);
    let (k2x, k2y) = rhs(LvState::new(s.x + half * k1x, s.y + half * k1y), p);
    let (k3x, k3y) = rhs(LvState::new(s.x + half * k2x, s.y + half * k2y), p);
    let (k4x, k4y) = rhs(LvState::new(s.x + dt * k3x, s.y + dt * k3y), p);
    LvState::new(
        s.x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        s.y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
    )
}

/// Integrate `n_steps` RK4 steps of size `dt` from `initial`.
///
/// The trajectory holds `n_steps + 1` states, the first being `initial`.
pub fn integrate_rk4(
    params: &LvParams,
    initial: LvState,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    params.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be finite and > 0, got {dt}")));
    }
    if !(initial.is_finite() && initial.is_positive()) {
        return Err(Error::InvalidInput(format!(
            "initial state must be finite and positive, got ({}, {})",
            initial.x, initial.y
        )));
    }

    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(initial);
    let mut s = initial;
    for step in 1..=n_steps {
        s = rk4_step(s, params, dt);
        if !s.is_finite() {
            return Err(Error::IntegrationFailure {
                step,
                reason: format!("non-finite state ({}, {})", s.x, s.y),
            });
        }
        if !s.is_positive() {
            return Err(Error::IntegrationFailure {
                step,
                reason: format!("state left the positive quadrant ({}, {})", s.x, s.y),
            });
        }
        states.push(s);
    }
    Ok(Trajectory {
        t0: 0.0,
        dt,
        states,
    })
}

/// First integral `delta*x - gamma*ln(x) + beta*y - alpha*ln(y)`, constant on exact orbits.
pub fn conserved_quantity(state: LvState, params: &LvParams) -> Result<f64> {
    if !(state.x > 0.0 && state.y > 0.0) {
        return Err(Error::Domain(format!(
            "conserved quantity needs x > 0 and y > 0, got ({}, {})",
            state.x, state.y
        )));
    }
    Ok(params.delta * state.x - params.gamma * state.x.ln() + params.beta * state.y
        - params.alpha * state.y.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn canonical() -> LvParams {
        LvParams::default()
    }

    fn max_relative_drift(traj: &Trajectory, p: &LvParams) -> f64 {
        let h0 = conserved_quantity(traj.states[0], p).unwrap();
        traj.states
            .iter()
            .map(|s| ((conserved_quantity(*s, p).unwrap() - h0) / h0).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn derivative_vanishes_at_fixed_points() {
        let p = LvParams::new(0.7, 1.3, 2.1, 0.35).unwrap();
        let (dx, dy) = lv_derivative(p.fixed_point(), &p).unwrap();
        assert!(dx.abs() < 1e-15 && dy.abs() < 1e-15, "{dx} {dy}");
        assert_eq!(lv_derivative(LvState::new(0.0, 0.0), &p).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn derivative_hand_value() {
        let (dx, dy) = lv_derivative(LvState::new(10.0, 5.0), &canonical()).unwrap();
        assert!((dx + 9.0).abs() < 1e-12);
        assert!((dy - 3.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_rejects_non_finite() {
        let err = lv_derivative(LvState::new(f64::NAN, 1.0), &canonical()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn params_must_be_positive() {
        assert!(LvParams::new(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(LvParams::new(1.0, 1.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn zero_steps_returns_initial() {
        let init = LvState::new(10.0, 5.0);
        let traj = integrate_rk4(&canonical(), init, 0.01, 0).unwrap();
        assert_eq!(traj.states, vec![init]);
    }

    #[test]
    fn fixed_point_is_stationary() {
        let p = canonical();
        let fp = p.fixed_point();
        let traj = integrate_rk4(&p, fp, 0.01, 10_000).unwrap();
        for s in &traj.states {
            assert!((s.x - fp.x).abs() <= 1e-10);
            assert!((s.y - fp.y).abs() <= 1e-10);
        }
    }

    #[test]
    fn conserved_quantity_drift_is_tiny() {
        let p = canonical();
        let traj = integrate_rk4(&p, LvState::new(10.0, 5.0), 0.001, 100_000).unwrap();
        assert!(max_relative_drift(&traj, &p) <= 1e-6);
    }

    #[test]
    fn fine_reference_run_confirms_invariant_level() {
        // Reference at dt = 1e-5 over a shorter horizon.
        let p = canonical();
        let init = LvState::new(10.0, 5.0);
        let fine = integrate_rk4(&p, init, 1e-5, 200_000).unwrap();
        let coarse = integrate_rk4(&p, init, 1e-3, 2_000).unwrap();
        let end_fine = *fine.states.last().unwrap();
        let end_coarse = *coarse.states.last().unwrap();
        assert!((end_fine.x - end_coarse.x).abs() < 1e-8);
        assert!((end_fine.y - end_coarse.y).abs() < 1e-8);
        assert!(max_relative_drift(&fine, &p) < 1e-10);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = canonical();
        let init = LvState::new(10.0, 5.0);
        let horizon: f64 = 20.0;
        let drifts: Vec<f64> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&dt| {
                let n = (horizon / dt).round() as usize;
                let traj = integrate_rk4(&p, init, dt, n).unwrap();
                max_relative_drift(&traj, &p)
            })
            .collect();
        for w in drifts.windows(2) {
            let ratio = w[0] / w[1];
            assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}, drifts {drifts:?}");
        }
    }

    #[test]
    fn conserved_quantity_values() {
        let p = canonical();
        let h = conserved_quantity(LvState::new(4.0, 2.75), &p).unwrap();
        let hand = 0.4 - 0.4 * 4f64.ln() + 1.1 - 1.1 * 2.75f64.ln();
        assert!((h - hand).abs() < 1e-15);
        assert!((h + 0.1673).abs() < 1e-4);
        let h11 = conserved_quantity(LvState::new(1.0, 1.0), &p).unwrap();
        assert_eq!(h11, p.delta + p.beta);
        assert!(matches!(
            conserved_quantity(LvState::new(0.0, 1.0), &p),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn positivity_failure_names_step() {
        // A huge step overshoots prey below zero on the first step.
        let err = integrate_rk4(&canonical(), LvState::new(10.0, 5.0), 5.0, 10).unwrap_err();
        match err {
            Error::IntegrationFailure { step, .. } => assert_eq!(step, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn subsample_keeps_every_stride() {
        let traj = integrate_rk4(&canonical(), LvState::new(10.0, 5.0), 0.01, 300).unwrap();
        let sub = traj.subsample(100).unwrap();
        assert_eq!(sub.len(), 4);
        assert_eq!(sub.states[3], traj.states[300]);
        assert!((sub.dt - 1.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn derivative_sum_identity(
            x in -50.0f64..50.0, y in -50.0f64..50.0,
            a in 0.01f64..5.0, b in 0.01f64..5.0, g in 0.01f64..5.0, d in 0.01f64..5.0,
        ) {
            let p = LvParams::new(a, b, g, d).unwrap();
            let (dx, dy) = lv_derivative(LvState::new(x, y), &p).unwrap();
            let expected = a * x - g * y + x * y * (d - b);
            let scale = 1.0f64.max(expected.abs()).max((a * x).abs()).max((x * y * b).abs());
            prop_assert!((dx + dy - expected).abs() <= 1e-12 * scale);
        }
    }
}
