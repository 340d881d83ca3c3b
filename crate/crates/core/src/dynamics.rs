//! Pure kernels for the three core update laws: engagement, difficulty
//! adaptation and action reward.
//!
//! Engagement follows `dE/dt = alpha * R(t) - beta * D(t)`, integrated with a
//! forward Euler step of size `h` and saturated to `[0, 1]`. Difficulty
//! follows `T(t+1) = T(t) + gamma * (U(t) - S)` clamped to the configured
//! bounds, and an action's reward is `w1 * G(a) - w2 * C(a)`.

use serde::{Deserialize, Serialize};

use crate::error::{finite, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngagementParams {
    /// Reward coefficient.
    pub alpha: f64,
    /// Disengagement coefficient.
    pub beta: f64,
    /// Euler step `h`, in steps.
    pub step_size: f64,
}

impl Default for EngagementParams {
    fn default() -> Self {
        EngagementParams {
            alpha: 0.03,
            beta: 0.3,
            step_size: 1.0,
        }
    }
}

impl EngagementParams {
    pub fn check(&self) -> Result<(), ModelError> {
        finite("alpha", self.alpha)?;
        finite("beta", self.beta)?;
        finite("step_size", self.step_size)?;
        if self.alpha < 0.0 {
            return Err(ModelError::precondition("alpha must be >= 0"));
        }
        if self.beta < 0.0 {
            return Err(ModelError::precondition("beta must be >= 0"));
        }
        if self.step_size <= 0.0 {
            return Err(ModelError::precondition("step_size must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngagementState {
    pub e: f64,
    pub t: u64,
}

impl EngagementState {
    pub fn new(e: f64) -> Self {
        EngagementState { e, t: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationParams {
    /// Adaptation rate: difficulty units per unit of success-rate gap.
    pub gamma: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Desired success rate the adaptation steers toward.
    pub s_target: f64,
    /// Difficulty at step 0.
    pub initial_difficulty: f64,
}

impl Default for AdaptationParams {
    fn default() -> Self {
        AdaptationParams {
            gamma: 0.5,
            t_min: 0.0,
            t_max: 10.0,
            s_target: 0.7,
            initial_difficulty: 5.0,
        }
    }
}

impl AdaptationParams {
    pub fn check(&self) -> Result<(), ModelError> {
        finite("gamma", self.gamma)?;
        finite("t_min", self.t_min)?;
        finite("t_max", self.t_max)?;
        finite("s_target", self.s_target)?;
        if self.gamma < 0.0 {
            return Err(ModelError::precondition("gamma must be >= 0"));
        }
        if self.t_min >= self.t_max {
            return Err(ModelError::precondition("t_min must be < t_max"));
        }
        if !(self.s_target > 0.0 && self.s_target < 1.0) {
            return Err(ModelError::precondition("s_target must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.t_min, self.t_max)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    /// Weight on long-term gain.
    pub w1: f64,
    /// Weight on immediate cost.
    pub w2: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { w1: 1.0, w2: 1.0 }
    }
}

impl RewardWeights {
    pub fn check(&self) -> Result<(), ModelError> {
        finite("w1", self.w1)?;
        finite("w2", self.w2)?;
        if self.w1 <= 0.0 || self.w2 <= 0.0 {
            return Err(ModelError::precondition("reward weights must be > 0"));
        }
        Ok(())
    }
}

/// One forward Euler step of the engagement equation, saturated to `[0, 1]`.
pub fn engagement_step(
    state: EngagementState,
    r: f64,
    d: f64,
    params: &EngagementParams,
) -> Result<EngagementState, ModelError> {
    finite("e", state.e)?;
    finite("r", r)?;
    finite("d", d)?;
    params.check()?;
    if !(0.0..=1.0).contains(&state.e) {
        return Err(ModelError::precondition("engagement must lie in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(ModelError::precondition("reward signal must lie in [0, 1]"));
    }
    if d < 0.0 {
        return Err(ModelError::precondition("disengagement must be >= 0"));
    }
    let drive = params.alpha * r - params.beta * d;
    Ok(EngagementState {
        e: (state.e + params.step_size * drive).clamp(0.0, 1.0),
        t: state.t + 1,
    })
}

/// Engagement after `n` steps of constant input, evaluated directly from the
/// linear solution `e0 + n*h*(alpha*r - beta*d)` and then clamped.
pub fn closed_form_engagement(
    e0: f64,
    r: f64,
    d: f64,
    params: &EngagementParams,
    n: u64,
) -> Result<f64, ModelError> {
    finite("e0", e0)?;
    finite("r", r)?;
    finite("d", d)?;
    params.check()?;
    let drive = params.alpha * r - params.beta * d;
    Ok((e0 + n as f64 * params.step_size * drive).clamp(0.0, 1.0))
}

/// Moves difficulty toward the level where observed performance matches the
/// target success rate.
pub fn adapt_difficulty(t_cur: f64, u: f64, params: &AdaptationParams) -> Result<f64, ModelError> {
    finite("t_cur", t_cur)?;
    finite("u", u)?;
    params.check()?;
    if !params.contains(t_cur) {
        return Err(ModelError::precondition(format!(
            "difficulty {t_cur} outside [{}, {}]",
            params.t_min, params.t_max
        )));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(ModelError::precondition("performance must lie in [0, 1]"));
    }
    Ok(params.clamp(t_cur + params.gamma * (u - params.s_target)))
}

pub fn action_reward(g: f64, c: f64, w: &RewardWeights) -> Result<f64, ModelError> {
    finite("g", g)?;
    finite("c", c)?;
    w.check()?;
    Ok(w.w1 * g - w.w2 * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(alpha: f64, beta: f64, h: f64) -> EngagementParams {
        EngagementParams {
            alpha,
            beta,
            step_size: h,
        }
    }

    #[test]
    fn zero_drive_is_identity() {
        let s =
            engagement_step(EngagementState::new(0.5), 0.0, 0.0, &params(0.7, 0.3, 1.0)).unwrap();
        assert_eq!(s.e, 0.5);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn saturates_at_one() {
        let s =
            engagement_step(EngagementState::new(0.9), 1.0, 0.0, &params(1.0, 0.0, 1.0)).unwrap();
        assert_eq!(s.e, 1.0);
    }

    #[test]
    fn three_steps_match_linear_solution() {
        let p = params(0.2, 0.1, 1.0);
        let mut s = EngagementState::new(0.4);
        for _ in 0..3 {
            s = engagement_step(s, 0.5, 0.3, &p).unwrap();
        }
        // 0.4 + 3 * (0.2*0.5 - 0.1*0.3)
        assert!((s.e - 0.61).abs() < 1e-12);
        assert_eq!(s.t, 3);
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let p = EngagementParams::default();
        let s = EngagementState::new(0.5);
        assert!(matches!(
            engagement_step(s, f64::NAN, 0.0, &p),
            Err(ModelError::NonFinite { name: "r", .. })
        ));
        assert!(engagement_step(s, 0.0, f64::INFINITY, &p).is_err());
        assert!(engagement_step(s, 0.0, 0.0, &params(f64::NAN, 0.0, 1.0)).is_err());
        assert!(closed_form_engagement(f64::NAN, 0.0, 0.0, &p, 1).is_err());
        assert!(adapt_difficulty(f64::NAN, 0.5, &AdaptationParams::default()).is_err());
        assert!(action_reward(f64::INFINITY, 0.0, &RewardWeights::default()).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let p = params(0.2, 0.1, 1.0);
        let v = closed_form_engagement(0.4, 0.5, 0.3, &p, 3).unwrap();
        assert!((v - 0.61).abs() < 1e-12);
        assert_eq!(closed_form_engagement(0.37, 0.5, 0.3, &p, 0).unwrap(), 0.37);
        assert_eq!(closed_form_engagement(1.0, 1.0, 0.0, &p, 10).unwrap(), 1.0);
    }

    #[test]
    fn adapt_examples() {
        let p = AdaptationParams {
            gamma: 0.5,
            ..AdaptationParams::default()
        };
        assert_eq!(adapt_difficulty(3.3, 0.7, &p).unwrap(), 3.3);
        assert!((adapt_difficulty(5.0, 0.9, &p).unwrap() - 5.1).abs() < 1e-12);
        assert_eq!(adapt_difficulty(p.t_max, 1.0, &p).unwrap(), p.t_max);
        assert_eq!(adapt_difficulty(p.t_min, 0.0, &p).unwrap(), p.t_min);
    }

    #[test]
    fn adapt_rejects_out_of_bounds_difficulty() {
        let p = AdaptationParams::default();
        assert!(matches!(
            adapt_difficulty(11.0, 0.5, &p),
            Err(ModelError::Precondition(_))
        ));
    }

    #[test]
    fn reward_examples() {
        let w = RewardWeights { w1: 1.0, w2: 0.5 };
        assert_eq!(action_reward(0.0, 0.0, &w).unwrap(), 0.0);
        assert_eq!(action_reward(2.0, 1.0, &w).unwrap(), 1.5);
        let w = RewardWeights { w1: 1.0, w2: 1.0 };
        assert_eq!(action_reward(3.0, 3.0, &w).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn engagement_always_bounded(
            e in 0.0f64..=1.0, r in 0.0f64..=1.0, d in 0.0f64..5.0,
            alpha in 0.0f64..3.0, beta in 0.0f64..3.0, h in 0.01f64..4.0,
        ) {
            let s = engagement_step(EngagementState::new(e), r, d, &params(alpha, beta, h)).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.e));
        }

        #[test]
        fn alpha_and_beta_monotone(
            e in 0.0f64..=1.0, r in 0.0f64..=1.0, d in 0.0f64..2.0,
            a1 in 0.0f64..2.0, a2 in 0.0f64..2.0, beta in 0.0f64..2.0,
        ) {
            let (hi, lo) = if a1 >= a2 { (a1, a2) } else { (a2, a1) };
            let s = EngagementState::new(e);
            let e_hi = engagement_step(s, r, d, &params(hi, beta, 1.0)).unwrap().e;
            let e_lo = engagement_step(s, r, d, &params(lo, beta, 1.0)).unwrap().e;
            prop_assert!(e_hi >= e_lo);
            // reuse the pair as beta values
            let b_hi = engagement_step(s, r, d, &params(0.3, hi, 1.0)).unwrap().e;
            let b_lo = engagement_step(s, r, d, &params(0.3, lo, 1.0)).unwrap().e;
            prop_assert!(b_hi <= b_lo);
        }

        #[test]
        fn adapt_sign_and_gamma_monotone(
            t in 0.0f64..=10.0, u in 0.0f64..=1.0, s in 0.05f64..0.95,
            g1 in 0.0f64..3.0, g2 in 0.0f64..3.0,
        ) {
            let wide = |gamma| AdaptationParams {
                gamma, t_min: -100.0, t_max: 100.0, s_target: s, initial_difficulty: 0.0,
            };
            let t1 = adapt_difficulty(t, u, &wide(g1)).unwrap();
            let t2 = adapt_difficulty(t, u, &wide(g2)).unwrap();
            if g1 > 0.0 {
                prop_assert_eq!((t1 - t).partial_cmp(&0.0), (u - s).partial_cmp(&0.0));
            }
            prop_assert!((t1 - t).abs() <= g1 * s.max(1.0 - s) + 1e-12);
            if g1 >= g2 {
                prop_assert!((t1 - t).abs() >= (t2 - t).abs() - 1e-12);
            }
            let bounded = AdaptationParams { gamma: g1, s_target: s, ..AdaptationParams::default() };
            let tb = adapt_difficulty(t, u, &bounded).unwrap();
            prop_assert!(bounded.contains(tb));
        }

        #[test]
        fn euler_matches_closed_form(
            e0 in 0.3f64..0.7, r in 0.0f64..=1.0, d in 0.0f64..1.0, n in 0u64..100,
        ) {
            // small coefficients keep the path inside [0, 1] for 100 steps
            let p = params(0.002, 0.002, 1.0);
            let mut s = EngagementState::new(e0);
            for _ in 0..n {
                s = engagement_step(s, r, d, &p).unwrap();
            }
            let cf = closed_form_engagement(e0, r, d, &p, n).unwrap();
            prop_assert!((s.e - cf).abs() <= 1e-12);
        }

        #[test]
        fn reward_is_linear(
            g1 in -10.0f64..10.0, g2 in -10.0f64..10.0,
            c1 in -10.0f64..10.0, c2 in -10.0f64..10.0,
            w1 in 0.01f64..5.0, w2 in 0.01f64..5.0,
        ) {
            let w = RewardWeights { w1, w2 };
            let lhs = action_reward(g1 + g2, c1 + c2, &w).unwrap();
            let rhs = action_reward(g1, c1, &w).unwrap() + action_reward(g2, c2, &w).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9);
        }
    }
}
