//! Synthetic user: logistic performance, flow-channel disengagement and
//! skill growth.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::AdaptationParams;
use crate::error::{finite, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserProfile {
    /// Latent ability, in difficulty units.
    pub skill: f64,
    /// Logistic steepness of the performance curve.
    pub steepness_k: f64,
    /// Skill growth rate.
    pub learn_rate: f64,
    pub base_disengagement: f64,
    pub frustration_coeff: f64,
    pub boredom_coeff: f64,
    /// Width of the flow channel below `skill`.
    pub boredom_margin: f64,
    pub initial_engagement: f64,
    /// Draw success/failure from a Bernoulli trial instead of using the
    /// expected success probability.
    pub stochastic: bool,
}

impl Default for UserProfile {
    fn default() -> Self {
        UserProfile {
            skill: 5.0,
            steepness_k: 1.0,
            learn_rate: 0.05,
            base_disengagement: 0.05,
            frustration_coeff: 0.1,
            boredom_coeff: 0.05,
            boredom_margin: 1.0,
            initial_engagement: 0.4,
            stochastic: false,
        }
    }
}

impl UserProfile {
    pub fn check(&self) -> Result<(), ModelError> {
        finite("skill", self.skill)?;
        finite("steepness_k", self.steepness_k)?;
        finite("learn_rate", self.learn_rate)?;
        finite("base_disengagement", self.base_disengagement)?;
        finite("frustration_coeff", self.frustration_coeff)?;
        finite("boredom_coeff", self.boredom_coeff)?;
        finite("boredom_margin", self.boredom_margin)?;
        finite("initial_engagement", self.initial_engagement)?;
        if self.steepness_k <= 0.0 {
            return Err(ModelError::precondition("steepness_k must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.learn_rate) {
            return Err(ModelError::precondition("learn_rate must lie in [0, 1]"));
        }
        if self.base_disengagement < 0.0
            || self.frustration_coeff < 0.0
            || self.boredom_coeff < 0.0
            || self.boredom_margin < 0.0
        {
            return Err(ModelError::precondition(
                "disengagement coefficients must be >= 0",
            ));
        }
        if !(0.0..=1.0).contains(&self.initial_engagement) {
            return Err(ModelError::precondition(
                "initial_engagement must lie in [0, 1]",
            ));
        }
        Ok(())
    }

    /// Expected success probability `sigma(k * (skill - t_cur))`.
    pub fn success_probability(&self, t_cur: f64) -> Result<f64, ModelError> {
        finite("t_cur", t_cur)?;
        self.check()?;
        Ok(logistic(self.steepness_k * (self.skill - t_cur)))
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_in_bounds(t_cur: f64, bounds: &AdaptationParams) -> Result<(), ModelError> {
    finite("t_cur", t_cur)?;
    if bounds.contains(t_cur) {
        Ok(())
    } else {
        Err(ModelError::precondition(format!(
            "difficulty {t_cur} outside [{}, {}]",
            bounds.t_min, bounds.t_max
        )))
    }
}

/// Observed performance at difficulty `t_cur`. Deterministic profiles return
/// the success probability and never touch `rng`; stochastic profiles return
/// 0 or 1.
pub fn performance<R: Rng + ?Sized>(
    profile: &UserProfile,
    t_cur: f64,
    bounds: &AdaptationParams,
    rng: &mut R,
) -> Result<f64, ModelError> {
    check_in_bounds(t_cur, bounds)?;
    let p = profile.success_probability(t_cur)?;
    if profile.stochastic {
        Ok(if rng.gen::<f64>() < p { 1.0 } else { 0.0 })
    } else {
        Ok(p)
    }
}

/// Baseline decay plus frustration above `skill` and boredom more than
/// `boredom_margin` below it. Equals the baseline on `[skill - m, skill]`.
pub fn disengagement(
    profile: &UserProfile,
    t_cur: f64,
    bounds: &AdaptationParams,
) -> Result<f64, ModelError> {
    check_in_bounds(t_cur, bounds)?;
    profile.check()?;
    let too_hard = (t_cur - profile.skill).max(0.0);
    let too_easy = (profile.skill - t_cur - profile.boredom_margin).max(0.0);
    Ok(profile.base_disengagement
        + profile.frustration_coeff * too_hard
        + profile.boredom_coeff * too_easy)
}

/// Skill grows only from successful work on tasks harder than the current
/// skill level: `skill + learn_rate * u * max(0, t_cur - skill)`.
pub fn update_skill(
    profile: &UserProfile,
    u: f64,
    t_cur: f64,
    bounds: &AdaptationParams,
) -> Result<UserProfile, ModelError> {
    finite("u", u)?;
    check_in_bounds(t_cur, bounds)?;
    profile.check()?;
    if !(0.0..=1.0).contains(&u) {
        return Err(ModelError::precondition("performance must lie in [0, 1]"));
    }
    let gain = profile.learn_rate * u * (t_cur - profile.skill).max(0.0);
    Ok(UserProfile {
        skill: bounds.clamp(profile.skill + gain),
        ..profile.clone()
    })
}
