//! Scenario configuration: JSON schema, validation, industry presets and the
//! sweep-axis mini-grammar.
//!
//! Every struct rejects unknown keys and fills omitted keys with the defaults
//! documented on its `Default` impl, so `{}` is a complete scenario.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dynamics::{AdaptationParams, EngagementParams, RewardWeights};
use crate::rl::RLConfig;
use crate::user_model::UserProfile;

/// What an action does to the system when applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ActionEffect {
    None,
    /// Shift difficulty by `delta` (clamped to the bounds) before the task.
    Difficulty {
        delta: f64,
    },
    /// Add `bonus` to the reward signal.
    RewardBonus {
        bonus: f64,
    },
    /// Request a feedback message and add `boost` to the reward signal.
    Encouragement {
        boost: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub name: String,
    /// Long-term gain.
    pub gain: f64,
    /// Immediate cost.
    pub cost: f64,
    pub effect: ActionEffect,
}

impl ActionSpec {
    fn new(name: &str, gain: f64, cost: f64, effect: ActionEffect) -> Self {
        ActionSpec {
            name: name.to_string(),
            gain,
            cost,
            effect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionCatalog(pub Vec<ActionSpec>);

impl Default for ActionCatalog {
    fn default() -> Self {
        ActionCatalog(vec![
            ActionSpec::new("NoOp", 0.0, 0.0, ActionEffect::None),
            ActionSpec::new(
                "EaseTask",
                0.2,
                0.1,
                ActionEffect::Difficulty { delta: -0.5 },
            ),
            ActionSpec::new(
                "HardenTask",
                0.6,
                0.4,
                ActionEffect::Difficulty { delta: 0.5 },
            ),
            ActionSpec::new(
                "GrantBonus",
                0.5,
                0.5,
                ActionEffect::RewardBonus { bonus: 0.3 },
            ),
            ActionSpec::new(
                "SendEncouragement",
                0.4,
                0.2,
                ActionEffect::Encouragement { boost: 0.15 },
            ),
        ])
    }
}

impl ActionCatalog {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&ActionSpec> {
        self.0.get(i)
    }

    /// Index of the first action with no effect.
    pub fn noop_index(&self) -> Option<usize> {
        self.0.iter().position(|a| a.effect == ActionEffect::None)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|a| a.name == name)
    }

    fn mut_effect(&mut self, name: &str) -> Option<&mut ActionEffect> {
        self.0
            .iter_mut()
            .find(|a| a.name == name)
            .map(|a| &mut a.effect)
    }

    fn mut_action(&mut self, name: &str) -> Option<&mut ActionSpec> {
        self.0.iter_mut().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyMode {
    #[default]
    EpsilonGreedy,
    Greedy,
    Noop,
    /// Fixed action indices, one per step.
    Scripted(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub horizon: u64,
    pub seed: u64,
    pub engagement: EngagementParams,
    pub adaptation: AdaptationParams,
    pub profile: UserProfile,
    pub reward_weights: RewardWeights,
    pub rl: RLConfig,
    pub actions: ActionCatalog,
    pub policy_mode: PolicyMode,
    /// Request feedback text from the remote chat-completion adapter.
    pub remote_llm: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "default".to_string(),
            horizon: 100,
            seed: 42,
            engagement: EngagementParams::default(),
            adaptation: AdaptationParams::default(),
            profile: UserProfile::default(),
            reward_weights: RewardWeights::default(),
            rl: RLConfig::default(),
            actions: ActionCatalog::default(),
            policy_mode: PolicyMode::default(),
            remote_llm: false,
        }
    }
}

/// One violated rule, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub rule: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn require(&mut self, ok: bool, path: impl Into<String>, rule: impl Into<String>) {
        if !ok {
            self.violations.push(Violation {
                path: path.into(),
                rule: rule.into(),
            });
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return writeln!(f, "ok");
        }
        writeln!(f, "{} violation(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {}: {}", v.path, v.rule)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario\n{0}")]
    Invalid(ValidationReport),
    #[error("unknown preset {name:?}; valid presets: {}", PRESET_NAMES.join(", "))]
    UnknownPreset { name: String },
    #[error("bad sweep axis {fragment:?}: {reason}")]
    Axis { fragment: String, reason: String },
}

impl From<serde_json::Error> for ScenarioError {
    fn from(e: serde_json::Error) -> Self {
        ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

impl ScenarioConfig {
    /// Checks every invariant and collects all violations rather than
    /// stopping at the first.
    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::default();
        let fin = |x: f64| x.is_finite();

        rep.require(
            !self.name.trim().is_empty(),
            "name",
            "name must be non-empty",
        );
        rep.require(self.horizon >= 1, "horizon", "horizon ≥ 1");

        let e = &self.engagement;
        rep.require(
            fin(e.alpha) && e.alpha >= 0.0,
            "engagement.alpha",
            "alpha ≥ 0",
        );
        rep.require(fin(e.beta) && e.beta >= 0.0, "engagement.beta", "beta ≥ 0");
        rep.require(
            fin(e.step_size) && e.step_size > 0.0,
            "engagement.step_size",
            "step_size > 0",
        );

        let a = &self.adaptation;
        rep.require(
            fin(a.gamma) && a.gamma >= 0.0,
            "adaptation.gamma",
            "gamma ≥ 0",
        );
        let bounds_ok = fin(a.t_min) && fin(a.t_max) && a.t_min < a.t_max;
        rep.require(bounds_ok, "adaptation.t_min", "t_min < t_max");
        rep.require(
            fin(a.s_target) && a.s_target > 0.0 && a.s_target < 1.0,
            "adaptation.s_target",
            "0 < s_target < 1",
        );
        rep.require(
            fin(a.initial_difficulty) && (!bounds_ok || a.contains(a.initial_difficulty)),
            "adaptation.initial_difficulty",
            "t_min ≤ initial_difficulty ≤ t_max",
        );

        let p = &self.profile;
        rep.require(
            fin(p.skill) && (!bounds_ok || a.contains(p.skill)),
            "profile.skill",
            "t_min ≤ skill ≤ t_max",
        );
        rep.require(
            fin(p.steepness_k) && p.steepness_k > 0.0,
            "profile.steepness_k",
            "steepness_k > 0",
        );
        rep.require(
            fin(p.learn_rate) && (0.0..=1.0).contains(&p.learn_rate),
            "profile.learn_rate",
            "0 ≤ learn_rate ≤ 1",
        );
        for (path, v) in [
            ("profile.base_disengagement", p.base_disengagement),
            ("profile.frustration_coeff", p.frustration_coeff),
            ("profile.boredom_coeff", p.boredom_coeff),
            ("profile.boredom_margin", p.boredom_margin),
        ] {
            rep.require(fin(v) && v >= 0.0, path, format!("{} ≥ 0", leaf(path)));
        }
        rep.require(
            fin(p.initial_engagement) && (0.0..=1.0).contains(&p.initial_engagement),
            "profile.initial_engagement",
            "0 ≤ initial_engagement ≤ 1",
        );

        let w = &self.reward_weights;
        rep.require(fin(w.w1) && w.w1 > 0.0, "reward_weights.w1", "w1 > 0");
        rep.require(fin(w.w2) && w.w2 > 0.0, "reward_weights.w2", "w2 > 0");

        let rl = &self.rl;
        rep.require(
            fin(rl.discount_delta) && (0.0..1.0).contains(&rl.discount_delta),
            "rl.discount_delta",
            "0 ≤ discount_delta < 1",
        );
        rep.require(
            fin(rl.learn_eta) && rl.learn_eta > 0.0 && rl.learn_eta <= 1.0,
            "rl.learn_eta",
            "0 < learn_eta ≤ 1",
        );
        rep.require(
            fin(rl.epsilon_start) && (0.0..=1.0).contains(&rl.epsilon_start),
            "rl.epsilon_start",
            "0 ≤ epsilon_start ≤ 1",
        );
        rep.require(
            fin(rl.epsilon_end)
                && rl.epsilon_end >= 0.0
                && (!fin(rl.epsilon_start) || rl.epsilon_end <= rl.epsilon_start),
            "rl.epsilon_end",
            "0 ≤ epsilon_end ≤ epsilon_start",
        );
        rep.require(
            rl.epsilon_decay_steps >= 1,
            "rl.epsilon_decay_steps",
            "epsilon_decay_steps ≥ 1",
        );
        rep.require(rl.e_bins >= 1, "rl.e_bins", "e_bins ≥ 1");
        rep.require(rl.t_bins >= 1, "rl.t_bins", "t_bins ≥ 1");
        rep.require(fin(rl.shaping_rho), "rl.shaping_rho", "shaping_rho finite");

        rep.require(!self.actions.is_empty(), "actions", "at least one action");
        for (i, act) in self.actions.0.iter().enumerate() {
            rep.require(
                !act.name.trim().is_empty(),
                format!("actions.{i}.name"),
                "name must be non-empty",
            );
            rep.require(
                self.actions.index_of(&act.name) == Some(i),
                format!("actions.{i}.name"),
                "action names must be unique",
            );
            rep.require(fin(act.gain), format!("actions.{i}.gain"), "gain finite");
            rep.require(fin(act.cost), format!("actions.{i}.cost"), "cost finite");
            match act.effect {
                ActionEffect::None => {}
                ActionEffect::Difficulty { delta } => rep.require(
                    fin(delta),
                    format!("actions.{i}.effect.delta"),
                    "delta finite",
                ),
                ActionEffect::RewardBonus { bonus } => rep.require(
                    fin(bonus),
                    format!("actions.{i}.effect.bonus"),
                    "bonus finite",
                ),
                ActionEffect::Encouragement { boost } => rep.require(
                    fin(boost),
                    format!("actions.{i}.effect.boost"),
                    "boost finite",
                ),
            }
        }

        match &self.policy_mode {
            PolicyMode::Noop => rep.require(
                self.actions.noop_index().is_some(),
                "policy_mode",
                "noop policy requires an action with effect kind \"none\"",
            ),
            PolicyMode::Scripted(list) => {
                rep.require(
                    list.len() as u64 >= self.horizon,
                    "policy_mode.scripted",
                    "scripted list length ≥ horizon",
                );
                for (i, &a) in list.iter().enumerate() {
                    rep.require(
                        a < self.actions.len(),
                        format!("policy_mode.scripted.{i}"),
                        "action index < number of actions",
                    );
                }
            }
            PolicyMode::EpsilonGreedy | PolicyMode::Greedy => {}
        }
        rep
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    /// Sets the numeric field at a dotted path, e.g. `engagement.alpha` or
    /// `actions.2.gain`. Integer fields accept only integral values.
    pub fn with_value(&self, path: &str, value: f64) -> Result<ScenarioConfig, ScenarioError> {
        let axis_err = |reason: &str| ScenarioError::Axis {
            fragment: path.to_string(),
            reason: reason.to_string(),
        };
        let mut doc = serde_json::to_value(self).expect("scenario serializes");
        let slot = lookup_mut(&mut doc, path).ok_or_else(|| axis_err("unknown path"))?;
        let Value::Number(n) = slot else {
            return Err(axis_err("path does not name a numeric field"));
        };
        let replacement = if n.is_f64() {
            serde_json::Number::from_f64(value).ok_or_else(|| axis_err("value not finite"))?
        } else {
            if value.fract() != 0.0 || value < 0.0 || value > u64::MAX as f64 {
                return Err(axis_err(
                    "integer field requires a non-negative integral value",
                ));
            }
            serde_json::Number::from(value as u64)
        };
        *slot = Value::Number(replacement);
        Ok(serde_json::from_value(doc)?)
    }
}

fn leaf(path: &str) -> &str {
    path.rsplit('.').next().unwrap_or(path)
}

fn lookup_mut<'a>(doc: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    path.split('.').try_fold(doc, |node, seg| match node {
        Value::Object(map) => map.get_mut(seg),
        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
        _ => None,
    })
}

/// Parses and validates a scenario document. Omitted keys take defaults.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let cfg: ScenarioConfig = serde_json::from_str(text)?;
    let report = cfg.validate();
    if report.is_ok() {
        Ok(cfg)
    } else {
        Err(ScenarioError::Invalid(report))
    }
}

pub const PRESET_NAMES: [&str; 5] = [
    "education",
    "healthcare",
    "retail",
    "corporate",
    "entertainment",
];

/// Industry presets. The numbers are engineering defaults that encode each
/// application's emphasis; they are not measured values.
pub fn preset(name: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = ScenarioConfig {
        name: name.to_string(),
        ..ScenarioConfig::default()
    };
    match name {
        // real-time feedback and personalization: fast adaptation, stronger encouragement
        "education" => {
            cfg.adaptation.gamma = 1.0;
            if let Some(ActionEffect::Encouragement { boost }) =
                cfg.actions.mut_effect("SendEncouragement")
            {
                *boost = 0.2;
            }
        }
        // compliance risk: faster disengagement, harsher reaction to overload
        "healthcare" => {
            cfg.engagement.beta = 0.5;
            cfg.profile.frustration_coeff = 0.2;
            cfg.profile.skill = 4.0;
            cfg.adaptation.initial_difficulty = 4.0;
        }
        // tailored rewards programs: long-term gain weighted up, larger bonus
        "retail" => {
            cfg.reward_weights.w1 = 2.0;
            if let Some(bonus) = cfg.actions.mut_action("GrantBonus") {
                bonus.gain = 0.7;
                bonus.effect = ActionEffect::RewardBonus { bonus: 0.4 };
            }
        }
        // skill acquisition under dynamic difficulty
        "corporate" => {
            cfg.profile.learn_rate = 0.15;
            cfg.profile.skill = 4.0;
            cfg.adaptation.gamma = 0.75;
            cfg.adaptation.initial_difficulty = 4.5;
        }
        // immersion: reward-driven engagement, quick boredom
        "entertainment" => {
            cfg.engagement.alpha = 0.05;
            cfg.profile.boredom_coeff = 0.1;
            cfg.profile.boredom_margin = 0.5;
        }
        _ => {
            return Err(ScenarioError::UnknownPreset {
                name: name.to_string(),
            })
        }
    }
    Ok(cfg)
}

/// A scenario grid: the Cartesian product of `axes`, each point run once
/// per replicate seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub axes: Vec<SweepAxis>,
    /// Seeds for the replicates. Empty means one replicate with the base seed.
    pub replicate_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn seeds(&self) -> Vec<u64> {
        if self.replicate_seeds.is_empty() {
            vec![self.base.seed]
        } else {
            self.replicate_seeds.clone()
        }
    }

    /// Checks axes are non-empty and resolve to numeric fields of `base`.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        for axis in &self.axes {
            let first = axis.values.first().ok_or_else(|| ScenarioError::Axis {
                fragment: axis.path.clone(),
                reason: "axis has no values".to_string(),
            })?;
            self.base.with_value(&axis.path, *first)?;
        }
        let report = self.base.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(report))
        }
    }
}

/// Parses `path=start:stop:step` (inclusive range) or `path=v1,v2,...`.
pub fn parse_sweep_axis(spec: &str) -> Result<SweepAxis, ScenarioError> {
    let err = |fragment: &str, reason: &str| ScenarioError::Axis {
        fragment: fragment.to_string(),
        reason: reason.to_string(),
    };
    let (path, rhs) = spec
        .split_once('=')
        .ok_or_else(|| err(spec, "expected path=values"))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(err(spec, "empty path"));
    }
    let probe = ScenarioConfig::default();
    let mut doc = serde_json::to_value(&probe).expect("scenario serializes");
    match lookup_mut(&mut doc, path) {
        Some(Value::Number(_)) => {}
        Some(_) => return Err(err(path, "path does not name a numeric field")),
        None => return Err(err(path, "unknown path")),
    }

    let number = |s: &str| -> Result<f64, ScenarioError> {
        let v: f64 = s.trim().parse().map_err(|_| err(s, "not a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(s, "value not finite"))
        }
    };

    let values = if rhs.contains(':') {
        let parts: Vec<&str> = rhs.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(err(rhs, "range must be start:stop:step"));
        };
        let (a, b, h) = (number(start)?, number(stop)?, number(step)?);
        if h == 0.0 {
            return Err(err(rhs, "zero step"));
        }
        if (b - a) * h < 0.0 {
            return Err(err(rhs, "step points away from stop"));
        }
        let count = ((b - a) / h + 1e-9).floor() as usize + 1;
        if count > 1_000_000 {
            return Err(err(rhs, "range too large"));
        }
        let places = [start, stop, step]
            .iter()
            .map(|s| decimal_places(s))
            .max()
            .unwrap_or(0);
        (0..count)
            .map(|i| round_to(a + i as f64 * h, places))
            .collect()
    } else {
        rhs.split(',').map(number).collect::<Result<Vec<_>, _>>()?
    };
    Ok(SweepAxis {
        path: path.to_string(),
        values,
    })
}

fn decimal_places(s: &str) -> usize {
    let s = s.trim();
    if s.contains(['e', 'E']) {
        return 15;
    }
    s.split_once('.').map_or(0, |(_, frac)| frac.len()).min(15)
}

/// Snaps accumulated float error back onto the decimal grid of the inputs.
fn round_to(v: f64, places: usize) -> f64 {
    format!("{v:.places$}").parse().unwrap_or(v)
}
