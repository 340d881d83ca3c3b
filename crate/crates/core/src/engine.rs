//! The per-step simulation loop, traces, summaries and sweeps.
//!
//! Each step runs, in order: discretize state, choose an action, apply its
//! effect, observe performance, adapt difficulty, form the reward and
//! disengagement signals, integrate engagement, grow skill, score the action
//! and back up the Q-table.
//!
//! Randomness comes from a single ChaCha8 stream per run, seeded from the
//! scenario seed only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::content::{ContentProvider, FeedbackContext, Trend};
use crate::dynamics::{
    action_reward, adapt_difficulty, engagement_step, AdaptationParams, EngagementState,
};
use crate::error::ModelError;
use crate::rl::{discretize_state, epsilon_at, q_update, select_action, QTable};
use crate::scenario::{ActionEffect, PolicyMode, ScenarioConfig, ScenarioError, SweepSpec};
use crate::user_model::{disengagement, performance, update_skill, UserProfile};

/// Consecutive difficulty changes below this count as stable.
pub const STABILITY_THRESHOLD: f64 = 1e-3;

/// Steps of engagement history used for the feedback trend.
const TREND_WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub e: f64,
    pub t_difficulty: f64,
    pub u: f64,
    pub r_signal: f64,
    pub d_signal: f64,
    /// `None` on the initial row.
    pub action: Option<usize>,
    pub action_reward: f64,
    pub skill: f64,
    pub epsilon: f64,
    pub feedback_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub name: String,
    pub seed: u64,
    /// Difficulty bounds the trace was produced under, for charting.
    pub t_bounds: (f64, f64),
    pub rows: Vec<TraceRow>,
    /// Degradations that did not stop the run, e.g. provider failures.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_e: f64,
    pub mean_e: f64,
    pub min_e: f64,
    pub max_e: f64,
    pub steps_to_difficulty_stable: Option<u64>,
    pub mean_t_difficulty: f64,
    pub total_agent_reward: f64,
}

/// Mutable state of one run. Owns the RNG and Q-table.
pub struct Simulation<'a> {
    scenario: &'a ScenarioConfig,
    provider: &'a dyn ContentProvider,
    rng: ChaCha8Rng,
    q: QTable,
    profile: UserProfile,
    e: EngagementState,
    difficulty: f64,
    history: Vec<f64>,
    warnings: Vec<String>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        scenario: &'a ScenarioConfig,
        provider: &'a dyn ContentProvider,
    ) -> Result<Self, SimError> {
        let report = scenario.validate();
        if !report.is_ok() {
            return Err(ScenarioError::Invalid(report).into());
        }
        let profile = scenario.profile.clone();
        let e0 = profile.initial_engagement;
        Ok(Simulation {
            scenario,
            provider,
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            q: QTable::zeros(scenario.rl.n_states(), scenario.actions.len()),
            profile,
            e: EngagementState::new(e0),
            difficulty: scenario.adaptation.initial_difficulty,
            history: vec![e0],
            warnings: Vec::new(),
        })
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn bounds(&self) -> &AdaptationParams {
        &self.scenario.adaptation
    }

    /// Row 0: the state before any action. Performance is the expected
    /// success probability; no randomness is consumed.
    pub fn initial_row(&self) -> Result<TraceRow, SimError> {
        Ok(TraceRow {
            t: 0,
            e: self.e.e,
            t_difficulty: self.difficulty,
            u: self.profile.success_probability(self.difficulty)?,
            r_signal: 0.0,
            d_signal: disengagement(&self.profile, self.difficulty, self.bounds())?,
            action: None,
            action_reward: 0.0,
            skill: self.profile.skill,
            epsilon: 0.0,
            feedback_id: None,
        })
    }

    fn choose(&mut self, step: u64, s: usize) -> Result<(usize, f64), SimError> {
        let sc = self.scenario;
        match &sc.policy_mode {
            PolicyMode::EpsilonGreedy => {
                let eps = epsilon_at(&sc.rl, step);
                Ok((select_action(&self.q, s, eps, &mut self.rng)?, eps))
            }
            PolicyMode::Greedy => Ok((select_action(&self.q, s, 0.0, &mut self.rng)?, 0.0)),
            PolicyMode::Noop => {
                let a = sc.actions.noop_index().ok_or_else(|| {
                    SimError::Precondition("noop policy needs a no-effect action".into())
                })?;
                Ok((a, 0.0))
            }
            PolicyMode::Scripted(list) => {
                let a = *list.get(step as usize).ok_or_else(|| {
                    SimError::Precondition(format!("scripted policy has no action for step {step}"))
                })?;
                Ok((a, 0.0))
            }
        }
    }

    /// Advances one step and returns the emitted row.
    pub fn step(&mut self) -> Result<TraceRow, SimError> {
        let sc = self.scenario;
        let bounds = *self.bounds();
        let step = self.e.t;

        let s = discretize_state(
            self.e.e,
            self.difficulty,
            &bounds,
            sc.rl.e_bins,
            sc.rl.t_bins,
        )?;
        let (a, epsilon) = self.choose(step, s)?;
        let action = sc
            .actions
            .get(a)
            .ok_or_else(|| SimError::Precondition(format!("action {a} not in catalog")))?;

        let mut task_difficulty = self.difficulty;
        let mut extra_reward = 0.0;
        let mut wants_feedback = false;
        match action.effect {
            ActionEffect::None => {}
            ActionEffect::Difficulty { delta } => {
                task_difficulty = bounds.clamp(task_difficulty + delta)
            }
            ActionEffect::RewardBonus { bonus } => extra_reward += bonus,
            ActionEffect::Encouragement { boost } => {
                extra_reward += boost;
                wants_feedback = true;
            }
        }

        let u = performance(&self.profile, task_difficulty, &bounds, &mut self.rng)?;
        let next_difficulty = adapt_difficulty(task_difficulty, u, &bounds)?;
        let r_signal = (u + extra_reward).clamp(0.0, 1.0);
        let d_signal = disengagement(&self.profile, task_difficulty, &bounds)?;
        let prev_e = self.e.e;
        let next_e = engagement_step(self.e, r_signal, d_signal, &sc.engagement)?;
        let next_profile = update_skill(&self.profile, u, task_difficulty, &bounds)?;
        let r_t = action_reward(action.gain, action.cost, &sc.reward_weights)?
            + sc.rl.shaping_rho * (next_e.e - prev_e);
        let s_next = discretize_state(
            next_e.e,
            next_difficulty,
            &bounds,
            sc.rl.e_bins,
            sc.rl.t_bins,
        )?;
        q_update(&mut self.q, s, a, r_t, s_next, &sc.rl)?;

        self.e = next_e;
        self.difficulty = next_difficulty;
        self.profile = next_profile;
        self.history.push(next_e.e);

        let feedback_id = if wants_feedback {
            self.feedback(next_e.t, next_e.e, next_difficulty, u)
        } else {
            None
        };

        Ok(TraceRow {
            t: next_e.t,
            e: next_e.e,
            t_difficulty: next_difficulty,
            u,
            r_signal,
            d_signal,
            action: Some(a),
            action_reward: r_t,
            skill: self.profile.skill,
            epsilon,
            feedback_id,
        })
    }

    fn feedback(&mut self, step: u64, e: f64, difficulty: f64, u: f64) -> Option<String> {
        let from = self.history.len().saturating_sub(TREND_WINDOW + 1);
        let ctx = FeedbackContext {
            step,
            engagement: e,
            difficulty,
            performance: u,
            trend: Trend::of(&self.history[from..]),
            preset_name: self.scenario.name.clone(),
        };
        match self.provider.generate(&ctx) {
            Ok(fb) => {
                self.warnings.extend(fb.warning);
                Some(fb.message.id)
            }
            Err(e) => {
                self.warnings
                    .push(format!("step {step}: feedback unavailable: {e}"));
                None
            }
        }
    }
}

/// Runs `scenario.horizon` steps and returns `horizon + 1` rows.
pub fn run_simulation(
    scenario: &ScenarioConfig,
    provider: &dyn ContentProvider,
) -> Result<SimulationTrace, SimError> {
    let mut sim = Simulation::new(scenario, provider)?;
    let mut rows = Vec::with_capacity(scenario.horizon as usize + 1);
    rows.push(sim.initial_row()?);
    for _ in 0..scenario.horizon {
        rows.push(sim.step()?);
    }
    Ok(SimulationTrace {
        name: scenario.name.clone(),
        seed: scenario.seed,
        t_bounds: (scenario.adaptation.t_min, scenario.adaptation.t_max),
        rows,
        warnings: sim.warnings,
    })
}

pub fn summarize(trace: &SimulationTrace) -> Result<RunSummary, SimError> {
    let rows = &trace.rows;
    let last = rows
        .last()
        .ok_or_else(|| SimError::Precondition("cannot summarize an empty trace".into()))?;
    let n = rows.len() as f64;
    let es = rows.iter().map(|r| r.e);

    // first index k such that every later consecutive change is below threshold
    let mut stable_from = Some(rows.len() as u64 - 1);
    for k in (1..rows.len()).rev() {
        if (rows[k].t_difficulty - rows[k - 1].t_difficulty).abs() < STABILITY_THRESHOLD {
            stable_from = Some(rows[k - 1].t);
        } else {
            if k == rows.len() - 1 {
                stable_from = None;
            }
            break;
        }
    }

    Ok(RunSummary {
        final_e: last.e,
        mean_e: es.clone().sum::<f64>() / n,
        min_e: es.clone().fold(f64::INFINITY, f64::min),
        max_e: es.fold(f64::NEG_INFINITY, f64::max),
        steps_to_difficulty_stable: stable_from,
        mean_t_difficulty: rows.iter().map(|r| r.t_difficulty).sum::<f64>() / n,
        total_agent_reward: rows.iter().map(|r| r.action_reward).sum(),
    })
}

#[derive(Debug)]
pub struct SweepResult {
    /// One value per axis, in axis-declaration order.
    pub axis_values: Vec<f64>,
    pub seed: u64,
    pub summary: Result<RunSummary, SimError>,
    pub warnings: Vec<String>,
}

/// Runs every grid point for every replicate seed, on up to `jobs` threads.
/// Results are ordered by (axis indices, replicate index) regardless of
/// scheduling. Each run uses its replicate seed unchanged.
pub fn run_sweep(
    spec: &SweepSpec,
    provider: &dyn ContentProvider,
    jobs: usize,
) -> Result<Vec<SweepResult>, SimError> {
    spec.validate()?;
    let seeds = spec.seeds();

    let mut cells: Vec<Vec<usize>> = vec![Vec::new()];
    for axis in &spec.axes {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                (0..axis.values.len()).map(move |i| {
                    let mut idx = prefix.clone();
                    idx.push(i);
                    idx
                })
            })
            .collect();
    }
    let jobs_list: Vec<(Vec<f64>, u64)> = cells
        .iter()
        .flat_map(|idx| {
            let values: Vec<f64> = idx
                .iter()
                .zip(&spec.axes)
                .map(|(&i, axis)| axis.values[i])
                .collect();
            seeds.iter().map(move |&seed| (values.clone(), seed))
        })
        .collect();

    let run_one = |(values, seed): &(Vec<f64>, u64)| -> SweepResult {
        let outcome = (|| {
            let mut cfg = spec.base.clone();
            for (axis, v) in spec.axes.iter().zip(values) {
                cfg = cfg.with_value(&axis.path, *v)?;
            }
            cfg.seed = *seed;
            let trace = run_simulation(&cfg, provider)?;
            Ok::<_, SimError>((summarize(&trace)?, trace.warnings))
        })();
        let (summary, warnings) = match outcome {
            Ok((s, w)) => (Ok(s), w),
            Err(e) => (Err(e), Vec::new()),
        };
        SweepResult {
            axis_values: values.clone(),
            seed: *seed,
            summary,
            warnings,
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SimError::Precondition(format!("thread pool: {e}")))?;
    // par_iter().map().collect() preserves input order
    Ok(pool.install(|| jobs_list.par_iter().map(run_one).collect()))
}
