//! Tabular Q-learning over a discretized (engagement, difficulty) state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::AdaptationParams;
use crate::error::{finite, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RLConfig {
    /// Discount factor, in `[0, 1)`.
    pub discount_delta: f64,
    /// Learning rate, in `(0, 1]`. 1.0 is plain replacement by the Bellman target.
    pub learn_eta: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub e_bins: usize,
    pub t_bins: usize,
    /// Weight of the engagement-change bonus added to the agent reward.
    pub shaping_rho: f64,
}

impl Default for RLConfig {
    fn default() -> Self {
        RLConfig {
            discount_delta: 0.9,
            learn_eta: 1.0,
            epsilon_start: 0.3,
            epsilon_end: 0.05,
            epsilon_decay_steps: 50,
            e_bins: 10,
            t_bins: 10,
            shaping_rho: 0.0,
        }
    }
}

impl RLConfig {
    pub fn n_states(&self) -> usize {
        self.e_bins * self.t_bins
    }
}

/// Dense `n_states x n_actions` action-value table, row-major by state.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
    n_states: usize,
    n_actions: usize,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QTable {
            values: vec![0.0; n_states * n_actions],
            n_states,
            n_actions,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn check_state(&self, s: usize) -> Result<(), ModelError> {
        if s < self.n_states {
            Ok(())
        } else {
            Err(ModelError::precondition(format!(
                "state {s} out of range (n_states = {})",
                self.n_states
            )))
        }
    }

    fn check_action(&self, a: usize) -> Result<(), ModelError> {
        if a < self.n_actions {
            Ok(())
        } else {
            Err(ModelError::precondition(format!(
                "action {a} out of range (n_actions = {})",
                self.n_actions
            )))
        }
    }

    pub fn get(&self, s: usize, a: usize) -> Result<f64, ModelError> {
        self.check_state(s)?;
        self.check_action(a)?;
        Ok(self.values[s * self.n_actions + a])
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) -> Result<(), ModelError> {
        self.check_state(s)?;
        self.check_action(a)?;
        finite("q", v)?;
        self.values[s * self.n_actions + a] = v;
        Ok(())
    }

    pub fn row(&self, s: usize) -> Result<&[f64], ModelError> {
        self.check_state(s)?;
        Ok(&self.values[s * self.n_actions..(s + 1) * self.n_actions])
    }

    pub fn max_value(&self, s: usize) -> Result<f64, ModelError> {
        Ok(self
            .row(s)?
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Greedy action for `s`, ties broken toward the lowest index.
    pub fn greedy(&self, s: usize) -> Result<usize, ModelError> {
        let row = self.row(s)?;
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        Ok(best)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Maps `(e, t_cur)` onto `e_bin * t_bins + t_bin` using uniform bins. Values
/// on the top boundary land in the last bin.
pub fn discretize_state(
    e: f64,
    t_cur: f64,
    bounds: &AdaptationParams,
    e_bins: usize,
    t_bins: usize,
) -> Result<usize, ModelError> {
    finite("e", e)?;
    finite("t_cur", t_cur)?;
    if e_bins == 0 || t_bins == 0 {
        return Err(ModelError::precondition("bin counts must be positive"));
    }
    if !(0.0..=1.0).contains(&e) {
        return Err(ModelError::precondition("engagement must lie in [0, 1]"));
    }
    if !bounds.contains(t_cur) {
        return Err(ModelError::precondition(format!(
            "difficulty {t_cur} outside [{}, {}]",
            bounds.t_min, bounds.t_max
        )));
    }
    let bin = |x: f64, n: usize| ((x * n as f64).floor() as usize).min(n - 1);
    let e_bin = bin(e, e_bins);
    let t_bin = bin(
        (t_cur - bounds.t_min) / (bounds.t_max - bounds.t_min),
        t_bins,
    );
    Ok(e_bin * t_bins + t_bin)
}

/// `Q[s,a] <- (1 - eta) * Q[s,a] + eta * (r + delta * max_a' Q[s_next, a'])`.
pub fn q_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
    cfg: &RLConfig,
) -> Result<(), ModelError> {
    finite("r", r)?;
    let current = q.get(s, a)?;
    let target = r + cfg.discount_delta * q.max_value(s_next)?;
    q.set(
        s,
        a,
        (1.0 - cfg.learn_eta) * current + cfg.learn_eta * target,
    )
}

/// Epsilon-greedy selection. With probability `epsilon` a uniformly random
/// action, otherwise the greedy one.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    s: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, ModelError> {
    finite("epsilon", epsilon)?;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(ModelError::precondition("epsilon must lie in [0, 1]"));
    }
    q.check_state(s)?;
    if q.n_actions == 0 {
        return Err(ModelError::precondition("table has no actions"));
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..q.n_actions))
    } else {
        q.greedy(s)
    }
}

/// Linear decay from `epsilon_start` to `epsilon_end` over
/// `epsilon_decay_steps`, constant afterward.
pub fn epsilon_at(cfg: &RLConfig, t: u64) -> f64 {
    if t >= cfg.epsilon_decay_steps {
        return cfg.epsilon_end;
    }
    let frac = t as f64 / cfg.epsilon_decay_steps as f64;
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(delta: f64, eta: f64) -> RLConfig {
        RLConfig {
            discount_delta: delta,
            learn_eta: eta,
            ..RLConfig::default()
        }
    }

    #[test]
    fn discretize_examples() {
        let b = AdaptationParams::default();
        assert_eq!(discretize_state(0.0, 0.0, &b, 7, 3).unwrap(), 0);
        assert_eq!(discretize_state(1.0, 10.0, &b, 10, 10).unwrap(), 99);
        assert_eq!(discretize_state(0.35, 4.2, &b, 10, 10).unwrap(), 34);
    }

    #[test]
    fn discretize_rejects_out_of_range() {
        let b = AdaptationParams::default();
        assert!(discretize_state(1.01, 3.0, &b, 10, 10).is_err());
        assert!(discretize_state(0.5, -1.0, &b, 10, 10).is_err());
        assert!(discretize_state(0.5, 1.0, &b, 0, 10).is_err());
    }

    #[test]
    fn myopic_update_replaces() {
        let mut q = QTable::zeros(2, 2);
        q.set(0, 1, 7.0).unwrap();
        q.set(1, 0, 3.0).unwrap();
        q_update(&mut q, 0, 1, -0.25, 1, &cfg(0.0, 1.0)).unwrap();
        assert_eq!(q.get(0, 1).unwrap(), -0.25);
    }

    #[test]
    fn hand_unrolled_backups() {
        // state 2 is absorbing with all-zero values
        let mut q = QTable::zeros(3, 2);
        let c = cfg(0.9, 1.0);
        q_update(&mut q, 0, 1, 0.5, 1, &c).unwrap();
        assert_eq!(q.get(0, 1).unwrap(), 0.5);
        q_update(&mut q, 1, 0, 1.0, 2, &c).unwrap();
        assert_eq!(q.get(1, 0).unwrap(), 1.0);
        q_update(&mut q, 0, 1, 0.5, 1, &c).unwrap();
        assert!((q.get(0, 1).unwrap() - 1.4).abs() < 1e-12);
    }

    #[test]
    fn partial_learning_rate_blends() {
        // Q = 2, target = r + delta * max = 4 with delta = 0
        let mut q = QTable::zeros(1, 1);
        q.set(0, 0, 2.0).unwrap();
        q_update(&mut q, 0, 0, 4.0, 0, &cfg(0.0, 0.5)).unwrap();
        assert_eq!(q.get(0, 0).unwrap(), 3.0);
    }

    #[test]
    fn update_errors() {
        let mut q = QTable::zeros(2, 2);
        let c = cfg(0.9, 1.0);
        assert!(matches!(
            q_update(&mut q, 2, 0, 1.0, 0, &c),
            Err(ModelError::Precondition(_))
        ));
        assert!(q_update(&mut q, 0, 5, 1.0, 0, &c).is_err());
        assert!(q_update(&mut q, 0, 0, 1.0, 9, &c).is_err());
        assert!(matches!(
            q_update(&mut q, 0, 0, f64::NAN, 0, &c),
            Err(ModelError::NonFinite { .. })
        ));
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = QTable::zeros(1, 3);
        q.set(0, 1, 1.0).unwrap();
        assert_eq!(select_action(&q, 0, 0.0, &mut rng).unwrap(), 1);
        let flat = QTable::zeros(1, 3);
        assert_eq!(select_action(&flat, 0, 0.0, &mut rng).unwrap(), 0);
        assert!(select_action(&flat, 1, 0.0, &mut rng).is_err());
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut q = QTable::zeros(1, 4);
        q.set(0, 2, 10.0).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[select_action(&q, 0, 1.0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn epsilon_schedule() {
        let c = RLConfig {
            epsilon_start: 1.0,
            epsilon_end: 0.0,
            epsilon_decay_steps: 100,
            ..RLConfig::default()
        };
        assert_eq!(epsilon_at(&c, 0), 1.0);
        assert_eq!(epsilon_at(&c, 25), 0.75);
        assert_eq!(epsilon_at(&c, 100), 0.0);
        assert_eq!(epsilon_at(&c, 5000), 0.0);
    }

    proptest! {
        #[test]
        fn update_touches_one_entry(
            s in 0usize..4, a in 0usize..3, sn in 0usize..4, r in -5.0f64..5.0,
            init in proptest::collection::vec(-3.0f64..3.0, 12),
        ) {
            let mut q = QTable::zeros(4, 3);
            for (i, v) in init.iter().enumerate() {
                q.set(i / 3, i % 3, *v).unwrap();
            }
            let before = q.clone();
            q_update(&mut q, s, a, r, sn, &cfg(0.8, 0.7)).unwrap();
            for i in 0..12 {
                if i != s * 3 + a {
                    prop_assert_eq!(q.values()[i], before.values()[i]);
                }
            }
        }

        #[test]
        fn values_stay_bounded(
            steps in proptest::collection::vec((0usize..5, 0usize..3, -1.0f64..=1.0, 0usize..5), 1..400),
            delta in 0.0f64..0.99, eta in 0.01f64..=1.0,
        ) {
            let c = cfg(delta, eta);
            let mut q = QTable::zeros(5, 3);
            let bound = 1.0 / (1.0 - delta) + 1e-9;
            for (s, a, r, sn) in steps {
                q_update(&mut q, s, a, r, sn, &c).unwrap();
            }
            prop_assert!(q.values().iter().all(|v| v.abs() <= bound));
        }

        #[test]
        fn greedy_choice_scale_invariant(
            row in proptest::collection::vec(-5.0f64..5.0, 1..6), scale in 0.01f64..100.0,
        ) {
            let mut q = QTable::zeros(1, row.len());
            let mut scaled = QTable::zeros(1, row.len());
            for (a, v) in row.iter().enumerate() {
                q.set(0, a, *v).unwrap();
                scaled.set(0, a, *v * scale).unwrap();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            prop_assert_eq!(
                select_action(&q, 0, 0.0, &mut rng).unwrap(),
                select_action(&scaled, 0, 0.0, &mut rng).unwrap()
            );
        }

        #[test]
        fn epsilon_non_increasing(
            start in 0.0f64..=1.0, frac in 0.0f64..=1.0, decay in 1u64..500, t in 0u64..1000,
        ) {
            let c = RLConfig {
                epsilon_start: start,
                epsilon_end: start * frac,
                epsilon_decay_steps: decay,
                ..RLConfig::default()
            };
            prop_assert!(epsilon_at(&c, t + 1) <= epsilon_at(&c, t) + 1e-15);
        }
    }
}
