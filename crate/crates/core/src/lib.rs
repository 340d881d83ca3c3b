//! Deterministic simulation of engagement dynamics, adaptive task difficulty
//! and Q-learning control in gamified systems.
//!
//! The kernels in [`dynamics`], [`user_model`] and [`rl`] are pure functions.
//! [`engine`] wires them into a seeded step loop, [`scenario`] describes runs,
//! [`content`] is the feedback-message port and [`report`] renders results.

pub mod content;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod report;
pub mod rl;
pub mod scenario;
pub mod user_model;

pub use content::{ContentProvider, RemoteConfig, RemoteProvider, StubProvider};
pub use engine::{run_simulation, run_sweep, summarize, RunSummary, SimulationTrace, TraceRow};
pub use error::ModelError;
pub use scenario::{load_scenario, preset, ScenarioConfig, ScenarioError, SweepSpec};
