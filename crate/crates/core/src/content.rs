//! Feedback-message providers.
//!
//! The engine asks a [`ContentProvider`] for a message whenever an
//! encouragement action fires. Message text never influences the dynamics;
//! only the message id is recorded in the trace.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Bumped whenever template wording or id derivation changes.
pub const TEMPLATE_VERSION: u32 = 1;

pub const ENV_URL: &str = "GAMEDYN_LLM_URL";
pub const ENV_KEY: &str = "GAMEDYN_LLM_KEY";
pub const ENV_MODEL: &str = "GAMEDYN_LLM_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Rising,
    Falling,
    Flat,
}

impl Trend {
    /// Engagement change below this magnitude counts as flat.
    pub const FLAT_TOLERANCE: f64 = 1e-3;

    /// Trend across a window of engagement values, oldest first.
    pub fn of(window: &[f64]) -> Trend {
        match (window.first(), window.last()) {
            (Some(first), Some(last)) if last - first > Self::FLAT_TOLERANCE => Trend::Rising,
            (Some(first), Some(last)) if first - last > Self::FLAT_TOLERANCE => Trend::Falling,
            _ => Trend::Flat,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Trend::Rising => "rising",
            Trend::Falling => "falling",
            Trend::Flat => "flat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackContext {
    pub step: u64,
    pub engagement: f64,
    pub difficulty: f64,
    pub performance: f64,
    pub trend: Trend,
    pub preset_name: String,
}

impl FeedbackContext {
    fn check(&self) -> Result<(), ContentError> {
        let ok = self.engagement.is_finite()
            && (0.0..=1.0).contains(&self.engagement)
            && self.difficulty.is_finite()
            && self.performance.is_finite()
            && (0.0..=1.0).contains(&self.performance);
        if ok {
            Ok(())
        } else {
            Err(ContentError::InvalidContext(format!("{self:?}")))
        }
    }

    /// Canonical text fed to the message id hash.
    fn canonical(&self) -> String {
        format!(
            "step={};e={:.6};t={:.6};u={:.6};trend={};preset={}",
            self.step,
            self.engagement,
            self.difficulty,
            self.performance,
            self.trend.as_str(),
            self.preset_name
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Stub,
    Remote,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Stub => "stub",
            Source::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackMessage {
    pub id: String,
    pub text: String,
    pub source: Source,
    /// Template family and variant, for stub messages.
    pub template_id: Option<String>,
}

/// A message plus any warning raised while producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub message: FeedbackMessage,
    pub warning: Option<String>,
}

#[derive(Debug, Error)]
pub enum ContentError {
    #[error("invalid feedback context: {0}")]
    InvalidContext(String),
    #[error("remote content provider not configured: {0} is not set")]
    MissingConfig(&'static str),
    #[error("remote request failed: {0}")]
    Remote(String),
}

pub trait ContentProvider: Send + Sync {
    fn generate(&self, ctx: &FeedbackContext) -> Result<Feedback, ContentError>;
}

/// Message id: a truncated SHA-256 over the context, source and template
/// version.
pub fn message_id(ctx: &FeedbackContext, source: Source) -> String {
    let mut h = Sha256::new();
    h.update(format!("v{TEMPLATE_VERSION}|{source}|{}", ctx.canonical()));
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Band {
    Low,
    Mid,
    High,
}

impl Band {
    fn of(u: f64) -> Band {
        if u < 0.4 {
            Band::Low
        } else if u <= 0.7 {
            Band::Mid
        } else {
            Band::High
        }
    }
}

/// Template families keyed by (trend, performance band).
fn template(trend: Trend, band: Band) -> (&'static str, &'static str) {
    use Band::*;
    use Trend::*;
    match (trend, band) {
        (Falling, Low) => (
            "struggling",
            "This one is tough. Success so far is {u}%; let's take it one step at a time at level {t}.",
        ),
        (Flat, Low) => (
            "stuck",
            "You're holding steady at level {t}. A success rate of {u}% will climb with practice.",
        ),
        (Rising, Low) => (
            "recovering",
            "Your engagement is picking up ({e}%). Keep at level {t} and the wins will follow.",
        ),
        (Falling, Mid) => (
            "wavering",
            "Nice work hitting {u}% at level {t}. Stay with it, you're closer than it feels.",
        ),
        (Flat, Mid) => (
            "steady",
            "Solid and steady: {u}% success at level {t}. Ready for the next one?",
        ),
        (Rising, Mid) => (
            "building",
            "Momentum is building ({e}% engaged). Level {t} is right in your zone.",
        ),
        (Falling, High) => (
            "coasting",
            "You're acing level {t} at {u}%. Want something more challenging?",
        ),
        (Flat, High) => (
            "mastering",
            "Great consistency: {u}% success at level {t}. You've mastered this.",
        ),
        (Rising, High) => (
            "thriving",
            "Outstanding! {u}% success and {e}% engaged at level {t}. Keep the streak going.",
        ),
    }
}

/// Deterministic template-based provider.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubProvider;

impl StubProvider {
    pub fn message(&self, ctx: &FeedbackContext) -> Result<FeedbackMessage, ContentError> {
        ctx.check()?;
        let (family, text) = template(ctx.trend, Band::of(ctx.performance));
        let text = text
            .replace("{u}", &format!("{:.0}", ctx.performance * 100.0))
            .replace("{e}", &format!("{:.0}", ctx.engagement * 100.0))
            .replace("{t}", &format!("{:.1}", ctx.difficulty));
        Ok(FeedbackMessage {
            id: message_id(ctx, Source::Stub),
            text,
            source: Source::Stub,
            template_id: Some(format!("{family}/v{TEMPLATE_VERSION}")),
        })
    }
}

impl ContentProvider for StubProvider {
    fn generate(&self, ctx: &FeedbackContext) -> Result<Feedback, ContentError> {
        Ok(Feedback {
            message: self.message(ctx)?,
            warning: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Endpoint base; requests go to `{base}/chat/completions`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    /// Extra attempts after the first failure.
    pub retries: u32,
}

impl RemoteConfig {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            timeout: Self::DEFAULT_TIMEOUT,
            retries: 1,
        }
    }

    /// Reads `GAMEDYN_LLM_URL`, `GAMEDYN_LLM_MODEL` and optional
    /// `GAMEDYN_LLM_KEY`.
    pub fn from_env() -> Result<Self, ContentError> {
        let get = |k: &'static str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let url = get(ENV_URL).ok_or(ContentError::MissingConfig(ENV_URL))?;
        let model = get(ENV_MODEL).ok_or(ContentError::MissingConfig(ENV_MODEL))?;
        Ok(RemoteConfig {
            api_key: get(ENV_KEY),
            ..RemoteConfig::new(url, model)
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Chat-completion client that falls back to the stub on any failure.
pub struct RemoteProvider {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    stub: StubProvider,
}

impl RemoteProvider {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(cfg.timeout).build();
        RemoteProvider {
            cfg,
            agent,
            stub: StubProvider,
        }
    }

    pub fn request_body(&self, ctx: &FeedbackContext) -> serde_json::Value {
        json!({
            "model": self.cfg.model,
            "messages": [
                {
                    "role": "system",
                    "content": "You write one short, encouraging feedback sentence for a learner in a gamified task. Reply with the sentence only."
                },
                { "role": "user", "content": prompt(ctx) }
            ]
        })
    }

    fn call_once(&self, body: &serde_json::Value) -> Result<String, ContentError> {
        let mut req = self
            .agent
            .post(&self.cfg.endpoint())
            .set("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req
            .send_json(body.clone())
            .map_err(|e| ContentError::Remote(e.to_string()))?;
        let value: serde_json::Value = resp
            .into_json()
            .map_err(|e| ContentError::Remote(format!("unreadable response: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| ContentError::Remote("response has no message content".into()))
    }
}

fn prompt(ctx: &FeedbackContext) -> String {
    format!(
        "Step {}. Scenario: {}. Engagement {:.2} (trend {}), task difficulty {:.2}, success rate {:.2}.",
        ctx.step,
        ctx.preset_name,
        ctx.engagement,
        ctx.trend.as_str(),
        ctx.difficulty,
        ctx.performance
    )
}

impl ContentProvider for RemoteProvider {
    fn generate(&self, ctx: &FeedbackContext) -> Result<Feedback, ContentError> {
        ctx.check()?;
        let body = self.request_body(ctx);
        let mut last_err = None;
        for _ in 0..=self.cfg.retries {
            match self.call_once(&body) {
                Ok(text) => {
                    return Ok(Feedback {
                        message: FeedbackMessage {
                            id: message_id(ctx, Source::Remote),
                            text,
                            source: Source::Remote,
                            template_id: None,
                        },
                        warning: None,
                    })
                }
                Err(e) => last_err = Some(e),
            }
        }
        let reason = last_err.map(|e| e.to_string()).unwrap_or_default();
        Ok(Feedback {
            message: self.stub.message(ctx)?,
            warning: Some(format!("step {}: {reason}; using stub feedback", ctx.step)),
        })
    }
}
