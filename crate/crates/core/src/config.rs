//! Engine configuration, loaded from TOML. Every field has a default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::proxemics::{Millis, Position, ZoneConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Rule,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub window_ms: Millis,
    pub receiver_x: f64,
    pub receiver_y: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            window_ms: 1000,
            receiver_x: 0.0,
            receiver_y: 0.0,
        }
    }
}

impl FusionConfig {
    pub fn receiver(&self) -> Position {
        Position::new(self.receiver_x, self.receiver_y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JournalConfig {
    /// Entries handed to the engagement policy.
    pub policy_window: usize,
}

impl Default for JournalConfig {
    fn default() -> Self {
        Self { policy_window: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngagementConfig {
    pub policy: PolicyKind,
    pub check_interval_ms: Millis,
    pub decision_timeout_ms: Millis,
}

impl Default for EngagementConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Rule,
            check_interval_ms: 10_000,
            decision_timeout_ms: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConversationConfig {
    pub silence_window_ms: Millis,
    pub ms_per_word: Millis,
    /// Simulated responder latency when the responder reports none.
    pub reply_latency_ms: Millis,
    pub response_timeout_ms: Millis,
}

impl Default for ConversationConfig {
    fn default() -> Self {
        Self {
            silence_window_ms: 1500,
            ms_per_word: 300,
            reply_latency_ms: 400,
            response_timeout_ms: 8000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Engine tick; also the barge-in reaction bound.
    pub tick_ms: Millis,
    /// How long a scenario keeps running after its last event.
    pub drain_ms: Millis,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            tick_ms: 100,
            drain_ms: 15_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub queue_capacity: usize,
    /// Outbound messages buffered per client before it is dropped.
    pub client_buffer: usize,
    pub heartbeat_ms: Millis,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            queue_capacity: 10_000,
            client_buffer: 1024,
            heartbeat_ms: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DittoConfig {
    pub zones: ZoneConfig,
    pub fusion: FusionConfig,
    pub journal: JournalConfig,
    pub engagement: EngagementConfig,
    pub conversation: ConversationConfig,
    pub simulation: SimulationConfig,
    pub gateway: GatewayConfig,
}

impl DittoConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.zones.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let positive = [
            ("engagement.check_interval_ms", self.engagement.check_interval_ms),
            ("conversation.silence_window_ms", self.conversation.silence_window_ms),
            ("conversation.ms_per_word", self.conversation.ms_per_word),
            ("simulation.tick_ms", self.simulation.tick_ms),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be > 0")));
            }
        }
        if self.journal.policy_window == 0 {
            return Err(ConfigError::Invalid("journal.policy_window must be > 0".into()));
        }
        if self.gateway.queue_capacity == 0 || self.gateway.client_buffer == 0 {
            return Err(ConfigError::Invalid("gateway buffers must be > 0".into()));
        }
        Ok(())
    }

    /// Hash over the settings that shape engine output. Gateway plumbing is
    /// left out so a record replays under any transport settings.
    pub fn fingerprint(&self) -> String {
        let mut relevant = self.clone();
        relevant.gateway = GatewayConfig::default();
        let bytes = serde_json::to_vec(&relevant).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
