//! JSON message protocol between clients and the engine.

use serde::{Deserialize, Serialize};

use crate::conversation::{Speaker, Utterance, UtterancePurpose};
use crate::engagement::{BehaviorCue, ControlAction, Mode};
use crate::journal::JournalEntry;
use crate::proxemics::{Millis, Zone};

/// Client to engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Inbound {
    Move {
        track_id: String,
        x: f64,
        y: f64,
        facing_deg: f64,
        ts: Millis,
    },
    Tag {
        tag_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        track_id: Option<String>,
        present: bool,
        ts: Millis,
    },
    Speech {
        track_id: String,
        text: String,
        #[serde(rename = "final")]
        is_final: bool,
        ts: Millis,
    },
    Control {
        action: ControlAction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ts: Option<Millis>,
    },
    /// Advances the clock in lockstep mode.
    Tick { ts: Millis },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireError {
    pub code: &'static str,
    pub detail: String,
}

impl WireError {
    fn invalid(detail: impl Into<String>) -> Self {
        Self {
            code: "invalid_message",
            detail: detail.into(),
        }
    }

    pub fn to_outbound(&self) -> Outbound {
        Outbound::Error {
            code: self.code.to_owned(),
            detail: self.detail.clone(),
            retry: false,
        }
    }
}

impl Inbound {
    /// Parses and validates one message.
    pub fn parse(text: &str) -> Result<Self, WireError> {
        let msg: Inbound = serde_json::from_str(text).map_err(|e| WireError {
            code: "malformed",
            detail: e.to_string(),
        })?;
        msg.validate()?;
        Ok(msg)
    }

    pub fn validate(&self) -> Result<(), WireError> {
        let id_ok = |s: &str, what: &str| {
            if s.trim().is_empty() {
                Err(WireError::invalid(format!("{what} must be nonempty")))
            } else {
                Ok(())
            }
        };
        match self {
            Inbound::Move {
                track_id,
                x,
                y,
                facing_deg,
                ..
            } => {
                id_ok(track_id, "track_id")?;
                if !(x.is_finite() && y.is_finite() && facing_deg.is_finite()) {
                    return Err(WireError::invalid("coordinates must be finite"));
                }
            }
            Inbound::Tag { tag_id, track_id, .. } => {
                id_ok(tag_id, "tag_id")?;
                if let Some(t) = track_id {
                    id_ok(t, "track_id")?;
                }
            }
            Inbound::Speech {
                track_id, text, is_final, ..
            } => {
                id_ok(track_id, "track_id")?;
                if text.trim().is_empty() && !is_final {
                    return Err(WireError::invalid("non-final speech needs text"));
                }
            }
            Inbound::Control { .. } | Inbound::Tick { .. } => {}
        }
        Ok(())
    }

    pub fn ts(&self) -> Option<Millis> {
        match self {
            Inbound::Move { ts, .. } | Inbound::Tag { ts, .. } | Inbound::Speech { ts, .. } | Inbound::Tick { ts } => {
                Some(*ts)
            }
            Inbound::Control { ts, .. } => *ts,
        }
    }

    pub fn with_ts(mut self, at: Millis) -> Self {
        match &mut self {
            Inbound::Move { ts, .. } | Inbound::Tag { ts, .. } | Inbound::Speech { ts, .. } | Inbound::Tick { ts } => {
                *ts = at
            }
            Inbound::Control { ts, .. } => *ts = Some(at),
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackView {
    pub track_id: String,
    pub x: f64,
    pub y: f64,
    pub distance: f64,
    pub facing_offset: f64,
    pub zone: Zone,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub mode: Mode,
    /// Engaged track id, if any.
    pub engaged: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engaged_name: Option<String>,
    pub turn_count: u32,
    pub behavior_cue: BehaviorCue,
    pub accepting: bool,
    pub ts: Millis,
    pub tracks: Vec<TrackView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryView {
    pub subject: String,
    pub text: String,
}

/// Engine to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    State(StateView),
    Journal {
        entry: JournalEntry,
    },
    Utterance {
        speaker: Speaker,
        text: String,
        interrupted: bool,
        ts: Millis,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        purpose: Option<UtterancePurpose>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        track_id: Option<String>,
    },
    Summary {
        subject: String,
        text: String,
    },
    Error {
        code: String,
        detail: String,
        /// Set when the message was refused for load and may be resent.
        #[serde(default)]
        retry: bool,
    },
    /// Full view for a client that just connected.
    Snapshot {
        state: StateView,
        journal: Vec<JournalEntry>,
        transcript: Vec<Utterance>,
        summaries: Vec<SummaryView>,
    },
}

impl Outbound {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("outbound serializes")
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        Outbound::Error {
            code: code.to_owned(),
            detail: detail.into(),
            retry: false,
        }
    }
}
