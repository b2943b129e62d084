//! The engagement state machine.
//!
//! The Ditto idles in `NotEngaged`, runs engagement checks over the journal
//! and live proxemic features, and once engaged runs disengagement checks on
//! every finished user turn and on a periodic tick. `step` is the pure
//! transition function; the runtime applies the effects it returns.

mod policy;
mod step;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::journal::JournalEntry;
use crate::proxemics::{Millis, PersonIdentity, TrackId, Zone};

pub use policy::{
    classify_stay_answer, parse_verdict, render_policy_input, rule_disengagement_check, rule_engagement_policy,
    EngagementPolicy, LlmPolicy, RulePolicy, StayAnswer, VerdictParseError, DISENGAGEMENT_SYSTEM_PROMPT,
    ENGAGEMENT_SYSTEM_PROMPT,
};
pub use step::{step, ControlAction, Effect, EngineEvent, StepContext, Transition, FAREWELL, STAY_PROMPT};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngagementError {
    #[error("{check} check called in {mode} mode")]
    WrongMode { check: CheckKind, mode: Mode },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    NotEngaged,
    Engaged,
    AwaitingStayAnswer,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::NotEngaged => "not_engaged",
            Mode::Engaged => "engaged",
            Mode::AwaitingStayAnswer => "awaiting_stay_answer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineState {
    pub mode: Mode,
    pub engaged_track: Option<TrackId>,
    pub engaged_identity: Option<PersonIdentity>,
    /// Completed user/agent exchange pairs this episode.
    pub turn_count: u32,
    pub stay_prompt_issued: bool,
    pub episode_started: Option<Millis>,
    /// Turn count when the stay prompt was last re-armed.
    pub stay_baseline: u32,
}

impl Default for EngineState {
    fn default() -> Self {
        Self {
            mode: Mode::NotEngaged,
            engaged_track: None,
            engaged_identity: None,
            turn_count: 0,
            stay_prompt_issued: false,
            episode_started: None,
            stay_baseline: 0,
        }
    }
}

impl EngineState {
    pub fn is_engaged(&self) -> bool {
        self.mode != Mode::NotEngaged
    }

    /// Turns since the stay prompt was last armed.
    pub fn turns_since_rearm(&self) -> u32 {
        self.turn_count.saturating_sub(self.stay_baseline)
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        match self.mode {
            Mode::NotEngaged => {
                if self.engaged_track.is_some() || self.turn_count != 0 || self.stay_prompt_issued {
                    return Err(format!("idle state carries episode data: {self:?}"));
                }
            }
            Mode::Engaged | Mode::AwaitingStayAnswer => {
                if self.engaged_track.is_none() {
                    return Err("engaged without a track".into());
                }
                if self.mode == Mode::AwaitingStayAnswer && !self.stay_prompt_issued {
                    return Err("awaiting an answer that was never asked".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Engage,
    Stay,
    Continue,
    RequestStay,
    Disengage,
}

impl Verdict {
    pub fn check(self) -> CheckKind {
        match self {
            Verdict::Engage | Verdict::Stay => CheckKind::Engagement,
            _ => CheckKind::Disengagement,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Verdict::Engage => "ENGAGE",
            Verdict::Stay => "STAY",
            Verdict::Continue => "CONTINUE",
            Verdict::RequestStay => "REQUEST_STAY",
            Verdict::Disengage => "DISENGAGE",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Engagement,
    Disengagement,
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckKind::Engagement => "engagement",
            CheckKind::Disengagement => "disengagement",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementDecision {
    pub verdict: Verdict,
    pub reason: String,
    /// Track the verdict is about (the one to engage, for `Engage`).
    pub track: Option<TrackId>,
    /// Set when an external policy failed and the rule policy answered.
    pub fallback: Option<String>,
}

impl EngagementDecision {
    pub fn new(verdict: Verdict, reason: impl Into<String>) -> Self {
        Self {
            verdict,
            reason: reason.into(),
            track: None,
            fallback: None,
        }
    }

    pub fn about(mut self, track: TrackId) -> Self {
        self.track = Some(track);
        self
    }
}

/// What caused a check to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckTrigger {
    Presence,
    UserTurn,
    /// An agent reply finished, completing a turn.
    TurnComplete,
    Dwell,
    Periodic,
}

/// Live proxemic features of one track inside a zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFeatures {
    pub track_id: TrackId,
    pub name: Option<String>,
    pub distance: f64,
    pub zone: Zone,
    pub facing_offset: f64,
    /// How long the current zone and facing condition has held.
    pub dwell_ms: Millis,
    /// The track's last episode ended and it has not left the zone since.
    #[serde(default)]
    pub recently_disengaged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput {
    pub journal_window: Vec<JournalEntry>,
    pub state: EngineState,
    pub candidates: Vec<CandidateFeatures>,
    pub last_user_utterance: Option<String>,
    pub trigger: CheckTrigger,
}

impl PolicyInput {
    pub fn candidate(&self, track: &TrackId) -> Option<&CandidateFeatures> {
        self.candidates.iter().find(|c| &c.track_id == track)
    }

    pub fn engaged_present(&self) -> bool {
        self.state
            .engaged_track
            .as_ref()
            .and_then(|t| self.candidate(t))
            .is_some_and(|c| c.zone.is_inside())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorCue {
    IdleReading,
    Listening,
    Greeting,
    Speaking,
}
