//! Turn management inside an engaged episode.

mod prompt;
mod responder;
mod utterance;
mod voice;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proxemics::{Millis, TrackId};

pub use prompt::{
    assemble_prompt, choose_topic, topic_tokens, Addressee, PromptBundle, Topic, DISENGAGEMENT_RULES,
    TOPIC_INSTRUCTION,
};
pub use responder::{
    ExternalResponder, Responder, ResponderReply, ScriptedResponder, EXHAUSTED_REPLY, LOST_TRAIN_OF_THOUGHT,
};
pub use utterance::{detect_end_of_utterance, SpeechFragment, UtteranceAssembler};
pub use voice::{AgentVoice, Delivery, Interruption, SpokenLine};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConversationError {
    #[error("scripted responder needs at least one reply")]
    EmptyScript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtterancePurpose {
    Greeting,
    Reply,
    StayPrompt,
    Farewell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    pub started: Millis,
    pub ended: Millis,
    #[serde(rename = "final")]
    pub is_final: bool,
    pub interrupted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_id: Option<TrackId>,
}

impl Utterance {
    pub fn user(track: TrackId, text: impl Into<String>, started: Millis, ended: Millis) -> Self {
        Self {
            speaker: Speaker::User,
            text: text.into(),
            started,
            ended,
            is_final: true,
            interrupted: false,
            track_id: Some(track),
        }
    }

    pub fn agent(text: impl Into<String>, started: Millis, ended: Millis, interrupted: bool) -> Self {
        Self {
            speaker: Speaker::Agent,
            text: text.into(),
            started,
            ended,
            is_final: true,
            interrupted,
            track_id: None,
        }
    }
}
