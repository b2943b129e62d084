use std::time::Instant;

use crate::engagement::STAY_PROMPT;
use crate::llm::{ChatClient, ChatMessage};
use crate::proxemics::Millis;

use super::{ConversationError, PromptBundle, Speaker, UtterancePurpose};

pub const EXHAUSTED_REPLY: &str = "Good chatting. I should get back to my book.";
pub const LOST_TRAIN_OF_THOUGHT: &str = "Sorry, I lost my train of thought.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponderReply {
    pub text: String,
    /// Measured latency; `None` means use the configured reply latency.
    pub latency_ms: Option<Millis>,
    pub warning: Option<String>,
}

impl ResponderReply {
    fn plain(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            latency_ms: None,
            warning: None,
        }
    }
}

pub trait Responder: Send {
    fn name(&self) -> &str;
    fn respond(&mut self, bundle: &PromptBundle) -> ResponderReply;
}

/// Replies from a fixed table, in order.
#[derive(Debug, Clone)]
pub struct ScriptedResponder {
    script: Vec<String>,
    next: usize,
}

impl ScriptedResponder {
    pub fn new(script: Vec<String>) -> Result<Self, ConversationError> {
        if script.is_empty() {
            return Err(ConversationError::EmptyScript);
        }
        Ok(Self { script, next: 0 })
    }

    pub fn remaining(&self) -> usize {
        self.script.len() - self.next
    }
}

impl Responder for ScriptedResponder {
    fn name(&self) -> &str {
        "scripted"
    }

    fn respond(&mut self, bundle: &PromptBundle) -> ResponderReply {
        if bundle.purpose == UtterancePurpose::StayPrompt {
            return ResponderReply::plain(STAY_PROMPT);
        }
        match self.script.get(self.next) {
            Some(line) => {
                self.next += 1;
                ResponderReply::plain(line.clone())
            }
            None => ResponderReply {
                text: EXHAUSTED_REPLY.to_owned(),
                latency_ms: None,
                warning: Some("script exhausted".into()),
            },
        }
    }
}

/// Sends the bundle to a chat-completion endpoint.
pub struct ExternalResponder {
    client: Box<dyn ChatClient>,
}

impl ExternalResponder {
    pub fn new(client: Box<dyn ChatClient>) -> Self {
        Self { client }
    }

    pub fn messages(bundle: &PromptBundle) -> Vec<ChatMessage> {
        let mut out = vec![ChatMessage::system(&bundle.system_text)];
        for u in &bundle.transcript {
            out.push(match u.speaker {
                Speaker::User => ChatMessage::user(&u.text),
                Speaker::Agent => ChatMessage::assistant(&u.text),
            });
        }
        if bundle.purpose == UtterancePurpose::Greeting {
            out.push(ChatMessage::user(format!(
                "({} has just stopped by. Greet them and start the conversation.)",
                bundle.addressee
            )));
        }
        out
    }
}

impl Responder for ExternalResponder {
    fn name(&self) -> &str {
        "external"
    }

    fn respond(&mut self, bundle: &PromptBundle) -> ResponderReply {
        if bundle.purpose == UtterancePurpose::StayPrompt {
            return ResponderReply::plain(STAY_PROMPT);
        }
        let started = Instant::now();
        let result = self.client.complete(&Self::messages(bundle));
        let latency_ms = Some(started.elapsed().as_millis() as Millis);
        match result {
            Ok(text) => ResponderReply {
                text: text.trim().to_owned(),
                latency_ms,
                warning: None,
            },
            Err(e) => ResponderReply {
                text: LOST_TRAIN_OF_THOUGHT.to_owned(),
                latency_ms,
                warning: Some(format!("responder failed: {e}")),
            },
        }
    }
}
