use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::proxemics::Millis;

use super::UtterancePurpose;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpokenLine {
    pub text: String,
    pub purpose: UtterancePurpose,
    pub generation: u64,
    pub started: Millis,
    pub ends_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Delivery {
    Started(SpokenLine),
    Queued,
    /// The reply belongs to a superseded generation.
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Interruption {
    /// The line cut off mid-speech, if any.
    pub line: Option<SpokenLine>,
    /// Reply requests that were still outstanding and are now stale.
    pub superseded: u32,
}

/// The agent's speech channel. Replies are tagged with the generation they
/// were requested in; barge-in and episode ends bump the generation so late
/// replies are dropped.
#[derive(Debug, Clone)]
pub struct AgentVoice {
    ms_per_word: Millis,
    generation: u64,
    speaking: Option<SpokenLine>,
    queue: VecDeque<(String, UtterancePurpose)>,
    outstanding: u32,
}

impl AgentVoice {
    pub fn new(ms_per_word: Millis) -> Self {
        Self {
            ms_per_word,
            generation: 0,
            speaking: None,
            queue: VecDeque::new(),
            outstanding: 0,
        }
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn speaking(&self) -> Option<&SpokenLine> {
        self.speaking.as_ref()
    }

    pub fn outstanding(&self) -> u32 {
        self.outstanding
    }

    pub fn is_busy(&self) -> bool {
        self.speaking.is_some() || self.outstanding > 0 || !self.queue.is_empty()
    }

    pub fn duration(&self, text: &str) -> Millis {
        text.split_whitespace().count().max(1) as Millis * self.ms_per_word
    }

    /// Registers a reply request and returns the generation to tag it with.
    pub fn request(&mut self) -> u64 {
        self.outstanding += 1;
        self.generation
    }

    pub fn deliver(&mut self, generation: u64, text: String, purpose: UtterancePurpose, now: Millis) -> Delivery {
        if generation != self.generation {
            return Delivery::Discarded;
        }
        self.outstanding = self.outstanding.saturating_sub(1);
        self.say(text, purpose, now)
    }

    pub fn say(&mut self, text: String, purpose: UtterancePurpose, now: Millis) -> Delivery {
        if self.speaking.is_some() {
            self.queue.push_back((text, purpose));
            return Delivery::Queued;
        }
        let line = SpokenLine {
            ends_at: now + self.duration(&text),
            text,
            purpose,
            generation: self.generation,
            started: now,
        };
        self.speaking = Some(line.clone());
        Delivery::Started(line)
    }

    /// Completes the current line if it has ended by `now` and starts the
    /// next queued one.
    pub fn finish(&mut self, now: Millis) -> Option<(SpokenLine, Option<SpokenLine>)> {
        if self.speaking.as_ref().is_none_or(|l| l.ends_at > now) {
            return None;
        }
        let done = self.speaking.take()?;
        let next = self.queue.pop_front().and_then(|(text, purpose)| match self.say(text, purpose, now) {
            Delivery::Started(l) => Some(l),
            _ => None,
        });
        Some((done, next))
    }

    /// User speech at `now`. Cuts off a line still in progress and invalidates
    /// pending replies; a line ending exactly at `now` is already complete.
    pub fn barge_in(&mut self, now: Millis) -> Interruption {
        let cut = self.speaking.as_ref().is_some_and(|l| now < l.ends_at);
        if !cut && self.outstanding == 0 && self.queue.is_empty() {
            return Interruption::default();
        }
        self.cancel(now, cut)
    }

    /// Drops everything in flight, as at the end of an episode.
    pub fn cancel_all(&mut self, now: Millis) -> Interruption {
        let cut = self.speaking.as_ref().is_some_and(|l| now < l.ends_at);
        self.cancel(now, cut)
    }

    fn cancel(&mut self, _now: Millis, cut: bool) -> Interruption {
        let line = if cut { self.speaking.take() } else { None };
        let superseded = self.outstanding;
        self.generation += 1;
        self.queue.clear();
        self.outstanding = 0;
        Interruption { line, superseded }
    }
}
