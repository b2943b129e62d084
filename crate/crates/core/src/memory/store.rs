use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::proxemics::Millis;

use super::MemoryError;

pub const GENERAL_CAP: usize = 10;
pub const EPISODE_SEPARATOR: &str = "\n---\n";
pub const REDACTED: &str = "someone";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    pub text: String,
    /// The summarizer failed and `text` is a raw excerpt.
    #[serde(default)]
    pub excerpt: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonMemory {
    pub person: String,
    pub summaries: Vec<EpisodeSummary>,
    pub last_interaction: Millis,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralSummary {
    episodes: VecDeque<String>,
    pub episode_count: u64,
}

impl GeneralSummary {
    pub fn text(&self) -> String {
        self.episodes.iter().map(String::as_str).collect::<Vec<_>>().join(EPISODE_SEPARATOR)
    }

    pub fn episodes(&self) -> impl Iterator<Item = &str> {
        self.episodes.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryStore {
    people: BTreeMap<String, PersonMemory>,
    general: GeneralSummary,
    next_episode: u64,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stored summaries for `person` oldest first, or the general summary for
    /// a passerby. Empty when nothing is stored.
    pub fn recall(&self, person: Option<&str>) -> String {
        match person {
            Some(p) => self
                .people
                .get(p)
                .map(|m| m.summaries.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n"))
                .unwrap_or_default(),
            None => self.general.text(),
        }
    }

    pub fn person(&self, name: &str) -> Option<&PersonMemory> {
        self.people.get(name)
    }

    pub fn people(&self) -> impl Iterator<Item = &PersonMemory> {
        self.people.values()
    }

    pub fn general(&self) -> &GeneralSummary {
        &self.general
    }

    pub fn store_person(
        &mut self,
        person: &str,
        date: Option<NaiveDate>,
        text: String,
        at: Millis,
        excerpt: bool,
    ) -> u64 {
        let id = self.next_id();
        let mem = self.people.entry(person.to_owned()).or_insert_with(|| PersonMemory {
            person: person.to_owned(),
            summaries: Vec::new(),
            last_interaction: at,
        });
        mem.summaries.push(EpisodeSummary {
            episode_id: id,
            date,
            text,
            excerpt,
        });
        mem.last_interaction = at;
        id
    }

    /// Merges a passerby episode, scrubbing every name in `names` first.
    /// Returns the stored (redacted) text.
    pub fn store_general<'a>(&mut self, text: &str, names: impl IntoIterator<Item = &'a str>) -> String {
        self.next_id();
        let clean = redact(text, names);
        self.general.episodes.push_back(clean.clone());
        while self.general.episodes.len() > GENERAL_CAP {
            self.general.episodes.pop_front();
        }
        self.general.episode_count += 1;
        clean
    }

    fn next_id(&mut self) -> u64 {
        self.next_episode += 1;
        self.next_episode
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MemoryError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| MemoryError::Syntax(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MemoryError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| MemoryError::Syntax(e.to_string()))
    }
}

/// Replaces whole-word, case-insensitive occurrences of each name.
pub fn redact<'a>(text: &str, names: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = text.to_owned();
    for name in names {
        let name = name.trim();
        if name.is_empty() {
            continue;
        }
        let re = Regex::new(&format!(r"(?i)\b{}\b", regex::escape(name))).expect("escaped pattern");
        out = re.replace_all(&out, REDACTED).into_owned();
    }
    out
}
