use std::collections::BTreeSet;

use crate::conversation::{Speaker, Topic, Utterance};
use crate::llm::{ChatClient, ChatMessage};

use super::MemoryError;

/// One finished episode as the summarizer sees it.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeInput<'a> {
    pub addressee: Option<&'a str>,
    pub transcript: &'a [Utterance],
    pub turn_count: u32,
    pub topic: Option<&'a Topic>,
    /// Names that must never be listed as recurring words.
    pub excluded_names: &'a [String],
}

pub trait Summarizer: Send {
    fn name(&self) -> &str;
    fn summarize(&mut self, episode: &EpisodeInput) -> Result<String, MemoryError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryOutcome {
    pub text: String,
    /// Set when the summarizer failed and `text` is a raw excerpt.
    pub warning: Option<String>,
}

const STOPWORDS: &[&str] = &[
    "about", "after", "again", "also", "been", "before", "being", "could", "didn't", "does", "doesn't", "don't",
    "from", "have", "having", "here", "it's", "just", "know", "like", "little", "longer", "make", "more", "much",
    "really", "should", "some", "stay", "than", "that", "that's", "their", "them", "then", "there", "these", "they",
    "thing", "things", "think", "this", "those", "very", "want", "were", "what", "when", "where", "which", "while",
    "will", "with", "would", "you're", "your", "yours", "chat",
];

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|w| w.trim_matches('\'').to_lowercase())
        .filter(|w| w.chars().count() >= 4 && w.chars().all(|c| c.is_alphabetic() || c == '\''))
}

/// Words of four or more letters, not stopwords or names, that occur in at
/// least two utterances; in order of first appearance, at most eight.
pub fn recurring_words(transcript: &[Utterance], excluded: &[String]) -> Vec<String> {
    let excluded: BTreeSet<String> = excluded.iter().flat_map(|n| tokens(n).collect::<Vec<_>>()).collect();
    let mut order: Vec<String> = Vec::new();
    let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
    for u in transcript {
        let seen: BTreeSet<String> = tokens(&u.text).collect();
        for w in tokens(&u.text) {
            if !order.contains(&w) {
                order.push(w);
            }
        }
        for w in seen {
            *counts.entry(w).or_default() += 1;
        }
    }
    order
        .into_iter()
        .filter(|w| counts[w] >= 2 && !STOPWORDS.contains(&w.as_str()) && !excluded.contains(w))
        .take(8)
        .collect()
}

/// Deterministic summarizer: turn count, seeded topic and recurring words.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateSummarizer;

impl Summarizer for TemplateSummarizer {
    fn name(&self) -> &str {
        "template"
    }

    fn summarize(&mut self, ep: &EpisodeInput) -> Result<String, MemoryError> {
        let who = ep.addressee.unwrap_or("a passerby");
        let turns = if ep.turn_count == 1 { "turn" } else { "turns" };
        let mut out = format!("Talked with {who} for {} {turns}.", ep.turn_count);
        if let Some(t) = ep.topic {
            out.push_str(&format!(" Topic of the day: {}.", t.title));
        }
        let words = recurring_words(ep.transcript, ep.excluded_names);
        if !words.is_empty() {
            out.push_str(&format!(" Recurring words: {}.", words.join(", ")));
        }
        Ok(out)
    }
}

pub struct ExternalSummarizer {
    client: Box<dyn ChatClient>,
}

impl ExternalSummarizer {
    pub fn new(client: Box<dyn ChatClient>) -> Self {
        Self { client }
    }
}

impl Summarizer for ExternalSummarizer {
    fn name(&self) -> &str {
        "external"
    }

    fn summarize(&mut self, ep: &EpisodeInput) -> Result<String, MemoryError> {
        let who = ep.addressee.unwrap_or("a passerby");
        let mut transcript = String::new();
        for u in ep.transcript {
            let speaker = match u.speaker {
                Speaker::Agent => "You",
                Speaker::User => who,
            };
            transcript.push_str(&format!("{speaker}: {}\n", u.text));
        }
        let messages = [
            ChatMessage::system(
                "Write a brief summary of the key points of this hallway conversation so you can refer back to it \
                 next time. Two or three sentences.",
            ),
            ChatMessage::user(transcript),
        ];
        self.client
            .complete(&messages)
            .map(|s| s.trim().to_owned())
            .map_err(|e| MemoryError::Summarizer(e.to_string()))
    }
}

fn excerpt(transcript: &[Utterance], who: &str) -> String {
    let start = transcript.len().saturating_sub(2);
    let parts: Vec<String> = transcript[start..]
        .iter()
        .map(|u| {
            let speaker = match u.speaker {
                Speaker::Agent => "You",
                Speaker::User => who,
            };
            format!("{speaker}: \"{}\"", u.text)
        })
        .collect();
    format!("Excerpt: {}", parts.join(" / "))
}

/// Summarizes an episode. Episodes in which the visitor never spoke produce
/// nothing; a failing summarizer yields an excerpt of the last two lines.
pub fn summarize_episode(ep: &EpisodeInput, summarizer: &mut dyn Summarizer) -> Option<SummaryOutcome> {
    if !ep.transcript.iter().any(|u| u.speaker == Speaker::User) {
        return None;
    }
    Some(match summarizer.summarize(ep) {
        Ok(text) if !text.trim().is_empty() => SummaryOutcome { text, warning: None },
        Ok(_) => SummaryOutcome {
            text: excerpt(ep.transcript, ep.addressee.unwrap_or("Passerby")),
            warning: Some("summarizer returned nothing".into()),
        },
        Err(e) => SummaryOutcome {
            text: excerpt(ep.transcript, ep.addressee.unwrap_or("Passerby")),
            warning: Some(e.to_string()),
        },
    })
}
