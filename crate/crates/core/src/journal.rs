//! Append-only session journal.
//!
//! Every entry is kept twice: as the structured payload that caused it and as
//! the sentence the engagement policy reads. The session file is one JSON
//! record per line; line 0 is the engine-start header.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conversation::UtterancePurpose;
use crate::engagement::{CheckKind, Verdict};
use crate::proxemics::{Millis, PresenceKind, TagId, TrackId, Zone};

pub const PASSERBY: &str = "Passerby";
/// Subject used for entries about the Ditto itself.
pub const SYSTEM_SUBJECT: &str = "Ditto";

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal timestamp regression: {timestamp} ms after {last} ms")]
    Ordering { timestamp: Millis, last: Millis },
    #[error("journal io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed journal line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JournalKind {
    Presence,
    UtteranceUser,
    UtteranceAgent,
    Decision,
    SummaryWritten,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JournalPayload {
    EngineStart,
    Presence {
        track_id: TrackId,
        event: PresenceKind,
        zone: Zone,
        distance: f64,
        facing_offset: f64,
        facing: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag_id: Option<TagId>,
    },
    /// A tag was bound to a track that was already inside a zone.
    Identified {
        track_id: TrackId,
        tag_id: TagId,
    },
    UserUtterance {
        track_id: TrackId,
        text: String,
        zone: Zone,
    },
    AgentUtterance {
        text: String,
        interrupted: bool,
        generation: u64,
        purpose: UtterancePurpose,
    },
    Decision {
        check: CheckKind,
        verdict: Verdict,
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        track_id: Option<TrackId>,
        policy: String,
        #[serde(default)]
        fallback: bool,
        turn_count: u32,
    },
    SummaryWritten {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        person: Option<String>,
        text: String,
    },
    Control {
        action: String,
    },
    Warning {
        code: String,
        detail: String,
    },
}

impl JournalPayload {
    pub fn kind(&self) -> JournalKind {
        match self {
            JournalPayload::EngineStart | JournalPayload::Control { .. } | JournalPayload::Warning { .. } => {
                JournalKind::System
            }
            JournalPayload::Presence { .. } | JournalPayload::Identified { .. } => JournalKind::Presence,
            JournalPayload::UserUtterance { .. } => JournalKind::UtteranceUser,
            JournalPayload::AgentUtterance { .. } => JournalKind::UtteranceAgent,
            JournalPayload::Decision { .. } => JournalKind::Decision,
            JournalPayload::SummaryWritten { .. } => JournalKind::SummaryWritten,
        }
    }

    pub fn track_id(&self) -> Option<&TrackId> {
        match self {
            JournalPayload::Presence { track_id, .. }
            | JournalPayload::Identified { track_id, .. }
            | JournalPayload::UserUtterance { track_id, .. } => Some(track_id),
            JournalPayload::Decision { track_id, .. } => track_id.as_ref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub sequence_no: u64,
    pub timestamp: Millis,
    pub kind: JournalKind,
    pub subject: String,
    pub rendered: String,
    pub structured: JournalPayload,
}

/// An entry before the journal numbers it.
#[derive(Debug, Clone, PartialEq)]
pub struct JournalDraft {
    pub timestamp: Millis,
    pub subject: String,
    pub rendered: String,
    pub structured: JournalPayload,
}

impl JournalDraft {
    pub fn new(timestamp: Millis, subject: impl Into<String>, rendered: impl Into<String>, structured: JournalPayload) -> Self {
        Self {
            timestamp,
            subject: subject.into(),
            rendered: rendered.into(),
            structured,
        }
    }

    pub fn warning(timestamp: Millis, code: &str, detail: impl Into<String>) -> Self {
        let detail = detail.into();
        Self::new(
            timestamp,
            SYSTEM_SUBJECT,
            format!("Warning ({code}): {detail}"),
            JournalPayload::Warning {
                code: code.to_owned(),
                detail,
            },
        )
    }

    /// Numbers the draft without appending it anywhere.
    pub fn into_entry(self, sequence_no: u64) -> JournalEntry {
        JournalEntry {
            sequence_no,
            timestamp: self.timestamp,
            kind: self.structured.kind(),
            subject: self.subject,
            rendered: self.rendered,
            structured: self.structured,
        }
    }
}

/// Which kinds a window should keep. Empty means all.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KindFilter(Vec<JournalKind>);

impl KindFilter {
    pub fn all() -> Self {
        Self(Vec::new())
    }

    pub fn only(kinds: impl IntoIterator<Item = JournalKind>) -> Self {
        Self(kinds.into_iter().collect())
    }

    pub fn matches(&self, kind: JournalKind) -> bool {
        self.0.is_empty() || self.0.contains(&kind)
    }
}

#[derive(Debug, Default)]
pub struct Journal {
    entries: Vec<JournalEntry>,
    sink: Option<BufWriter<File>>,
}

impl Journal {
    /// In-memory journal with no header.
    pub fn new() -> Self {
        Self::default()
    }

    /// In-memory journal whose line 0 is the engine-start header.
    pub fn started(at: Millis) -> Self {
        let mut j = Self::new();
        j.entries.push(engine_start(at));
        j
    }

    /// Opens (or creates) a session file. Existing lines are loaded and new
    /// entries continue from the persisted maximum sequence number; a fresh
    /// file gets the engine-start header.
    pub fn open(path: impl AsRef<Path>, start: Millis) -> Result<Self, JournalError> {
        let path = path.as_ref();
        let mut entries = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: JournalEntry =
                    serde_json::from_str(&line).map_err(|source| JournalError::Parse { line: i + 1, source })?;
                entries.push(entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut journal = Self {
            entries,
            sink: Some(BufWriter::new(file)),
        };
        if journal.entries.is_empty() {
            let header = engine_start(start);
            journal.persist(&header)?;
            journal.entries.push(header);
        }
        Ok(journal)
    }

    pub fn append(&mut self, draft: JournalDraft) -> Result<u64, JournalError> {
        if let Some(last) = self.entries.last() {
            if draft.timestamp < last.timestamp {
                return Err(JournalError::Ordering {
                    timestamp: draft.timestamp,
                    last: last.timestamp,
                });
            }
        }
        let entry = draft.into_entry(self.next_sequence_no());
        self.persist(&entry)?;
        let seq = entry.sequence_no;
        self.entries.push(entry);
        Ok(seq)
    }

    pub fn next_sequence_no(&self) -> u64 {
        self.entries.last().map_or(1, |e| e.sequence_no + 1)
    }

    pub fn last_timestamp(&self) -> Option<Millis> {
        self.entries.last().map(|e| e.timestamp)
    }

    /// The most recent `last_n` entries matching `kinds`, oldest first.
    pub fn window(&self, last_n: usize, kinds: &KindFilter) -> Vec<JournalEntry> {
        let mut out: Vec<JournalEntry> = self
            .entries
            .iter()
            .rev()
            .filter(|e| kinds.matches(e.kind))
            .take(last_n)
            .cloned()
            .collect();
        out.reverse();
        out
    }

    pub fn entries(&self) -> &[JournalEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn into_entries(self) -> Vec<JournalEntry> {
        self.entries
    }

    fn persist(&mut self, entry: &JournalEntry) -> Result<(), JournalError> {
        if let Some(sink) = self.sink.as_mut() {
            let line = serde_json::to_string(entry).map_err(std::io::Error::other)?;
            sink.write_all(line.as_bytes())?;
            sink.write_all(b"\n")?;
            sink.flush()?;
        }
        Ok(())
    }
}

fn engine_start(at: Millis) -> JournalEntry {
    JournalEntry {
        sequence_no: 0,
        timestamp: at,
        kind: JournalKind::System,
        subject: SYSTEM_SUBJECT.to_owned(),
        rendered: "The Ditto is reading a book.".to_owned(),
        structured: JournalPayload::EngineStart,
    }
}

fn meters(distance: f64) -> String {
    let d = distance.round() as i64;
    if d == 1 {
        "1 meter away".to_owned()
    } else {
        format!("{d} meters away")
    }
}

fn facing_phrase(facing: bool) -> &'static str {
    if facing {
        "facing you"
    } else {
        "not facing you"
    }
}

/// Renders a presence event as a journal sentence. `name` is the identified
/// person, if any; distance is rounded to whole meters here only.
pub fn render_presence(kind: &PresenceKind, name: Option<&str>, distance: f64, facing: bool) -> String {
    let who = name.unwrap_or(PASSERBY);
    match (kind, name) {
        (PresenceKind::EnteredZone { .. }, None) => {
            format!("{PASSERBY} has entered the zone, {}, {}.", meters(distance), facing_phrase(facing))
        }
        (PresenceKind::EnteredZone { zone }, Some(n)) => {
            format!("{n} has entered the {zone} zone, {}, {}.", meters(distance), facing_phrase(facing))
        }
        (PresenceKind::MovedZone { to, .. }, _) => {
            format!("{who} has moved into the {to} zone, {}, {}.", meters(distance), facing_phrase(facing))
        }
        (PresenceKind::LeftZone { .. }, _) => format!("{who} has left the zone."),
        (PresenceKind::FacingChanged { facing: true }, _) => {
            format!("{who} has turned toward you, {}.", meters(distance))
        }
        (PresenceKind::FacingChanged { facing: false }, _) => {
            format!("{who} has turned away from you, {}.", meters(distance))
        }
    }
}

pub fn render_identified(name: &str) -> String {
    format!("{PASSERBY} has been identified as {name}.")
}

pub fn render_user_utterance(name: Option<&str>, text: &str) -> String {
    format!("{} said: \"{text}\"", name.unwrap_or(PASSERBY))
}

pub fn render_agent_utterance(text: &str, interrupted: bool) -> String {
    if interrupted {
        format!("You were interrupted while saying: \"{text}\"")
    } else {
        format!("You said: \"{text}\"")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proxemics::ExitReason;

    fn draft(ts: Millis, text: &str) -> JournalDraft {
        JournalDraft::new(
            ts,
            PASSERBY,
            text,
            JournalPayload::UserUtterance {
                track_id: TrackId::new("t"),
                text: text.into(),
                zone: Zone::Public,
            },
        )
    }

    #[test]
    fn unidentified_entry_sentence() {
        let s = render_presence(&PresenceKind::EnteredZone { zone: Zone::Public }, None, 2.0, true);
        assert_eq!(s, "Passerby has entered the zone, 2 meters away, facing you.");
    }

    #[test]
    fn identified_entry_sentence() {
        let s = render_presence(&PresenceKind::EnteredZone { zone: Zone::Public }, Some("Jack"), 2.0, true);
        assert_eq!(s, "Jack has entered the public zone, 2 meters away, facing you.");
    }

    #[test]
    fn exit_and_not_facing_sentences() {
        let left = PresenceKind::LeftZone {
            reason: ExitReason::Timeout,
        };
        assert_eq!(render_presence(&left, Some("Jack"), 3.0, true), "Jack has left the zone.");
        assert_eq!(render_presence(&left, None, 3.0, true), "Passerby has left the zone.");
        let s = render_presence(&PresenceKind::EnteredZone { zone: Zone::Public }, None, 2.4, false);
        assert_eq!(s, "Passerby has entered the zone, 2 meters away, not facing you.");
        let s = render_presence(&PresenceKind::EnteredZone { zone: Zone::Social }, None, 0.9, true);
        assert_eq!(s, "Passerby has entered the zone, 1 meter away, facing you.");
    }

    #[test]
    fn sequence_numbers_start_at_one_and_increase() {
        let mut j = Journal::new();
        assert_eq!(j.append(draft(0, "a")).unwrap(), 1);
        assert_eq!(j.append(draft(0, "b")).unwrap(), 2);
        assert!(matches!(j.append(draft(0, "c")), Ok(3)));
    }

    #[test]
    fn header_is_line_zero() {
        let mut j = Journal::started(0);
        assert_eq!(j.entries()[0].sequence_no, 0);
        assert_eq!(j.append(draft(5, "a")).unwrap(), 1);
    }

    #[test]
    fn timestamp_regression_rejected() {
        let mut j = Journal::new();
        j.append(draft(10, "a")).unwrap();
        assert!(matches!(j.append(draft(9, "b")), Err(JournalError::Ordering { .. })));
        assert_eq!(j.len(), 1);
    }

    #[test]
    fn window_suffix_semantics() {
        let mut j = Journal::new();
        for (i, t) in ["a", "b", "c"].iter().enumerate() {
            j.append(draft(i as Millis, t)).unwrap();
        }
        let w: Vec<_> = j.window(2, &KindFilter::all()).into_iter().map(|e| e.rendered).collect();
        assert_eq!(w, ["b", "c"]);
        assert_eq!(j.window(5, &KindFilter::all()).len(), 3);
        assert!(Journal::new().window(3, &KindFilter::all()).is_empty());
    }

    #[test]
    fn window_filters_kinds_like_brute_force() {
        let mut j = Journal::new();
        let mut log = Vec::new();
        for i in 0..40u64 {
            let d = if i % 3 == 0 {
                JournalDraft::new(
                    i,
                    PASSERBY,
                    format!("p{i}"),
                    JournalPayload::Presence {
                        track_id: TrackId::new("t"),
                        event: PresenceKind::EnteredZone { zone: Zone::Public },
                        zone: Zone::Public,
                        distance: 2.0,
                        facing_offset: 0.0,
                        facing: true,
                        tag_id: None,
                    },
                )
            } else {
                draft(i, &format!("u{i}"))
            };
            log.push(d.clone());
            j.append(d).unwrap();
        }
        let brute: Vec<String> = log
            .iter()
            .filter(|d| d.structured.kind() == JournalKind::Presence)
            .map(|d| d.rendered.clone())
            .collect();
        let brute = brute[brute.len() - 10..].to_vec();
        let got: Vec<String> = j
            .window(10, &KindFilter::only([JournalKind::Presence]))
            .into_iter()
            .map(|e| e.rendered)
            .collect();
        assert_eq!(got, brute);
    }

    #[test]
    fn reload_continues_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("session.jsonl");
        {
            let mut j = Journal::open(&path, 0).unwrap();
            for i in 0..5 {
                j.append(draft(i, "x")).unwrap();
            }
        }
        let mut j = Journal::open(&path, 0).unwrap();
        assert_eq!(j.len(), 6);
        assert_eq!(j.append(draft(10, "y")).unwrap(), 6);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn rendering_is_pure() {
        let k = PresenceKind::MovedZone {
            from: Zone::Public,
            to: Zone::Social,
        };
        assert_eq!(render_presence(&k, Some("Y"), 0.9, true), render_presence(&k, Some("Y"), 0.9, true));
    }
}
