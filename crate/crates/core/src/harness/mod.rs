//! Scenario files, the lockstep runner, session records and replay.

mod random;
mod reference;

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{DittoConfig, PolicyKind};
use crate::conversation::{ExternalResponder, Responder, ScriptedResponder, Topic, Utterance};
use crate::engagement::{EngagementPolicy, LlmPolicy, RulePolicy};
use crate::journal::{Journal, JournalEntry};
use crate::llm::{HttpChatClient, DECISION_URL_ENV, RESPONDER_URL_ENV, SUMMARIZER_URL_ENV};
use crate::memory::{load_context, ExternalSummarizer, MemoryError, MemoryStore, Summarizer, TemplateSummarizer};
use crate::proxemics::{IdentityRegistry, Millis, PersonIdentity, TagId};
use crate::runtime::{DiscardedReply, Engine, EngineError, EngineParts, PromptRecord};
use crate::wire::Inbound;

pub use random::{random_episode, EpisodePlan};
pub use reference::{
    barge_in, jack_walkup, passerby_pair, reference_context, reference_date, reference_scenarios, reference_topics,
    toward_origin, two_day, ScenarioBuilder, JACK_TAG, MAYA_TAG,
};

pub const SCENARIO_FORMAT: &str = "ditto-scenario/1";
pub const RECORD_FORMAT: &str = "ditto-record/1";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("scenario io: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario syntax: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{0} is not set")]
    MissingEnv(&'static str),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// One day of operation: its context document and topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaySetup {
    pub date: NaiveDate,
    /// Logical time at which this day's context takes effect.
    pub start_ms: Millis,
    pub context: serde_json::Value,
    #[serde(default)]
    pub topics: Vec<Topic>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format: String,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub registry: Vec<PersonIdentity>,
    pub days: Vec<DaySetup>,
    /// Scripted responder lines, used in order.
    pub script: Vec<String>,
    #[serde(default)]
    pub timeline: Vec<Inbound>,
    /// Logical end time. Defaults to the last event plus the drain period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_ms: Option<Millis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidScenario(m));
        if self.format != SCENARIO_FORMAT {
            return bad(format!("format must be {SCENARIO_FORMAT:?}, got {:?}", self.format));
        }
        if self.name.trim().is_empty() {
            return bad("name must be nonempty".into());
        }
        if self.script.is_empty() {
            return bad("script must have at least one line".into());
        }
        let registry = self.registry()?;
        let Some(first) = self.days.first() else {
            return bad("at least one day is required".into());
        };
        for pair in self.days.windows(2) {
            if pair[1].date <= pair[0].date || pair[1].start_ms < pair[0].start_ms {
                return bad(format!("day {} is out of order", pair[1].date));
            }
        }
        for day in &self.days {
            load_context(&day.context.to_string())
                .map_err(|e| HarnessError::InvalidScenario(format!("context for {}: {e}", day.date)))?;
        }
        let mut last = first.start_ms;
        for (i, msg) in self.timeline.iter().enumerate() {
            msg.validate()
                .map_err(|e| HarnessError::InvalidScenario(format!("event {i}: {}", e.detail)))?;
            let Some(ts) = msg.ts() else {
                return bad(format!("event {i}: timestamp required"));
            };
            if ts < last {
                return bad(format!("event {i}: timestamp {ts} ms precedes {last} ms"));
            }
            last = ts;
            if let Inbound::Tag { tag_id, .. } = msg {
                if !registry.contains(&TagId::new(tag_id.clone())) {
                    return bad(format!("event {i}: tag {tag_id:?} is not registered"));
                }
            }
        }
        if let Some(end) = self.end_ms {
            if end < last {
                return bad(format!("end_ms {end} precedes the last event"));
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> Result<IdentityRegistry, HarnessError> {
        IdentityRegistry::new(self.registry.iter().cloned()).map_err(|e| HarnessError::InvalidScenario(e.to_string()))
    }

    fn end(&self, config: &DittoConfig) -> Millis {
        let last = self.timeline.iter().filter_map(Inbound::ts).max().unwrap_or(self.days[0].start_ms);
        self.end_ms.unwrap_or(last + config.simulation.drain_ms)
    }
}

/// Which responder drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResponderKind {
    #[default]
    Scripted,
    External,
}

/// The pluggable services an engine calls out to.
pub struct Services {
    pub policy: Box<dyn EngagementPolicy>,
    pub responder: Box<dyn Responder>,
    pub summarizer: Box<dyn Summarizer>,
}

impl Services {
    /// Rule policy, scripted responder, template summarizer.
    pub fn scripted(scenario: &Scenario) -> Result<Self, HarnessError> {
        let responder = ScriptedResponder::new(scenario.script.clone())
            .map_err(|e| HarnessError::InvalidScenario(e.to_string()))?;
        Ok(Self {
            policy: Box::new(RulePolicy),
            responder: Box::new(responder),
            summarizer: Box::new(TemplateSummarizer),
        })
    }

    /// Services chosen by the config and the responder flag. External
    /// endpoints come from the environment.
    pub fn from_config(config: &DittoConfig, scenario: &Scenario, kind: ResponderKind) -> Result<Self, HarnessError> {
        let mut s = Self::scripted(scenario)?;
        let decision_timeout = std::time::Duration::from_millis(config.engagement.decision_timeout_ms);
        let response_timeout = std::time::Duration::from_millis(config.conversation.response_timeout_ms);
        if config.engagement.policy == PolicyKind::Llm {
            let client = HttpChatClient::from_env(DECISION_URL_ENV, decision_timeout)
                .ok_or(HarnessError::MissingEnv(DECISION_URL_ENV))?;
            s.policy = Box::new(LlmPolicy::new(Box::new(client)));
        }
        if kind == ResponderKind::External {
            let client = HttpChatClient::from_env(RESPONDER_URL_ENV, response_timeout)
                .ok_or(HarnessError::MissingEnv(RESPONDER_URL_ENV))?;
            s.responder = Box::new(ExternalResponder::new(Box::new(client)));
            if let Some(client) = HttpChatClient::from_env(SUMMARIZER_URL_ENV, response_timeout) {
                s.summarizer = Box::new(ExternalSummarizer::new(Box::new(client)));
            }
        }
        Ok(s)
    }
}

/// An input the engine refused during a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedInput {
    pub index: usize,
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub format: String,
    pub scenario: Scenario,
    pub config: DittoConfig,
    pub config_fingerprint: String,
    pub responder: String,
    pub policy: String,
    pub journal: Vec<JournalEntry>,
    pub transcript: Vec<Utterance>,
    pub memory: MemoryStore,
    pub prompts: Vec<PromptRecord>,
    pub discarded_replies: Vec<DiscardedReply>,
    pub rejected: Vec<RejectedInput>,
    pub journal_hash: String,
    pub transcript_hash: String,
    pub record_hash: String,
}

fn sha256_json<T: Serialize + ?Sized>(value: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(value).expect("serializable")))
}

pub fn journal_hash(journal: &[JournalEntry]) -> String {
    let mut h = Sha256::new();
    for e in journal {
        h.update(serde_json::to_vec(e).expect("serializable"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn transcript_hash(transcript: &[Utterance]) -> String {
    sha256_json(transcript)
}

impl SessionRecord {
    /// Hash over everything except the stored hashes themselves.
    pub fn compute_hash(&self) -> String {
        let mut body = self.clone();
        body.journal_hash.clear();
        body.transcript_hash.clear();
        body.record_hash.clear();
        sha256_json(&body)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let r: SessionRecord = serde_json::from_str(text)?;
        if r.format != RECORD_FORMAT {
            return Err(HarnessError::InvalidScenario(format!("record format {:?}", r.format)));
        }
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Journal entries as session-file lines.
    pub fn journal_lines(&self) -> Vec<String> {
        self.journal.iter().map(|e| serde_json::to_string(e).expect("serializable")).collect()
    }
}

/// An engine set up with a scenario's registry, first day and script,
/// ignoring its timeline.
pub fn build_engine(
    scenario: &Scenario,
    config: &DittoConfig,
    services: Services,
    journal: Journal,
) -> Result<Engine, HarnessError> {
    let first = scenario
        .days
        .first()
        .ok_or_else(|| HarnessError::InvalidScenario("at least one day is required".into()))?;
    Ok(Engine::new(EngineParts {
        config: config.clone(),
        registry: scenario.registry()?,
        context: load_context(&first.context.to_string())?,
        topics: first.topics.clone(),
        date: Some(first.date),
        start: first.start_ms,
        journal,
        memory: MemoryStore::new(),
        policy: services.policy,
        responder: services.responder,
        summarizer: services.summarizer,
    }))
}

/// Runs a scenario with the scripted services.
pub fn run_scenario(scenario: &Scenario, config: &DittoConfig) -> Result<SessionRecord, HarnessError> {
    run_with(scenario, config, Services::scripted(scenario)?)
}

/// Runs a scenario in lockstep: the clock moves only to event timestamps,
/// day boundaries and the end time.
pub fn run_with(scenario: &Scenario, config: &DittoConfig, services: Services) -> Result<SessionRecord, HarnessError> {
    scenario.validate()?;
    config.validate().map_err(|e| HarnessError::InvalidScenario(e.to_string()))?;
    let responder = services.responder.name().to_owned();
    let policy = services.policy.name().to_owned();
    let mut engine = build_engine(scenario, config, services, Journal::started(scenario.days[0].start_ms))?;
    let mut next_day = 1;
    let mut rejected = Vec::new();
    let rotate_until = |engine: &mut Engine, next_day: &mut usize, t: Millis| -> Result<(), HarnessError> {
        while let Some(day) = scenario.days.get(*next_day).filter(|d| d.start_ms <= t) {
            engine.advance_to(day.start_ms)?;
            engine.rotate_day(&day.context.to_string(), day.date, day.topics.clone())?;
            *next_day += 1;
        }
        Ok(())
    };
    for (index, msg) in scenario.timeline.iter().enumerate() {
        let ts = msg.ts().expect("validated");
        rotate_until(&mut engine, &mut next_day, ts)?;
        if let Err(e) = engine.submit(msg.clone()) {
            rejected.push(RejectedInput {
                index,
                code: e.code().to_owned(),
                detail: e.to_string(),
            });
        }
    }
    let end = scenario.end(config);
    rotate_until(&mut engine, &mut next_day, end)?;
    engine.advance_to(end)?;
    let (journal, transcript, memory, prompts, discarded) = engine.into_parts();
    let journal = journal.into_entries();
    let mut record = SessionRecord {
        format: RECORD_FORMAT.to_owned(),
        scenario: scenario.clone(),
        config: config.clone(),
        config_fingerprint: config.fingerprint(),
        responder,
        policy,
        journal_hash: journal_hash(&journal),
        transcript_hash: transcript_hash(&transcript),
        journal,
        transcript,
        memory,
        prompts,
        discarded_replies: discarded,
        rejected,
        record_hash: String::new(),
    };
    record.record_hash = record.compute_hash();
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum Divergence {
    Journal { sequence_no: u64 },
    JournalLength { recorded: usize, replayed: usize },
    Transcript { index: usize },
    TranscriptLength { recorded: usize, replayed: usize },
    Memory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ReplayVerdict {
    Pass,
    Fail { divergence: Divergence },
    ConfigMismatch { recorded: String, current: String },
    /// The record used a service that cannot be re-run offline.
    NotReplayable { reason: String },
}

impl ReplayVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, ReplayVerdict::Pass)
    }
}

/// Re-runs a record's scenario and compares the output with what was
/// recorded. `current` is the configuration of the running build.
pub fn replay(record: &SessionRecord, current: &DittoConfig) -> Result<ReplayVerdict, HarnessError> {
    let now = current.fingerprint();
    if record.config_fingerprint != now || record.config.fingerprint() != now {
        return Ok(ReplayVerdict::ConfigMismatch {
            recorded: record.config_fingerprint.clone(),
            current: now,
        });
    }
    if record.responder != "scripted" || record.policy != "rule" {
        return Ok(ReplayVerdict::NotReplayable {
            reason: format!("recorded with {} responder and {} policy", record.responder, record.policy),
        });
    }
    let fresh = run_scenario(&record.scenario, current)?;
    Ok(compare(record, &fresh))
}

fn compare(recorded: &SessionRecord, fresh: &SessionRecord) -> ReplayVerdict {
    let fail = |divergence| ReplayVerdict::Fail { divergence };
    for (a, b) in recorded.journal.iter().zip(&fresh.journal) {
        if sha256_json(a) != sha256_json(b) {
            return fail(Divergence::Journal {
                sequence_no: a.sequence_no.min(b.sequence_no),
            });
        }
    }
    if recorded.journal.len() != fresh.journal.len() {
        return fail(Divergence::JournalLength {
            recorded: recorded.journal.len(),
            replayed: fresh.journal.len(),
        });
    }
    for (i, (a, b)) in recorded.transcript.iter().zip(&fresh.transcript).enumerate() {
        if a != b {
            return fail(Divergence::Transcript { index: i });
        }
    }
    if recorded.transcript.len() != fresh.transcript.len() {
        return fail(Divergence::TranscriptLength {
            recorded: recorded.transcript.len(),
            replayed: fresh.transcript.len(),
        });
    }
    if recorded.memory != fresh.memory {
        return fail(Divergence::Memory);
    }
    ReplayVerdict::Pass
}

#[cfg(test)]
mod tests {
    use super::*;

    fn null_scenario() -> Scenario {
        ScenarioBuilder::new("null").build()
    }

    #[test]
    fn empty_timeline_journals_only_the_header() {
        let r = run_scenario(&null_scenario(), &DittoConfig::default()).unwrap();
        assert_eq!(r.journal.len(), 1);
        assert_eq!(r.journal[0].sequence_no, 0);
        assert_eq!(r.journal[0].rendered, "The Ditto is reading a book.");
        assert!(r.transcript.is_empty());
    }

    #[test]
    fn invalid_timelines_are_rejected_up_front() {
        let mut s = ScenarioBuilder::new("bad").walk("p", 1000, (2.0, 0.0), 180.0).build();
        s.timeline.push(Inbound::Tick { ts: 500 });
        assert!(matches!(s.validate(), Err(HarnessError::InvalidScenario(_))));

        let s = ScenarioBuilder::new("tag").tag("nobody", Some("p"), 10).build();
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("not registered"), "{err}");

        let mut s = null_scenario();
        s.script.clear();
        assert!(s.validate().is_err());

        let mut s = null_scenario();
        s.format = "other/9".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn scenario_json_round_trips() {
        let s = jack_walkup();
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn record_hash_covers_content() {
        let r = run_scenario(&jack_walkup(), &DittoConfig::default()).unwrap();
        assert_eq!(r.compute_hash(), r.record_hash);
        let mut t = r.clone();
        t.journal[3].rendered.push('!');
        assert_ne!(t.compute_hash(), r.record_hash);
    }

    #[test]
    fn replay_verdicts() {
        let cfg = DittoConfig::default();
        let r = run_scenario(&jack_walkup(), &cfg).unwrap();
        assert_eq!(replay(&r, &cfg).unwrap(), ReplayVerdict::Pass);

        let mut tampered = r.clone();
        tampered.journal[4].rendered = "Someone else entirely.".into();
        assert_eq!(
            replay(&tampered, &cfg).unwrap(),
            ReplayVerdict::Fail {
                divergence: Divergence::Journal { sequence_no: 4 }
            }
        );

        let mut other = cfg.clone();
        other.zones.social_max = 1.0;
        assert!(matches!(replay(&r, &other).unwrap(), ReplayVerdict::ConfigMismatch { .. }));
    }
}
