//! Drives the pure `step` function with a logical clock.
//!
//! Inputs arrive in timestamp order. Before an input at time `t` is handled,
//! every timer due at or before `t` fires, so the engine's behavior depends
//! only on the input sequence and never on wall time.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DittoConfig;
use crate::conversation::{
    assemble_prompt, choose_topic, Addressee, AgentVoice, Delivery, Responder, SpeechFragment, SpokenLine, Topic,
    Utterance, UtteranceAssembler, UtterancePurpose,
};
use crate::engagement::{
    step, BehaviorCue, CandidateFeatures, EngagementPolicy, EngineEvent, EngineState, Effect, StepContext,
};
use crate::journal::{
    render_agent_utterance, Journal, JournalDraft, JournalEntry, JournalError, JournalPayload, KindFilter, PASSERBY,
    SYSTEM_SUBJECT,
};
use crate::memory::{summarize_episode, ActiveContext, EpisodeInput, MemoryError, MemoryStore, Summarizer, UserContext};
use crate::proxemics::{
    IdentityFusion, IdentityRegistry, Millis, PersonIdentity, PresenceTracker, ProxemicObservation, ProxemicsError,
    TagId, TagSighting, TrackId,
};
use crate::wire::{Inbound, Outbound, StateView, SummaryView, TrackView};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("event at {ts} ms is older than the engine clock ({clock} ms)")]
    OutOfOrder { ts: Millis, clock: Millis },
    #[error(transparent)]
    Proxemics(#[from] ProxemicsError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::OutOfOrder { .. } => "out_of_order",
            EngineError::Proxemics(ProxemicsError::UnregisteredTag(_)) => "unregistered_tag",
            EngineError::Proxemics(_) => "invalid_observation",
            EngineError::Journal(_) => "journal",
            EngineError::Memory(_) => "memory",
        }
    }
}

/// A prompt handed to the responder, kept for inspection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub ts: Millis,
    pub generation: u64,
    pub purpose: UtterancePurpose,
    pub addressee: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    pub system_text: String,
}

/// A responder reply that arrived after its generation was superseded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardedReply {
    pub ts: Millis,
    pub generation: u64,
    pub purpose: UtterancePurpose,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BargeIn {
    /// When the user's speech arrived.
    pub speech_ts: Millis,
    /// When the agent line was marked interrupted.
    pub interrupted_at: Millis,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Timer {
    Expiry(TrackId),
    Silence(TrackId),
    Dwell(TrackId, Millis),
    Reply {
        generation: u64,
        purpose: UtterancePurpose,
        text: String,
    },
    SpeechEnd {
        generation: u64,
        started: Millis,
    },
    Periodic,
}

#[derive(Debug, Clone)]
struct Episode {
    transcript: Vec<Utterance>,
    topic: Option<Topic>,
    warned_context: bool,
}

/// Everything an engine is built from.
pub struct EngineParts {
    pub config: DittoConfig,
    pub registry: IdentityRegistry,
    pub context: UserContext,
    pub topics: Vec<Topic>,
    pub date: Option<NaiveDate>,
    pub start: Millis,
    pub journal: Journal,
    pub memory: MemoryStore,
    pub policy: Box<dyn EngagementPolicy>,
    pub responder: Box<dyn Responder>,
    pub summarizer: Box<dyn Summarizer>,
}

pub struct Engine {
    config: DittoConfig,
    clock: Millis,
    tracker: PresenceTracker,
    fusion: IdentityFusion,
    registry: IdentityRegistry,
    journal: Journal,
    state: EngineState,
    policy: Box<dyn EngagementPolicy>,
    responder: Box<dyn Responder>,
    summarizer: Box<dyn Summarizer>,
    memory: MemoryStore,
    context: ActiveContext,
    topics: Vec<Topic>,
    date: Option<NaiveDate>,
    assembler: UtteranceAssembler,
    voice: AgentVoice,
    cue: BehaviorCue,
    accepting: bool,
    timers: BTreeMap<(Millis, u64), Timer>,
    timer_seq: u64,
    episode: Option<Episode>,
    transcript: Vec<Utterance>,
    prompts: Vec<PromptRecord>,
    discarded: Vec<DiscardedReply>,
    barge_ins: Vec<BargeIn>,
    summaries: Vec<SummaryView>,
    recently_disengaged: BTreeSet<TrackId>,
    outbound: Vec<Outbound>,
    last_state: Option<StateView>,
}

impl Engine {
    pub fn new(parts: EngineParts) -> Self {
        let EngineParts {
            config,
            registry,
            context,
            topics,
            date,
            start,
            journal,
            memory,
            policy,
            responder,
            summarizer,
        } = parts;
        let mut engine = Self {
            tracker: PresenceTracker::new(config.zones.clone()),
            fusion: IdentityFusion::new(config.fusion.window_ms, config.fusion.receiver()),
            assembler: UtteranceAssembler::new(config.conversation.silence_window_ms),
            voice: AgentVoice::new(config.conversation.ms_per_word),
            clock: start.max(journal.last_timestamp().unwrap_or(start)),
            registry,
            journal,
            state: EngineState::default(),
            policy,
            responder,
            summarizer,
            memory,
            context: ActiveContext::new(context),
            topics,
            date,
            cue: BehaviorCue::IdleReading,
            accepting: true,
            timers: BTreeMap::new(),
            timer_seq: 0,
            episode: None,
            transcript: Vec::new(),
            prompts: Vec::new(),
            discarded: Vec::new(),
            barge_ins: Vec::new(),
            summaries: Vec::new(),
            recently_disengaged: BTreeSet::new(),
            outbound: Vec::new(),
            last_state: None,
            config,
        };
        let first = engine.clock + engine.config.engagement.check_interval_ms;
        engine.schedule(first, Timer::Periodic);
        engine
    }

    pub fn clock(&self) -> Millis {
        self.clock
    }

    pub fn config(&self) -> &DittoConfig {
        &self.config
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn cue(&self) -> BehaviorCue {
        self.cue
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn transcript(&self) -> &[Utterance] {
        &self.transcript
    }

    pub fn memory(&self) -> &MemoryStore {
        &self.memory
    }

    pub fn context(&self) -> &UserContext {
        self.context.get()
    }

    pub fn prompts(&self) -> &[PromptRecord] {
        &self.prompts
    }

    pub fn discarded_replies(&self) -> &[DiscardedReply] {
        &self.discarded
    }

    pub fn barge_ins(&self) -> &[BargeIn] {
        &self.barge_ins
    }

    pub fn summaries(&self) -> &[SummaryView] {
        &self.summaries
    }

    pub fn registry(&self) -> &IdentityRegistry {
        &self.registry
    }

    pub fn tracked(&self) -> impl Iterator<Item = &TrackId> {
        self.tracker.tracks().map(|(t, _)| t)
    }

    /// Latest pose of every live track, for heartbeat re-observation.
    pub fn latest_observations(&self) -> Vec<ProxemicObservation> {
        self.tracker.tracks().map(|(_, s)| s.last.clone()).collect()
    }

    pub fn take_outbound(&mut self) -> Vec<Outbound> {
        std::mem::take(&mut self.outbound)
    }

    pub fn into_parts(self) -> (Journal, Vec<Utterance>, MemoryStore, Vec<PromptRecord>, Vec<DiscardedReply>) {
        (self.journal, self.transcript, self.memory, self.prompts, self.discarded)
    }

    pub fn snapshot(&self) -> Outbound {
        Outbound::Snapshot {
            state: self.state_view(),
            journal: self.journal.entries().to_vec(),
            transcript: self.transcript.clone(),
            summaries: self.summaries.clone(),
        }
    }

    /// Handles one inbound message. Messages without a timestamp happen at
    /// the current clock.
    pub fn submit(&mut self, msg: Inbound) -> Result<(), EngineError> {
        let ts = msg.ts().unwrap_or(self.clock);
        if ts < self.clock {
            return Err(EngineError::OutOfOrder { ts, clock: self.clock });
        }
        self.advance_to(ts)?;
        let result = match msg {
            Inbound::Move {
                track_id,
                x,
                y,
                facing_deg,
                ts,
            } => self.on_move(TrackId::new(track_id), x, y, facing_deg, ts),
            Inbound::Tag {
                tag_id,
                track_id,
                present,
                ts,
            } => self.on_tag(
                TagSighting {
                    tag_id: TagId::new(tag_id),
                    timestamp: ts,
                    present,
                    track_hint: track_id.map(TrackId::new),
                },
            ),
            Inbound::Speech {
                track_id,
                text,
                is_final,
                ts,
            } => self.on_speech(SpeechFragment {
                track_id: TrackId::new(track_id),
                text,
                is_final,
                timestamp: ts,
            }),
            Inbound::Control { action, .. } => self.dispatch(EngineEvent::Control(action), None),
            Inbound::Tick { .. } => Ok(()),
        };
        self.emit_state();
        result
    }

    /// Fires every timer due at or before `t`, then sets the clock to `t`.
    pub fn advance_to(&mut self, t: Millis) -> Result<(), EngineError> {
        while let Some((&(at, seq), _)) = self.timers.first_key_value() {
            if at > t {
                break;
            }
            let timer = self.timers.remove(&(at, seq)).expect("key just read");
            self.clock = self.clock.max(at);
            self.fire(timer, at)?;
            self.emit_state();
        }
        self.clock = self.clock.max(t);
        Ok(())
    }

    /// Replaces the daily context and topics. An invalid document keeps the
    /// current day in place.
    pub fn rotate_day(&mut self, document: &str, date: NaiveDate, topics: Vec<Topic>) -> Result<(), EngineError> {
        match self.context.rotate_daily(document, date) {
            Ok(_) => {
                self.topics = topics;
                self.date = Some(date);
                self.append(JournalDraft::new(
                    self.clock,
                    SYSTEM_SUBJECT,
                    format!("A new day has started: {date}."),
                    JournalPayload::Control {
                        action: format!("new_day:{date}"),
                    },
                ))?;
                Ok(())
            }
            Err(e) => {
                self.append(JournalDraft::warning(self.clock, "context_rotation", e.to_string()))?;
                Err(e.into())
            }
        }
    }

    pub fn state_view(&self) -> StateView {
        let mut tracks: Vec<TrackView> = self
            .tracker
            .tracks()
            .map(|(t, s)| TrackView {
                track_id: t.0.clone(),
                x: s.last.position.x,
                y: s.last.position.y,
                distance: s.last.distance,
                facing_offset: s.last.facing_offset,
                zone: s.zone,
                name: self.identity_of(t).map(|p| p.name),
            })
            .collect();
        tracks.sort_by(|a, b| a.track_id.cmp(&b.track_id));
        StateView {
            mode: self.state.mode,
            engaged: self.state.engaged_track.as_ref().map(|t| t.0.clone()),
            engaged_name: self.state.engaged_identity.as_ref().map(|p| p.name.clone()),
            turn_count: self.state.turn_count,
            behavior_cue: self.cue,
            accepting: self.accepting,
            ts: self.clock,
            tracks,
        }
    }

    fn emit_state(&mut self) {
        let view = self.state_view();
        let same = self.last_state.as_ref().is_some_and(|last| {
            let mut l = last.clone();
            l.ts = view.ts;
            l == view
        });
        if !same {
            self.outbound.push(Outbound::State(view.clone()));
            self.last_state = Some(view);
        }
    }

    fn schedule(&mut self, at: Millis, timer: Timer) {
        self.timer_seq += 1;
        self.timers.insert((at, self.timer_seq), timer);
    }

    fn identity_of(&self, track: &TrackId) -> Option<PersonIdentity> {
        self.fusion.tag_of(track).and_then(|tag| self.registry.get(tag)).cloned()
    }

    fn append(&mut self, draft: JournalDraft) -> Result<(), EngineError> {
        self.journal.append(draft)?;
        let entry = self.journal.entries().last().expect("just appended").clone();
        self.outbound.push(Outbound::Journal { entry });
        Ok(())
    }

    fn step_context(&self) -> StepContext {
        let now = self.clock;
        let mut identities = BTreeMap::new();
        let candidates = self
            .tracker
            .tracks()
            .filter(|(_, s)| s.zone.is_inside())
            .map(|(t, s)| {
                let identity = self.identity_of(t);
                if let Some(p) = &identity {
                    identities.insert(t.clone(), p.clone());
                }
                CandidateFeatures {
                    track_id: t.clone(),
                    name: identity.map(|p| p.name),
                    distance: s.last.distance,
                    zone: s.zone,
                    facing_offset: s.last.facing_offset,
                    dwell_ms: s.dwell(now),
                    recently_disengaged: self.recently_disengaged.contains(t),
                }
            })
            .collect();
        StepContext {
            config: self.config.zones.clone(),
            journal_window: self.journal.window(self.config.journal.policy_window, &KindFilter::all()),
            next_sequence_no: self.journal.next_sequence_no(),
            window_size: self.config.journal.policy_window,
            candidates,
            identities,
            busy: self.voice.is_busy(),
            accepting: self.accepting,
        }
    }

    fn dispatch(&mut self, event: EngineEvent, user: Option<Utterance>) -> Result<(), EngineError> {
        let ctx = self.step_context();
        let prev = self.state.clone();
        let t = step(&prev, &event, &ctx, self.policy.as_mut(), self.clock);
        if !prev.is_engaged() && t.state.is_engaged() {
            let name = t.state.engaged_identity.as_ref().map(|p| p.name.clone());
            let recall = self.memory.recall(name.as_deref());
            self.episode = Some(Episode {
                transcript: Vec::new(),
                topic: choose_topic(&self.topics, &recall).cloned(),
                warned_context: false,
            });
        }
        if let Some(u) = user {
            let engaged = [&prev.engaged_track, &t.state.engaged_track];
            if engaged.iter().any(|e| e.as_ref() == u.track_id.as_ref()) {
                if let Some(ep) = self.episode.as_mut() {
                    ep.transcript.push(u);
                }
            }
        }
        self.state = t.state;
        for effect in t.effects {
            self.apply(effect)?;
        }
        Ok(())
    }

    fn apply(&mut self, effect: Effect) -> Result<(), EngineError> {
        match effect {
            Effect::Journal(d) => self.append(d)?,
            Effect::RequestReply { purpose } => self.request_reply(purpose)?,
            Effect::Speak { text, purpose } => {
                if let Delivery::Started(line) = self.voice.say(text, purpose, self.clock) {
                    self.start_line(line);
                }
            }
            Effect::Cue(c) => self.cue = c,
            Effect::Summarize {
                track_id,
                identity,
                turn_count,
                ..
            } => self.end_episode(track_id, identity, turn_count)?,
            Effect::SetAccepting(on) => self.accepting = on,
            Effect::Error { code, detail } => self.outbound.push(Outbound::error(&code, detail)),
        }
        Ok(())
    }

    fn request_reply(&mut self, purpose: UtterancePurpose) -> Result<(), EngineError> {
        let now = self.clock;
        let addressee = match &self.state.engaged_identity {
            Some(p) => Addressee::Tagged(p.clone()),
            None => Addressee::Passerby,
        };
        let memory = self.memory.recall(addressee.name());
        let Some(ep) = self.episode.as_mut() else {
            return Ok(());
        };
        let (bundle, warning) =
            assemble_prompt(self.context.get(), &memory, &ep.transcript, ep.topic.as_ref(), &addressee, purpose);
        let topic = ep.topic.as_ref().map(|t| t.title.clone());
        let warn_now = warning.filter(|_| !ep.warned_context);
        if warn_now.is_some() {
            ep.warned_context = true;
        }
        if let Some(w) = warn_now {
            self.append(JournalDraft::warning(now, "missing_context", w))?;
        }
        let generation = self.voice.request();
        self.prompts.push(PromptRecord {
            ts: now,
            generation,
            purpose,
            addressee: bundle.addressee.clone(),
            person: addressee.name().map(str::to_owned),
            topic,
            system_text: bundle.system_text.clone(),
        });
        let reply = self.responder.respond(&bundle);
        if let Some(w) = &reply.warning {
            self.append(JournalDraft::warning(now, "responder", w.clone()))?;
        }
        let latency = reply.latency_ms.unwrap_or(self.config.conversation.reply_latency_ms);
        self.schedule(
            now + latency,
            Timer::Reply {
                generation,
                purpose,
                text: reply.text,
            },
        );
        Ok(())
    }

    fn start_line(&mut self, line: SpokenLine) {
        if line.purpose != UtterancePurpose::Farewell && self.state.is_engaged() {
            self.cue = if line.purpose == UtterancePurpose::Greeting {
                BehaviorCue::Greeting
            } else {
                BehaviorCue::Speaking
            };
        }
        self.schedule(
            line.ends_at,
            Timer::SpeechEnd {
                generation: line.generation,
                started: line.started,
            },
        );
        self.outbound.push(Outbound::Utterance {
            speaker: crate::conversation::Speaker::Agent,
            text: line.text,
            interrupted: false,
            ts: line.started,
            purpose: Some(line.purpose),
            track_id: None,
        });
    }

    fn record_agent_line(&mut self, line: SpokenLine, interrupted: bool, at: Millis) -> Result<(), EngineError> {
        let u = Utterance::agent(line.text.clone(), line.started, at, interrupted);
        self.transcript.push(u.clone());
        if let Some(ep) = self.episode.as_mut() {
            ep.transcript.push(u);
        }
        self.append(JournalDraft::new(
            at,
            SYSTEM_SUBJECT,
            render_agent_utterance(&line.text, interrupted),
            JournalPayload::AgentUtterance {
                text: line.text.clone(),
                interrupted,
                generation: line.generation,
                purpose: line.purpose,
            },
        ))?;
        if interrupted {
            self.outbound.push(Outbound::Utterance {
                speaker: crate::conversation::Speaker::Agent,
                text: line.text,
                interrupted: true,
                ts: at,
                purpose: Some(line.purpose),
                track_id: None,
            });
        }
        Ok(())
    }

    fn end_episode(
        &mut self,
        track: TrackId,
        identity: Option<PersonIdentity>,
        turn_count: u32,
    ) -> Result<(), EngineError> {
        let now = self.clock;
        if let Some(line) = self.voice.cancel_all(now).line {
            self.record_agent_line(line, true, now)?;
        }
        if self.tracker.zone_of(&track).is_inside() {
            self.recently_disengaged.insert(track);
        }
        let Some(ep) = self.episode.take() else {
            return Ok(());
        };
        let mut names: Vec<String> = self.registry.iter().map(|p| p.name.clone()).collect();
        names.extend(self.context.get().names().map(str::to_owned));
        let input = EpisodeInput {
            addressee: identity.as_ref().map(|p| p.name.as_str()),
            transcript: &ep.transcript,
            turn_count,
            topic: ep.topic.as_ref(),
            excluded_names: &names,
        };
        let Some(outcome) = summarize_episode(&input, self.summarizer.as_mut()) else {
            return Ok(());
        };
        if let Some(w) = &outcome.warning {
            self.append(JournalDraft::warning(now, "summarizer", w.clone()))?;
        }
        let (subject, text) = match &identity {
            Some(p) => {
                self.memory
                    .store_person(&p.name, self.date, outcome.text.clone(), now, outcome.warning.is_some());
                (p.name.clone(), outcome.text)
            }
            None => (
                PASSERBY.to_owned(),
                self.memory.store_general(&outcome.text, names.iter().map(String::as_str)),
            ),
        };
        self.append(JournalDraft::new(
            now,
            subject.clone(),
            format!("You saved a summary of your conversation with {}: {text}", identity.as_ref().map_or("a passerby", |p| &p.name)),
            JournalPayload::SummaryWritten {
                person: identity.map(|p| p.name),
                text: text.clone(),
            },
        ))?;
        self.outbound.push(Outbound::Summary {
            subject: subject.clone(),
            text: text.clone(),
        });
        self.summaries.push(SummaryView { subject, text });
        Ok(())
    }

    fn fire(&mut self, timer: Timer, at: Millis) -> Result<(), EngineError> {
        match timer {
            Timer::Periodic => {
                self.dispatch(EngineEvent::PeriodicTick, None)?;
                self.schedule(at + self.config.engagement.check_interval_ms, Timer::Periodic);
            }
            Timer::Expiry(track) => {
                if self.tracker.expiry_deadline(&track) != Some(at) {
                    return Ok(());
                }
                let identity = self.identity_of(&track);
                let event = self.tracker.expire_track(&track, at);
                self.fusion.on_track_exit(&track, at);
                self.assembler.discard(&track);
                self.recently_disengaged.remove(&track);
                if let Some(event) = event {
                    self.dispatch(EngineEvent::Presence { event, identity }, None)?;
                }
            }
            Timer::Silence(_) => {
                for u in self.assembler.flush_due(at) {
                    self.handle_user_utterance(u)?;
                }
            }
            Timer::Dwell(track, since) => {
                let holds = self
                    .tracker
                    .status(&track)
                    .is_some_and(|s| s.condition_since == since && s.zone.is_inside());
                if holds {
                    self.dispatch(EngineEvent::DwellElapsed { track_id: track }, None)?;
                }
            }
            Timer::Reply {
                generation,
                purpose,
                text,
            } => match self.voice.deliver(generation, text.clone(), purpose, at) {
                Delivery::Started(line) => self.start_line(line),
                Delivery::Queued => {}
                Delivery::Discarded => self.discarded.push(DiscardedReply {
                    ts: at,
                    generation,
                    purpose,
                    text,
                }),
            },
            Timer::SpeechEnd { generation, started } => {
                let current = self
                    .voice
                    .speaking()
                    .is_some_and(|l| l.generation == generation && l.started == started);
                if !current {
                    return Ok(());
                }
                if let Some((done, next)) = self.voice.finish(at) {
                    let purpose = done.purpose;
                    self.record_agent_line(done, false, at)?;
                    match next {
                        Some(line) => self.start_line(line),
                        None if self.state.is_engaged() => self.cue = BehaviorCue::Listening,
                        None => {}
                    }
                    self.dispatch(EngineEvent::ReplyCompleted { purpose }, None)?;
                }
            }
        }
        Ok(())
    }

    fn on_move(&mut self, track: TrackId, x: f64, y: f64, facing: f64, ts: Millis) -> Result<(), EngineError> {
        let was_inside = self.tracker.zone_of(&track).is_inside();
        let obs = ProxemicObservation::from_pose(track.clone(), ts, x, y, facing)?;
        let events = self.tracker.observe(obs)?;
        self.schedule(ts + self.config.zones.track_timeout, Timer::Expiry(track.clone()));
        let latest = self.latest_observations();
        for a in self.fusion.resolve_pending(ts, latest.iter()) {
            let Some(identity) = self.registry.get(&a.tag_id).cloned() else {
                continue;
            };
            let inside = self.tracker.zone_of(&a.track_id).is_inside() && (a.track_id != track || was_inside);
            self.dispatch(
                EngineEvent::IdentityResolved {
                    track_id: a.track_id,
                    identity,
                    inside,
                },
                None,
            )?;
        }
        for event in events {
            if event.is_exit() {
                self.recently_disengaged.remove(&track);
            }
            let identity = self.identity_of(&track);
            self.dispatch(EngineEvent::Presence { event, identity }, None)?;
        }
        let dwell_from = self
            .tracker
            .status(&track)
            .filter(|s| s.zone.is_inside() && s.condition_since == ts)
            .map(|s| s.condition_since);
        if let Some(since) = dwell_from {
            self.schedule(since + self.config.zones.dwell_to_engage, Timer::Dwell(track, since));
        }
        Ok(())
    }

    fn on_tag(&mut self, sighting: TagSighting) -> Result<(), EngineError> {
        let latest = self.latest_observations();
        let made = match self.fusion.on_sighting(&sighting, &self.registry, latest.iter()) {
            Ok(made) => made,
            Err(e) => {
                self.append(JournalDraft::warning(self.clock, "unregistered_tag", e.to_string()))?;
                return Err(e.into());
            }
        };
        if let Some(a) = made {
            let identity = self.registry.get(&a.tag_id).cloned().expect("registry checked by fusion");
            let inside = self.tracker.zone_of(&a.track_id).is_inside();
            self.dispatch(
                EngineEvent::IdentityResolved {
                    track_id: a.track_id,
                    identity,
                    inside,
                },
                None,
            )?;
        }
        Ok(())
    }

    fn on_speech(&mut self, fragment: SpeechFragment) -> Result<(), EngineError> {
        let ts = fragment.timestamp;
        let track = fragment.track_id.clone();
        if self.state.engaged_track.as_ref() == Some(&track) {
            if let Some(line) = self.voice.barge_in(ts).line {
                self.barge_ins.push(BargeIn {
                    speech_ts: ts,
                    interrupted_at: self.clock,
                    text: line.text.clone(),
                });
                self.record_agent_line(line, true, ts)?;
                self.cue = BehaviorCue::Listening;
            }
        }
        for u in self.assembler.push(fragment) {
            self.handle_user_utterance(u)?;
        }
        if let Some(deadline) = self.assembler.deadline(&track) {
            self.schedule(deadline, Timer::Silence(track));
        }
        Ok(())
    }

    fn handle_user_utterance(&mut self, u: Utterance) -> Result<(), EngineError> {
        let Some(track) = u.track_id.clone() else {
            return Ok(());
        };
        self.transcript.push(u.clone());
        self.outbound.push(Outbound::Utterance {
            speaker: crate::conversation::Speaker::User,
            text: u.text.clone(),
            interrupted: false,
            ts: u.ended,
            purpose: None,
            track_id: Some(track.0.clone()),
        });
        let event = EngineEvent::UserUtterance {
            track_id: track.clone(),
            text: u.text.clone(),
            identity: self.identity_of(&track),
            zone: self.tracker.zone_of(&track),
        };
        self.dispatch(event, Some(u))
    }

    /// Journal entries from `since` onward, for tests and tools.
    pub fn journal_since(&self, since: u64) -> Vec<JournalEntry> {
        self.journal.entries().iter().filter(|e| e.sequence_no >= since).cloned().collect()
    }
}
