use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conversation::UtterancePurpose;
use crate::journal::{
    render_identified, render_presence, render_user_utterance, JournalDraft, JournalEntry, JournalPayload, PASSERBY,
    SYSTEM_SUBJECT,
};
use crate::proxemics::{Millis, PersonIdentity, PresenceEvent, TrackId, Zone, ZoneConfig};

use super::{
    BehaviorCue, CandidateFeatures, CheckKind, CheckTrigger, EngagementDecision, EngagementPolicy, EngineState, Mode,
    PolicyInput, Verdict,
};

pub const STAY_PROMPT: &str = "Would you like to stay and chat a little longer?";
pub const FAREWELL: &str = "It was great talking with you. I'll get back to my book now!";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    Start,
    Stop,
    EndConversation,
}

impl ControlAction {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlAction::Start => "start",
            ControlAction::Stop => "stop",
            ControlAction::EndConversation => "end_conversation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineEvent {
    Presence {
        event: PresenceEvent,
        identity: Option<PersonIdentity>,
    },
    UserUtterance {
        track_id: TrackId,
        text: String,
        identity: Option<PersonIdentity>,
        zone: Zone,
    },
    /// An agent line finished without being interrupted.
    ReplyCompleted { purpose: UtterancePurpose },
    DwellElapsed { track_id: TrackId },
    PeriodicTick,
    IdentityResolved {
        track_id: TrackId,
        identity: PersonIdentity,
        inside: bool,
    },
    Control(ControlAction),
    Unknown { kind: String },
}

/// Everything `step` may read besides the state and the event.
#[derive(Debug, Clone, PartialEq)]
pub struct StepContext {
    pub config: ZoneConfig,
    /// Journal suffix before this event, oldest first.
    pub journal_window: Vec<JournalEntry>,
    pub next_sequence_no: u64,
    pub window_size: usize,
    pub candidates: Vec<CandidateFeatures>,
    pub identities: BTreeMap<TrackId, PersonIdentity>,
    /// The agent is speaking or waiting on a reply.
    pub busy: bool,
    /// New engagements are allowed.
    pub accepting: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Journal(JournalDraft),
    RequestReply { purpose: UtterancePurpose },
    Speak { text: String, purpose: UtterancePurpose },
    Cue(BehaviorCue),
    /// The episode ended; summarize it and cancel anything in flight.
    Summarize {
        track_id: TrackId,
        identity: Option<PersonIdentity>,
        started: Millis,
        turn_count: u32,
    },
    SetAccepting(bool),
    Error { code: String, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EngineState,
    pub effects: Vec<Effect>,
}

struct Builder<'a> {
    ctx: &'a StepContext,
    now: Millis,
    state: EngineState,
    drafts: Vec<JournalDraft>,
    effects: Vec<Effect>,
}

impl<'a> Builder<'a> {
    fn journal(&mut self, draft: JournalDraft) {
        self.drafts.push(draft.clone());
        self.effects.push(Effect::Journal(draft));
    }

    fn window(&self) -> Vec<JournalEntry> {
        let mut w = self.ctx.journal_window.clone();
        let base = self.ctx.next_sequence_no;
        w.extend(self.drafts.iter().enumerate().map(|(i, d)| d.clone().into_entry(base + i as u64)));
        let excess = w.len().saturating_sub(self.ctx.window_size.max(1));
        w.drain(..excess);
        w
    }

    fn input(&self, trigger: CheckTrigger, last_user: Option<&str>) -> PolicyInput {
        PolicyInput {
            journal_window: self.window(),
            state: self.state.clone(),
            candidates: self.ctx.candidates.clone(),
            last_user_utterance: last_user.map(str::to_owned),
            trigger,
        }
    }

    fn name_of(&self, track: &TrackId) -> String {
        if self.state.engaged_track.as_ref() == Some(track) {
            if let Some(p) = &self.state.engaged_identity {
                return p.name.clone();
            }
        }
        self.ctx
            .identities
            .get(track)
            .map_or_else(|| PASSERBY.to_owned(), |p| p.name.clone())
    }

    fn record_decision(&mut self, check: CheckKind, d: &EngagementDecision, policy: &str) {
        let subject = d.track.as_ref().map_or_else(|| PASSERBY.to_owned(), |t| self.name_of(t));
        let reason = if d.reason.is_empty() { String::new() } else { format!(": {}", d.reason) };
        let rendered = format!("You decided to {}{reason}.", d.verdict.token());
        self.journal(JournalDraft::new(
            self.now,
            subject,
            rendered,
            JournalPayload::Decision {
                check,
                verdict: d.verdict,
                reason: d.reason.clone(),
                track_id: d.track.clone(),
                policy: policy.to_owned(),
                fallback: d.fallback.is_some(),
                turn_count: self.state.turn_count,
            },
        ));
    }

    fn note_fallback(&mut self, d: &EngagementDecision, policy: &str) {
        if let Some(why) = &d.fallback {
            self.journal(JournalDraft::warning(
                self.now,
                "policy_fallback",
                format!("{policy} policy failed ({why}); rule policy used"),
            ));
        }
    }

    fn error(&mut self, code: &str, detail: String) {
        self.effects.push(Effect::Error {
            code: code.to_owned(),
            detail,
        });
    }

    fn engagement_check(&mut self, policy: &mut dyn EngagementPolicy, trigger: CheckTrigger, last_user: Option<&str>) {
        if self.state.mode != Mode::NotEngaged || !self.ctx.accepting {
            return;
        }
        let input = self.input(trigger, last_user);
        let decision = match policy.engagement_check(&input, &self.ctx.config) {
            Ok(d) => d,
            Err(e) => return self.error("policy", e.to_string()),
        };
        let name = policy.name().to_owned();
        self.note_fallback(&decision, &name);
        if decision.verdict != Verdict::Engage {
            return;
        }
        let Some(track) = decision.track.clone() else {
            return self.error("policy", "engage verdict without a track".into());
        };
        if !input.candidate(&track).is_some_and(|c| c.zone.is_inside()) {
            return self.error("policy", format!("engage verdict for absent track {track}"));
        }
        self.record_decision(CheckKind::Engagement, &decision, &name);
        self.state = EngineState {
            mode: Mode::Engaged,
            engaged_identity: self.ctx.identities.get(&track).cloned(),
            engaged_track: Some(track),
            turn_count: 0,
            stay_prompt_issued: false,
            episode_started: Some(self.now),
            stay_baseline: 0,
        };
        self.effects.push(Effect::Cue(BehaviorCue::Greeting));
        self.effects.push(Effect::RequestReply {
            purpose: UtterancePurpose::Greeting,
        });
    }

    fn end_episode(&mut self, farewell: bool) {
        let prev = std::mem::take(&mut self.state);
        if let Some(track_id) = prev.engaged_track {
            self.effects.push(Effect::Summarize {
                track_id,
                identity: prev.engaged_identity,
                started: prev.episode_started.unwrap_or(self.now),
                turn_count: prev.turn_count,
            });
        }
        if farewell {
            self.effects.push(Effect::Speak {
                text: FAREWELL.to_owned(),
                purpose: UtterancePurpose::Farewell,
            });
        }
        self.effects.push(Effect::Cue(BehaviorCue::IdleReading));
    }

    fn forced_disengage(&mut self, policy: &str, reason: &str, farewell: bool) {
        let d = EngagementDecision {
            verdict: Verdict::Disengage,
            reason: reason.to_owned(),
            track: self.state.engaged_track.clone(),
            fallback: None,
        };
        self.record_decision(CheckKind::Disengagement, &d, policy);
        self.end_episode(farewell);
    }

    fn issue_stay_prompt(&mut self, mut d: EngagementDecision, policy: &str) {
        d.verdict = Verdict::RequestStay;
        d.track = self.state.engaged_track.clone();
        self.record_decision(CheckKind::Disengagement, &d, policy);
        self.state.mode = Mode::AwaitingStayAnswer;
        self.state.stay_prompt_issued = true;
        self.effects.push(Effect::Speak {
            text: STAY_PROMPT.to_owned(),
            purpose: UtterancePurpose::StayPrompt,
        });
    }

    /// Runs the disengagement check and applies the controller's guard: the
    /// stay prompt always precedes a policy disengage, and only the user's
    /// answer can end an episode that is waiting for one.
    fn disengagement_check(
        &mut self,
        policy: &mut dyn EngagementPolicy,
        trigger: CheckTrigger,
        last_user: Option<&str>,
    ) -> bool {
        let input = self.input(trigger, last_user);
        let decision = match policy.disengagement_check(&input, &self.ctx.config) {
            Ok(d) => d,
            Err(e) => {
                self.error("policy", e.to_string());
                return false;
            }
        };
        let name = policy.name().to_owned();
        self.note_fallback(&decision, &name);
        match self.state.mode {
            Mode::NotEngaged => false,
            Mode::Engaged => {
                let forced = self.state.turns_since_rearm() > 5 && !self.state.stay_prompt_issued;
                let wants = matches!(decision.verdict, Verdict::RequestStay | Verdict::Disengage);
                if !(forced || wants) || (trigger == CheckTrigger::Periodic && self.ctx.busy) {
                    return false;
                }
                self.issue_stay_prompt(decision, &name);
                true
            }
            Mode::AwaitingStayAnswer => {
                if trigger != CheckTrigger::UserTurn {
                    return false;
                }
                let mut d = decision;
                d.track = self.state.engaged_track.clone();
                if d.verdict == Verdict::Disengage {
                    self.record_decision(CheckKind::Disengagement, &d, &name);
                    self.end_episode(true);
                } else {
                    d.verdict = Verdict::Continue;
                    self.record_decision(CheckKind::Disengagement, &d, &name);
                    self.state.mode = Mode::Engaged;
                    self.state.stay_prompt_issued = false;
                    self.state.stay_baseline = self.state.turn_count;
                    self.effects.push(Effect::RequestReply {
                        purpose: UtterancePurpose::Reply,
                    });
                }
                true
            }
        }
    }
}

/// The engine's transition function. Given the same state, event, context,
/// policy verdicts and clock it returns the same transition.
pub fn step(
    state: &EngineState,
    event: &EngineEvent,
    ctx: &StepContext,
    policy: &mut dyn EngagementPolicy,
    now: Millis,
) -> Transition {
    let mut b = Builder {
        ctx,
        now,
        state: state.clone(),
        drafts: Vec::new(),
        effects: Vec::new(),
    };
    match event {
        EngineEvent::Presence { event, identity } => {
            let name = identity.as_ref().map(|p| p.name.as_str());
            b.journal(JournalDraft::new(
                now,
                name.unwrap_or(PASSERBY),
                render_presence(&event.kind, name, event.distance, event.facing),
                JournalPayload::Presence {
                    track_id: event.track_id.clone(),
                    event: event.kind,
                    zone: event.zone,
                    distance: event.distance,
                    facing_offset: event.facing_offset,
                    facing: event.facing,
                    tag_id: identity.as_ref().map(|p| p.tag_id.clone()),
                },
            ));
            let engaged_left = event.is_exit() && b.state.engaged_track.as_ref() == Some(&event.track_id);
            if engaged_left {
                b.forced_disengage("zone-exit", "the conversation partner left the zone", false);
            } else if !event.is_exit() {
                b.engagement_check(policy, CheckTrigger::Presence, None);
            }
        }
        EngineEvent::UserUtterance {
            track_id,
            text,
            identity,
            zone,
        } => {
            let name = identity.as_ref().map(|p| p.name.as_str());
            b.journal(JournalDraft::new(
                now,
                name.unwrap_or(PASSERBY),
                render_user_utterance(name, text),
                JournalPayload::UserUtterance {
                    track_id: track_id.clone(),
                    text: text.clone(),
                    zone: *zone,
                },
            ));
            if b.state.mode == Mode::NotEngaged {
                b.engagement_check(policy, CheckTrigger::UserTurn, Some(text));
            } else if b.state.engaged_track.as_ref() == Some(track_id)
                && !b.disengagement_check(policy, CheckTrigger::UserTurn, Some(text))
            {
                b.effects.push(Effect::RequestReply {
                    purpose: UtterancePurpose::Reply,
                });
            }
        }
        EngineEvent::ReplyCompleted { purpose } => {
            if b.state.mode == Mode::Engaged && *purpose == UtterancePurpose::Reply {
                b.state.turn_count += 1;
                b.disengagement_check(policy, CheckTrigger::TurnComplete, None);
            }
        }
        EngineEvent::DwellElapsed { .. } => b.engagement_check(policy, CheckTrigger::Dwell, None),
        EngineEvent::PeriodicTick => match b.state.mode {
            Mode::NotEngaged => b.engagement_check(policy, CheckTrigger::Periodic, None),
            Mode::Engaged => {
                b.disengagement_check(policy, CheckTrigger::Periodic, None);
            }
            Mode::AwaitingStayAnswer => {}
        },
        EngineEvent::IdentityResolved {
            track_id,
            identity,
            inside,
        } => {
            if *inside {
                b.journal(JournalDraft::new(
                    now,
                    identity.name.clone(),
                    render_identified(&identity.name),
                    JournalPayload::Identified {
                        track_id: track_id.clone(),
                        tag_id: identity.tag_id.clone(),
                    },
                ));
            }
            if b.state.engaged_track.as_ref() == Some(track_id) {
                b.state.engaged_identity = Some(identity.clone());
            }
        }
        EngineEvent::Control(action) => {
            let rendered = match action {
                ControlAction::Start => "The Ditto was switched on.",
                ControlAction::Stop => "The Ditto was switched off.",
                ControlAction::EndConversation => "The conversation was ended by the user.",
            };
            b.journal(JournalDraft::new(
                now,
                SYSTEM_SUBJECT,
                rendered,
                JournalPayload::Control {
                    action: action.as_str().to_owned(),
                },
            ));
            match action {
                ControlAction::Start => b.effects.push(Effect::SetAccepting(true)),
                ControlAction::Stop => b.effects.push(Effect::SetAccepting(false)),
                ControlAction::EndConversation => {
                    if b.state.is_engaged() {
                        b.forced_disengage("control", "the user ended the conversation", true);
                    }
                }
            }
        }
        EngineEvent::Unknown { kind } => b.error("unknown_event", format!("unknown event kind {kind:?}")),
    }
    Transition {
        state: b.state,
        effects: b.effects,
    }
}
