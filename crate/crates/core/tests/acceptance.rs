//! Acceptance suite. Run with `cargo test -p ditto-core --test acceptance`.
//!
//! Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};

use ditto_core::config::DittoConfig;
use ditto_core::conversation::{choose_topic, topic_tokens, Topic, UtterancePurpose};
use ditto_core::engagement::{
    rule_engagement_policy, step, CandidateFeatures, CheckTrigger, ControlAction, EngineEvent, EngineState, Mode,
    PolicyInput, RulePolicy, StepContext, Verdict, STAY_PROMPT,
};
use ditto_core::harness::{
    barge_in, build_engine, jack_walkup, passerby_pair, random_episode, reference_context, replay, run_scenario,
    two_day, ReplayVerdict, Services, SessionRecord,
};
use ditto_core::journal::{render_presence, Journal, JournalEntry, JournalPayload};
use ditto_core::memory::load_context;
use ditto_core::proxemics::{
    classify_zone, ExitReason, PersonIdentity, PresenceEvent, PresenceKind, TrackId, Zone, ZoneConfig,
};

type Outcome = Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "journal fidelity", budget: Duration::from_secs(1), run: journal_fidelity },
        Criterion { id: 2, name: "turn-limit rule", budget: Duration::from_secs(20), run: turn_limit },
        Criterion { id: 3, name: "no silent disengage", budget: Duration::from_secs(30), run: no_silent_disengage },
        Criterion { id: 4, name: "engagement oracle equivalence", budget: Duration::from_secs(5), run: engagement_grid },
        Criterion { id: 5, name: "personalization separation", budget: Duration::from_secs(5), run: personalization },
        Criterion { id: 6, name: "continuity", budget: Duration::from_secs(5), run: continuity },
        Criterion { id: 7, name: "determinism", budget: Duration::from_secs(10), run: determinism },
        Criterion { id: 8, name: "barge-in", budget: Duration::from_secs(5), run: barge_in_check },
        Criterion { id: 9, name: "context validation", budget: Duration::from_secs(1), run: context_validation },
    ];
    let mut failed = 0;
    for c in &criteria {
        let started = Instant::now();
        let outcome = (c.run)();
        let took = started.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > c.budget => Err(format!("{detail}; took {took:.2?}, budget {:?}", c.budget)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({}) in {took:.2?}: {detail}", c.id, c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({}) in {took:.2?}: {detail}", c.id, c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn journal_fidelity() -> Outcome {
    let entered = PresenceKind::EnteredZone { zone: Zone::Public };
    let cases = [
        (None, "Passerby has entered the zone, 2 meters away, facing you."),
        (Some("Jack"), "Jack has entered the public zone, 2 meters away, facing you."),
    ];
    for (name, want) in cases {
        let got = render_presence(&entered, name, 2.0, true);
        ensure(got == want, || format!("{got:?} != {want:?}"))?;
    }
    // The engine path produces the same line for Jack's walk-up.
    let rec = run_scenario(&jack_walkup(), &DittoConfig::default()).map_err(|e| e.to_string())?;
    let first = rec
        .journal
        .iter()
        .find(|e| matches!(e.structured, JournalPayload::Presence { .. }))
        .ok_or("no presence entry")?;
    ensure(first.rendered == cases[1].1, || format!("engine wrote {:?}", first.rendered))?;
    Ok("both sentences byte-exact".into())
}

fn decision(e: &JournalEntry) -> Option<(Verdict, &str)> {
    match &e.structured {
        JournalPayload::Decision { verdict, policy, .. } => Some((*verdict, policy.as_str())),
        _ => None,
    }
}

#[derive(Default)]
struct Cycle {
    replies: u32,
    stay_prompts: u32,
    requests: u32,
}

/// Walks one session journal and checks the stay-prompt rule per cycle. A
/// cycle starts at engagement or at an accepted stay prompt.
fn check_turn_limit(seed: u64, journal: &[JournalEntry]) -> Result<bool, String> {
    let mut cycle: Option<Cycle> = None;
    let mut closed: Option<Cycle> = None;
    let mut awaiting = false;
    let mut exercised = false;
    for e in journal {
        let at = || format!("seed {seed} seq {}", e.sequence_no);
        if let JournalPayload::AgentUtterance {
            text,
            interrupted,
            purpose,
            ..
        } = &e.structured
        {
            if *purpose == UtterancePurpose::Farewell {
                continue;
            }
            // A line cut off by the episode ending is logged just after it.
            let c = cycle
                .as_mut()
                .or(closed.as_mut().filter(|_| *interrupted))
                .ok_or_else(|| format!("{}: agent spoke outside an episode", at()))?;
            match purpose {
                UtterancePurpose::StayPrompt => {
                    ensure(text == STAY_PROMPT, || format!("{}: stay prompt text {text:?}", at()))?;
                    c.stay_prompts += 1;
                    ensure(c.stay_prompts == 1, || format!("{}: second stay prompt in one cycle", at()))?;
                }
                UtterancePurpose::Reply if !interrupted => {
                    c.replies += 1;
                    ensure(c.replies <= 6, || format!("{}: seventh turn without a stay prompt", at()))?;
                }
                _ => {}
            }
            continue;
        }
        let Some((verdict, policy)) = decision(e) else { continue };
        match verdict {
            Verdict::Engage => {
                ensure(cycle.is_none(), || format!("{}: engaged twice", at()))?;
                closed = None;
                cycle = Some(Cycle::default());
                awaiting = false;
            }
            Verdict::RequestStay => {
                let c = cycle.as_mut().ok_or_else(|| format!("{}: stay request while idle", at()))?;
                ensure(c.requests == 0, || format!("{}: second stay request in one cycle", at()))?;
                ensure(c.replies > 5, || format!("{}: stay request after {} turns", at(), c.replies))?;
                c.requests += 1;
                awaiting = true;
            }
            Verdict::Continue if awaiting => {
                let c = cycle.as_ref().ok_or_else(|| format!("{}: accept while idle", at()))?;
                ensure(c.stay_prompts == 1, || format!("{}: accepted {} stay prompts", at(), c.stay_prompts))?;
                exercised = true;
                cycle = Some(Cycle::default());
                awaiting = false;
            }
            Verdict::Disengage => {
                let c = cycle.take().ok_or_else(|| format!("{}: disengage while idle", at()))?;
                ensure(c.stay_prompts <= 1, || format!("{}: {} stay prompts", at(), c.stay_prompts))?;
                let forced = policy == "zone-exit" || policy == "control";
                if !forced {
                    ensure(c.stay_prompts == 1 && c.requests == 1, || {
                        format!("{}: policy disengage after {} stay prompts", at(), c.stay_prompts)
                    })?;
                }
                if c.replies > 5 && !forced {
                    ensure(c.stay_prompts == 1, || format!("{}: long episode without a stay prompt", at()))?;
                }
                exercised |= c.stay_prompts == 1;
                awaiting = false;
                closed = Some(c);
            }
            _ => {}
        }
    }
    if let Some(c) = cycle {
        // Still engaged at the end of the run.
        if c.replies == 6 {
            ensure(c.stay_prompts == 1, || format!("seed {seed}: open episode at six turns without a stay prompt"))?;
        }
        exercised |= c.stay_prompts == 1;
    }
    Ok(exercised)
}

fn turn_limit() -> Outcome {
    let config = DittoConfig::default();
    let mut exercised = 0;
    let mut barge = 0;
    for seed in 0..200 {
        let (scenario, plan) = random_episode(seed);
        let rec = run_scenario(&scenario, &config).map_err(|e| format!("seed {seed}: {e}"))?;
        if check_turn_limit(seed, &rec.journal)? {
            exercised += 1;
        }
        barge += plan.barge_ins;
    }
    ensure(exercised >= 20, || format!("only {exercised} episodes reached the stay prompt"))?;
    Ok(format!("200 episodes, {exercised} reached the stay prompt, {barge} planned barge-ins"))
}

const ANSWERS: [&str; 6] = [
    "Sure, I can stay.",
    "No, I have to go.",
    "What do you mean?",
    "bye",
    "hmm",
    "Yes please!",
];

#[derive(Debug, Clone)]
struct Op {
    code: u8,
    track: bool,
    pick: usize,
    distance: f64,
    facing: f64,
    busy: bool,
}

fn op() -> impl Strategy<Value = Op> {
    (0u8..13, any::<bool>(), 0usize..6, 0.2f64..6.0, 0f64..180.0, any::<bool>()).prop_map(
        |(code, track, pick, distance, facing, busy)| Op {
            code,
            track,
            pick,
            distance,
            facing,
            busy,
        },
    )
}

struct World {
    config: ZoneConfig,
    tracks: BTreeMap<TrackId, (Zone, f64, f64, u64)>,
    window: Vec<JournalEntry>,
    next_seq: u64,
    accepting: bool,
}

impl World {
    fn candidates(&self, now: u64) -> Vec<CandidateFeatures> {
        self.tracks
            .iter()
            .filter(|(_, (zone, ..))| zone.is_inside())
            .map(|(id, (zone, d, f, since))| CandidateFeatures {
                track_id: id.clone(),
                name: None,
                distance: *d,
                zone: *zone,
                facing_offset: *f,
                dwell_ms: now.saturating_sub(*since),
                recently_disengaged: false,
            })
            .collect()
    }

    fn presence(&mut self, track: &TrackId, kind: PresenceKind, zone: Zone, d: f64, f: f64, now: u64) -> EngineEvent {
        if zone.is_inside() {
            self.tracks.insert(track.clone(), (zone, d, f, now));
        } else {
            self.tracks.remove(track);
        }
        EngineEvent::Presence {
            event: PresenceEvent {
                track_id: track.clone(),
                timestamp: now,
                kind,
                zone,
                distance: d,
                facing_offset: f,
                facing: f <= self.config.facing_tolerance,
            },
            identity: None,
        }
    }

    fn event(&mut self, op: &Op, now: u64) -> EngineEvent {
        let track = TrackId::new(if op.track { "a" } else { "b" });
        let zone = classify_zone(op.distance, &self.config).expect("valid distance");
        let current = self.tracks.get(&track).map(|t| t.0).unwrap_or(Zone::Outside);
        match op.code {
            0 => self.presence(&track, PresenceKind::EnteredZone { zone }, zone, op.distance, op.facing, now),
            1 => self.presence(
                &track,
                PresenceKind::MovedZone { from: current, to: zone },
                zone,
                op.distance,
                op.facing,
                now,
            ),
            2 | 3 => {
                let reason = if op.code == 2 { ExitReason::ZoneExit } else { ExitReason::Timeout };
                self.presence(&track, PresenceKind::LeftZone { reason }, Zone::Outside, op.distance, op.facing, now)
            }
            4 => EngineEvent::UserUtterance {
                track_id: track,
                text: ANSWERS[op.pick].to_owned(),
                identity: None,
                zone: current,
            },
            5 => EngineEvent::ReplyCompleted {
                purpose: UtterancePurpose::Reply,
            },
            6 => EngineEvent::ReplyCompleted {
                purpose: [UtterancePurpose::Greeting, UtterancePurpose::StayPrompt, UtterancePurpose::Farewell]
                    [op.pick % 3],
            },
            7 => EngineEvent::DwellElapsed { track_id: track },
            8 => EngineEvent::PeriodicTick,
            9 => EngineEvent::IdentityResolved {
                track_id: track,
                identity: PersonIdentity::new("tag-1", "Jack", None),
                inside: current.is_inside(),
            },
            10 => EngineEvent::Control(
                [ControlAction::Start, ControlAction::Stop, ControlAction::EndConversation][op.pick % 3],
            ),
            11 => EngineEvent::Unknown { kind: "wave".into() },
            _ => self.presence(
                &track,
                PresenceKind::FacingChanged {
                    facing: op.facing <= self.config.facing_tolerance,
                },
                current,
                op.distance,
                op.facing,
                now,
            ),
        }
    }
}

/// Runs one sequence from an AwaitingStayAnswer state; returns how many
/// steps started in that mode.
fn run_sequence(turns: u32, ops: &[Op]) -> Result<u32, TestCaseError> {
    let config = ZoneConfig::default();
    let mut world = World {
        config: config.clone(),
        tracks: BTreeMap::new(),
        window: Vec::new(),
        next_seq: 1,
        accepting: true,
    };
    world.tracks.insert(TrackId::new("a"), (Zone::Social, 0.9, 0.0, 0));
    let mut state = EngineState {
        mode: Mode::AwaitingStayAnswer,
        engaged_track: Some(TrackId::new("a")),
        engaged_identity: None,
        turn_count: turns,
        stay_prompt_issued: true,
        episode_started: Some(0),
        stay_baseline: 0,
    };
    let mut awaiting_steps = 0;
    for (i, op) in ops.iter().enumerate() {
        let now = 1_000 + 700 * i as u64;
        let event = world.event(op, now);
        let ctx = StepContext {
            config: config.clone(),
            journal_window: world.window.clone(),
            next_sequence_no: world.next_seq,
            window_size: 30,
            candidates: world.candidates(now),
            identities: BTreeMap::new(),
            busy: op.busy,
            accepting: world.accepting,
        };
        let t = step(&state, &event, &ctx, &mut RulePolicy, now);
        if let Err(e) = t.state.check_invariants() {
            return Err(TestCaseError::fail(e));
        }
        if state.mode == Mode::AwaitingStayAnswer {
            awaiting_steps += 1;
            if t.state.mode == Mode::NotEngaged {
                let engaged = state.engaged_track.as_ref();
                let answered = matches!(&event, EngineEvent::UserUtterance { track_id, .. } if Some(track_id) == engaged);
                let left = matches!(&event, EngineEvent::Presence { event, .. }
                    if matches!(event.kind, PresenceKind::LeftZone { .. }) && Some(&event.track_id) == engaged);
                let ended = matches!(&event, EngineEvent::Control(ControlAction::EndConversation));
                if !(answered || left || ended) {
                    return Err(TestCaseError::fail(format!("silent disengage on {event:?} at step {i}")));
                }
            }
        }
        for effect in &t.effects {
            match effect {
                ditto_core::engagement::Effect::Journal(d) => {
                    world.window.push(d.clone().into_entry(world.next_seq));
                    world.next_seq += 1;
                }
                ditto_core::engagement::Effect::SetAccepting(a) => world.accepting = *a,
                _ => {}
            }
        }
        let excess = world.window.len().saturating_sub(30);
        world.window.drain(..excess);
        state = t.state;
    }
    Ok(awaiting_steps)
}

fn no_silent_disengage() -> Outcome {
    let mut runner = TestRunner::new(PtConfig {
        cases: 10_000,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let steps = std::cell::Cell::new(0u64);
    runner
        .run(&(6u32..12, prop::collection::vec(op(), 1..30)), |(turns, ops)| {
            steps.set(steps.get() + u64::from(run_sequence(turns, &ops)?));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("10000 sequences, {} steps taken while awaiting the answer, 0 violations", steps.get()))
}

/// The engagement rule restated with literal thresholds: social zone is
/// under 1.2 m, public under 4.5 m, facing within 45 degrees, 2 s dwell.
fn oracle_engage(distance: f64, facing: f64, dwell: u64, spoke: bool) -> bool {
    let social = distance < 1.2;
    let inside = distance < 4.5;
    (social && facing <= 45.0 && dwell >= 2000) || (spoke && inside)
}

fn engagement_grid() -> Outcome {
    let config = ZoneConfig::default();
    let track = TrackId::new("p1");
    let mut points = 0;
    for i in 1..=25 {
        let distance = f64::from(i) / 5.0;
        let zone = classify_zone(distance, &config).map_err(|e| e.to_string())?;
        for facing in (0..=180).step_by(15) {
            for dwell in (0..=5000).step_by(500) {
                for spoke in [false, true] {
                    points += 1;
                    let journal_window = if spoke {
                        vec![JournalEntry {
                            sequence_no: 1,
                            timestamp: 0,
                            kind: ditto_core::journal::JournalKind::UtteranceUser,
                            subject: "Passerby".into(),
                            rendered: "Passerby said: \"hello\"".into(),
                            structured: JournalPayload::UserUtterance {
                                track_id: track.clone(),
                                text: "hello".into(),
                                zone,
                            },
                        }]
                    } else {
                        Vec::new()
                    };
                    let input = PolicyInput {
                        journal_window,
                        state: EngineState::default(),
                        candidates: vec![CandidateFeatures {
                            track_id: track.clone(),
                            name: None,
                            distance,
                            zone,
                            facing_offset: f64::from(facing),
                            dwell_ms: dwell,
                            recently_disengaged: false,
                        }],
                        last_user_utterance: None,
                        trigger: CheckTrigger::Periodic,
                    };
                    let got = rule_engagement_policy(&input, &config).map_err(|e| e.to_string())?.verdict == Verdict::Engage;
                    let want = oracle_engage(distance, f64::from(facing), dwell, spoke);
                    ensure(got == want, || {
                        format!("d={distance} facing={facing} dwell={dwell} speech={spoke}: policy {got}, oracle {want}")
                    })?;
                }
            }
        }
    }
    ensure(points == 7150, || format!("grid has {points} points"))?;
    Ok(format!("{points} points agree"))
}

fn context_strings() -> Result<Vec<(String, String, String)>, String> {
    let ctx = load_context(&reference_context().to_string()).map_err(|e| e.to_string())?;
    Ok(ctx
        .social_relationships
        .iter()
        .map(|r| (r.who.clone(), r.relationship_info.clone(), r.source_intent.clone()))
        .collect())
}

fn personalization() -> Outcome {
    let rec = run_scenario(&passerby_pair(), &DittoConfig::default()).map_err(|e| e.to_string())?;
    let entries = context_strings()?;
    let (mut tagged, mut passerby) = (0, 0);
    for p in &rec.prompts {
        match p.person.as_deref() {
            Some(name) => {
                tagged += 1;
                let (_, info, intent) = entries
                    .iter()
                    .find(|(who, ..)| who == name)
                    .ok_or_else(|| format!("no context entry for {name}"))?;
                ensure(p.system_text.contains(info.as_str()), || format!("{name} prompt at {} lacks RelationshipInfo", p.ts))?;
                ensure(p.system_text.contains(intent.as_str()), || format!("{name} prompt at {} lacks SourceIntent", p.ts))?;
            }
            None => {
                passerby += 1;
                for (who, info, intent) in &entries {
                    for leak in [who, info, intent] {
                        ensure(!p.system_text.contains(leak.as_str()), || {
                            format!("passerby prompt at {} contains {leak:?}", p.ts)
                        })?;
                    }
                }
            }
        }
    }
    ensure(tagged > 0 && passerby > 0, || format!("{tagged} tagged and {passerby} passerby prompts"))?;
    Ok(format!("{tagged} tagged and {passerby} passerby bundles, 0 leaks"))
}

/// First topic with no title token in `summary`, written out longhand.
fn oracle_topic<'a>(topics: &'a [Topic], summary: &str) -> Option<&'a Topic> {
    let lower = summary.to_lowercase();
    for t in topics {
        let mut tokens = Vec::new();
        let mut word = String::new();
        for ch in t.title.chars().chain(std::iter::once(' ')) {
            if ch.is_alphanumeric() {
                word.push(ch);
            } else {
                if word.chars().count() >= 3 {
                    tokens.push(word.to_lowercase());
                }
                word.clear();
            }
        }
        if !tokens.is_empty() && tokens.iter().all(|tok| !lower.contains(tok.as_str())) {
            return Some(t);
        }
    }
    None
}

fn continuity() -> Outcome {
    let scenario = two_day();
    let rec = run_scenario(&scenario, &DittoConfig::default()).map_err(|e| e.to_string())?;
    let day2 = scenario.days[1].start_ms;
    let first = rec
        .memory
        .person("Jack")
        .and_then(|m| m.summaries.first())
        .ok_or("no summary stored for Jack")?;
    let later: Vec<_> = rec.prompts.iter().filter(|p| p.ts >= day2).collect();
    ensure(!later.is_empty(), || "no prompts in the second episode".into())?;
    for p in &later {
        ensure(p.system_text.contains(first.text.as_str()), || {
            format!("prompt at {} lacks the stored summary {:?}", p.ts, first.text)
        })?;
        let title = p.topic.as_deref().ok_or_else(|| format!("prompt at {} has no topic", p.ts))?;
        let summary = first.text.to_lowercase();
        for tok in topic_tokens(title) {
            ensure(!summary.contains(tok.as_str()), || format!("topic {title:?} token {tok:?} is in the summary"))?;
        }
        let want = oracle_topic(&scenario.days[1].topics, &first.text).map(|t| t.title.as_str());
        ensure(want == Some(title), || format!("chose {title:?}, oracle {want:?}"))?;
    }

    // choose_topic against the longhand oracle on random summaries.
    const WORDS: [&str; 9] = ["lunch", "ramen", "paddle", "paddleboarding", "thesis", "defense", "slides", "greyhound", "ok"];
    let topics = ditto_core::harness::reference_topics();
    let mut runner = TestRunner::new(PtConfig {
        cases: 2_000,
        failure_persistence: None,
        ..PtConfig::default()
    });
    runner
        .run(&prop::collection::vec(prop::sample::select(&WORDS[..]), 0..6), |picked| {
            let summary = picked.join(" ");
            let got = choose_topic(&topics, &summary).map(|t| &t.title);
            let want = oracle_topic(&topics, &summary).map(|t| &t.title);
            prop_assert_eq!(got, want, "summary {:?}", summary);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{} second-episode prompts carry the summary; topic {:?}",
        later.len(),
        later[0].topic.as_deref().unwrap_or("")
    ))
}

fn determinism() -> Outcome {
    let config = DittoConfig::default();
    let mut hashes = Vec::new();
    for scenario in [jack_walkup(), passerby_pair(), barge_in()] {
        let a = run_scenario(&scenario, &config).map_err(|e| e.to_string())?;
        let b = run_scenario(&scenario, &config).map_err(|e| e.to_string())?;
        ensure(a.record_hash == b.record_hash, || format!("{}: {} vs {}", scenario.name, a.record_hash, b.record_hash))?;
        let reloaded = SessionRecord::from_json(&a.to_json()).map_err(|e| e.to_string())?;
        let verdict = replay(&reloaded, &config).map_err(|e| e.to_string())?;
        ensure(verdict == ReplayVerdict::Pass, || format!("{}: replay {verdict:?}", scenario.name))?;
        hashes.push(format!("{}={}", scenario.name, &a.record_hash[..12]));
    }
    Ok(hashes.join(" "))
}

fn barge_in_check() -> Outcome {
    let config = DittoConfig::default();
    let scenario = barge_in();
    let services = Services::scripted(&scenario).map_err(|e| e.to_string())?;
    let mut engine = build_engine(&scenario, &config, services, Journal::started(scenario.days[0].start_ms))
        .map_err(|e| e.to_string())?;
    let mut last = 0;
    for msg in &scenario.timeline {
        last = msg.ts().unwrap_or(last);
        engine.submit(msg.clone()).map_err(|e| e.to_string())?;
    }
    engine
        .advance_to(scenario.end_ms.unwrap_or(last + config.simulation.drain_ms))
        .map_err(|e| e.to_string())?;
    let tick = config.simulation.tick_ms;
    let barge = engine.barge_ins();
    ensure(!barge.is_empty(), || "no barge-in happened".into())?;
    for b in barge {
        ensure(b.interrupted_at >= b.speech_ts && b.interrupted_at - b.speech_ts <= tick, || {
            format!("speech at {} interrupted at {}", b.speech_ts, b.interrupted_at)
        })?;
    }
    let interrupted = engine
        .journal()
        .entries()
        .iter()
        .filter(|e| matches!(e.structured, JournalPayload::AgentUtterance { interrupted: true, .. }))
        .count();
    ensure(interrupted == barge.len(), || format!("{interrupted} interrupted lines for {} barge-ins", barge.len()))?;
    let discarded = engine.discarded_replies();
    ensure(!discarded.is_empty(), || "no late reply was produced".into())?;
    for d in discarded {
        let surfaced = engine.transcript().iter().any(|u| u.text.contains(d.text.as_str()))
            || engine.journal().entries().iter().any(|e| {
                matches!(&e.structured, JournalPayload::AgentUtterance { text, .. } if text == &d.text)
            });
        ensure(!surfaced, || format!("late reply surfaced: {:?}", d.text))?;
    }
    Ok(format!(
        "{} barge-ins cut within {tick} ms, {} late replies suppressed",
        barge.len(),
        discarded.len()
    ))
}

fn context_validation() -> Outcome {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/sample_context.json");
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let ctx = load_context(&text).map_err(|e| e.to_string())?;
    ensure(ctx.social_relationships.len() == 2, || format!("{} entries", ctx.social_relationships.len()))?;

    let mut doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mut no_background = doc.clone();
    no_background.as_object_mut().ok_or("not an object")?.remove("Background");
    match load_context(&no_background.to_string()) {
        Err(e) => ensure(e.to_string() == "Background required", || format!("got {e}"))?,
        Ok(_) => return Err("missing Background accepted".into()),
    }

    let entries = doc["SocialRelationshipInfo"].as_array_mut().ok_or("no entries")?;
    let who = entries[0]["Who"].clone();
    entries[1]["Who"] = who.clone();
    match load_context(&doc.to_string()) {
        Err(e) => {
            let want = format!("duplicate Who {:?}", who.as_str().unwrap_or_default());
            ensure(e.to_string() == want, || format!("got {e}, want {want}"))?
        }
        Ok(_) => return Err("duplicate Who accepted".into()),
    }
    Ok("2 entries; both malformed variants rejected".into())
}
