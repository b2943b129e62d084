use ditto_core::config::DittoConfig;
use ditto_core::conversation::UtterancePurpose;
use ditto_core::engagement::{Verdict, FAREWELL, STAY_PROMPT};
use ditto_core::harness::{
    barge_in, jack_walkup, passerby_pair, random_episode, replay, run_scenario, two_day, Divergence, ReplayVerdict,
    Scenario, SessionRecord,
};
use ditto_core::journal::JournalPayload;

fn rendered(rec: &SessionRecord) -> Vec<&str> {
    rec.journal.iter().map(|e| e.rendered.as_str()).collect()
}

fn verdicts(rec: &SessionRecord) -> Vec<Verdict> {
    rec.journal
        .iter()
        .filter_map(|e| match &e.structured {
            JournalPayload::Decision { verdict, .. } => Some(*verdict),
            _ => None,
        })
        .collect()
}

#[test]
fn jack_walkup_reads_as_expected() {
    let rec = run_scenario(&jack_walkup(), &DittoConfig::default()).unwrap();
    let lines = rendered(&rec);
    assert_eq!(lines[0], "The Ditto is reading a book.");
    assert_eq!(lines[1], "Jack has entered the public zone, 2 meters away, facing you.");
    assert_eq!(lines[2], "Jack has moved into the social zone, 1 meter away, facing you.");
    assert!(lines[3].starts_with("You decided to ENGAGE"));
    assert_eq!(
        verdicts(&rec),
        [Verdict::Engage, Verdict::RequestStay, Verdict::Disengage]
    );
    let stays = lines.iter().filter(|l| l.contains(STAY_PROMPT)).count();
    assert_eq!(stays, 1);
    assert!(lines.iter().any(|l| l.contains(FAREWELL)));
    assert_eq!(lines.last().unwrap(), &"Jack has left the zone.");
    assert!(rec.rejected.is_empty());
    let summary = rec.memory.person("Jack").unwrap();
    assert_eq!(summary.summaries.len(), 1);
}

#[test]
fn journal_is_strictly_numbered_and_ordered() {
    for scenario in [jack_walkup(), passerby_pair(), barge_in(), two_day()] {
        let rec = run_scenario(&scenario, &DittoConfig::default()).unwrap();
        for (i, pair) in rec.journal.windows(2).enumerate() {
            assert_eq!(pair[0].sequence_no, i as u64);
            assert_eq!(pair[1].sequence_no, pair[0].sequence_no + 1);
            assert!(pair[0].timestamp <= pair[1].timestamp, "{}", scenario.name);
        }
    }
}

#[test]
fn passerby_summaries_carry_no_names() {
    let rec = run_scenario(&passerby_pair(), &DittoConfig::default()).unwrap();
    let general = rec.memory.general().text();
    assert!(!general.is_empty());
    assert!(!general.contains("Jack") && !general.contains("Maya"), "{general}");
    assert!(rec.memory.person("Jack").is_some());
}

#[test]
fn second_day_is_announced_and_rotates_context() {
    let rec = run_scenario(&two_day(), &DittoConfig::default()).unwrap();
    let lines = rendered(&rec);
    assert!(lines.contains(&"A new day has started: 2026-03-03."));
    let prompts: Vec<_> = rec.prompts.iter().map(|p| p.topic.as_deref()).collect();
    assert_eq!(prompts.first().copied().flatten(), Some("Departing lunch"));
    assert_eq!(prompts.last().copied().flatten(), Some("Paddleboarding"));
}

#[test]
fn barge_in_never_speaks_a_superseded_reply() {
    let rec = run_scenario(&barge_in(), &DittoConfig::default()).unwrap();
    assert_eq!(rec.discarded_replies.len(), 1);
    let late = &rec.discarded_replies[0].text;
    assert!(rec.transcript.iter().all(|u| &u.text != late));
    let interrupted = rec
        .journal
        .iter()
        .filter(|e| matches!(e.structured, JournalPayload::AgentUtterance { interrupted: true, .. }))
        .count();
    assert_eq!(interrupted, 3);
}

#[test]
fn random_episodes_are_reproducible() {
    for seed in [3, 17, 99] {
        let (a, plan_a) = random_episode(seed);
        let (b, plan_b) = random_episode(seed);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(plan_a.utterances, plan_b.utterances);
        let ra = run_scenario(&a, &DittoConfig::default()).unwrap();
        let rb = run_scenario(&b, &DittoConfig::default()).unwrap();
        assert_eq!(ra.record_hash, rb.record_hash);
    }
}

#[test]
fn stay_prompt_is_spoken_by_the_controller() {
    let rec = run_scenario(&jack_walkup(), &DittoConfig::default()).unwrap();
    let stay: Vec<_> = rec
        .transcript
        .iter()
        .filter(|u| u.text == STAY_PROMPT)
        .collect();
    assert_eq!(stay.len(), 1);
    assert!(!stay[0].interrupted);
    assert!(rec.prompts.iter().all(|p| p.purpose != UtterancePurpose::StayPrompt));
}

#[test]
fn saved_records_replay_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.json");
    let config = DittoConfig::default();
    let rec = run_scenario(&passerby_pair(), &config).unwrap();
    rec.save(&path).unwrap();
    let loaded = SessionRecord::load(&path).unwrap();
    assert_eq!(loaded.record_hash, rec.record_hash);
    assert_eq!(replay(&loaded, &config).unwrap(), ReplayVerdict::Pass);

    let mut tampered = loaded.clone();
    let last = tampered.transcript.len() - 1;
    tampered.transcript[last].text.push('!');
    assert_eq!(
        replay(&tampered, &config).unwrap(),
        ReplayVerdict::Fail {
            divergence: Divergence::Transcript { index: last }
        }
    );
}

#[test]
fn scenario_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for scenario in [jack_walkup(), two_day()] {
        let path = dir.path().join(format!("{}.json", scenario.name));
        std::fs::write(&path, scenario.to_json()).unwrap();
        let loaded = Scenario::load(&path).unwrap();
        assert_eq!(loaded.to_json(), scenario.to_json());
        let a = run_scenario(&scenario, &DittoConfig::default()).unwrap();
        let b = run_scenario(&loaded, &DittoConfig::default()).unwrap();
        assert_eq!(a.record_hash, b.record_hash);
    }
}
