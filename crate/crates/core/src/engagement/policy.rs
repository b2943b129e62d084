use crate::conversation::DISENGAGEMENT_RULES;
use crate::journal::{JournalEntry, JournalPayload};
use crate::llm::{ChatClient, ChatMessage};
use crate::proxemics::{TrackId, Zone, ZoneConfig};

use super::{
    CandidateFeatures, CheckKind, CheckTrigger, EngagementDecision, EngagementError, Mode, PolicyInput, Verdict,
};

pub const ENGAGEMENT_SYSTEM_PROMPT: &str = "You are the engagement detector of an embodied agent that stands in \
for a remote colleague in an office hallway. While idle the agent appears to read a book. Below is the agent's \
journal of what its sensors observed: who is nearby, how far away they are, whether they face the agent, and \
anything they said. Decide whether someone shows intent to interact, for example by moving closer, stopping in \
the social zone while facing the agent, or addressing the agent directly. People who are just walking past \
should be left alone.\n\
Answer with a single line: ENGAGE or STAY, optionally followed by ': ' and a short reason.";

pub static DISENGAGEMENT_SYSTEM_PROMPT: std::sync::LazyLock<String> = std::sync::LazyLock::new(|| {
    format!(
        "{DISENGAGEMENT_RULES}\n\
Below is the journal of the current hallway conversation. Decide what the agent should do next.\n\
Answer with a single line: CONTINUE, REQUEST_STAY or DISENGAGE, optionally followed by ': ' and a short reason."
    )
});

pub trait EngagementPolicy: Send {
    fn name(&self) -> &str;

    fn engagement_check(
        &mut self,
        input: &PolicyInput,
        config: &ZoneConfig,
    ) -> Result<EngagementDecision, EngagementError>;

    fn disengagement_check(
        &mut self,
        input: &PolicyInput,
        config: &ZoneConfig,
    ) -> Result<EngagementDecision, EngagementError>;
}

/// Deterministic default policy.
#[derive(Debug, Clone, Copy, Default)]
pub struct RulePolicy;

impl EngagementPolicy for RulePolicy {
    fn name(&self) -> &str {
        "rule"
    }

    fn engagement_check(
        &mut self,
        input: &PolicyInput,
        config: &ZoneConfig,
    ) -> Result<EngagementDecision, EngagementError> {
        rule_engagement_policy(input, config)
    }

    fn disengagement_check(
        &mut self,
        input: &PolicyInput,
        config: &ZoneConfig,
    ) -> Result<EngagementDecision, EngagementError> {
        rule_disengagement_check(input, config)
    }
}

fn subject(c: &CandidateFeatures) -> &str {
    c.name.as_deref().unwrap_or(crate::journal::PASSERBY)
}

/// True when the window holds a user utterance from `track`, spoken inside a
/// zone, after the most recent disengagement.
fn spoke_recently(window: &[JournalEntry], track: &TrackId) -> Option<String> {
    for entry in window.iter().rev() {
        match &entry.structured {
            JournalPayload::Decision {
                verdict: Verdict::Disengage,
                ..
            } => return None,
            JournalPayload::UserUtterance { track_id, text, zone } if track_id == track && zone.is_inside() => {
                return Some(text.clone())
            }
            _ => {}
        }
    }
    None
}

fn nearest<'a>(candidates: impl Iterator<Item = &'a CandidateFeatures>) -> Option<&'a CandidateFeatures> {
    candidates.min_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.track_id.cmp(&b.track_id))
    })
}

/// Engage iff some inside track either holds the social zone facing the
/// Ditto for at least the dwell time, or has spoken while inside a zone.
/// Qualifying tracks tie-break to the nearer, then the lower track id.
pub fn rule_engagement_policy(input: &PolicyInput, config: &ZoneConfig) -> Result<EngagementDecision, EngagementError> {
    if input.state.mode != Mode::NotEngaged {
        return Err(EngagementError::WrongMode {
            check: CheckKind::Engagement,
            mode: input.state.mode,
        });
    }
    let mut qualifying: Vec<(&CandidateFeatures, String)> = Vec::new();
    for c in input.candidates.iter().filter(|c| c.zone.is_inside()) {
        let dwelled = c.zone == Zone::Social
            && c.facing_offset <= config.facing_tolerance
            && c.dwell_ms >= config.dwell_to_engage
            && !c.recently_disengaged;
        if dwelled {
            qualifying.push((
                c,
                format!(
                    "{} has stayed in the social zone facing you for {:.1} s",
                    subject(c),
                    c.dwell_ms as f64 / 1000.0
                ),
            ));
        } else if let Some(text) = spoke_recently(&input.journal_window, &c.track_id) {
            qualifying.push((c, format!("{} addressed you: \"{text}\"", subject(c))));
        }
    }
    let chosen = nearest(qualifying.iter().map(|(c, _)| *c));
    Ok(match chosen {
        Some(c) => {
            let reason = qualifying
                .iter()
                .find(|(q, _)| q.track_id == c.track_id)
                .map(|(_, r)| r.clone())
                .unwrap_or_default();
            EngagementDecision::new(Verdict::Engage, reason).about(c.track_id.clone())
        }
        None => {
            let d = EngagementDecision::new(Verdict::Stay, "no one shows interaction intent");
            match nearest(input.candidates.iter()) {
                Some(c) => d.about(c.track_id.clone()),
                None => d,
            }
        }
    })
}

/// Disengagement rules: a vanished partner ends the episode; past five turns
/// the stay prompt is requested once; while awaiting the answer, only the
/// answer decides.
pub fn rule_disengagement_check(input: &PolicyInput, _config: &ZoneConfig) -> Result<EngagementDecision, EngagementError> {
    let state = &input.state;
    if state.mode == Mode::NotEngaged {
        return Err(EngagementError::WrongMode {
            check: CheckKind::Disengagement,
            mode: state.mode,
        });
    }
    let track = state.engaged_track.clone();
    let decide = |v: Verdict, reason: &str| {
        let d = EngagementDecision::new(v, reason);
        match &track {
            Some(t) => d.about(t.clone()),
            None => d,
        }
    };
    if !input.engaged_present() {
        return Ok(decide(Verdict::Disengage, "the conversation partner left the zone"));
    }
    if state.mode == Mode::Engaged {
        if state.turns_since_rearm() > 5 && !state.stay_prompt_issued {
            return Ok(decide(Verdict::RequestStay, "the conversation is over 5 turns"));
        }
        return Ok(decide(Verdict::Continue, "the conversation continues"));
    }
    // Awaiting the stay answer.
    if input.trigger != CheckTrigger::UserTurn {
        return Ok(decide(Verdict::Continue, "waiting for an answer to the stay prompt"));
    }
    let answer = input.last_user_utterance.as_deref().unwrap_or("");
    Ok(match classify_stay_answer(answer) {
        StayAnswer::Decline => decide(Verdict::Disengage, "declined to stay longer"),
        StayAnswer::Accept => decide(Verdict::Continue, "agreed to stay longer"),
        StayAnswer::Unclear => decide(Verdict::Continue, "answered without declining"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StayAnswer {
    Accept,
    Decline,
    Unclear,
}

const ACCEPT_PHRASES: &[&str] = &[
    "no problem",
    "i can stay",
    "why not",
    "of course",
    "happy to",
    "love to",
    "not in a hurry",
    "i have time",
];
const DECLINE_PHRASES: &[&str] = &[
    "have to go",
    "need to go",
    "got to go",
    "gotta go",
    "have to run",
    "need to run",
    "should go",
    "must go",
    "not now",
    "another time",
    "next time",
    "get back to",
    "can't",
    "cannot",
    "can not",
];
const DECLINE_WORDS: &[&str] = &["no", "nope", "nah", "bye", "goodbye", "busy", "later", "leave", "leaving"];
const ACCEPT_WORDS: &[&str] = &[
    "yes", "yeah", "yep", "yup", "sure", "ok", "okay", "absolutely", "definitely", "certainly", "totally",
];

/// Classifies an answer to the stay prompt. Explicit accept phrases win,
/// then decline phrases and words, then accept words.
pub fn classify_stay_answer(text: &str) -> StayAnswer {
    let lower = text.to_lowercase().replace('’', "'");
    let padded = format!(" {} ", normalize(&lower));
    if ACCEPT_PHRASES.iter().any(|p| padded.contains(&format!(" {p} "))) {
        return StayAnswer::Accept;
    }
    let words: Vec<&str> = padded.split_whitespace().collect();
    if DECLINE_PHRASES.iter().any(|p| padded.contains(&format!(" {p} ")))
        || words.iter().any(|w| DECLINE_WORDS.contains(w))
    {
        return StayAnswer::Decline;
    }
    if words.iter().any(|w| ACCEPT_WORDS.contains(w)) {
        return StayAnswer::Accept;
    }
    StayAnswer::Unclear
}

fn normalize(lower: &str) -> String {
    lower
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerdictParseError {
    #[error("empty reply")]
    Empty,
    #[error("no verdict token in first line: {0:?}")]
    NoVerdict(String),
}

/// Parses the first line of a decision reply: `VERDICT` or `VERDICT: reason`.
pub fn parse_verdict(reply: &str) -> Result<(Verdict, String), VerdictParseError> {
    let line = reply.lines().next().map(str::trim).unwrap_or("");
    if line.is_empty() {
        return Err(VerdictParseError::Empty);
    }
    let (token, reason) = match line.split_once(':') {
        Some((t, r)) => (t.trim(), r.trim()),
        None => (line, ""),
    };
    let verdict = match token {
        "ENGAGE" => Verdict::Engage,
        "STAY" => Verdict::Stay,
        "CONTINUE" => Verdict::Continue,
        "REQUEST_STAY" => Verdict::RequestStay,
        "DISENGAGE" => Verdict::Disengage,
        _ => return Err(VerdictParseError::NoVerdict(line.to_owned())),
    };
    Ok((verdict, reason.to_owned()))
}

/// Asks an external decision service, falling back to the rule policy on
/// transport failure, timeout or an unparseable reply.
pub struct LlmPolicy {
    client: Box<dyn ChatClient>,
}

impl LlmPolicy {
    pub fn new(client: Box<dyn ChatClient>) -> Self {
        Self { client }
    }

    fn ask(&mut self, system: &str, input: &PolicyInput, check: CheckKind) -> Result<(Verdict, String), String> {
        let messages = [ChatMessage::system(system), ChatMessage::user(render_policy_input(input))];
        let reply = self.client.complete(&messages).map_err(|e| e.to_string())?;
        let (verdict, reason) = parse_verdict(&reply).map_err(|e| e.to_string())?;
        if verdict.check() != check {
            return Err(format!("verdict {verdict} is not valid for the {check} check"));
        }
        Ok((verdict, reason))
    }
}

fn with_fallback(mut d: EngagementDecision, why: String) -> EngagementDecision {
    d.fallback = Some(why);
    d
}

impl EngagementPolicy for LlmPolicy {
    fn name(&self) -> &str {
        "llm"
    }

    fn engagement_check(
        &mut self,
        input: &PolicyInput,
        config: &ZoneConfig,
    ) -> Result<EngagementDecision, EngagementError> {
        let rule = rule_engagement_policy(input, config)?;
        match self.ask(ENGAGEMENT_SYSTEM_PROMPT, input, CheckKind::Engagement) {
            Ok((Verdict::Engage, reason)) => {
                let target = nearest(input.candidates.iter().filter(|c| c.zone.is_inside()));
                Ok(match target {
                    Some(c) => EngagementDecision::new(Verdict::Engage, reason).about(c.track_id.clone()),
                    None => EngagementDecision::new(Verdict::Stay, "no candidate to engage"),
                })
            }
            Ok((verdict, reason)) => {
                let mut d = EngagementDecision::new(verdict, reason);
                d.track = rule.track;
                Ok(d)
            }
            Err(why) => Ok(with_fallback(rule, why)),
        }
    }

    fn disengagement_check(
        &mut self,
        input: &PolicyInput,
        config: &ZoneConfig,
    ) -> Result<EngagementDecision, EngagementError> {
        let rule = rule_disengagement_check(input, config)?;
        match self.ask(&DISENGAGEMENT_SYSTEM_PROMPT, input, CheckKind::Disengagement) {
            Ok((verdict, reason)) => {
                let mut d = EngagementDecision::new(verdict, reason);
                d.track = input.state.engaged_track.clone();
                Ok(d)
            }
            Err(why) => Ok(with_fallback(rule, why)),
        }
    }
}

/// The text an external policy sees: the journal window plus a state line.
pub fn render_policy_input(input: &PolicyInput) -> String {
    let mut out = String::from("Journal:\n");
    for e in &input.journal_window {
        out.push_str(&format!("[{:.1} s] {}\n", e.timestamp as f64 / 1000.0, e.rendered));
    }
    let s = &input.state;
    let partner = s
        .engaged_identity
        .as_ref()
        .map(|p| p.name.clone())
        .unwrap_or_else(|| crate::journal::PASSERBY.to_lowercase());
    match s.mode {
        Mode::NotEngaged => out.push_str("State: not engaged.\n"),
        Mode::Engaged => out.push_str(&format!(
            "State: engaged with {partner}, {} turns so far, stay question not asked.\n",
            s.turn_count
        )),
        Mode::AwaitingStayAnswer => out.push_str(&format!(
            "State: engaged with {partner}, {} turns so far, waiting for the answer to the stay question.\n",
            s.turn_count
        )),
    }
    if let Some(u) = &input.last_user_utterance {
        out.push_str(&format!("Last thing the person said: \"{u}\"\n"));
    }
    out
}
