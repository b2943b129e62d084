//! Hand-written scenarios used by tests, the CLI and the acceptance suite.

use chrono::NaiveDate;

use crate::conversation::Topic;
use crate::engagement::ControlAction;
use crate::proxemics::{Millis, PersonIdentity};
use crate::wire::Inbound;

use super::{DaySetup, Scenario, SCENARIO_FORMAT};

pub const JACK_TAG: &str = "uwb-jack";
pub const MAYA_TAG: &str = "uwb-maya";

/// Context for the reference scenarios. The Source is a fictional student.
pub fn reference_context() -> serde_json::Value {
    serde_json::json!({
        "Background": "You are Sam's Ditto, a digital embodiment of Sam on the wall of the lab hallway. Sam is a graduate student finishing a thesis on crowd simulation this month.",
        "PersonalityTraits": "Cheerful, Curious, Witty",
        "SocialRelationshipInfo": [
            {
                "Who": "Jack",
                "RelationshipInfo": "A lab mate who builds wearable sensors and goes bouldering on weekends.",
                "SourceIntent": "Ask whether the sensor demo will be ready for Friday."
            },
            {
                "Who": "Maya",
                "RelationshipInfo": "Runs the robotics reading group and recently adopted a greyhound.",
                "SourceIntent": "Thank her for the reading list and ask how the greyhound is settling in."
            }
        ]
    })
}

pub fn reference_topics() -> Vec<Topic> {
    vec![
        Topic::new("Departing lunch", "where to go for the farewell lunch with mentors"),
        Topic::new("Paddleboarding", "whether it is worth trying this summer"),
        Topic::new("Thesis defense", "how to keep the slides short"),
    ]
}

fn reference_script() -> Vec<String> {
    [
        "Hello there! I was just reading. Nice to see you.",
        "That sounds fun. What made you pick that?",
        "Ha, I would have guessed the opposite.",
        "Interesting. Have you tried it more than once?",
        "I keep meaning to do that myself.",
        "Good point. What would you change about it?",
        "That makes sense to me.",
        "Really? Tell me more about that.",
        "I like that idea a lot.",
        "Fair enough. It happens to everyone.",
        "Nice. I will remember that.",
        "Oh, that is a good one.",
    ]
    .into_iter()
    .map(str::to_owned)
    .collect()
}

pub fn reference_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2026, 3, 2).expect("valid date")
}

/// Heading from `(x, y)` straight at the Ditto.
pub fn toward_origin(x: f64, y: f64) -> f64 {
    (-y).atan2(-x).to_degrees()
}

/// Fluent construction of scenario timelines. Events may be added in any
/// order; `build` sorts them by timestamp, keeping insertion order on ties.
#[derive(Debug, Clone)]
pub struct ScenarioBuilder {
    scenario: Scenario,
}

impl ScenarioBuilder {
    pub fn new(name: &str) -> Self {
        Self {
            scenario: Scenario {
                format: SCENARIO_FORMAT.to_owned(),
                name: name.to_owned(),
                seed: 0,
                registry: vec![
                    PersonIdentity::new(JACK_TAG, "Jack", None),
                    PersonIdentity::new(MAYA_TAG, "Maya", None),
                ],
                days: vec![DaySetup {
                    date: reference_date(),
                    start_ms: 0,
                    context: reference_context(),
                    topics: reference_topics(),
                }],
                script: reference_script(),
                timeline: Vec::new(),
                end_ms: None,
                expected: None,
            },
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self
    }

    pub fn script(mut self, lines: &[&str]) -> Self {
        self.scenario.script = lines.iter().map(|s| (*s).to_owned()).collect();
        self
    }

    pub fn registry(mut self, people: Vec<PersonIdentity>) -> Self {
        self.scenario.registry = people;
        self
    }

    pub fn context(mut self, context: serde_json::Value) -> Self {
        self.scenario.days[0].context = context;
        self
    }

    pub fn add_day(mut self, date: NaiveDate, start_ms: Millis, topics: Vec<Topic>) -> Self {
        let context = self.scenario.days[0].context.clone();
        self.scenario.days.push(DaySetup {
            date,
            start_ms,
            context,
            topics,
        });
        self
    }

    pub fn end(mut self, at: Millis) -> Self {
        self.scenario.end_ms = Some(at);
        self
    }

    pub fn push(mut self, msg: Inbound) -> Self {
        self.scenario.timeline.push(msg);
        self
    }

    pub fn walk(self, track: &str, ts: Millis, at: (f64, f64), facing_deg: f64) -> Self {
        self.push(Inbound::Move {
            track_id: track.to_owned(),
            x: at.0,
            y: at.1,
            facing_deg,
            ts,
        })
    }

    /// Moves in a straight line facing the Ditto, one sample per `every` ms,
    /// arriving at `to` at time `until`.
    pub fn approach(mut self, track: &str, from: (f64, f64), to: (f64, f64), start: Millis, until: Millis, every: Millis) -> Self {
        let span = (until - start).max(1) as f64;
        let mut t = start;
        loop {
            let k = (t - start) as f64 / span;
            let mm = |v: f64| (v * 1000.0).round() / 1000.0;
            let (x, y) = (mm(from.0 + (to.0 - from.0) * k), mm(from.1 + (to.1 - from.1) * k));
            self = self.walk(track, t, (x, y), toward_origin(x, y));
            if t >= until {
                break self;
            }
            t = (t + every).min(until);
        }
    }

    /// Stands still at `at`, re-reported every `every` ms in `(from, until]`.
    pub fn hold(mut self, track: &str, at: (f64, f64), facing_deg: f64, from: Millis, until: Millis, every: Millis) -> Self {
        let mut t = from + every;
        while t <= until {
            self = self.walk(track, t, at, facing_deg);
            t += every;
        }
        self
    }

    pub fn say(self, track: &str, ts: Millis, text: &str) -> Self {
        self.push(Inbound::Speech {
            track_id: track.to_owned(),
            text: text.to_owned(),
            is_final: true,
            ts,
        })
    }

    pub fn fragment(self, track: &str, ts: Millis, text: &str) -> Self {
        self.push(Inbound::Speech {
            track_id: track.to_owned(),
            text: text.to_owned(),
            is_final: false,
            ts,
        })
    }

    pub fn tag(self, tag: &str, track: Option<&str>, ts: Millis) -> Self {
        self.push(Inbound::Tag {
            tag_id: tag.to_owned(),
            track_id: track.map(str::to_owned),
            present: true,
            ts,
        })
    }

    pub fn untag(self, tag: &str, ts: Millis) -> Self {
        self.push(Inbound::Tag {
            tag_id: tag.to_owned(),
            track_id: None,
            present: false,
            ts,
        })
    }

    pub fn control(self, action: ControlAction, ts: Millis) -> Self {
        self.push(Inbound::Control { action, ts: Some(ts) })
    }

    pub fn build(mut self) -> Scenario {
        self.scenario.timeline.sort_by_key(|m| m.ts().unwrap_or(0));
        self.scenario
    }
}

/// Jack walks up wearing his tag, chats for six turns and declines the
/// stay prompt.
pub fn jack_walkup() -> Scenario {
    let mut b = ScenarioBuilder::new("jack_walkup")
        .tag(JACK_TAG, Some("p1"), 900)
        .walk("p1", 1000, (2.0, 0.0), 180.0)
        .approach("p1", (2.0, 0.0), (0.9, 0.0), 1500, 2000, 500)
        .hold("p1", (0.9, 0.0), 180.0, 2000, 44_000, 500);
    let lines = [
        "Hi! I was on my way to the kitchen.",
        "The sensor demo is almost done, actually.",
        "We still need to fix the battery holder.",
        "Maybe by Thursday if the parts arrive.",
        "I went bouldering on Saturday, it was great.",
        "The new wall at the gym is really hard.",
        "Sorry, I have to go now.",
    ];
    for (i, text) in lines.iter().enumerate() {
        b = b.say("p1", 8_000 + 5_000 * i as Millis, text);
    }
    b.approach("p1", (0.9, 0.0), (5.0, 0.0), 44_500, 46_500, 500)
        .untag(JACK_TAG, 47_000)
        .build()
}

/// Jack visits and leaves, then an untagged passerby does the same.
pub fn passerby_pair() -> Scenario {
    ScenarioBuilder::new("passerby_pair")
        .tag(JACK_TAG, Some("p1"), 500)
        .approach("p1", (3.0, 1.0), (1.0, 0.2), 500, 2000, 500)
        .hold("p1", (1.0, 0.2), toward_origin(1.0, 0.2), 2000, 20_000, 500)
        .say("p1", 8_000, "Hi there, how is the thesis going?")
        .say("p1", 13_000, "Good luck with the writing.")
        .approach("p1", (1.0, 0.2), (5.0, 2.0), 20_500, 22_500, 500)
        .untag(JACK_TAG, 23_000)
        .approach("p2", (-3.0, -1.0), (-0.8, 0.0), 30_000, 31_500, 500)
        .hold("p2", (-0.8, 0.0), 0.0, 31_500, 50_000, 500)
        .say("p2", 38_000, "Hello, what are you reading?")
        .say("p2", 43_000, "I have never read that one.")
        .approach("p2", (-0.8, 0.0), (-5.0, 0.0), 50_500, 52_500, 500)
        .build()
}

/// A passerby talks over the Ditto three times and once speaks while a
/// reply is still on its way.
pub fn barge_in() -> Scenario {
    ScenarioBuilder::new("barge_in")
        .script(&[
            "Hello! I was reading a wonderful book about trains and old stations.",
            "Sure, I am a stand-in for Sam, who works down the hall.",
            "This reply should never be spoken because it arrives too late.",
            "No problem at all, take your time and ask me anything you like.",
            "Sam is away today but will be back tomorrow.",
            "Nice talking with you.",
        ])
        .walk("p1", 1000, (0.8, 0.0), 180.0)
        .hold("p1", (0.8, 0.0), 180.0, 1000, 20_000, 500)
        // greeting starts at 3400
        .fragment("p1", 4000, "wait")
        .say("p1", 4500, "who are you")
        // reply starts at 4900
        .say("p1", 5600, "sorry, go on")
        // next reply is due at 6000
        .say("p1", 5800, "actually one more thing")
        // reply starts at 6200
        .say("p1", 7000, "where is Sam today")
        .approach("p1", (0.8, 0.0), (5.0, 0.0), 20_500, 22_500, 500)
        .build()
}

/// Jack visits on two days. The second day's prompts carry the first day's
/// summary.
pub fn two_day() -> Scenario {
    const DAY: Millis = 86_400_000;
    let visit = |b: ScenarioBuilder, t0: Millis, lines: &[&str]| {
        let mut b = b
            .tag(JACK_TAG, Some("p1"), t0)
            .approach("p1", (2.5, 0.0), (1.0, 0.0), t0 + 100, t0 + 1100, 500)
            .hold("p1", (1.0, 0.0), 180.0, t0 + 1100, t0 + 25_000, 500);
        for (i, text) in lines.iter().enumerate() {
            b = b.say("p1", t0 + 7_000 + 5_000 * i as Millis, text);
        }
        b.approach("p1", (1.0, 0.0), (5.0, 0.0), t0 + 25_500, t0 + 27_500, 500)
            .untag(JACK_TAG, t0 + 28_000)
    };
    let b = ScenarioBuilder::new("two_day").add_day(
        reference_date().succ_opt().expect("valid date"),
        DAY,
        reference_topics(),
    );
    let b = visit(b, 1_000, &["Lunch plans? I know a ramen place nearby.", "The ramen place has great noodles."]);
    visit(b, DAY + 1_000, &["Back again, the ramen was great.", "See you around then."]).build()
}

pub fn reference_scenarios() -> Vec<Scenario> {
    vec![jack_walkup(), passerby_pair(), barge_in(), two_day()]
}
