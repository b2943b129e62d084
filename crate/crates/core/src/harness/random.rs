//! Seeded random single-visitor episodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::proxemics::Millis;

use super::reference::{toward_origin, ScenarioBuilder, JACK_TAG};
use super::Scenario;

const CHATTER: &[&str] = &[
    "I just came back from a meeting.",
    "The coffee machine is broken again.",
    "What are you reading today?",
    "I am working on a paper about maps.",
    "Did you see the new posters?",
    "It is raining outside.",
    "My bike got a flat tire.",
    "We should plan a lab outing.",
];

const ACCEPT: &[&str] = &["Sure, I can stay a bit.", "Yes, of course.", "I have time, why not."];

const DECLINE: &[&str] = &["No, I have to go.", "Sorry, I need to run.", "Not now, maybe later."];

/// What a generated episode looked like, for reporting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodePlan {
    pub seed: u64,
    pub tagged: bool,
    pub utterances: usize,
    pub walks_away: bool,
    pub barge_ins: usize,
}

/// One visitor approaches, talks for a random number of turns with random
/// answers and timing, then walks away or stays silent until the end.
pub fn random_episode(seed: u64) -> (Scenario, EpisodePlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tagged = rng.random_bool(0.5);
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let stand = (side * rng.random_range(0.5..1.15), rng.random_range(-0.3..0.3));
    let start: Millis = rng.random_range(500..3000);
    let arrive = start + 1500;
    let utterances = rng.random_range(1..=16usize);
    let mut b = ScenarioBuilder::new(&format!("random_{seed}")).seed(seed);
    if tagged {
        b = b.tag(JACK_TAG, Some("v"), start);
    }
    b = b.approach("v", (side * 3.5, 1.0), stand, start, arrive, 500);
    let mut t = arrive + 4_000;
    let mut barge_ins = 0;
    for _ in 0..utterances {
        let roll: f64 = rng.random();
        let pool = if roll < 0.7 {
            CHATTER
        } else if roll < 0.85 {
            ACCEPT
        } else {
            DECLINE
        };
        let text = pool[rng.random_range(0..pool.len())];
        b = b.say("v", t, text);
        let gap = if rng.random_bool(0.15) {
            barge_ins += 1;
            rng.random_range(500..2_000)
        } else {
            rng.random_range(4_500..7_000)
        };
        t += gap;
    }
    let walks_away = rng.random_bool(0.6);
    let leave = t + rng.random_range(0..4_000);
    b = b.hold("v", stand, toward_origin(stand.0, stand.1), arrive, leave, 500);
    if walks_away {
        b = b.approach("v", stand, (side * 5.5, 0.0), leave + 500, leave + 2_500, 500);
        if tagged {
            b = b.untag(JACK_TAG, leave + 3_000);
        }
    }
    let plan = EpisodePlan {
        seed,
        tagged,
        utterances,
        walks_away,
        barge_ins,
    };
    (b.build(), plan)
}
