use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::proxemics::{Millis, TrackId};

use super::Utterance;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechFragment {
    pub track_id: TrackId,
    pub text: String,
    #[serde(rename = "final")]
    pub is_final: bool,
    pub timestamp: Millis,
}

#[derive(Debug, Clone)]
struct Pending {
    parts: Vec<String>,
    started: Millis,
    last: Millis,
}

impl Pending {
    fn finish(self, track: TrackId) -> Option<Utterance> {
        let text = self.parts.join(" ");
        (!text.is_empty()).then(|| Utterance::user(track, text, self.started, self.last))
    }
}

/// Joins speech fragments into utterances, one pending utterance per track.
/// An utterance ends on a client-final fragment or once the track has been
/// silent for the whole window.
#[derive(Debug, Clone)]
pub struct UtteranceAssembler {
    silence_window: Millis,
    pending: BTreeMap<TrackId, Pending>,
}

impl UtteranceAssembler {
    pub fn new(silence_window: Millis) -> Self {
        Self {
            silence_window,
            pending: BTreeMap::new(),
        }
    }

    pub fn silence_window(&self) -> Millis {
        self.silence_window
    }

    pub fn push(&mut self, fragment: SpeechFragment) -> Vec<Utterance> {
        let mut done = Vec::new();
        let SpeechFragment {
            track_id,
            text,
            is_final,
            timestamp,
        } = fragment;
        if let Some(p) = self.pending.get(&track_id) {
            if timestamp.saturating_sub(p.last) >= self.silence_window {
                let p = self.pending.remove(&track_id).expect("checked above");
                done.extend(p.finish(track_id.clone()));
            }
        }
        let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
        let entry = self.pending.entry(track_id.clone()).or_insert_with(|| Pending {
            parts: Vec::new(),
            started: timestamp,
            last: timestamp,
        });
        if !text.is_empty() {
            entry.parts.push(text);
        }
        entry.last = timestamp;
        if is_final {
            let p = self.pending.remove(&track_id).expect("inserted above");
            done.extend(p.finish(track_id));
        }
        done
    }

    /// Finalizes every track that has been silent for the window by `now`.
    pub fn flush_due(&mut self, now: Millis) -> Vec<Utterance> {
        let due: Vec<TrackId> = self
            .pending
            .iter()
            .filter(|(_, p)| now.saturating_sub(p.last) >= self.silence_window)
            .map(|(t, _)| t.clone())
            .collect();
        due.into_iter()
            .filter_map(|t| self.pending.remove(&t).and_then(|p| p.finish(t)))
            .collect()
    }

    pub fn deadline(&self, track: &TrackId) -> Option<Millis> {
        self.pending.get(track).map(|p| p.last + self.silence_window)
    }

    pub fn is_pending(&self, track: &TrackId) -> bool {
        self.pending.contains_key(track)
    }

    pub fn discard(&mut self, track: &TrackId) {
        self.pending.remove(track);
    }
}

/// Batch form over a fragment timeline observed up to `now`: the finalized
/// utterances in order, plus whatever is still pending per track.
pub fn detect_end_of_utterance(
    fragments: &[SpeechFragment],
    silence_window: Millis,
    now: Millis,
) -> (Vec<Utterance>, Vec<Utterance>) {
    let mut asm = UtteranceAssembler::new(silence_window);
    let mut done = Vec::new();
    for f in fragments {
        done.extend(asm.flush_due(f.timestamp));
        done.extend(asm.push(f.clone()));
    }
    done.extend(asm.flush_due(now));
    let pending = asm
        .pending
        .into_iter()
        .filter_map(|(t, p)| {
            let mut u = p.finish(t)?;
            u.is_final = false;
            Some(u)
        })
        .collect();
    (done, pending)
}
