//! Associates UWB tag sightings with camera tracks.
//!
//! A tag reported present is bound to the unassociated track whose latest
//! observation lies nearest the receiver, provided that observation is within
//! the association window of the decision time. Tags with no candidate stay
//! pending and bind to the next track that shows up.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Millis, Position, ProxemicObservation, ProxemicsError, TagId, TrackId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonIdentity {
    pub tag_id: TagId,
    pub name: String,
    /// Key into the relationship list of the active user context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_key: Option<String>,
}

impl PersonIdentity {
    pub fn new(tag_id: impl Into<String>, name: impl Into<String>, context_key: Option<&str>) -> Self {
        Self {
            tag_id: TagId::new(tag_id),
            name: name.into(),
            context_key: context_key.map(str::to_owned),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PersonIdentity>", into = "Vec<PersonIdentity>")]
pub struct IdentityRegistry {
    by_tag: BTreeMap<TagId, PersonIdentity>,
}

impl IdentityRegistry {
    pub fn new(people: impl IntoIterator<Item = PersonIdentity>) -> Result<Self, ProxemicsError> {
        let mut by_tag = BTreeMap::new();
        for p in people {
            if p.name.trim().is_empty() {
                return Err(ProxemicsError::InvalidRegistry(format!("tag {} has an empty name", p.tag_id)));
            }
            if by_tag.contains_key(&p.tag_id) {
                return Err(ProxemicsError::InvalidRegistry(format!("duplicate tag {}", p.tag_id)));
            }
            by_tag.insert(p.tag_id.clone(), p);
        }
        Ok(Self { by_tag })
    }

    pub fn get(&self, tag: &TagId) -> Option<&PersonIdentity> {
        self.by_tag.get(tag)
    }

    pub fn contains(&self, tag: &TagId) -> bool {
        self.by_tag.contains_key(tag)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PersonIdentity> {
        self.by_tag.values()
    }

    pub fn is_empty(&self) -> bool {
        self.by_tag.is_empty()
    }
}

impl TryFrom<Vec<PersonIdentity>> for IdentityRegistry {
    type Error = ProxemicsError;

    fn try_from(value: Vec<PersonIdentity>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<IdentityRegistry> for Vec<PersonIdentity> {
    fn from(value: IdentityRegistry) -> Self {
        value.by_tag.into_values().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSighting {
    pub tag_id: TagId,
    pub timestamp: Millis,
    /// True when the tag entered receiver range, false when it left.
    pub present: bool,
    /// Ground-truth wearer supplied by a simulator client, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_hint: Option<TrackId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    pub tag_id: TagId,
    pub track_id: TrackId,
    pub timestamp: Millis,
}

#[derive(Debug, Clone)]
pub struct IdentityFusion {
    window: Millis,
    receiver: Position,
    by_track: BTreeMap<TrackId, TagId>,
    by_tag: BTreeMap<TagId, TrackId>,
    /// Tags in range but not yet bound, with the time they became pending.
    pending: BTreeMap<TagId, Millis>,
}

impl IdentityFusion {
    pub fn new(window: Millis, receiver: Position) -> Self {
        Self {
            window,
            receiver,
            by_track: BTreeMap::new(),
            by_tag: BTreeMap::new(),
            pending: BTreeMap::new(),
        }
    }

    pub fn tag_of(&self, track: &TrackId) -> Option<&TagId> {
        self.by_track.get(track)
    }

    pub fn track_of(&self, tag: &TagId) -> Option<&TrackId> {
        self.by_tag.get(tag)
    }

    pub fn associations(&self) -> &BTreeMap<TrackId, TagId> {
        &self.by_track
    }

    pub fn pending(&self) -> impl Iterator<Item = &TagId> {
        self.pending.keys()
    }

    pub fn is_pending(&self, tag: &TagId) -> bool {
        self.pending.contains_key(tag)
    }

    /// Processes one sighting. Returns the association it created, if any.
    pub fn on_sighting<'a>(
        &mut self,
        sighting: &TagSighting,
        registry: &IdentityRegistry,
        latest: impl IntoIterator<Item = &'a ProxemicObservation>,
    ) -> Result<Option<Association>, ProxemicsError> {
        if !registry.contains(&sighting.tag_id) {
            return Err(ProxemicsError::UnregisteredTag(sighting.tag_id.clone()));
        }
        if !sighting.present {
            self.release(&sighting.tag_id);
            return Ok(None);
        }
        if self.by_tag.contains_key(&sighting.tag_id) {
            return Ok(None);
        }
        let latest: Vec<&ProxemicObservation> = latest.into_iter().collect();
        let chosen = sighting
            .track_hint
            .as_ref()
            .filter(|hint| {
                latest
                    .iter()
                    .any(|o| &o.track_id == *hint && self.eligible(o, sighting.timestamp))
            })
            .cloned()
            .or_else(|| self.nearest_candidate(sighting.timestamp, latest.iter().copied()));
        match chosen {
            Some(track) => Ok(Some(self.bind(sighting.tag_id.clone(), track, sighting.timestamp))),
            None => {
                self.pending.entry(sighting.tag_id.clone()).or_insert(sighting.timestamp);
                Ok(None)
            }
        }
    }

    /// Binds pending tags to tracks observed around `now`, earliest pending
    /// tag first.
    pub fn resolve_pending<'a>(
        &mut self,
        now: Millis,
        latest: impl IntoIterator<Item = &'a ProxemicObservation>,
    ) -> Vec<Association> {
        if self.pending.is_empty() {
            return Vec::new();
        }
        let latest: Vec<&ProxemicObservation> = latest.into_iter().collect();
        let mut order: Vec<(Millis, TagId)> = self.pending.iter().map(|(t, ts)| (*ts, t.clone())).collect();
        order.sort();
        let mut made = Vec::new();
        for (_, tag) in order {
            if let Some(track) = self.nearest_candidate(now, latest.iter().copied()) {
                made.push(self.bind(tag, track, now));
            }
        }
        made
    }

    /// The track is gone. Its tag, still in range, goes back to pending.
    pub fn on_track_exit(&mut self, track: &TrackId, now: Millis) -> Option<TagId> {
        let tag = self.by_track.remove(track)?;
        self.by_tag.remove(&tag);
        self.pending.insert(tag.clone(), now);
        Some(tag)
    }

    pub fn release(&mut self, tag: &TagId) -> Option<TrackId> {
        self.pending.remove(tag);
        let track = self.by_tag.remove(tag)?;
        self.by_track.remove(&track);
        Some(track)
    }

    fn eligible(&self, obs: &ProxemicObservation, at: Millis) -> bool {
        !self.by_track.contains_key(&obs.track_id) && obs.timestamp.abs_diff(at) <= self.window
    }

    fn nearest_candidate<'a>(
        &self,
        at: Millis,
        latest: impl Iterator<Item = &'a ProxemicObservation>,
    ) -> Option<TrackId> {
        latest
            .filter(|o| self.eligible(o, at))
            .min_by(|a, b| {
                let da = a.position.distance_to(&self.receiver);
                let db = b.position.distance_to(&self.receiver);
                da.total_cmp(&db).then_with(|| a.track_id.cmp(&b.track_id))
            })
            .map(|o| o.track_id.clone())
    }

    fn bind(&mut self, tag: TagId, track: TrackId, at: Millis) -> Association {
        self.pending.remove(&tag);
        self.by_track.insert(track.clone(), tag.clone());
        self.by_tag.insert(tag.clone(), track.clone());
        Association {
            tag_id: tag,
            track_id: track,
            timestamp: at,
        }
    }

    fn check_injective(&self) -> bool {
        let tracks: BTreeSet<_> = self.by_tag.values().collect();
        let tags: BTreeSet<_> = self.by_track.values().collect();
        tracks.len() == self.by_tag.len()
            && tags.len() == self.by_track.len()
            && self.by_track.iter().all(|(tr, tg)| self.by_tag.get(tg) == Some(tr))
    }
}

/// Batch form: replays observations and sightings in timestamp order
/// (observations first on ties) and returns the final association map plus
/// any sightings that were dropped.
pub fn fuse_identity(
    observations: &[ProxemicObservation],
    sightings: &[TagSighting],
    registry: &IdentityRegistry,
    window: Millis,
    receiver: Position,
) -> (BTreeMap<TrackId, TagId>, Vec<ProxemicsError>) {
    enum Item<'a> {
        Obs(&'a ProxemicObservation),
        Sight(&'a TagSighting),
    }
    let mut items: Vec<(Millis, u8, usize, Item)> = observations
        .iter()
        .enumerate()
        .map(|(i, o)| (o.timestamp, 0, i, Item::Obs(o)))
        .chain(
            sightings
                .iter()
                .enumerate()
                .map(|(i, s)| (s.timestamp, 1, i, Item::Sight(s))),
        )
        .collect();
    items.sort_by_key(|(ts, kind, i, _)| (*ts, *kind, *i));

    let mut fusion = IdentityFusion::new(window, receiver);
    let mut latest: BTreeMap<TrackId, ProxemicObservation> = BTreeMap::new();
    let mut errors = Vec::new();
    for (ts, _, _, item) in items {
        match item {
            Item::Obs(o) => {
                latest.insert(o.track_id.clone(), o.clone());
                fusion.resolve_pending(ts, latest.values());
            }
            Item::Sight(s) => {
                if let Err(e) = fusion.on_sighting(s, registry, latest.values()) {
                    errors.push(e);
                }
            }
        }
        debug_assert!(fusion.check_injective());
    }
    (fusion.by_track, errors)
}
