use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{classify_zone, Millis, ProxemicObservation, ProxemicsError, TrackId, Zone, ZoneConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    /// The body walked past the outer boundary.
    ZoneExit,
    /// The body stopped being observed.
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PresenceKind {
    EnteredZone { zone: Zone },
    MovedZone { from: Zone, to: Zone },
    LeftZone { reason: ExitReason },
    FacingChanged { facing: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceEvent {
    pub track_id: TrackId,
    pub timestamp: Millis,
    pub kind: PresenceKind,
    /// Zone after the event.
    pub zone: Zone,
    pub distance: f64,
    pub facing_offset: f64,
    pub facing: bool,
}

impl PresenceEvent {
    pub fn is_exit(&self) -> bool {
        matches!(self.kind, PresenceKind::LeftZone { .. })
    }
}

/// Per-track view kept by the tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackStatus {
    pub last: ProxemicObservation,
    pub zone: Zone,
    pub facing: bool,
    /// When the current (zone, facing) condition began.
    pub condition_since: Millis,
}

impl TrackStatus {
    pub fn dwell(&self, now: Millis) -> Millis {
        now.saturating_sub(self.condition_since)
    }
}

/// Turns the observation stream into zone transitions, one track at a time.
#[derive(Debug, Clone, Default)]
pub struct PresenceTracker {
    config: ZoneConfig,
    tracks: BTreeMap<TrackId, TrackStatus>,
}

impl PresenceTracker {
    pub fn new(config: ZoneConfig) -> Self {
        Self {
            config,
            tracks: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &ZoneConfig {
        &self.config
    }

    pub fn status(&self, track: &TrackId) -> Option<&TrackStatus> {
        self.tracks.get(track)
    }

    pub fn tracks(&self) -> impl Iterator<Item = (&TrackId, &TrackStatus)> {
        self.tracks.iter()
    }

    pub fn is_tracked(&self, track: &TrackId) -> bool {
        self.tracks.contains_key(track)
    }

    pub fn zone_of(&self, track: &TrackId) -> Zone {
        self.tracks.get(track).map_or(Zone::Outside, |s| s.zone)
    }

    /// Feeds one observation and returns the presence events it causes.
    pub fn observe(&mut self, obs: ProxemicObservation) -> Result<Vec<PresenceEvent>, ProxemicsError> {
        let zone = classify_zone(obs.distance, &self.config)?;
        let facing = obs.is_facing(&self.config);
        let mut events = Vec::new();

        let Some(status) = self.tracks.get_mut(&obs.track_id) else {
            if zone.is_inside() {
                events.push(event(&obs, PresenceKind::EnteredZone { zone }, zone, facing));
            }
            self.tracks.insert(
                obs.track_id.clone(),
                TrackStatus {
                    condition_since: obs.timestamp,
                    last: obs,
                    zone,
                    facing,
                },
            );
            return Ok(events);
        };

        if obs.timestamp <= status.last.timestamp {
            return Err(ProxemicsError::OutOfOrder {
                track: obs.track_id.clone(),
                timestamp: obs.timestamp,
                previous: status.last.timestamp,
            });
        }

        let prev_zone = status.zone;
        match (prev_zone.is_inside(), zone.is_inside()) {
            (false, true) => events.push(event(&obs, PresenceKind::EnteredZone { zone }, zone, facing)),
            (true, false) => events.push(event(
                &obs,
                PresenceKind::LeftZone {
                    reason: ExitReason::ZoneExit,
                },
                zone,
                facing,
            )),
            (true, true) if prev_zone != zone => events.push(event(
                &obs,
                PresenceKind::MovedZone {
                    from: prev_zone,
                    to: zone,
                },
                zone,
                facing,
            )),
            _ => {}
        }
        // Entry already carries the facing state.
        let entered = !prev_zone.is_inside() && zone.is_inside();
        if zone.is_inside() && !entered && facing != status.facing {
            events.push(event(&obs, PresenceKind::FacingChanged { facing }, zone, facing));
        }

        if zone != prev_zone || facing != status.facing {
            status.condition_since = obs.timestamp;
        }
        status.zone = zone;
        status.facing = facing;
        status.last = obs;
        Ok(events)
    }

    /// Drops every track whose last observation is at least `track_timeout`
    /// old. Tracks that were inside a zone produce a timeout exit stamped at
    /// the moment the timeout elapsed.
    pub fn expire(&mut self, now: Millis) -> Vec<PresenceEvent> {
        let stale: Vec<TrackId> = self
            .tracks
            .iter()
            .filter(|(_, s)| now.saturating_sub(s.last.timestamp) >= self.config.track_timeout)
            .map(|(id, _)| id.clone())
            .collect();
        stale.into_iter().filter_map(|id| self.remove(&id)).collect()
    }

    /// Expires a single track if it is stale at `now`.
    pub fn expire_track(&mut self, track: &TrackId, now: Millis) -> Option<PresenceEvent> {
        let status = self.tracks.get(track)?;
        if now.saturating_sub(status.last.timestamp) < self.config.track_timeout {
            return None;
        }
        self.remove(track)
    }

    /// When the given track will time out if nothing else is observed.
    pub fn expiry_deadline(&self, track: &TrackId) -> Option<Millis> {
        self.tracks
            .get(track)
            .map(|s| s.last.timestamp + self.config.track_timeout)
    }

    fn remove(&mut self, track: &TrackId) -> Option<PresenceEvent> {
        let status = self.tracks.remove(track)?;
        if !status.zone.is_inside() {
            return None;
        }
        let ts = status.last.timestamp + self.config.track_timeout;
        Some(PresenceEvent {
            track_id: track.clone(),
            timestamp: ts,
            kind: PresenceKind::LeftZone {
                reason: ExitReason::Timeout,
            },
            zone: Zone::Outside,
            distance: status.last.distance,
            facing_offset: status.last.facing_offset,
            facing: status.facing,
        })
    }
}

fn event(obs: &ProxemicObservation, kind: PresenceKind, zone: Zone, facing: bool) -> PresenceEvent {
    PresenceEvent {
        track_id: obs.track_id.clone(),
        timestamp: obs.timestamp,
        kind,
        zone,
        distance: obs.distance,
        facing_offset: obs.facing_offset,
        facing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(track: &str, ts: Millis, x: f64, heading: f64) -> ProxemicObservation {
        ProxemicObservation::from_pose(TrackId::new(track), ts, x, 0.0, heading).unwrap()
    }

    // Facing the Ditto from +x means heading 180.
    const FACE: f64 = 180.0;
    const AWAY: f64 = 0.0;

    #[test]
    fn appearing_at_two_meters_enters_public() {
        let mut t = PresenceTracker::new(ZoneConfig::default());
        let ev = t.observe(obs("a", 0, 2.0, FACE)).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, PresenceKind::EnteredZone { zone: Zone::Public });
        assert!(ev[0].facing);
    }

    #[test]
    fn approach_moves_to_social() {
        let mut t = PresenceTracker::new(ZoneConfig::default());
        t.observe(obs("a", 0, 2.0, FACE)).unwrap();
        let ev = t.observe(obs("a", 500, 0.9, FACE)).unwrap();
        assert_eq!(
            ev.iter().map(|e| e.kind).collect::<Vec<_>>(),
            vec![PresenceKind::MovedZone {
                from: Zone::Public,
                to: Zone::Social
            }]
        );
    }

    #[test]
    fn walking_out_leaves() {
        let mut t = PresenceTracker::new(ZoneConfig::default());
        t.observe(obs("a", 0, 2.0, FACE)).unwrap();
        let ev = t.observe(obs("a", 500, 6.0, FACE)).unwrap();
        assert_eq!(
            ev[0].kind,
            PresenceKind::LeftZone {
                reason: ExitReason::ZoneExit
            }
        );
        // Still tracked while outside; coming back is a fresh entry.
        let ev = t.observe(obs("a", 1000, 3.0, FACE)).unwrap();
        assert_eq!(ev[0].kind, PresenceKind::EnteredZone { zone: Zone::Public });
    }

    #[test]
    fn first_sighting_outside_is_silent() {
        let mut t = PresenceTracker::new(ZoneConfig::default());
        assert!(t.observe(obs("a", 0, 5.0, FACE)).unwrap().is_empty());
        assert!(t.is_tracked(&TrackId::new("a")));
    }

    #[test]
    fn facing_change_crosses_tolerance() {
        let mut t = PresenceTracker::new(ZoneConfig::default());
        t.observe(obs("a", 0, 2.0, FACE)).unwrap();
        // 40 deg off is still facing.
        assert!(t.observe(obs("a", 100, 2.0, FACE + 40.0)).unwrap().is_empty());
        let ev = t.observe(obs("a", 200, 2.0, AWAY)).unwrap();
        assert_eq!(ev[0].kind, PresenceKind::FacingChanged { facing: false });
        let ev = t.observe(obs("a", 300, 2.0, FACE)).unwrap();
        assert_eq!(ev[0].kind, PresenceKind::FacingChanged { facing: true });
    }

    #[test]
    fn out_of_order_rejected() {
        let mut t = PresenceTracker::new(ZoneConfig::default());
        t.observe(obs("a", 100, 2.0, FACE)).unwrap();
        assert!(matches!(
            t.observe(obs("a", 100, 2.0, FACE)),
            Err(ProxemicsError::OutOfOrder { .. })
        ));
        assert!(t.observe(obs("a", 50, 2.0, FACE)).is_err());
        // Other tracks have their own ordering.
        assert!(t.observe(obs("b", 50, 2.0, FACE)).is_ok());
    }

    #[test]
    fn dwell_resets_on_condition_change() {
        let mut t = PresenceTracker::new(ZoneConfig::default());
        t.observe(obs("a", 0, 2.0, FACE)).unwrap();
        t.observe(obs("a", 1000, 0.9, FACE)).unwrap();
        t.observe(obs("a", 1500, 0.8, FACE)).unwrap();
        assert_eq!(t.status(&TrackId::new("a")).unwrap().dwell(3000), 2000);
    }

    /// Reference single-track simulator: walks a scripted trace of
    /// (timestamp, distance) samples and reports when the track must be
    /// declared gone, using nothing but the timeout definition.
    fn reference_timeout(trace: &[(Millis, f64)], timeout: Millis, horizon: Millis) -> Option<Millis> {
        let (last_ts, last_d) = *trace.last()?;
        let inside = last_d < 4.5;
        (inside && horizon >= last_ts + timeout).then_some(last_ts + timeout)
    }

    #[test]
    fn silence_times_out_track() {
        let trace = [(0, 2.0), (500, 1.8), (1000, 1.5)];
        let horizon = 1000 + 3500;
        let expected = reference_timeout(&trace, 3000, horizon);
        assert_eq!(expected, Some(4000));

        let mut t = PresenceTracker::new(ZoneConfig::default());
        for (ts, d) in trace {
            t.observe(obs("a", ts, d, FACE)).unwrap();
        }
        assert!(t.expire(3999).is_empty());
        let ev = t.expire(horizon);
        assert_eq!(ev.len(), 1);
        assert_eq!(
            ev[0].kind,
            PresenceKind::LeftZone {
                reason: ExitReason::Timeout
            }
        );
        assert_eq!(Some(ev[0].timestamp), expected);
        assert!(!t.is_tracked(&TrackId::new("a")));
    }

    proptest! {
        #[test]
        fn entries_and_exits_alternate(
            steps in proptest::collection::vec((0.0f64..7.0, 1u64..4000, any::<bool>()), 1..60)
        ) {
            let mut t = PresenceTracker::new(ZoneConfig::default());
            let mut ts = 0;
            let mut inside = false;
            for (d, gap, check_timeout) in steps {
                ts += gap;
                let mut events = Vec::new();
                if check_timeout {
                    events.extend(t.expire(ts));
                }
                events.extend(t.observe(obs("a", ts, d, FACE)).unwrap());
                for e in events {
                    match e.kind {
                        PresenceKind::EnteredZone { .. } => { prop_assert!(!inside); inside = true; }
                        PresenceKind::LeftZone { .. } => { prop_assert!(inside); inside = false; }
                        _ => prop_assert!(inside),
                    }
                }
            }
        }
    }
}
