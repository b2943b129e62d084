//! The sensed world around the Ditto: tracked bodies, proxemic zones and
//! identity-tag fusion.
//!
//! The Ditto sits at the planar origin. Every body observation carries a
//! position in meters and a heading; distance and facing offset are derived
//! from those so the two can never disagree.

mod fusion;
mod presence;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fusion::{fuse_identity, Association, IdentityFusion, IdentityRegistry, PersonIdentity, TagSighting};
pub use presence::{ExitReason, PresenceEvent, PresenceKind, PresenceTracker, TrackStatus};

/// Logical time in milliseconds.
pub type Millis = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxemicsError {
    #[error("distance must be a finite value >= 0, got {0}")]
    InvalidDistance(f64),
    #[error("out-of-order observation for track {track}: {timestamp} ms is not after {previous} ms")]
    OutOfOrder {
        track: TrackId,
        timestamp: Millis,
        previous: Millis,
    },
    #[error("invalid zone configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid identity registry: {0}")]
    InvalidRegistry(String),
    #[error("tag {0} is not registered")]
    UnregisteredTag(TagId),
    #[error("observation for track {0} has a non-finite coordinate")]
    NonFinite(TrackId),
}

/// Opaque identifier of a tracked body.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackId(pub String);

impl TrackId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Opaque identifier of a UWB tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagId(pub String);

impl TagId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Planar coordinates in meters, Ditto at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// One timestamped sighting of a tracked body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxemicObservation {
    pub track_id: TrackId,
    pub timestamp: Millis,
    pub position: Position,
    pub distance: f64,
    /// Degrees in [0, 180]; 0 means the body faces the Ditto head-on.
    pub facing_offset: f64,
}

impl ProxemicObservation {
    /// Builds an observation from a planar pose. `heading_deg` is measured
    /// counter-clockwise from the +x axis.
    pub fn from_pose(
        track_id: TrackId,
        timestamp: Millis,
        x: f64,
        y: f64,
        heading_deg: f64,
    ) -> Result<Self, ProxemicsError> {
        if !(x.is_finite() && y.is_finite() && heading_deg.is_finite()) {
            return Err(ProxemicsError::NonFinite(track_id));
        }
        let position = Position::new(x, y);
        let distance = position.norm();
        let facing_offset = facing_offset(position, heading_deg);
        Ok(Self {
            track_id,
            timestamp,
            position,
            distance,
            facing_offset,
        })
    }

    pub fn is_facing(&self, config: &ZoneConfig) -> bool {
        self.facing_offset <= config.facing_tolerance
    }
}

/// Angular deviation between a heading and the bearing from `position`
/// toward the origin, in [0, 180].
pub fn facing_offset(position: Position, heading_deg: f64) -> f64 {
    if position.x == 0.0 && position.y == 0.0 {
        return 0.0;
    }
    let toward = (-position.y).atan2(-position.x).to_degrees();
    let diff = (heading_deg - toward).rem_euclid(360.0);
    let offset = if diff > 180.0 { 360.0 - diff } else { diff };
    offset.clamp(0.0, 180.0)
}

/// Proxemic band around the Ditto, ordered from nearest to farthest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Social,
    Public,
    Outside,
}

impl Zone {
    pub fn is_inside(self) -> bool {
        !matches!(self, Zone::Outside)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Zone::Social => "social",
            Zone::Public => "public",
            Zone::Outside => "outside",
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_social_max() -> f64 {
    1.2
}
fn default_public_max() -> f64 {
    4.5
}
fn default_facing_tolerance() -> f64 {
    45.0
}
fn default_dwell() -> Millis {
    2000
}
fn default_track_timeout() -> Millis {
    3000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneConfig {
    #[serde(default = "default_social_max")]
    pub social_max: f64,
    #[serde(default = "default_public_max")]
    pub public_max: f64,
    #[serde(default = "default_facing_tolerance")]
    pub facing_tolerance: f64,
    #[serde(default = "default_dwell")]
    pub dwell_to_engage: Millis,
    /// A track with no observation for this long has left.
    #[serde(default = "default_track_timeout")]
    pub track_timeout: Millis,
}

impl Default for ZoneConfig {
    fn default() -> Self {
        Self {
            social_max: default_social_max(),
            public_max: default_public_max(),
            facing_tolerance: default_facing_tolerance(),
            dwell_to_engage: default_dwell(),
            track_timeout: default_track_timeout(),
        }
    }
}

impl ZoneConfig {
    pub fn validate(&self) -> Result<(), ProxemicsError> {
        if !(self.social_max > 0.0 && self.social_max < self.public_max && self.public_max.is_finite()) {
            return Err(ProxemicsError::InvalidConfig(format!(
                "need 0 < social_max < public_max, got {} and {}",
                self.social_max, self.public_max
            )));
        }
        if !(self.facing_tolerance > 0.0 && self.facing_tolerance <= 180.0) {
            return Err(ProxemicsError::InvalidConfig(format!(
                "facing_tolerance must be in (0, 180], got {}",
                self.facing_tolerance
            )));
        }
        if self.track_timeout == 0 {
            return Err(ProxemicsError::InvalidConfig("track_timeout must be > 0".into()));
        }
        Ok(())
    }
}

/// Classifies a distance into a zone using half-open bands: boundary values
/// belong to the outer zone.
pub fn classify_zone(distance: f64, config: &ZoneConfig) -> Result<Zone, ProxemicsError> {
    if !distance.is_finite() || distance < 0.0 {
        return Err(ProxemicsError::InvalidDistance(distance));
    }
    Ok(if distance < config.social_max {
        Zone::Social
    } else if distance < config.public_max {
        Zone::Public
    } else {
        Zone::Outside
    })
}
