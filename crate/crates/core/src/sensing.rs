//! Simulated distributed proximity sensing.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{ProximityHit, Scene};
use crate::kinematics::{Configuration, Frames, KinematicChain, SensorMount};

#[derive(Clone, Debug, PartialEq)]
pub struct SensorReading {
    pub sensor_index: usize,
    pub position: Vector3<f64>,
    /// Nearest obstacle within the field of view, if any.
    pub hit: Option<ProximityHit>,
    /// Obstacle closer than the rest length.
    pub active: bool,
    /// Switched off by a [`SuppressionRule`]; such a reading carries no hit.
    pub suppressed: bool,
}

impl SensorReading {
    pub fn distance(&self) -> Option<f64> {
        self.hit.map(|h| h.distance)
    }
}

/// Turns sensor `sensor` off while it is within `within` meters of the
/// obstacle named `obstacle` (for instance an end-effector sensor near the
/// object it is about to grasp).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuppressionRule {
    pub sensor: usize,
    pub obstacle: String,
    pub within: f64,
}

pub(crate) fn read_sensor(
    index: usize,
    mount: &SensorMount,
    frames: &Frames,
    scene: &Scene,
    t: f64,
) -> Result<SensorReading> {
    let position = frames.point(mount.link_index, &mount.offset)?;
    let hit = scene.nearest(&position, t, mount.field_of_view);
    Ok(SensorReading {
        sensor_index: index,
        position,
        active: hit.is_some_and(|h| h.distance <= mount.rest_length),
        hit,
        suppressed: false,
    })
}

pub(crate) fn sense_frames(
    chain: &KinematicChain,
    frames: &Frames,
    scene: &Scene,
    t: f64,
    suppression: &[SuppressionRule],
) -> Result<Vec<SensorReading>> {
    let mut readings = chain
        .sensors
        .iter()
        .enumerate()
        .map(|(k, m)| read_sensor(k, m, frames, scene, t))
        .collect::<Result<Vec<_>>>()?;
    apply_suppression(&mut readings, suppression, scene, t);
    Ok(readings)
}

/// Reads every mounted sensor at configuration `q` and time `t`.
pub fn sense_all(
    chain: &KinematicChain,
    q: &Configuration,
    scene: &Scene,
    t: f64,
) -> Result<Vec<SensorReading>> {
    let frames = chain.frames(q)?;
    sense_frames(chain, &frames, scene, t, &[])
}

/// Clears readings whose sensor is within range of its rule's obstacle.
/// Rules naming obstacles absent from `scene` are ignored.
pub fn apply_suppression(
    readings: &mut [SensorReading],
    rules: &[SuppressionRule],
    scene: &Scene,
    t: f64,
) {
    for rule in rules {
        let Some(target) = scene.index_of(&rule.obstacle) else {
            continue;
        };
        let Some(reading) = readings.get_mut(rule.sensor) else {
            continue;
        };
        if scene.query(target, &reading.position, t).distance < rule.within {
            reading.hit = None;
            reading.active = false;
            reading.suppressed = true;
        }
    }
}

/// `min_k d_k` over present hits, `+inf` when nothing is in range.
pub fn min_distance(readings: &[SensorReading]) -> f64 {
    nearest_reading(readings).map_or(f64::INFINITY, |(_, d)| d)
}

/// Index of the sensor achieving the minimum distance (first on ties).
pub fn nearest_reading(readings: &[SensorReading]) -> Option<(usize, f64)> {
    readings
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.distance().map(|d| (i, d)))
        .fold(None, |best, c| match best {
            Some(b) if b.1 <= c.1 => Some(b),
            _ => Some(c),
        })
}
