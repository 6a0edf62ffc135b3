//! Obstacle primitives with exact closest-point queries.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear path traversed at constant speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vector3<f64>>,
}

impl Polyline {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Position and velocity after travelling for `t` seconds at `speed`,
    /// starting on the first point. Holds the last point once reached.
    pub fn sample(&self, speed: f64, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let mut remaining = speed * t.max(0.0);
        for w in self.points.windows(2) {
            let seg = w[1] - w[0];
            let len = seg.norm();
            if len == 0.0 {
                continue;
            }
            if remaining < len {
                let dir = seg / len;
                return (w[0] + dir * remaining, dir * speed);
            }
            remaining -= len;
        }
        (
            *self.points.last().expect("polyline has points"),
            Vector3::zeros(),
        )
    }

    /// Euclidean distance from `p` to the polyline (treated as a set of
    /// segments; a single point for one-point polylines).
    pub fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        if self.points.len() == 1 {
            return (p - self.points[0]).norm();
        }
        self.points
            .windows(2)
            .map(|w| segment_distance(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    };
    (p - (a + ab * s)).norm()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    Box {
        center: Vector3<f64>,
        half_extents: Vector3<f64>,
        /// Roll, pitch, yaw in radians.
        #[serde(default = "Vector3::zeros")]
        rpy: Vector3<f64>,
    },
    Cylinder {
        center: Vector3<f64>,
        axis: Vector3<f64>,
        radius: f64,
        half_height: f64,
    },
}

/// Result of a closest-point query against one obstacle.
///
/// `direction` points from the query toward the obstacle. For a query inside
/// the solid, `distance` is zero, `point` is the query itself and
/// `direction` points from the query into the shape (toward the center for
/// spheres, toward the axis for cylinders, opposite the nearest face normal
/// for boxes).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProximityHit {
    /// Index of the obstacle within its scene.
    pub obstacle: usize,
    pub point: Vector3<f64>,
    pub distance: f64,
    pub direction: Vector3<f64>,
    pub penetrating: bool,
}

impl Shape {
    pub fn center(&self) -> Vector3<f64> {
        match self {
            Shape::Sphere { center, .. }
            | Shape::Box { center, .. }
            | Shape::Cylinder { center, .. } => *center,
        }
    }

    fn with_center(&self, c: Vector3<f64>) -> Shape {
        let mut s = self.clone();
        match &mut s {
            Shape::Sphere { center, .. }
            | Shape::Box { center, .. }
            | Shape::Cylinder { center, .. } => *center = c,
        }
        s
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Shape::Sphere { radius, .. } if !(*radius > 0.0) => {
                Err(format!("radius {radius} must be positive"))
            }
            Shape::Box { half_extents, .. } if !half_extents.iter().all(|h| *h > 0.0) => {
                Err(format!("half extents {half_extents:?} must be positive"))
            }
            Shape::Cylinder {
                axis,
                radius,
                half_height,
                ..
            } => {
                if !(*radius > 0.0) || !(*half_height > 0.0) {
                    Err(format!(
                        "radius {radius} and half height {half_height} must be positive"
                    ))
                } else if (axis.norm() - 1.0).abs() > 1e-9 {
                    Err(format!("axis {axis:?} is not unit length"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Exact closest surface point to `query`.
    pub fn closest_point(&self, query: &Vector3<f64>) -> ProximityHit {
        match self {
            Shape::Sphere { center, radius } => {
                let rel = query - center;
                let dist_c = rel.norm();
                let outward = if dist_c > 0.0 {
                    rel / dist_c
                } else {
                    Vector3::z()
                };
                if dist_c <= *radius {
                    inside(query, -outward)
                } else {
                    outside(query, center + outward * *radius)
                }
            }
            Shape::Box {
                center,
                half_extents,
                rpy,
            } => {
                let rot = box_rotation(rpy);
                let local = rot.transpose() * (query - center);
                let clamped =
                    Vector3::from_fn(|i, _| local[i].clamp(-half_extents[i], half_extents[i]));
                if clamped == local {
                    // nearest face: smallest slack h_i - |l_i|
                    let (axis, _) = (0..3).map(|i| (i, half_extents[i] - local[i].abs())).fold(
                        (0, f64::INFINITY),
                        |best, c| if c.1 < best.1 { c } else { best },
                    );
                    let mut normal = Vector3::zeros();
                    normal[axis] = if local[axis] >= 0.0 { 1.0 } else { -1.0 };
                    inside(query, -(rot * normal))
                } else {
                    outside(query, center + rot * clamped)
                }
            }
            Shape::Cylinder {
                center,
                axis,
                radius,
                half_height,
            } => {
                let rel = query - center;
                let h = rel.dot(axis);
                let radial = rel - axis * h;
                let rho = radial.norm();
                if h.abs() <= *half_height && rho <= *radius {
                    let toward = if rho > 0.0 {
                        -radial / rho
                    } else {
                        any_perpendicular(axis)
                    };
                    inside(query, toward)
                } else {
                    let hc = h.clamp(-half_height, *half_height);
                    let rc = if rho > *radius {
                        radial * (*radius / rho)
                    } else {
                        radial
                    };
                    outside(query, center + axis * hc + rc)
                }
            }
        }
    }
}

fn box_rotation(rpy: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]).into_inner()
}

fn any_perpendicular(axis: &Vector3<f64>) -> Vector3<f64> {
    let trial = if axis.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    (trial - axis * trial.dot(axis)).normalize()
}

fn inside(query: &Vector3<f64>, toward: Vector3<f64>) -> ProximityHit {
    ProximityHit {
        obstacle: 0,
        point: *query,
        distance: 0.0,
        direction: toward,
        penetrating: true,
    }
}

fn outside(query: &Vector3<f64>, point: Vector3<f64>) -> ProximityHit {
    let delta = point - query;
    let distance = delta.norm();
    ProximityHit {
        obstacle: 0,
        point,
        distance,
        direction: delta / distance,
        penetrating: false,
    }
}

/// Constant-speed waypoint motion of an obstacle's center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Motion {
    pub waypoints: Vec<Vector3<f64>>,
    pub speed: f64,
    /// The obstacle waits on its first waypoint until this time.
    #[serde(default)]
    pub start_time: f64,
}

impl Motion {
    pub fn center_at(&self, t: f64) -> Vector3<f64> {
        Polyline::new(self.waypoints.clone())
            .sample(self.speed, t - self.start_time)
            .0
    }
}

/// Targets (objects to be grasped) can be referenced by name but are never
/// reported as proximity hits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectRole {
    #[default]
    Obstacle,
    Target,
}

impl ObjectRole {
    fn is_default(&self) -> bool {
        *self == ObjectRole::Obstacle
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub id: String,
    pub shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<Motion>,
    #[serde(default, skip_serializing_if = "ObjectRole::is_default")]
    pub role: ObjectRole,
}

impl Obstacle {
    pub fn fixed(id: impl Into<String>, shape: Shape) -> Self {
        Self {
            id: id.into(),
            shape,
            motion: None,
            role: ObjectRole::Obstacle,
        }
    }

    pub fn is_obstacle(&self) -> bool {
        self.role == ObjectRole::Obstacle
    }

    /// The shape placed where it is at time `t`.
    pub fn shape_at(&self, t: f64) -> Shape {
        match &self.motion {
            None => self.shape.clone(),
            Some(m) => self.shape.with_center(m.center_at(t)),
        }
    }

    pub fn closest_point(&self, query: &Vector3<f64>, t: f64) -> ProximityHit {
        match &self.motion {
            None => self.shape.closest_point(query),
            Some(m) => {
                // translate the query instead of the shape
                let shift = m.center_at(t) - self.shape.center();
                let mut hit = self.shape.closest_point(&(query - shift));
                hit.point += shift;
                if hit.penetrating {
                    hit.point = *query;
                }
                hit
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidObstacle {
                id: self.id.clone(),
                reason,
            })
        };
        if let Err(reason) = self.shape.validate() {
            return fail(reason);
        }
        if let Some(m) = &self.motion {
            if m.waypoints.is_empty() {
                return fail("motion needs at least one waypoint".into());
            }
            if !(m.speed > 0.0) {
                return fail(format!("motion speed {} must be positive", m.speed));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub obstacles: Vec<Obstacle>,
}

impl Scene {
    pub fn new(obstacles: Vec<Obstacle>) -> Self {
        Self { obstacles }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.obstacles.iter().enumerate() {
            o.validate()?;
            if self.obstacles[..i].iter().any(|p| p.id == o.id) {
                return Err(Error::InvalidObstacle {
                    id: o.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.obstacles.iter().position(|o| o.id == id)
    }

    /// Closest-point query against obstacle `index`.
    pub fn query(&self, index: usize, point: &Vector3<f64>, t: f64) -> ProximityHit {
        let mut hit = self.obstacles[index].closest_point(point, t);
        hit.obstacle = index;
        hit
    }

    /// Nearest obstacle within `max_range`; ties go to the earlier obstacle.
    /// Targets are skipped.
    pub fn nearest(&self, query: &Vector3<f64>, t: f64, max_range: f64) -> Option<ProximityHit> {
        let mut best: Option<ProximityHit> = None;
        for i in 0..self.obstacles.len() {
            if !self.obstacles[i].is_obstacle() {
                continue;
            }
            let hit = self.query(i, query, t);
            if hit.distance <= max_range && best.is_none_or(|b| hit.distance < b.distance) {
                best = Some(hit);
            }
        }
        best
    }
}

pub fn closest_point(obstacle: &Obstacle, query: &Vector3<f64>, t: f64) -> ProximityHit {
    obstacle.closest_point(query, t)
}

pub fn scene_nearest(
    scene: &Scene,
    query: &Vector3<f64>,
    t: f64,
    max_range: f64,
) -> Option<ProximityHit> {
    scene.nearest(query, t, max_range)
}
