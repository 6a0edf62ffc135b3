//! JSON scenario files.
//!
//! A scenario document has the top-level keys `chain`, `sensors`, `scene`,
//! `path`, `gains`, `controller`, `duration`, `initial_q` and the optional
//! `overrides`, `peers`, `name` and `notes`. Unknown keys are rejected.
//! See `scenarios/scenario.schema.json` for the full layout.

use std::path::Path;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::apf::ApfGains;
use crate::controller::{ControllerGains, ControllerKind, Robot, Supervisor, DEFAULT_DAMPING};
use crate::error::{Error, Result};
use crate::geometry::{Obstacle, Polyline, Scene};
use crate::kinematics::{KinematicChain, SensorMount, TaskPoint};
use crate::sensing::SuppressionRule;
use crate::simulator::{Envelope, PeerRobot, Peers, ReferencePath, Scenario};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainSpec {
    /// Name of a built-in model (`"youbot"`).
    Builtin(String),
    Custom(KinematicChain),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuppressSpec {
    pub obstacle: String,
    pub within: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub link_index: usize,
    pub offset: Vector3<f64>,
    pub field_of_view: f64,
    pub rest_length: f64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suppress: Option<SuppressSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub task_point: TaskPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold: Option<Vector3<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<Vector3<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    pub gamma_o: f64,
    pub gamma_g: f64,
    pub t_s: f64,
    pub supervisor: Supervisor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_limit: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apf: Option<ApfGains>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerChoice {
    Nsb,
    Apf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Accept sensors whose rest length exceeds their field of view.
    #[serde(default)]
    pub allow_rest_length_beyond_fov: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub link_index: usize,
    #[serde(default = "Vector3::zeros")]
    pub offset: Vector3<f64>,
    pub radius: f64,
    pub half_height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerSpec {
    pub name: String,
    pub initial_q: Vec<f64>,
    pub path: PathSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeersSpec {
    pub envelope: EnvelopeSpec,
    pub robots: Vec<PeerSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    /// Free-form remarks; ignored by the simulator.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub chain: ChainSpec,
    pub sensors: Vec<SensorSpec>,
    pub scene: Vec<Obstacle>,
    pub path: PathSpec,
    pub gains: GainsSpec,
    pub controller: ControllerChoice,
    pub duration: f64,
    pub initial_q: Vec<f64>,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peers: Option<PeersSpec>,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            schema(
                if path == "." {
                    "<root>".to_string()
                } else {
                    path
                },
                e.into_inner().to_string(),
            )
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Validates the document and builds the runnable scenario.
    pub fn build(&self) -> Result<Scenario> {
        let mut chain = match &self.chain {
            ChainSpec::Builtin(name) if name == "youbot" => KinematicChain::youbot(),
            ChainSpec::Builtin(other) => {
                return Err(schema("chain", format!("unknown built-in chain `{other}`")))
            }
            ChainSpec::Custom(chain) => chain.clone(),
        };
        if chain.joints.is_empty() {
            return Err(schema("chain", "chain has no joints"));
        }
        chain.sensors = self
            .sensors
            .iter()
            .map(|s| SensorMount {
                link_index: s.link_index,
                offset: s.offset,
                field_of_view: s.field_of_view,
                rest_length: s.rest_length,
                threshold: s.threshold,
            })
            .collect();
        if chain.sensors.is_empty() {
            return Err(schema("sensors", "at least one sensor is required"));
        }
        chain
            .validate(self.overrides.allow_rest_length_beyond_fov)
            .map_err(|e| match e {
                Error::InvalidSensor { index, reason } => {
                    schema(format!("sensors[{index}]"), reason)
                }
                other => schema("chain", other.to_string()),
            })?;

        let scene = Scene::new(self.scene.clone());
        scene
            .validate()
            .map_err(|e| schema("scene", e.to_string()))?;

        let mut suppression = Vec::new();
        for (k, s) in self.sensors.iter().enumerate() {
            if let Some(sup) = &s.suppress {
                if scene.index_of(&sup.obstacle).is_none() {
                    return Err(schema(
                        format!("sensors[{k}].suppress.obstacle"),
                        format!("no obstacle named `{}`", sup.obstacle),
                    ));
                }
                suppression.push(SuppressionRule {
                    sensor: k,
                    obstacle: sup.obstacle.clone(),
                    within: sup.within,
                });
            }
        }

        let dof = chain.dof();
        let task_point = self.path.task_point.clone();
        check_task_point(&task_point, dof, "path.task_point")?;
        let path = build_path(&self.path, "path")?;

        let g = &self.gains;
        let gains = ControllerGains {
            gamma_o: g.gamma_o,
            gamma_g: g.gamma_g,
            supervisor: g.supervisor,
            t_s: g.t_s,
            damping: g.damping.unwrap_or(DEFAULT_DAMPING),
            velocity_limit: g.velocity_limit.clone(),
        };
        gains
            .validate(dof)
            .map_err(|e| schema("gains", e.to_string()))?;
        let controller = match self.controller {
            ControllerChoice::Nsb => ControllerKind::Nsb,
            ControllerChoice::Apf => {
                let apf = g
                    .apf
                    .clone()
                    .ok_or_else(|| schema("gains.apf", "controller `apf` needs an apf block"))?;
                apf.validate()
                    .map_err(|e| schema("gains.apf", e.to_string()))?;
                if let Some(points) = &apf.control_points {
                    if points.iter().any(|p| p.link_index >= dof) {
                        return Err(schema(
                            "gains.apf.control_points",
                            "link index out of range",
                        ));
                    }
                }
                ControllerKind::Apf(apf)
            }
        };

        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(schema(
                "duration",
                "duration must be a finite non-negative number",
            ));
        }
        let initial_q = configuration(&self.initial_q, dof, "initial_q")?;

        let peers = match &self.peers {
            None => None,
            Some(p) => {
                let e = &p.envelope;
                if e.link_index >= dof || !(e.radius > 0.0) || !(e.half_height > 0.0) {
                    return Err(schema(
                        "peers.envelope",
                        "needs a valid link index and positive radius/half height",
                    ));
                }
                let robots = p
                    .robots
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        if r.path.task_point != task_point {
                            return Err(schema(
                                format!("peers.robots[{i}].path.task_point"),
                                "peers must drive the same task point as the primary robot",
                            ));
                        }
                        Ok(PeerRobot {
                            name: r.name.clone(),
                            initial_q: configuration(
                                &r.initial_q,
                                dof,
                                &format!("peers.robots[{i}].initial_q"),
                            )?,
                            path: build_path(&r.path, &format!("peers.robots[{i}].path"))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(Peers {
                    envelope: Envelope {
                        link_index: e.link_index,
                        offset: e.offset,
                        radius: e.radius,
                        half_height: e.half_height,
                    },
                    robots,
                })
            }
        };

        Ok(Scenario {
            name: self.name.clone(),
            robot: Robot {
                chain,
                task_point,
                suppression,
            },
            scene,
            path,
            gains,
            controller,
            duration: self.duration,
            initial_q,
            peers,
        })
    }
}

fn check_task_point(tp: &TaskPoint, dof: usize, at: &str) -> Result<()> {
    if tp.link_index >= dof {
        return Err(schema(
            format!("{at}.link_index"),
            format!("out of range for {dof} links"),
        ));
    }
    if tp.dimension() == 0 {
        return Err(schema(
            format!("{at}.axes"),
            "at least one axis must be constrained",
        ));
    }
    Ok(())
}

fn configuration(values: &[f64], dof: usize, at: &str) -> Result<DVector<f64>> {
    if values.len() != dof {
        return Err(schema(
            at,
            format!("expected {dof} joint values, got {}", values.len()),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(schema(at, "joint values must be finite"));
    }
    Ok(DVector::from_column_slice(values))
}

fn build_path(spec: &PathSpec, at: &str) -> Result<ReferencePath> {
    let path = match (&spec.hold, &spec.waypoints, spec.speed) {
        (Some(p), None, None) => ReferencePath::Hold(*p),
        (None, Some(w), Some(speed)) => ReferencePath::Line {
            waypoints: Polyline::new(w.clone()),
            speed,
        },
        _ => {
            return Err(schema(
                at,
                "give either `hold`, or `waypoints` together with `speed`",
            ))
        }
    };
    path.validate().map_err(|e| match e {
        Error::Schema { message, .. } => schema(at, message),
        other => other,
    })?;
    Ok(path)
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    ScenarioFile::load(path)?.build()
}
