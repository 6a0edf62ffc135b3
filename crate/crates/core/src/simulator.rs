//! Velocity-level kinematic simulation: reference sampling, explicit Euler
//! integration of the commanded joint velocity, logging and run metrics.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::Vector3;
use serde::Serialize;

use crate::controller::{ControlTick, ControllerGains, ControllerKind, Robot, Target};
use crate::error::{Error, Result};
use crate::geometry::{Obstacle, Polyline, Scene, Shape};
use crate::kinematics::{Configuration, TaskPoint};

/// Planned motion of the task point.
#[derive(Clone, Debug, PartialEq)]
pub enum ReferencePath {
    Hold(Vector3<f64>),
    Line { waypoints: Polyline, speed: f64 },
}

impl ReferencePath {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| {
            Err(Error::Schema {
                path: "path".into(),
                message: m.into(),
            })
        };
        match self {
            ReferencePath::Hold(_) => Ok(()),
            ReferencePath::Line { waypoints, speed } => {
                if waypoints.points.is_empty() {
                    fail("at least one waypoint is required")
                } else if !(*speed > 0.0) {
                    fail("speed must be positive")
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Distance from `x` to the planned path, measured on the task axes.
    pub fn deviation(&self, x: &Vector3<f64>, task: &TaskPoint) -> f64 {
        let x = task.mask(x);
        match self {
            ReferencePath::Hold(p) => (x - task.mask(p)).norm(),
            ReferencePath::Line { waypoints, .. } => {
                Polyline::new(waypoints.points.iter().map(|p| task.mask(p)).collect())
                    .distance_to(&x)
            }
        }
    }
}

/// Desired position and velocity at time `t`: constant speed along the
/// waypoints, zero velocity at and past the last one.
pub fn sample_path(path: &ReferencePath, t: f64) -> Target {
    match path {
        ReferencePath::Hold(p) => Target::hold(*p),
        ReferencePath::Line { waypoints, speed } => {
            let (position, velocity) = waypoints.sample(*speed, t);
            Target { position, velocity }
        }
    }
}

/// Bounding cylinder other robots perceive around a robot of a multi-robot
/// scenario. Its axis is world z through the given point of the robot.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub link_index: usize,
    pub offset: Vector3<f64>,
    pub radius: f64,
    pub half_height: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeerRobot {
    pub name: String,
    pub initial_q: Configuration,
    pub path: ReferencePath,
}

/// Additional robots sharing the primary's model, gains and controller.
#[derive(Clone, Debug, PartialEq)]
pub struct Peers {
    pub envelope: Envelope,
    pub robots: Vec<PeerRobot>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub robot: Robot,
    pub scene: Scene,
    pub path: ReferencePath,
    pub gains: ControllerGains,
    pub controller: ControllerKind,
    pub duration: f64,
    pub initial_q: Configuration,
    pub peers: Option<Peers>,
}

impl Scenario {
    pub fn ticks(&self) -> usize {
        (self.duration / self.gains.t_s - 1e-9).ceil().max(0.0) as usize
    }

    /// `(name, initial q, path)` for every robot, primary first.
    fn robots(&self) -> Vec<(String, Configuration, ReferencePath)> {
        let mut all = vec![(
            self.robot.chain.name.clone(),
            self.initial_q.clone(),
            self.path.clone(),
        )];
        if let Some(peers) = &self.peers {
            all.extend(
                peers
                    .robots
                    .iter()
                    .map(|p| (p.name.clone(), p.initial_q.clone(), p.path.clone())),
            );
        }
        all
    }

    pub fn robot_count(&self) -> usize {
        1 + self.peers.as_ref().map_or(0, |p| p.robots.len())
    }

    pub fn path_of(&self, robot: usize) -> &ReferencePath {
        match robot {
            0 => &self.path,
            i => {
                &self
                    .peers
                    .as_ref()
                    .expect("peer index without peers")
                    .robots[i - 1]
                    .path
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub q: Vec<f64>,
    pub x: Vector3<f64>,
    pub x_d: Vector3<f64>,
    pub sigma: f64,
    pub lambda: f64,
    pub d_min: f64,
    pub qdot: Vec<f64>,
    /// Per-sensor distance, `+inf` when nothing is in view or the sensor is
    /// suppressed.
    pub d: Vec<f64>,
    pub x_err: f64,
    pub e0_flag: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub robot: usize,
    pub robot_name: String,
    pub rows: Vec<LogRow>,
    /// Smallest sensor-to-obstacle distance over the run, per obstacle id.
    /// Suppressed sensors are excluded; distances are not range-gated.
    pub clearance: BTreeMap<String, f64>,
}

impl TrajectoryLog {
    pub fn header(dof: usize, sensors: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..=dof).map(|i| format!("q{i}")));
        h.extend(
            [
                "x", "y", "z", "x_d", "y_d", "z_d", "sigma", "lambda", "d_min",
            ]
            .map(String::from),
        );
        h.extend((1..=dof).map(|i| format!("qdot{i}")));
        h.extend((1..=sensors).map(|k| format!("d{k}")));
        h
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let (dof, sensors) = self.rows.first().map_or((0, 0), |r| (r.q.len(), r.d.len()));
        writeln!(out, "{}", Self::header(dof, sensors).join(","))?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            let values = std::iter::once(row.t)
                .chain(row.q.iter().copied())
                .chain(row.x.iter().copied())
                .chain(row.x_d.iter().copied())
                .chain([row.sigma, row.lambda, row.d_min])
                .chain(row.qdot.iter().copied())
                .chain(row.d.iter().copied());
            for (i, v) in values.enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&format_sig9(v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Nine significant digits, `%.9g` style.
pub fn format_sig9(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa.to_string()),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn envelope_obstacle(
    name: &str,
    env: &Envelope,
    robot: &Robot,
    q: &Configuration,
) -> Result<Obstacle> {
    let frames = robot.chain.frames(q)?;
    Ok(Obstacle::fixed(
        format!("peer:{name}"),
        Shape::Cylinder {
            center: frames.point(env.link_index, &env.offset)?,
            axis: Vector3::z(),
            radius: env.radius,
            half_height: env.half_height,
        },
    ))
}

fn row_from_tick(t: f64, q: &Configuration, tick: &ControlTick) -> LogRow {
    LogRow {
        t,
        q: q.iter().copied().collect(),
        x: tick.x,
        x_d: tick.x_d,
        sigma: tick.sigma,
        lambda: tick.lambda,
        d_min: tick.d_min,
        qdot: tick.qdot.iter().copied().collect(),
        d: tick
            .readings
            .iter()
            .map(|r| r.distance().unwrap_or(f64::INFINITY))
            .collect(),
        x_err: tick.x_err,
        e0_flag: tick.e0_flag,
    }
}

/// Runs every robot of the scenario in lockstep; one log per robot, primary
/// first.
pub fn run_all(scenario: &Scenario) -> Result<Vec<TrajectoryLog>> {
    let robot = &scenario.robot;
    let gains = &scenario.gains;
    let members = scenario.robots();
    let mut qs: Vec<Configuration> = members
        .iter()
        .map(|(_, q0, _)| {
            robot.chain.check_configuration(q0)?;
            let mut q = q0.clone();
            robot.chain.clamp_to_limits(&mut q);
            Ok(q)
        })
        .collect::<Result<_>>()?;
    let steps = scenario.ticks();
    let mut logs: Vec<TrajectoryLog> = members
        .iter()
        .enumerate()
        .map(|(i, (name, _, _))| TrajectoryLog {
            robot: i,
            robot_name: name.clone(),
            rows: Vec::with_capacity(steps + 1),
            clearance: BTreeMap::new(),
        })
        .collect();
    let mut previous_active = vec![false; members.len()];

    for k in 0..=steps {
        let t = k as f64 * gains.t_s;
        let envelopes: Vec<Obstacle> = match &scenario.peers {
            Some(p) => members
                .iter()
                .zip(&qs)
                .map(|((name, _, _), q)| envelope_obstacle(name, &p.envelope, robot, q))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        let mut commands = Vec::with_capacity(members.len());
        for (i, (_, _, path)) in members.iter().enumerate() {
            let scene_i;
            let scene = if envelopes.is_empty() {
                &scenario.scene
            } else {
                let mut obstacles = scenario.scene.obstacles.clone();
                obstacles.extend(
                    envelopes
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, o)| o.clone()),
                );
                scene_i = Scene::new(obstacles);
                &scene_i
            };
            let target = sample_path(path, t);
            let mut tick = scenario
                .controller
                .step(robot, &qs[i], scene, t, &target, gains)?;
            if tick.qdot.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    tick: k,
                    t,
                    sigma: tick.sigma,
                    lambda: tick.lambda,
                    d_min: tick.d_min,
                });
            }
            let active = tick.d_min <= tick.threshold;
            tick.e0_flag = active && !previous_active[i];
            previous_active[i] = active;

            let clearance = &mut logs[i].clearance;
            for (o, obstacle) in scene
                .obstacles
                .iter()
                .enumerate()
                .filter(|(_, o)| o.is_obstacle())
            {
                let nearest = tick
                    .readings
                    .iter()
                    .filter(|r| !r.suppressed)
                    .map(|r| scene.query(o, &r.position, t).distance)
                    .fold(f64::INFINITY, f64::min);
                let entry = clearance
                    .entry(obstacle.id.clone())
                    .or_insert(f64::INFINITY);
                *entry = entry.min(nearest);
            }
            logs[i].rows.push(row_from_tick(t, &qs[i], &tick));
            commands.push(tick.qdot);
        }
        if k < steps {
            for (q, qdot) in qs.iter_mut().zip(&commands) {
                *q += qdot * gains.t_s;
                robot.chain.clamp_to_limits(q);
            }
        }
    }
    Ok(logs)
}

/// Runs the scenario and returns the primary robot's log.
pub fn run(scenario: &Scenario) -> Result<TrajectoryLog> {
    Ok(run_all(scenario)?.swap_remove(0))
}

/// Deviation threshold for "back on the path".
pub const RETURN_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    /// Smallest sensor-to-obstacle distance over the run (`null` in JSON
    /// when the scene is empty).
    #[serde(serialize_with = "finite_or_null")]
    pub min_clearance: f64,
    pub min_clearance_by_obstacle: BTreeMap<String, f64>,
    pub max_path_deviation: f64,
    /// Time after which the task point stays within [`RETURN_TOLERANCE`] of
    /// the planned path; `None` if it is off the path at the end.
    pub return_time: Option<f64>,
    /// Total variation `Σ_t ‖q̇(t) − q̇(t − t_s)‖`.
    pub chattering: f64,
    pub final_goal_error: f64,
}

fn finite_or_null<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

pub fn path_deviations(log: &TrajectoryLog, scenario: &Scenario) -> Vec<f64> {
    let path = scenario.path_of(log.robot);
    let task = &scenario.robot.task_point;
    log.rows
        .iter()
        .map(|r| path.deviation(&r.x, task))
        .collect()
}

pub fn metrics(log: &TrajectoryLog, scenario: &Scenario) -> Metrics {
    let deviations = path_deviations(log, scenario);
    let max_path_deviation = deviations.iter().copied().fold(0.0, f64::max);
    let return_time = match deviations.iter().rposition(|d| *d > RETURN_TOLERANCE) {
        None => Some(0.0),
        Some(last) => log.rows.get(last + 1).map(|r| r.t),
    };
    let chattering = log
        .rows
        .windows(2)
        .map(|w| {
            w[1].qdot
                .iter()
                .zip(&w[0].qdot)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, |acc, v| acc + v);
    Metrics {
        min_clearance: log
            .clearance
            .values()
            .copied()
            .fold(f64::INFINITY, f64::min),
        min_clearance_by_obstacle: log.clearance.clone(),
        max_path_deviation,
        return_time,
        chattering,
        final_goal_error: log.rows.last().map_or(0.0, |r| r.x_err),
    }
}
