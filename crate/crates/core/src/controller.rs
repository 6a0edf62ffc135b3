//! Null-space-based obstacle avoidance.
//!
//! Every sensor carries a virtual spring of rest length `r_k`. Obstacles
//! closer than `r_k` compress it and store the pseudo-energy
//! `½(d_k - r_k)²`. The avoidance task drives the total energy `σ` to zero
//! with a CLIK law on the 1×n gradient `J_o = ∂σ/∂q`; the goal task is a
//! position CLIK on a task point, projected into the null space of `J_o`.
//! A supervisor weight `λ(d)`, `d = min_k d_k`, blends the two:
//!
//! ```text
//! q̇ = λ(d) [ J_o† γ_o (0 − σ) + (I − J_o† J_o) q̇_g ] + (1 − λ(d)) q̇_g
//! ```

use nalgebra::{DMatrix, DVector, RowDVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::apf::{apf_reference, ApfGains};
use crate::error::{Error, Result};
use crate::geometry::Scene;
use crate::kinematics::{
    damped_pseudo_inverse, Configuration, Frames, KinematicChain, SensorMount, TaskPoint,
};
use crate::sensing::{nearest_reading, sense_frames, SensorReading, SuppressionRule};

/// Everything the controller needs to know about the robot besides its
/// configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Robot {
    pub chain: KinematicChain,
    pub task_point: TaskPoint,
    pub suppression: Vec<SuppressionRule>,
}

impl Robot {
    pub fn new(chain: KinematicChain, task_point: TaskPoint) -> Self {
        Self {
            chain,
            task_point,
            suppression: Vec::new(),
        }
    }

    pub fn sense(&self, frames: &Frames, scene: &Scene, t: f64) -> Result<Vec<SensorReading>> {
        sense_frames(&self.chain, frames, scene, t, &self.suppression)
    }

    pub fn task_position(&self, frames: &Frames) -> Result<Vector3<f64>> {
        frames.point(self.task_point.link_index, &self.task_point.offset)
    }

    /// Task Jacobian restricted to the constrained axes.
    pub fn task_jacobian(&self, frames: &Frames) -> Result<DMatrix<f64>> {
        let p = self.task_position(frames)?;
        let full = frames.point_jacobian(self.task_point.link_index, &p)?;
        Ok(self.task_point.select_rows(&full))
    }
}

/// Desired task-point position and velocity at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl Target {
    pub fn hold(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
        }
    }
}

/// Task combination function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Supervisor {
    /// `λ = atan(−K (d − f)) / π + ½`, slope `k` in 1/m.
    Arctan { k: f64 },
    /// Linear ramp from 1 at `f − eps` to 0 at `f + eps`.
    PiecewiseLinear { eps: f64 },
    /// Finite-state switch: avoidance alone below `f`, goal alone above.
    Crisp,
}

impl Supervisor {
    pub fn weight(&self, d: f64, f: f64) -> f64 {
        match *self {
            Supervisor::Arctan { k } => lambda_arctan(d, f, k),
            Supervisor::PiecewiseLinear { eps } => lambda_piecewise(d, f, eps),
            Supervisor::Crisp => lambda_crisp(d, f),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Supervisor::Arctan { .. } => "arctan",
            Supervisor::PiecewiseLinear { .. } => "piecewise",
            Supervisor::Crisp => "crisp",
        }
    }
}

pub const DEFAULT_DAMPING: f64 = 1e-4;

fn default_damping() -> f64 {
    DEFAULT_DAMPING
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    /// Avoidance CLIK gain, 1/s.
    pub gamma_o: f64,
    /// Goal CLIK gain, 1/s.
    pub gamma_g: f64,
    pub supervisor: Supervisor,
    /// Sampling time, s.
    pub t_s: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Optional per-joint cap on |q̇_i|; the whole vector is scaled down
    /// uniformly when any joint exceeds its cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_limit: Option<Vec<f64>>,
}

impl ControllerGains {
    pub fn validate(&self, dof: usize) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidGains(m));
        if !(self.gamma_o > 0.0) || !(self.gamma_g > 0.0) {
            return fail(format!(
                "gamma_o = {} and gamma_g = {} must be positive",
                self.gamma_o, self.gamma_g
            ));
        }
        if !(self.t_s > 0.0) {
            return fail(format!("t_s = {} must be positive", self.t_s));
        }
        if !(self.damping >= 0.0) {
            return fail(format!("damping = {} must be non-negative", self.damping));
        }
        match self.supervisor {
            Supervisor::Arctan { k } if !(k > 0.0) => {
                return fail(format!("arctan slope K = {k} must be positive"))
            }
            Supervisor::PiecewiseLinear { eps } if !(eps > 0.0) => {
                return fail(format!("piecewise ramp eps = {eps} must be positive"))
            }
            _ => {}
        }
        if let Some(limit) = &self.velocity_limit {
            if limit.len() != dof || limit.iter().any(|l| !(*l > 0.0)) {
                return fail(format!("velocity_limit needs {dof} positive entries"));
            }
        }
        Ok(())
    }
}

/// Diagnostics and command of one control period.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTick {
    pub sigma: f64,
    pub lambda: f64,
    pub d_min: f64,
    /// Supervisor threshold `f` in effect (that of the nearest sensor).
    pub threshold: f64,
    pub qdot_goal: DVector<f64>,
    pub qdot_avoid: DVector<f64>,
    pub qdot: DVector<f64>,
    /// Task point position.
    pub x: Vector3<f64>,
    pub x_d: Vector3<f64>,
    /// Norm of the task error along the constrained axes.
    pub x_err: f64,
    /// First tick of an avoidance activation (`d_min` dropped to `f` or
    /// below). The controller itself is memoryless and leaves this `false`;
    /// the simulator sets it from the previous tick.
    pub e0_flag: bool,
    pub readings: Vec<SensorReading>,
}

/// Elastic pseudo-energy of one sensor with unit spring constant.
pub fn pseudo_energy(d: f64, rest_length: f64) -> f64 {
    if d <= rest_length {
        0.5 * (d - rest_length).powi(2)
    } else {
        0.0
    }
}

/// Total pseudo-energy `σ = Σ_k ε_k`; sensors without a hit contribute 0.
pub fn sigma(readings: &[SensorReading], mounts: &[SensorMount]) -> f64 {
    readings
        .iter()
        .filter_map(|r| {
            r.distance()
                .map(|d| pseudo_energy(d, mounts[r.sensor_index].rest_length))
        })
        .fold(0.0, |acc, e| acc + e)
}

pub(crate) fn jacobian_obstacle_frames(
    frames: &Frames,
    mounts: &[SensorMount],
    readings: &[SensorReading],
) -> Result<RowDVector<f64>> {
    let mut j_o = RowDVector::zeros(frames.dof());
    for reading in readings {
        let Some(hit) = reading.hit else { continue };
        let mount = &mounts[reading.sensor_index];
        if hit.distance > mount.rest_length {
            continue;
        }
        let j_s = frames.point_jacobian(mount.link_index, &reading.position)?;
        j_o -= (hit.distance - mount.rest_length) * (hit.direction.transpose() * j_s);
    }
    Ok(j_o)
}

/// `J_o = Σ_active −(d_k − r_k) v_kᵀ J_{s_k}(q)`.
pub fn jacobian_obstacle(
    chain: &KinematicChain,
    q: &Configuration,
    readings: &[SensorReading],
) -> Result<RowDVector<f64>> {
    jacobian_obstacle_frames(&chain.frames(q)?, &chain.sensors, readings)
}

/// Pseudo-inverse of a single row: `Jᵀ / max(‖J‖², damping²)`, the zero
/// column for the zero row. Away from `‖J‖ = damping` this is the exact
/// Moore-Penrose inverse, so the null-space projector built from it is exact.
pub fn row_pseudo_inverse(row: &RowDVector<f64>, damping: f64) -> DVector<f64> {
    let norm2 = row.norm_squared();
    let denom = norm2.max(damping * damping);
    if denom == 0.0 {
        return DVector::zeros(row.len());
    }
    row.transpose() / denom
}

pub fn lambda_arctan(d: f64, f: f64, k: f64) -> f64 {
    (-k * (d - f)).atan() / std::f64::consts::PI + 0.5
}

pub fn lambda_piecewise(d: f64, f: f64, eps: f64) -> f64 {
    if d < f - eps {
        1.0
    } else if d > f + eps {
        0.0
    } else {
        (-(d - f - eps) / (2.0 * eps)).clamp(0.0, 1.0)
    }
}

pub fn lambda_crisp(d: f64, f: f64) -> f64 {
    if d <= f {
        1.0
    } else {
        0.0
    }
}

/// Goal CLIK: `q̇_g = J_g† (ẋ_d + γ_g (x_d − x))`.
pub fn goal_velocity(
    j_g: &DMatrix<f64>,
    x: &DVector<f64>,
    x_d: &DVector<f64>,
    xdot_d: &DVector<f64>,
    gamma_g: f64,
    damping: f64,
) -> Result<DVector<f64>> {
    let pinv = damped_pseudo_inverse(j_g, damping)?;
    Ok(pinv * (xdot_d + (x_d - x) * gamma_g))
}

/// Avoidance behaviour with the goal projected into its null space:
/// `J_o† γ_o (0 − σ) + (I − J_o† J_o) q̇_g`.
pub fn avoidance_velocity(
    j_o: &RowDVector<f64>,
    sigma: f64,
    qdot_goal: &DVector<f64>,
    gamma_o: f64,
    damping: f64,
) -> DVector<f64> {
    let pinv = row_pseudo_inverse(j_o, damping);
    let along = (j_o * qdot_goal)[0];
    &pinv * (gamma_o * (0.0 - sigma)) + qdot_goal - &pinv * along
}

pub(crate) fn limit_velocity(qdot: &mut DVector<f64>, limit: Option<&[f64]>) {
    let Some(limit) = limit else { return };
    let scale = qdot
        .iter()
        .zip(limit)
        .map(|(v, l)| if v.abs() > *l { l / v.abs() } else { 1.0 })
        .fold(1.0, f64::min);
    if scale < 1.0 {
        *qdot *= scale;
    }
}

/// Goal-task quantities shared by both controllers.
pub(crate) struct GoalState {
    pub x: Vector3<f64>,
    pub error: DVector<f64>,
    pub j_g: DMatrix<f64>,
    pub x_err: f64,
}

pub(crate) fn goal_state(robot: &Robot, frames: &Frames, target: &Target) -> Result<GoalState> {
    let x = robot.task_position(frames)?;
    let tp = &robot.task_point;
    let error = tp.select(&(target.position - x));
    Ok(GoalState {
        x,
        x_err: error.norm(),
        error,
        j_g: robot.task_jacobian(frames)?,
    })
}

/// One period of the null-space-based controller.
pub fn control_step(
    robot: &Robot,
    q: &Configuration,
    scene: &Scene,
    t: f64,
    target: &Target,
    gains: &ControllerGains,
) -> Result<ControlTick> {
    let frames = robot.chain.frames(q)?;
    let readings = robot.sense(&frames, scene, t)?;
    let mounts = &robot.chain.sensors;

    let goal = goal_state(robot, &frames, target)?;
    let xdot_d = robot.task_point.select(&target.velocity);
    let pinv_g = damped_pseudo_inverse(&goal.j_g, gains.damping)?;
    let qdot_goal = pinv_g * (xdot_d + &goal.error * gains.gamma_g);

    let sigma = sigma(&readings, mounts);
    let j_o = jacobian_obstacle_frames(&frames, mounts, &readings)?;
    let qdot_avoid = avoidance_velocity(&j_o, sigma, &qdot_goal, gains.gamma_o, gains.damping);

    let (d_min, threshold) = match nearest_reading(&readings) {
        Some((k, d)) => (d, mounts[readings[k].sensor_index].threshold),
        None => (f64::INFINITY, mounts.first().map_or(0.0, |m| m.threshold)),
    };
    let lambda = gains.supervisor.weight(d_min, threshold);
    let mut qdot = &qdot_avoid * lambda + &qdot_goal * (1.0 - lambda);
    limit_velocity(&mut qdot, gains.velocity_limit.as_deref());

    Ok(ControlTick {
        sigma,
        lambda,
        d_min,
        threshold,
        qdot_goal,
        qdot_avoid,
        qdot,
        x: goal.x,
        x_d: target.position,
        x_err: goal.x_err,
        e0_flag: false,
        readings,
    })
}

/// Controller selection behind the common step signature.
#[derive(Clone, Debug, PartialEq)]
pub enum ControllerKind {
    Nsb,
    Apf(ApfGains),
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Nsb => "nsb",
            ControllerKind::Apf(_) => "apf",
        }
    }

    pub fn step(
        &self,
        robot: &Robot,
        q: &Configuration,
        scene: &Scene,
        t: f64,
        target: &Target,
        gains: &ControllerGains,
    ) -> Result<ControlTick> {
        match self {
            ControllerKind::Nsb => control_step(robot, q, scene, t, target, gains),
            ControllerKind::Apf(apf) => apf_reference(robot, q, scene, t, target, gains, apf),
        }
    }
}
