//! Artificial potential field baseline at the velocity level.
//!
//! Control points are repelled by `U_o = ½ η (1/ρ − 1/ρ_0)²` inside the
//! influence distance `ρ_0`, the task point is attracted by
//! `U_t = ½ k_p ‖x − x_d‖²`, and both negative gradients are mapped to joint
//! velocities through transposed point Jacobians.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::controller::{
    goal_state, limit_velocity, sigma, ControlTick, ControllerGains, Robot, Target,
};
use crate::error::{Error, Result};
use crate::geometry::Scene;
use crate::kinematics::Configuration;
use crate::sensing::min_distance;

fn default_max_force() -> f64 {
    1e3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlPoint {
    pub link_index: usize,
    pub offset: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApfGains {
    pub eta: f64,
    pub rho_0: f64,
    pub k_p: f64,
    /// Cap on the repulsion magnitude; the potential diverges at contact.
    #[serde(default = "default_max_force")]
    pub max_force: f64,
    /// Repelled points. When absent the sensor mounts are used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_points: Option<Vec<ControlPoint>>,
}

impl ApfGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.rho_0 > 0.0 && self.k_p > 0.0 && self.max_force > 0.0) {
            return Err(Error::InvalidGains(format!(
                "apf gains eta = {}, rho_0 = {}, k_p = {}, max_force = {} must be positive",
                self.eta, self.rho_0, self.k_p, self.max_force
            )));
        }
        Ok(())
    }
}

/// Repulsive force `η (1/ρ − 1/ρ_0) ρ⁻² ∂ρ/∂x` (the negative gradient of
/// `U_o`), zero beyond `ρ_0`, magnitude capped at `max_force`.
/// `away` is the unit vector pointing away from the obstacle.
pub fn repulsive_gradient(
    rho: f64,
    rho_0: f64,
    eta: f64,
    away: &Vector3<f64>,
    max_force: f64,
) -> Vector3<f64> {
    if rho >= rho_0 {
        return Vector3::zeros();
    }
    let magnitude = if rho <= 0.0 {
        max_force
    } else {
        (eta * (1.0 / rho - 1.0 / rho_0) / (rho * rho)).min(max_force)
    };
    away * magnitude
}

fn control_points(robot: &Robot, apf: &ApfGains) -> Vec<ControlPoint> {
    match &apf.control_points {
        Some(points) => points.clone(),
        None => robot
            .chain
            .sensors
            .iter()
            .map(|m| ControlPoint {
                link_index: m.link_index,
                offset: m.offset,
            })
            .collect(),
    }
}

/// Returns `(repulsion, attraction)` joint velocities.
fn apf_terms(
    robot: &Robot,
    q: &Configuration,
    scene: &Scene,
    t: f64,
    target: &Target,
    apf: &ApfGains,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let frames = robot.chain.frames(q)?;
    let mut repulsion = DVector::zeros(robot.chain.dof());
    for cp in control_points(robot, apf) {
        let p = frames.point(cp.link_index, &cp.offset)?;
        let Some(hit) = scene.nearest(&p, t, apf.rho_0) else {
            continue;
        };
        let force = repulsive_gradient(
            hit.distance,
            apf.rho_0,
            apf.eta,
            &(-hit.direction),
            apf.max_force,
        );
        if force != Vector3::zeros() {
            repulsion += frames.point_jacobian(cp.link_index, &p)?.transpose() * force;
        }
    }
    let goal = goal_state(robot, &frames, target)?;
    let attraction = goal.j_g.transpose() * (goal.error * apf.k_p);
    Ok((repulsion, attraction))
}

/// `q̇ = Σ_i J_iᵀ F_o(p_i) + J_Pᵀ k_p (x_d − x)`.
pub fn apf_velocity(
    robot: &Robot,
    q: &Configuration,
    scene: &Scene,
    t: f64,
    target: &Target,
    apf: &ApfGains,
) -> Result<DVector<f64>> {
    let (rep, att) = apf_terms(robot, q, scene, t, target, apf)?;
    Ok(rep + att)
}

/// The baseline behind the same signature as
/// [`control_step`](crate::controller::control_step). The tick's `sigma` and
/// sensor readings are diagnostics only; `lambda` is reported as 0.
pub fn apf_reference(
    robot: &Robot,
    q: &Configuration,
    scene: &Scene,
    t: f64,
    target: &Target,
    gains: &ControllerGains,
    apf: &ApfGains,
) -> Result<ControlTick> {
    let frames = robot.chain.frames(q)?;
    let readings = robot.sense(&frames, scene, t)?;
    let goal = goal_state(robot, &frames, target)?;
    let (repulsion, attraction) = apf_terms(robot, q, scene, t, target, apf)?;
    let mut qdot = &repulsion + &attraction;
    limit_velocity(&mut qdot, gains.velocity_limit.as_deref());
    let sigma = sigma(&readings, &robot.chain.sensors);
    let d_min = min_distance(&readings);
    Ok(ControlTick {
        sigma,
        lambda: 0.0,
        d_min,
        threshold: apf.rho_0,
        qdot_goal: attraction,
        qdot_avoid: repulsion,
        qdot,
        x: goal.x,
        x_d: target.position,
        x_err: goal.x_err,
        e0_flag: false,
        readings,
    })
}
