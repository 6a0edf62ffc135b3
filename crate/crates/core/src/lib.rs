//! Reactive obstacle avoidance for redundant mobile manipulators driven by
//! distributed proximity sensing.
//!
//! Each proximity sensor mounted on the robot is the center of a virtual
//! spring. Obstacles inside a spring's rest length store elastic
//! pseudo-energy; the avoidance behaviour drives the total energy to zero
//! through its analytic configuration-space gradient, while the goal
//! behaviour is projected into the avoidance task's null space. A smooth
//! task-combination function of the minimum sensed distance blends the two.
//!
//! Modules:
//! - [`kinematics`]: Denavit-Hartenberg chains, point Jacobians, pseudo-inverses
//! - [`geometry`]: obstacle primitives and closest-point queries
//! - [`sensing`]: simulated proximity sensors
//! - [`controller`]: pseudo-energy, obstacle Jacobian, supervisors, control step
//! - [`apf`]: artificial potential field baseline
//! - [`simulator`]: kinematic scenario runs, CSV logs and metrics
//! - [`scenario`]: JSON scenario files

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apf;
pub mod controller;
pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod scenario;
pub mod sensing;
pub mod simulator;

pub use apf::{apf_reference, apf_velocity, repulsive_gradient, ApfGains, ControlPoint};
pub use controller::{
    avoidance_velocity, control_step, goal_velocity, jacobian_obstacle, lambda_arctan,
    lambda_crisp, lambda_piecewise, pseudo_energy, row_pseudo_inverse, sigma, ControlTick,
    ControllerGains, ControllerKind, Robot, Supervisor, Target,
};
pub use error::{Error, Result};
pub use geometry::{
    closest_point, scene_nearest, Motion, ObjectRole, Obstacle, Polyline, ProximityHit, Scene,
    Shape,
};
pub use kinematics::{
    damped_pseudo_inverse, forward_kinematics, point_jacobian, point_on_link, Configuration,
    DHJoint, FramePose, Frames, JointKind, KinematicChain, SensorMount, TaskPoint,
};
pub use scenario::{load_scenario, ScenarioFile};
pub use sensing::{min_distance, sense_all, SensorReading, SuppressionRule};
pub use simulator::{
    metrics, run, run_all, sample_path, Metrics, ReferencePath, Scenario, TrajectoryLog,
};
