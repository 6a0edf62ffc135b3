//! Denavit-Hartenberg serial chains.
//!
//! Frames are numbered the usual way: frame 0 is the fixed base frame of the
//! chain and frame `i` is rigidly attached to link `i`, moved by joints
//! `1..=i`. In code, joints and links are zero-based: joint `j` drives frame
//! `j + 1`, and a [`SensorMount`] with `link_index = L` rides on frame `L + 1`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joint-space vector `q`, one entry per joint in the joint's native unit.
pub type Configuration = DVector<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One row of a DH table. The driven variable (`theta` for revolute joints,
/// `d` for prismatic ones) is added to the stored constant offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DHJoint {
    pub kind: JointKind,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub a: f64,
    pub limits: [f64; 2],
}

impl DHJoint {
    pub fn revolute(d: f64, alpha: f64, a: f64, limits: [f64; 2]) -> Self {
        Self {
            kind: JointKind::Revolute,
            theta: 0.0,
            d,
            alpha,
            a,
            limits,
        }
    }

    pub fn prismatic(theta: f64, alpha: f64, a: f64, limits: [f64; 2]) -> Self {
        Self {
            kind: JointKind::Prismatic,
            theta,
            d: 0.0,
            alpha,
            a,
            limits,
        }
    }

    /// The homogeneous transform `A_i^{i-1}(q)` = Rot_z(θ) Trans_z(d) Trans_x(a) Rot_x(α).
    pub fn transform(&self, q: f64) -> FramePose {
        let (theta, d) = match self.kind {
            JointKind::Revolute => (self.theta + q, self.d),
            JointKind::Prismatic => (self.theta, self.d + q),
        };
        let (st, ct) = theta.sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        FramePose {
            rotation: Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca),
            origin: Vector3::new(self.a * ct, self.a * st, d),
        }
    }

    fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.limits[0], self.limits[1])
    }
}

/// A proximity sensor rigidly mounted on a link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorMount {
    pub link_index: usize,
    /// Sensor position in the frame of its link, meters.
    pub offset: Vector3<f64>,
    /// Maximum sensing range `f_s`.
    pub field_of_view: f64,
    /// Spring rest length `r_k`; the sensor contributes energy below it.
    pub rest_length: f64,
    /// Supervisor threshold `f`.
    pub threshold: f64,
}

impl SensorMount {
    /// Checks `0 < f < r_k <= f_s`. `allow_beyond_fov` lifts the last bound.
    pub fn validate(&self, index: usize, allow_beyond_fov: bool) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidSensor { index, reason });
        let (f, r, fs) = (self.threshold, self.rest_length, self.field_of_view);
        if !(f.is_finite() && r.is_finite() && fs.is_finite()) {
            return fail("non-finite threshold, rest length or field of view".into());
        }
        if f <= 0.0 {
            return fail(format!("threshold f = {f} must be positive"));
        }
        if f >= r {
            return fail(format!(
                "threshold f = {f} must be below the rest length {r}"
            ));
        }
        if r > fs && !allow_beyond_fov {
            return fail(format!(
                "rest length {r} exceeds the field of view {fs} (set overrides.allow_rest_length_beyond_fov to keep it)"
            ));
        }
        if self.offset.iter().any(|v| !v.is_finite()) {
            return fail("non-finite offset".into());
        }
        Ok(())
    }
}

/// Rigid transform: `world = rotation * local + origin`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub rotation: Matrix3<f64>,
    pub origin: Vector3<f64>,
}

impl Default for FramePose {
    fn default() -> Self {
        Self::identity()
    }
}

impl FramePose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            origin: Vector3::zeros(),
        }
    }

    pub fn compose(&self, child: &FramePose) -> FramePose {
        FramePose {
            rotation: self.rotation * child.rotation,
            origin: self.rotation * child.origin + self.origin,
        }
    }

    pub fn transform_point(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * local + self.origin
    }

    pub fn z_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// Max-norm of `R^T R - I` and `|det R - 1|`, whichever is larger.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        gram.amax().max((self.rotation.determinant() - 1.0).abs())
    }
}

/// Which point of the robot a position task drives and which world axes it
/// constrains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskPoint {
    pub link_index: usize,
    #[serde(default = "Vector3::zeros")]
    pub offset: Vector3<f64>,
    #[serde(default = "all_axes")]
    pub axes: [bool; 3],
}

fn all_axes() -> [bool; 3] {
    [true; 3]
}

impl TaskPoint {
    pub fn new(link_index: usize, offset: Vector3<f64>) -> Self {
        Self {
            link_index,
            offset,
            axes: all_axes(),
        }
    }

    pub fn planar(link_index: usize, offset: Vector3<f64>) -> Self {
        Self {
            link_index,
            offset,
            axes: [true, true, false],
        }
    }

    /// Zeroes the components of `v` along unconstrained axes.
    pub fn mask(&self, v: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| if self.axes[i] { v[i] } else { 0.0 })
    }

    pub fn dimension(&self) -> usize {
        self.axes.iter().filter(|a| **a).count()
    }

    /// Keeps only the rows of a 3×n position Jacobian selected by `axes`.
    pub fn select_rows(&self, jac: &DMatrix<f64>) -> DMatrix<f64> {
        let rows: Vec<usize> = (0..3).filter(|&i| self.axes[i]).collect();
        jac.select_rows(rows.iter())
    }

    pub fn select(&self, v: &Vector3<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dimension(),
            (0..3).filter(|&i| self.axes[i]).map(|i| v[i]),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub name: String,
    /// Pose of DH frame 0 in the world.
    #[serde(default)]
    pub base: FramePose,
    pub joints: Vec<DHJoint>,
    #[serde(default)]
    pub sensors: Vec<SensorMount>,
}

impl KinematicChain {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self, allow_beyond_fov: bool) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::InvalidChain("chain has no joints".into()));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if !(j.limits[0] <= j.limits[1]) {
                return Err(Error::InvalidChain(format!(
                    "joint {} has limits {:?} with min > max",
                    i + 1,
                    j.limits
                )));
            }
        }
        if FramePose::orthonormality_error(&self.base) > 1e-9 {
            return Err(Error::InvalidChain(
                "base rotation is not a rotation".into(),
            ));
        }
        for (k, s) in self.sensors.iter().enumerate() {
            if s.link_index >= self.dof() {
                return Err(Error::InvalidSensor {
                    index: k,
                    reason: format!(
                        "link index {} out of range for {} links",
                        s.link_index,
                        self.dof()
                    ),
                });
            }
            s.validate(k, allow_beyond_fov)?;
        }
        Ok(())
    }

    pub fn check_configuration(&self, q: &Configuration) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::ConfigurationSize {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Clamps `q` into the joint limits in place; returns whether anything moved.
    pub fn clamp_to_limits(&self, q: &mut Configuration) -> bool {
        let mut clamped = false;
        for (qi, joint) in q.iter_mut().zip(&self.joints) {
            let c = joint.clamp(*qi);
            if c != *qi {
                *qi = c;
                clamped = true;
            }
        }
        clamped
    }

    /// All frames `0..=n` in world coordinates.
    pub fn frames(&self, q: &Configuration) -> Result<Frames> {
        self.check_configuration(q)?;
        let mut frames = Vec::with_capacity(self.dof() + 1);
        let mut current = self.base;
        frames.push(current);
        for (i, (joint, &qi)) in self.joints.iter().zip(q.iter()).enumerate() {
            let clamped = joint.clamp(qi);
            if clamped != qi {
                log::warn!(
                    "joint {} value {qi} outside limits {:?}; clamped for kinematics",
                    i + 1,
                    joint.limits
                );
            }
            current = current.compose(&joint.transform(clamped));
            frames.push(current);
        }
        Ok(Frames {
            kinds: self.joints.iter().map(|j| j.kind).collect(),
            frames,
        })
    }

    /// The KUKA youBot as an 8-DOF chain: planar base (x, y prismatic, yaw)
    /// followed by the five-joint arm. Lengths in meters, angles in radians.
    ///
    /// Frame 0 is rotated so that joint 1 translates along world x, joint 2
    /// along world y and joint 3 turns about world z. Its origin lies in the
    /// plane of the arm mounting plate; world z = 0 is that plane.
    pub fn youbot() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        let base_travel = [-100.0, 100.0];
        let base_yaw = [-100.0, 100.0];
        let joints = vec![
            DHJoint::prismatic(0.0, FRAC_PI_2, 0.0, base_travel),
            DHJoint::prismatic(FRAC_PI_2, FRAC_PI_2, 0.0, base_travel),
            DHJoint::revolute(0.0, 0.0, 0.167, base_yaw),
            DHJoint::revolute(0.147, FRAC_PI_2, 0.033, [-169.0 * deg, 169.0 * deg]),
            DHJoint::revolute(0.0, 0.0, 0.155, [-65.0 * deg, 90.0 * deg]),
            DHJoint::revolute(0.0, 0.0, 0.135, [-151.0 * deg, 146.0 * deg]),
            DHJoint::revolute(0.0, FRAC_PI_2, 0.0, [-102.5 * deg, 102.5 * deg]),
            DHJoint::revolute(0.2175, 0.0, 0.0, [-165.0 * deg, 165.0 * deg]),
        ];
        #[rustfmt::skip]
        let base_rotation = Matrix3::new(
            0.0,  0.0, 1.0,
            0.0, -1.0, 0.0,
            1.0,  0.0, 0.0,
        );
        Self {
            name: "youbot".into(),
            base: FramePose {
                rotation: base_rotation,
                origin: Vector3::zeros(),
            },
            joints,
            sensors: Vec::new(),
        }
    }
}

/// Forward kinematics evaluated at one configuration: `frames[i]` is DH frame
/// `i` in world coordinates, `frames[0]` the chain base.
#[derive(Clone, Debug)]
pub struct Frames {
    kinds: Vec<JointKind>,
    frames: Vec<FramePose>,
}

impl Frames {
    pub fn dof(&self) -> usize {
        self.kinds.len()
    }

    /// Pose of the frame attached to zero-based link `link_index`.
    pub fn link(&self, link_index: usize) -> Result<&FramePose> {
        if link_index >= self.dof() {
            return Err(Error::LinkIndex {
                index: link_index,
                links: self.dof(),
            });
        }
        Ok(&self.frames[link_index + 1])
    }

    pub fn all(&self) -> &[FramePose] {
        &self.frames
    }

    pub fn point(&self, link_index: usize, offset: &Vector3<f64>) -> Result<Vector3<f64>> {
        Ok(self.link(link_index)?.transform_point(offset))
    }

    /// 3×n position Jacobian of a world point rigidly attached to link
    /// `link_index`.
    pub fn point_jacobian(&self, link_index: usize, point: &Vector3<f64>) -> Result<DMatrix<f64>> {
        self.link(link_index)?;
        let n = self.dof();
        let mut jac = DMatrix::zeros(3, n);
        for j in 0..=link_index {
            let frame = &self.frames[j];
            let z = frame.z_axis();
            let col = match self.kinds[j] {
                JointKind::Prismatic => z,
                JointKind::Revolute => z.cross(&(point - frame.origin)),
            };
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&col);
        }
        Ok(jac)
    }
}

/// Pose of every DH frame `1..=n` in world coordinates.
pub fn forward_kinematics(chain: &KinematicChain, q: &Configuration) -> Result<Vec<FramePose>> {
    Ok(chain.frames(q)?.frames[1..].to_vec())
}

/// World position of a sensor: `p_i + R_i * offset`.
pub fn point_on_link(
    chain: &KinematicChain,
    q: &Configuration,
    mount: &SensorMount,
) -> Result<Vector3<f64>> {
    chain.frames(q)?.point(mount.link_index, &mount.offset)
}

pub fn point_jacobian(
    chain: &KinematicChain,
    q: &Configuration,
    link_index: usize,
    point: &Vector3<f64>,
) -> Result<DMatrix<f64>> {
    chain.frames(q)?.point_jacobian(link_index, point)
}

/// `J^T (J J^T + damping² I)^{-1}` for an m×n matrix with m <= n.
pub fn damped_pseudo_inverse(jac: &DMatrix<f64>, damping: f64) -> Result<DMatrix<f64>> {
    let (m, n) = jac.shape();
    if m > n {
        return Err(Error::WideJacobian { rows: m, cols: n });
    }
    let mut gram = jac * jac.transpose();
    for i in 0..m {
        gram[(i, i)] += damping * damping;
    }
    let scale = gram.amax();
    let chol = gram.cholesky().ok_or(Error::Singular)?;
    if damping == 0.0 {
        // Cholesky succeeds on numerically singular matrices with tiny pivots.
        let l = chol.l_dirty();
        let min_pivot = (0..m)
            .map(|i| l[(i, i)] * l[(i, i)])
            .fold(f64::INFINITY, f64::min);
        if !(min_pivot > 1e-12 * scale) {
            return Err(Error::Singular);
        }
    }
    Ok(jac.transpose() * chol.inverse())
}
