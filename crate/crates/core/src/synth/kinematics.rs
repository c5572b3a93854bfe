use super::KEYPOINTS;
use crate::error::{ensure, Result};
use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];
type Mat3 = [[f64; 3]; 3];

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// Rodrigues rotation about a unit axis.
fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let [x, y, z] = *axis;
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Rotation plus translation, `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: IDENTITY,
            translation: [0.0; 3],
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        let r = mat_vec(&self.rotation, p);
        [
            r[0] + self.translation[0],
            r[1] + self.translation[1],
            r[2] + self.translation[2],
        ]
    }
}

/// Seven-link serial chain; links extend along each joint frame's local x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub link_lengths: [f64; 7],
    pub joint_axes: [Vec3; 7],
    pub base_pose: RigidTransform,
}

impl Default for ArmModel {
    /// Roughly UR-5 proportions standing upright in front of the default
    /// camera: local x points up the image, local z away from the camera.
    fn default() -> Self {
        const X: Vec3 = [1.0, 0.0, 0.0];
        const Y: Vec3 = [0.0, 1.0, 0.0];
        const Z: Vec3 = [0.0, 0.0, 1.0];
        Self {
            link_lengths: [0.10, 0.38, 0.34, 0.12, 0.10, 0.09, 0.06],
            joint_axes: [Z, X, Z, Z, Y, Z, Y],
            base_pose: RigidTransform {
                rotation: [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
                translation: [0.0, 0.45, 3.0],
            },
        }
    }
}

impl ArmModel {
    pub fn validate(&self) -> Result<()> {
        for (i, l) in self.link_lengths.iter().enumerate() {
            ensure!(*l > 0.0 && l.is_finite(), InvalidArgument, "link {i} length must be > 0");
        }
        for (i, a) in self.joint_axes.iter().enumerate() {
            let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            ensure!((n - 1.0).abs() < 1e-9, InvalidArgument, "joint {i} axis is not a unit vector");
        }
        Ok(())
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }
}

/// Keypoint positions for the given joint angles: point 0 is the base origin
/// and point k sits at the far end of link k.
pub fn forward_kinematics(arm: &ArmModel, angles: &[f64; 7]) -> [Vec3; KEYPOINTS] {
    let mut points = [[0.0; 3]; KEYPOINTS];
    let mut rot = arm.base_pose.rotation;
    let mut pos = arm.base_pose.translation;
    points[0] = pos;
    for k in 0..7 {
        rot = mat_mul(&rot, &axis_angle(&arm.joint_axes[k], angles[k]));
        let step = mat_vec(&rot, &[arm.link_lengths[k], 0.0, 0.0]);
        pos = [pos[0] + step[0], pos[1] + step[1], pos[2] + step[2]];
        points[k + 1] = pos;
    }
    points
}

#[cfg(test)]
pub(crate) fn distance(a: &Vec3, b: &Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn local_arm() -> ArmModel {
        ArmModel {
            base_pose: RigidTransform::identity(),
            ..ArmModel::default()
        }
    }

    #[test]
    fn straight_chain() {
        let arm = local_arm();
        let pts = forward_kinematics(&arm, &[0.0; 7]);
        let mut acc = 0.0;
        assert_eq!(pts[0], [0.0; 3]);
        for k in 1..KEYPOINTS {
            acc += arm.link_lengths[k - 1];
            assert!((pts[k][0] - acc).abs() < 1e-15);
            assert_eq!(pts[k][1], 0.0);
            assert_eq!(pts[k][2], 0.0);
        }
    }

    #[test]
    fn first_joint_quarter_turn_about_z() {
        let arm = local_arm();
        assert_eq!(arm.joint_axes[0], [0.0, 0.0, 1.0]);
        let mut q = [0.0; 7];
        q[0] = FRAC_PI_2;
        let pts = forward_kinematics(&arm, &q);
        for p in &pts[1..] {
            assert!(p[0].abs() < 1e-12 && p[2].abs() < 1e-12, "{p:?}");
            assert!(p[1] > 0.0);
        }
        let norm = distance(&pts[7], &[0.0; 3]);
        assert!((norm - arm.reach()).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_bad_links() {
        let mut arm = ArmModel::default();
        assert!(arm.validate().is_ok());
        arm.link_lengths[3] = 0.0;
        assert!(arm.validate().is_err());
        let mut arm = ArmModel::default();
        arm.joint_axes[1] = [1.0, 1.0, 0.0];
        assert!(arm.validate().is_err());
    }

    proptest! {
        #[test]
        fn chain_rigidity(q in proptest::array::uniform7(-10.0f64..10.0)) {
            let arm = ArmModel::default();
            let pts = forward_kinematics(&arm, &q);
            for k in 0..7 {
                let d = distance(&pts[k], &pts[k + 1]);
                prop_assert!((d - arm.link_lengths[k]).abs() < 1e-12);
            }
        }
    }
}
