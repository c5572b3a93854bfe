use super::{kinematics::Vec3, PoseFrame, COORDS, KEYPOINTS};
use crate::error::{ensure, Error, Result};
use serde::{Deserialize, Serialize};

/// Pinhole camera; `extrinsic` maps world points into the camera frame
/// (x right, y down, z forward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub focal: f64,
    pub principal_point: (f64, f64),
    pub image_size: (usize, usize),
    pub extrinsic: super::RigidTransform,
}

impl Camera {
    /// Camera framing the default arm in a square image of `size` pixels.
    pub fn for_render_size(size: usize) -> Self {
        let s = size as f64;
        Self {
            focal: 1.3 * s,
            principal_point: (s / 2.0, s / 2.0),
            image_size: (size, size),
            extrinsic: super::RigidTransform::identity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (cx, cy) = self.principal_point;
        let (w, h) = self.image_size;
        ensure!(self.focal > 0.0, InvalidArgument, "focal length must be > 0");
        ensure!(
            (0.0..w as f64).contains(&cx) && (0.0..h as f64).contains(&cy),
            InvalidArgument,
            "principal point ({cx}, {cy}) outside a {w}x{h} image"
        );
        Ok(())
    }
}

/// Projects camera-frame-transformed points to pixels.
pub fn project(points: &[Vec3], cam: &Camera) -> Result<Vec<(f64, f64)>> {
    let (cx, cy) = cam.principal_point;
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let [x, y, z] = cam.extrinsic.apply(p);
            if !(z > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "point {i} has non-positive depth {z}; check the camera placement"
                )));
            }
            Ok((cx + cam.focal * x / z, cy + cam.focal * y / z))
        })
        .collect()
}

/// Projects the eight keypoints of a pose into a [`PoseFrame`].
pub fn project_pose(frame_id: u64, points: &[Vec3; KEYPOINTS], cam: &Camera) -> Result<PoseFrame> {
    let uv = project(points, cam)?;
    let mut coords = [0.0; COORDS];
    for (k, (u, v)) in uv.into_iter().enumerate() {
        coords[2 * k] = u;
        coords[2 * k + 1] = v;
    }
    Ok(PoseFrame::new(frame_id, coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::RigidTransform;

    fn cam() -> Camera {
        Camera {
            focal: 500.0,
            principal_point: (640.0, 360.0),
            image_size: (1280, 720),
            extrinsic: RigidTransform::identity(),
        }
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let uv = project(&[[0.0, 0.0, 4.0]], &cam()).unwrap();
        assert_eq!(uv, vec![(640.0, 360.0)]);
    }

    #[test]
    fn pinhole_formula() {
        let uv = project(&[[1.0, 0.0, 2.0]], &cam()).unwrap();
        assert_eq!(uv[0].0, 890.0);
    }

    #[test]
    fn behind_camera_is_an_error() {
        assert!(project(&[[0.0, 0.0, 0.0]], &cam()).is_err());
        assert!(project(&[[0.0, 0.0, -1.0]], &cam()).is_err());
    }

    #[test]
    fn validation() {
        assert!(cam().validate().is_ok());
        let mut c = cam();
        c.principal_point = (1280.0, 10.0);
        assert!(c.validate().is_err());
        c = cam();
        c.focal = 0.0;
        assert!(c.validate().is_err());
    }
}
