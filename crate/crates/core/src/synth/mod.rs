//! Synthetic stand-in for a recorded robot-arm video: kinematics, pinhole
//! projection, scripted motion, rendering and the annotated dataset files.

mod camera;
mod dataset;
mod image;
mod kinematics;
mod trajectory;
mod via;

pub use camera::{project, project_pose, Camera};
pub use dataset::{
    annotated_frame_ids, pose_trajectory, read_manifest, read_pose_csv, synth_dataset, write_pose_csv, Manifest,
    ANNOTATED_DIR, ANNOTATED_GT_CSV, ANNOTATED_CSV, FRAMES_DIR, FULL_CSV, MANIFEST_FILE,
};
pub use image::{
    frame_file_name, joint_intensity, list_frames, render_background, render_frame, GrayImage,
    JOINT_MIN_INTENSITY, LINK_INTENSITY,
};
pub use kinematics::{forward_kinematics, ArmModel, RigidTransform, Vec3};
pub use trajectory::{default_script, gen_trajectory, Primitive};
pub use via::{import_via, parse_via};
pub(crate) use dataset::annotated_image_path;

use serde::{Deserialize, Serialize};

pub const KEYPOINTS: usize = 8;
pub const COORDS: usize = 2 * KEYPOINTS;

/// Human-readable statement of the keypoint order, recorded in manifests.
pub const KEYPOINT_ORDER: &str =
    "k0 = base origin, k1..k6 = joints 2..7 along the chain, k7 = tool tip; coordinates x,y in render pixels";

/// One frame's eight keypoints, `x0, y0, ..., x7, y7` in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub frame_id: u64,
    pub coords: [f64; COORDS],
}

impl PoseFrame {
    pub fn new(frame_id: u64, coords: [f64; COORDS]) -> Self {
        Self { frame_id, coords }
    }

    pub fn from_slice(frame_id: u64, coords: &[f64]) -> crate::Result<Self> {
        crate::error::ensure!(
            coords.len() == COORDS,
            Dimension,
            "a pose has {COORDS} coordinates, got {}",
            coords.len()
        );
        let mut c = [0.0; COORDS];
        c.copy_from_slice(coords);
        Ok(Self::new(frame_id, c))
    }

    pub fn keypoint(&self, k: usize) -> (f64, f64) {
        (self.coords[2 * k], self.coords[2 * k + 1])
    }
}

/// Settings for the synthetic recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub fps: f64,
    pub duration_s: f64,
    pub script: Vec<Primitive>,
    /// Gaussian annotation noise in pixels, applied to annotated labels only.
    pub noise_sigma: f64,
    /// Square render side in pixels.
    pub render_size: usize,
    /// Annotated frames per second of video.
    pub annotation_rate_hz: f64,
    /// Also render every frame (needed for auto-annotation).
    pub render_all: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            fps: 20.0,
            duration_s: 508.0,
            script: default_script(),
            noise_sigma: 1.0,
            render_size: 96,
            annotation_rate_hz: 1.0,
            render_all: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::error::ensure;
        ensure!(self.fps > 0.0 && self.fps.is_finite(), InvalidArgument, "fps must be > 0");
        ensure!(
            self.duration_s > 0.0 && self.duration_s.is_finite(),
            InvalidArgument,
            "duration_s must be > 0"
        );
        ensure!(
            self.noise_sigma >= 0.0 && self.noise_sigma.is_finite(),
            InvalidArgument,
            "noise_sigma must be >= 0"
        );
        ensure!(self.render_size >= 32, InvalidArgument, "render_size must be >= 32");
        ensure!(
            self.annotation_rate_hz > 0.0 && self.annotation_rate_hz <= self.fps,
            InvalidArgument,
            "annotation_rate_hz must be in (0, fps]"
        );
        ensure!(!self.script.is_empty(), InvalidArgument, "activity script is empty");
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }
}
