use super::image::{frame_file_name, render_background, render_on};
use super::{
    forward_kinematics, gen_trajectory, project_pose, ArmModel, Camera, PoseFrame, SynthConfig,
    COORDS, KEYPOINT_ORDER,
};
use crate::error::{Error, Result};
use crate::numeric::{sub_seed, Rng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const FULL_CSV: &str = "poses_full.csv";
pub const ANNOTATED_CSV: &str = "poses_annotated.csv";
pub const ANNOTATED_GT_CSV: &str = "poses_annotated_gt.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANNOTATED_DIR: &str = "annotated";
pub const FRAMES_DIR: &str = "frames";

const FPS_NOTE: &str = "20 fps used; the capture hardware was listed at 21 fps";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub fps: f64,
    pub duration_s: f64,
    pub frames_total: usize,
    pub annotated_frames: usize,
    pub annotation_step: usize,
    pub rendered_frames: usize,
    pub noise_sigma: f64,
    pub render_size: [usize; 2],
    pub keypoint_order: String,
    pub note: String,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

fn csv_header() -> String {
    let mut h = String::from("frame_id");
    for k in 0..COORDS / 2 {
        let _ = write!(h, ",x{k},y{k}");
    }
    h
}

/// Writes poses as `frame_id,x0,y0,...,x7,y7` with six decimals.
pub fn write_pose_csv(path: &Path, poses: &[PoseFrame]) -> Result<()> {
    let mut out = csv_header();
    out.push('\n');
    for p in poses {
        let _ = write!(out, "{}", p.frame_id);
        for c in &p.coords {
            let _ = write!(out, ",{c:.6}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_pose_csv(path: &Path) -> Result<Vec<PoseFrame>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == csv_header() => {}
        _ => return Err(Error::format(path, "missing frame_id,x0,y0,... header")),
    }
    let mut poses = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != COORDS + 1 {
            return Err(Error::format(
                path,
                format!("line {} has {} fields, expected {}", i + 2, fields.len(), COORDS + 1),
            ));
        }
        let id = fields[0]
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::format(path, format!("line {}: bad frame id", i + 2)))?;
        let mut coords = [0.0; COORDS];
        for (c, f) in coords.iter_mut().zip(&fields[1..]) {
            *c = f
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::format(path, format!("line {}: bad coordinate", i + 2)))?;
        }
        poses.push(PoseFrame::new(id, coords));
    }
    Ok(poses)
}

/// Frame ids picked for annotation: every `step`-th frame from 0.
pub fn annotated_frame_ids(frames: usize, step: usize) -> Vec<u64> {
    (0..frames).step_by(step.max(1)).map(|f| f as u64).collect()
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Ground-truth keypoints of every frame of the scripted motion.
pub fn pose_trajectory(config: &SynthConfig, arm: &ArmModel, cam: &Camera) -> Result<Vec<PoseFrame>> {
    let angles = gen_trajectory(config)?;
    (0..angles.rows())
        .map(|f| {
            let mut q = [0.0; 7];
            q.copy_from_slice(angles.row(f));
            project_pose(f as u64, &forward_kinematics(arm, &q), cam)
        })
        .collect()
}

/// Generates the synthetic recording into `out_dir`.
///
/// Emits the full ground-truth pose series, the subsampled annotated split
/// (noisy labels, ground truth beside them, rendered images) and a manifest.
/// Refuses to touch a directory that already holds a manifest unless `force`.
pub fn synth_dataset(
    config: &SynthConfig,
    arm: &ArmModel,
    cam: &Camera,
    out_dir: &Path,
    force: bool,
) -> Result<Manifest> {
    config.validate()?;
    arm.validate()?;
    cam.validate()?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        if !force {
            return Err(Error::AlreadyExists(manifest_path));
        }
        for dir in [ANNOTATED_DIR, FRAMES_DIR] {
            let p = out_dir.join(dir);
            if p.exists() {
                fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
    }
    create_dir(out_dir)?;

    let truth = pose_trajectory(config, arm, cam)?;
    write_pose_csv(&out_dir.join(FULL_CSV), &truth)?;

    let step = (config.fps / config.annotation_rate_hz).round().max(1.0) as usize;
    let ids = annotated_frame_ids(truth.len(), step);
    let mut noise = Rng::new(sub_seed(config.seed, 1));
    let annotated_gt: Vec<PoseFrame> = ids.iter().map(|&i| truth[i as usize].clone()).collect();
    let annotated: Vec<PoseFrame> = annotated_gt
        .iter()
        .map(|p| {
            let mut q = p.clone();
            if config.noise_sigma > 0.0 {
                for c in &mut q.coords {
                    *c += config.noise_sigma * noise.normal();
                }
            }
            q
        })
        .collect();
    write_pose_csv(&out_dir.join(ANNOTATED_CSV), &annotated)?;
    write_pose_csv(&out_dir.join(ANNOTATED_GT_CSV), &annotated_gt)?;

    let size = config.render_size;
    let background = render_background(size, sub_seed(config.seed, 2));
    let emit = |dir: &Path, poses: &[PoseFrame]| -> Result<()> {
        create_dir(dir)?;
        poses.par_iter().try_for_each(|p| {
            render_on(&background, p, size).write_pgm(&dir.join(frame_file_name(p.frame_id)))
        })
    };
    emit(&out_dir.join(ANNOTATED_DIR), &annotated_gt)?;
    let rendered_frames = if config.render_all {
        emit(&out_dir.join(FRAMES_DIR), &truth)?;
        truth.len()
    } else {
        0
    };

    let manifest = Manifest {
        seed: config.seed,
        fps: config.fps,
        duration_s: config.duration_s,
        frames_total: truth.len(),
        annotated_frames: annotated.len(),
        annotation_step: step,
        rendered_frames,
        noise_sigma: config.noise_sigma,
        render_size: [size, size],
        keypoint_order: KEYPOINT_ORDER.to_string(),
        note: FPS_NOTE.to_string(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

/// Paths of the annotated split for a dataset directory.
pub(crate) fn annotated_image_path(dir: &Path, frame_id: u64) -> PathBuf {
    dir.join(ANNOTATED_DIR).join(frame_file_name(frame_id))
}
