use crate::backbone::BackboneModel;
use crate::elm::{refine_poses, ElmModel};
use crate::error::{ensure, Result};
use crate::synth::{list_frames, write_pose_csv, GrayImage, PoseFrame};
use std::path::Path;

/// Frames decoded and refined per pass, to bound memory on long recordings.
const CHUNK: usize = 1024;

/// Labels every `frame_%06d.pgm` in `frames_dir` with the backbone + ELM
/// pipeline and writes the series to `out_csv` in the pose CSV format.
///
/// `expected` (typically the manifest's rendered frame count) guards against
/// partially rendered directories.
pub fn auto_annotate(
    backbone: &BackboneModel,
    elm: &ElmModel,
    frames_dir: &Path,
    out_csv: &Path,
    expected: Option<usize>,
) -> Result<Vec<PoseFrame>> {
    use rayon::prelude::*;
    let frames = list_frames(frames_dir)?;
    ensure!(!frames.is_empty(), InvalidArgument, "no frame_*.pgm files in {}", frames_dir.display());
    if let Some(n) = expected {
        ensure!(
            frames.len() == n,
            InvalidArgument,
            "{} holds {} frames but the manifest lists {n}",
            frames_dir.display(),
            frames.len()
        );
    }
    let mut poses = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(CHUNK) {
        let images: Vec<GrayImage> = chunk
            .par_iter()
            .map(|(_, p)| GrayImage::read_pgm(p))
            .collect::<Result<_>>()?;
        let ids: Vec<u64> = chunk.iter().map(|(id, _)| *id).collect();
        poses.extend(refine_poses(backbone, elm, &images, &ids)?);
    }
    write_pose_csv(out_csv, &poses)?;
    log::info!("annotate_done frames={} out={}", poses.len(), out_csv.display());
    Ok(poses)
}
