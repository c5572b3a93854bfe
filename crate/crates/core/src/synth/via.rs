//! Import of VGG Image Annotator (VIA) keypoint exports.
//!
//! Accepts both the plain export (`{"<file><size>": {filename, regions}}`)
//! and a full project file (`{"_via_img_metadata": {...}}`). Each image must
//! carry exactly eight point regions, taken in region order.

use super::{write_pose_csv, PoseFrame, COORDS, KEYPOINTS};
use crate::error::{Error, Result};
use serde_json::Value;
use std::fs;
use std::path::Path;

fn frame_id_from_filename(name: &str) -> Option<u64> {
    let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Parses a VIA JSON document into poses sorted by frame id.
pub fn parse_via(json: &Value, path: &Path) -> Result<Vec<PoseFrame>> {
    let bad = |reason: String| Error::format(path, reason);
    let images = json
        .get("_via_img_metadata")
        .unwrap_or(json)
        .as_object()
        .ok_or_else(|| bad("expected an object of image entries".into()))?;
    let mut poses = Vec::with_capacity(images.len());
    for (key, entry) in images {
        let filename = entry
            .get("filename")
            .and_then(Value::as_str)
            .ok_or_else(|| bad(format!("{key}: missing filename")))?;
        let frame_id = frame_id_from_filename(filename)
            .ok_or_else(|| bad(format!("{filename}: no frame number in file name")))?;
        let regions = entry
            .get("regions")
            .and_then(Value::as_array)
            .ok_or_else(|| bad(format!("{filename}: missing regions array")))?;
        let mut coords = Vec::with_capacity(COORDS);
        for r in regions {
            let shape = &r["shape_attributes"];
            if shape.get("name").and_then(Value::as_str) != Some("point") {
                continue;
            }
            let cx = shape.get("cx").and_then(Value::as_f64);
            let cy = shape.get("cy").and_then(Value::as_f64);
            match (cx, cy) {
                (Some(x), Some(y)) => coords.extend([x, y]),
                _ => return Err(bad(format!("{filename}: point without cx/cy"))),
            }
        }
        if coords.len() != COORDS {
            return Err(bad(format!(
                "{filename}: {} point regions, expected {KEYPOINTS}",
                coords.len() / 2
            )));
        }
        poses.push(PoseFrame::from_slice(frame_id, &coords)?);
    }
    poses.sort_by_key(|p| p.frame_id);
    if poses.windows(2).any(|w| w[0].frame_id == w[1].frame_id) {
        return Err(bad("duplicate frame numbers".into()));
    }
    Ok(poses)
}

/// Converts a VIA export into a `poses_annotated.csv`-format file.
pub fn import_via(json_path: &Path, out_csv: &Path) -> Result<Vec<PoseFrame>> {
    let text = fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let json: Value =
        serde_json::from_str(&text).map_err(|e| Error::format(json_path, e.to_string()))?;
    let poses = parse_via(&json, json_path)?;
    write_pose_csv(out_csv, &poses)?;
    Ok(poses)
}
