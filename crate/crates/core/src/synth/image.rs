use super::{PoseFrame, KEYPOINTS};
use crate::error::{Error, Result};
use crate::numeric::Rng;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Intensity of the links between joints.
pub const LINK_INTENSITY: f64 = 150.0;

/// Disc intensity of joint `k`; joints get distinct shades so their order is
/// recoverable from the image.
pub fn joint_intensity(k: usize) -> f64 {
    255.0 - 8.0 * k as f64
}

/// Dimmest joint disc.
pub const JOINT_MIN_INTENSITY: u8 = 199;

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Pixels scaled to [0, 1] for the network input.
    pub fn to_unit(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&bytes).map_err(|reason| Error::format(path, reason))
    }

    /// Parses binary 8-bit PGM (P5).
    pub fn from_pgm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0;
        let mut fields = [0usize; 3];
        let token = |pos: &mut usize| -> std::result::Result<String, String> {
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return Err("truncated PGM header".into());
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };
        if token(&mut pos)? != "P5" {
            return Err("not a binary PGM (P5)".into());
        }
        for f in &mut fields {
            *f = token(&mut pos)?
                .parse()
                .map_err(|_| "bad PGM header number".to_string())?;
        }
        let [width, height, maxval] = fields;
        if maxval != 255 {
            return Err(format!("only 8-bit PGM is supported (maxval {maxval})"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let raster = bytes.get(pos..).unwrap_or_default();
        if raster.len() != width * height {
            return Err(format!(
                "raster has {} bytes, expected {}",
                raster.len(),
                width * height
            ));
        }
        Ok(Self {
            width,
            height,
            pixels: raster.to_vec(),
        })
    }
}

/// Smooth seeded clutter: a few low-frequency plane waves, values in [23, 87].
pub fn render_background(size: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                rng.uniform(-2.0, 2.0),
                rng.uniform(-2.0, 2.0),
                rng.uniform(0.0, 2.0 * PI),
                8.0,
            ]
        })
        .collect();
    let s = size as f64;
    let mut buf = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (u, v) = ((x as f64 + 0.5) / s, (y as f64 + 0.5) / s);
            let val: f64 = waves
                .iter()
                .map(|[fx, fy, ph, a]| a * (2.0 * PI * (fx * u + fy * v) + ph).cos())
                .sum();
            buf.push(55.0 + val);
        }
    }
    buf
}

fn blend(buf: &mut [f64], size: usize, x: usize, y: usize, value: f64, alpha: f64) {
    let p = &mut buf[y * size + x];
    *p = *p * (1.0 - alpha) + value * alpha;
}

/// Pixel index range touched by a shape spanning `[lo, hi]`, clipped to the frame.
fn span(lo: f64, hi: f64, size: usize) -> std::ops::Range<usize> {
    let a = lo.floor().max(0.0);
    let b = (hi.ceil() + 1.0).min(size as f64);
    if !(a < b) {
        return 0..0;
    }
    a as usize..b as usize
}

fn draw_segment(buf: &mut [f64], size: usize, a: (f64, f64), b: (f64, f64), half_width: f64) {
    let reach = half_width + 1.0;
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    for y in span(a.1.min(b.1) - reach, a.1.max(b.1) + reach, size) {
        for x in span(a.0.min(b.0) - reach, a.0.max(b.0) + reach, size) {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = if len2 > 0.0 {
                (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = ((px - a.0 - t * dx).powi(2) + (py - a.1 - t * dy).powi(2)).sqrt();
            let alpha = (half_width + 0.5 - d).clamp(0.0, 1.0);
            if alpha > 0.0 {
                blend(buf, size, x, y, LINK_INTENSITY, alpha);
            }
        }
    }
}

fn draw_disc(buf: &mut [f64], size: usize, c: (f64, f64), radius: f64, value: f64) {
    let reach = radius + 1.0;
    for y in span(c.1 - reach, c.1 + reach, size) {
        for x in span(c.0 - reach, c.0 + reach, size) {
            let d = ((x as f64 + 0.5 - c.0).powi(2) + (y as f64 + 0.5 - c.1).powi(2)).sqrt();
            let alpha = (radius + 0.5 - d).clamp(0.0, 1.0);
            if alpha > 0.0 {
                blend(buf, size, x, y, value, alpha);
            }
        }
    }
}

/// Renders the skeleton of `pose` over the seeded background. Keypoint
/// coordinates follow the pixel-area convention: pixel (i, j) covers
/// `[i, i+1) × [j, j+1)`.
pub fn render_frame(pose: &PoseFrame, size: usize, seed: u64) -> GrayImage {
    let mut buf = render_background(size, seed);
    draw_pose(&mut buf, pose, size);
    quantize(&buf, size)
}

/// Same as [`render_frame`] with a precomputed background.
pub(crate) fn render_on(background: &[f64], pose: &PoseFrame, size: usize) -> GrayImage {
    let mut buf = background.to_vec();
    draw_pose(&mut buf, pose, size);
    quantize(&buf, size)
}

fn draw_pose(buf: &mut [f64], pose: &PoseFrame, size: usize) {
    let s = size as f64;
    let half_width = (s / 64.0).max(1.0);
    let radius = (s / 40.0).max(1.5);
    if !pose.coords.iter().all(|c| c.is_finite()) {
        return;
    }
    for k in 0..KEYPOINTS - 1 {
        draw_segment(buf, size, pose.keypoint(k), pose.keypoint(k + 1), half_width);
    }
    for k in 0..KEYPOINTS {
        draw_disc(buf, size, pose.keypoint(k), radius, joint_intensity(k));
    }
}

fn quantize(buf: &[f64], size: usize) -> GrayImage {
    GrayImage {
        width: size,
        height: size,
        pixels: buf.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect(),
    }
}

pub fn frame_file_name(frame_id: u64) -> String {
    format!("frame_{frame_id:06}.pgm")
}

/// `frame_%06d.pgm` files in `dir`, sorted by frame id.
pub fn list_frames(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(id) = name
            .strip_prefix("frame_")
            .and_then(|r| r.strip_suffix(".pgm"))
            .and_then(|d| d.parse::<u64>().ok())
        {
            frames.push((id, entry.path()));
        }
    }
    frames.sort();
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::COORDS;

    fn pose_at(points: &[(f64, f64)]) -> PoseFrame {
        let mut c = [0.0; COORDS];
        for (k, (x, y)) in points.iter().enumerate() {
            c[2 * k] = *x;
            c[2 * k + 1] = *y;
        }
        PoseFrame::new(0, c)
    }

    #[test]
    fn off_frame_pose_leaves_background() {
        let pose = pose_at(&[(-100.0, -100.0); 8]);
        let img = render_frame(&pose, 48, 9);
        let bg = quantize(&render_background(48, 9), 48);
        assert_eq!(img, bg);
    }

    #[test]
    fn centre_joint_is_bright() {
        let mut pts = vec![(-50.0, -50.0); 8];
        pts[3] = (48.0, 48.0);
        let img = render_frame(&pose_at(&pts), 96, 1);
        assert!(img.get(48, 48) >= JOINT_MIN_INTENSITY);
    }

    #[test]
    fn deterministic_and_pgm_roundtrip() {
        let pts: Vec<_> = (0..8).map(|k| (10.0 + 3.0 * k as f64, 40.0 - 2.5 * k as f64)).collect();
        let a = render_frame(&pose_at(&pts), 64, 5);
        let b = render_frame(&pose_at(&pts), 64, 5);
        assert_eq!(a, b);
        let back = GrayImage::from_pgm(&a.to_pgm()).unwrap();
        assert_eq!(back, a);
        assert!(GrayImage::from_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(GrayImage::from_pgm(b"P5\n# c\n2 2\n255\n\x01\x02\x03").is_err());
        assert_eq!(
            GrayImage::from_pgm(b"P5\n# comment\n2 1\n255\n\x01\x02").unwrap().pixels,
            vec![1, 2]
        );
    }

    #[test]
    fn background_in_range() {
        let bg = render_background(32, 77);
        assert!(bg.iter().all(|&v| (23.0..=87.0).contains(&v)));
    }
}
