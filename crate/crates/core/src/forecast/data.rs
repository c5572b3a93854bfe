use crate::error::{ensure, Result};
use crate::numeric::Matrix;
use crate::synth::{PoseFrame, COORDS};
use serde::{Deserialize, Serialize};

/// One training example: `n` past frames and the `f` frames that follow.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Series row of the first past frame.
    pub start: usize,
    pub past: Matrix,
    pub future: Matrix,
}

/// Number of windows `windowize` produces.
pub fn window_count(len: usize, past: usize, future: usize, stride: usize) -> Result<usize> {
    ensure!(past >= 1 && future >= 1, InvalidArgument, "past and future windows must be >= 1");
    ensure!(stride >= 1, InvalidArgument, "window stride must be >= 1");
    ensure!(
        len >= past + future,
        InvalidArgument,
        "series of {len} frames is too short for past {past} + future {future}"
    );
    Ok((len - past - future) / stride + 1)
}

/// Start rows of every window, chronologically.
pub fn window_starts(len: usize, past: usize, future: usize, stride: usize) -> Result<Vec<usize>> {
    let count = window_count(len, past, future, stride)?;
    Ok((0..count).map(|i| i * stride).collect())
}

/// Slices a `T×16` series into contiguous past/future pairs.
pub fn windowize(series: &Matrix, past: usize, future: usize, stride: usize) -> Result<Vec<WindowSample>> {
    ensure!(series.cols() == COORDS, Dimension, "series must have {COORDS} columns");
    let starts = window_starts(series.rows(), past, future, stride)?;
    let rows = |from: usize, n: usize| series.select_rows(&(from..from + n).collect::<Vec<_>>());
    Ok(starts
        .into_iter()
        .map(|s| WindowSample {
            start: s,
            past: rows(s, past),
            future: rows(s + past, future),
        })
        .collect())
}

/// Stacks pose frames into a `T×16` series.
pub fn series_from_poses(poses: &[PoseFrame]) -> Matrix {
    let mut m = Matrix::zeros(poses.len(), COORDS);
    for (i, p) in poses.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&p.coords);
    }
    m
}

/// Per-coordinate standardization statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; COORDS],
    pub std: [f64; COORDS],
}

impl Default for Standardizer {
    fn default() -> Self {
        Self {
            mean: [0.0; COORDS],
            std: [1.0; COORDS],
        }
    }
}

impl Standardizer {
    /// Fits mean and population std over the given rows; near-constant
    /// coordinates keep a unit scale.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        ensure!(!rows.is_empty(), InvalidArgument, "cannot fit statistics on zero rows");
        let n = rows.len() as f64;
        let mut s = Self::default();
        for r in rows {
            ensure!(r.len() == COORDS, Dimension, "rows must have {COORDS} values");
            for (m, v) in s.mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        s.mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; COORDS];
        for r in rows {
            for k in 0..COORDS {
                var[k] += (r[k] - s.mean[k]).powi(2);
            }
        }
        for k in 0..COORDS {
            let sd = (var[k] / n).sqrt();
            s.std[k] = if sd < 1e-8 { 1.0 } else { sd };
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.std.iter().all(|&s| s > 0.0 && s.is_finite()) && self.mean.iter().all(|m| m.is_finite()),
            InvalidArgument,
            "standardization stats must be finite with std > 0"
        );
        Ok(())
    }

    pub fn standardize_row(&self, row: &[f64], out: &mut [f64]) {
        for k in 0..COORDS {
            out[k] = (row[k] - self.mean[k]) / self.std[k];
        }
    }

    pub fn standardize(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for i in 0..m.rows() {
            self.standardize_row(m.row(i), out.row_mut(i));
        }
        out
    }

    pub fn destandardize(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for i in 0..m.rows() {
            for (k, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = *v * self.std[k] + self.mean[k];
            }
        }
        out
    }
}
