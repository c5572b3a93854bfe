use super::cells::CellKind;
use super::data::{window_starts, Standardizer};
use super::encdec::{ForecastModel, ForecastShape};
use crate::error::{ensure, Error, Result};
use crate::eval::{mae, mse};
use crate::numeric::{clip_global_norm, sub_seed, AdamConfig, AdamState, Matrix, Rng};
use crate::synth::COORDS;
use serde::{Deserialize, Serialize};

/// Global gradient-norm ceiling applied before every Adam step.
pub const CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastHyper {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub hidden: usize,
    /// Frames between consecutive window starts.
    pub stride: usize,
    /// Leading share of windows used for training; the rest validate.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ForecastHyper {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 1e-4,
            batch: 256,
            hidden: 64,
            stride: 1,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl ForecastHyper {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, InvalidArgument, "epochs must be >= 1");
        ensure!(self.batch >= 1, InvalidArgument, "batch must be >= 1");
        ensure!(self.hidden >= 1, InvalidArgument, "hidden size must be >= 1");
        ensure!(self.stride >= 1, InvalidArgument, "stride must be >= 1");
        ensure!(self.lr > 0.0 && self.lr.is_finite(), InvalidArgument, "lr must be > 0");
        ensure!(
            self.train_fraction > 0.0 && self.train_fraction < 1.0,
            InvalidArgument,
            "train_fraction must lie in (0, 1)"
        );
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ForecastReport {
    pub model: ForecastModel,
    pub epoch_losses: Vec<f64>,
    pub n_train: usize,
    pub n_val: usize,
    /// Pixel-space validation metrics over all `f×16` outputs.
    pub val_mse: f64,
    pub val_mae: f64,
}

/// Time-major standardized blocks for the windows starting at `starts`.
fn gather(series: &Matrix, starts: &[usize], offset: usize, steps: usize) -> Vec<Vec<f64>> {
    (0..steps)
        .map(|t| {
            let mut block = Vec::with_capacity(starts.len() * COORDS);
            for &s in starts {
                block.extend_from_slice(series.row(s + offset + t));
            }
            block
        })
        .collect()
}

/// Trains one encoder-decoder on a `T×16` pixel series with a chronological
/// train/validation split of its windows.
pub fn train_forecast(
    series: &Matrix,
    cell: CellKind,
    past: usize,
    future: usize,
    hyper: &ForecastHyper,
) -> Result<ForecastReport> {
    hyper.validate()?;
    ensure!(series.cols() == COORDS, Dimension, "series must have {COORDS} columns");
    ensure!(
        series.rows() > past + future,
        InvalidArgument,
        "series of {} frames is too short for past {past} + future {future} (need at least {})",
        series.rows(),
        past + future + 1
    );
    let starts = window_starts(series.rows(), past, future, hyper.stride)?;
    ensure!(starts.len() >= 2, InvalidArgument, "need at least two windows to split, got {}", starts.len());
    let n_train = ((hyper.train_fraction * starts.len() as f64).round() as usize).clamp(1, starts.len() - 1);
    let (train_starts, val_starts) = starts.split_at(n_train);

    let last_train_row = train_starts[n_train - 1] + past + future;
    let rows: Vec<&[f64]> = (0..last_train_row).map(|i| series.row(i)).collect();
    let stats = Standardizer::fit(&rows)?;
    let z = stats.standardize(series);

    let shape = ForecastShape {
        cell,
        hidden: hyper.hidden,
        past,
        future,
    };
    let mut model = ForecastModel::new(shape, hyper.seed)?;
    model.stats = stats;

    let mut adam = AdamState::new(model.params().values().len(), AdamConfig::with_lr(hyper.lr));
    let mut rng = Rng::new(sub_seed(hyper.seed, 1));
    let mut order = train_starts.to_vec();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(hyper.batch) {
            let xs = gather(&z, chunk, 0, past);
            let ts = gather(&z, chunk, past, future);
            let (loss, mut grads) = model.loss_and_grad_std(&xs, &ts, chunk.len());
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "{cell} n={past} f={future}: non-finite loss at epoch {epoch}"
                )));
            }
            let norm = clip_global_norm(grads.values_mut(), CLIP_NORM);
            if !norm.is_finite() {
                return Err(Error::Numerical(format!(
                    "{cell} n={past} f={future}: non-finite gradient at epoch {epoch}"
                )));
            }
            adam.step(model.params_mut().values_mut(), grads.values())?;
            total += loss * chunk.len() as f64;
        }
        let epoch_loss = total / order.len() as f64;
        log::debug!("forecast_epoch cell={cell} n={past} f={future} epoch={epoch} loss={epoch_loss:.6}");
        epoch_losses.push(epoch_loss);
    }

    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    for chunk in val_starts.chunks(hyper.batch.max(1)) {
        let xs = gather(&z, chunk, 0, past);
        let ys = model.predict_std(&xs, chunk.len());
        for (b, &s) in chunk.iter().enumerate() {
            for (t, y) in ys.iter().enumerate() {
                let row = series.row(s + past + t);
                for k in 0..COORDS {
                    truth.push(row[k]);
                    pred.push(y[b * COORDS + k] * stats.std[k] + stats.mean[k]);
                }
            }
        }
    }
    let (val_mse, val_mae) = (mse(&truth, &pred)?, mae(&truth, &pred)?);
    if !val_mse.is_finite() {
        return Err(Error::Numerical(format!("{cell} n={past} f={future}: non-finite validation error")));
    }
    Ok(ForecastReport {
        model,
        epoch_losses,
        n_train,
        n_val: val_starts.len(),
        val_mse,
        val_mae,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper(epochs: usize) -> ForecastHyper {
        ForecastHyper {
            epochs,
            lr: 1e-2,
            batch: 16,
            hidden: 6,
            stride: 1,
            train_fraction: 0.8,
            seed: 5,
        }
    }

    #[test]
    fn constant_series_is_learned() {
        let series = Matrix::filled(80, COORDS, 42.0);
        let r = train_forecast(&series, CellKind::Lstm, 5, 3, &hyper(3)).unwrap();
        assert!(r.val_mse < 1e-3, "{}", r.val_mse);
        assert_eq!(r.n_train + r.n_val, 73);
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let t = 150;
        let data = (0..t * COORDS)
            .map(|i| {
                let (r, k) = (i / COORDS, i % COORDS);
                40.0 + 10.0 * ((r as f64) * 0.1 + k as f64).sin()
            })
            .collect();
        let series = Matrix::from_vec(t, COORDS, data).unwrap();
        for cell in CellKind::ALL {
            let a = train_forecast(&series, cell, 6, 2, &hyper(15)).unwrap();
            let b = train_forecast(&series, cell, 6, 2, &hyper(15)).unwrap();
            assert_eq!(a.val_mse, b.val_mse);
            assert_eq!(a.model, b.model);
            assert!(a.epoch_losses.last().unwrap() < &a.epoch_losses[0]);
        }
    }

    #[test]
    fn rejects_short_series() {
        let series = Matrix::zeros(8, COORDS);
        assert!(train_forecast(&series, CellKind::Gru, 5, 3, &hyper(1)).is_err());
    }
}
