use super::model::{predict_keypoints, Architecture, BackboneModel, Variant};
use crate::error::{ensure, Error, Result};
use crate::eval::{kfold_split, mae, mean_std, mse, train_indices};
use crate::numeric::{sub_seed, AdamConfig, AdamState, Rng};
use crate::synth::{self, GrayImage, PoseFrame, COORDS};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Aligned images (as `[0, 1]` intensities) and keypoint targets.
#[derive(Debug, Clone)]
pub struct PoseDataset {
    pub image_size: usize,
    pub frame_ids: Vec<u64>,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<[f64; COORDS]>,
}

impl PoseDataset {
    pub fn from_parts(images: &[(u64, GrayImage)], poses: &[PoseFrame]) -> Result<Self> {
        ensure!(!poses.is_empty(), InvalidArgument, "no annotated poses");
        let size = images.first().map_or(0, |(_, i)| i.width);
        let mut by_id = std::collections::BTreeMap::new();
        for (id, img) in images {
            ensure!(
                img.width == size && img.height == size,
                Dimension,
                "frame {id} is {}x{}, expected {size}x{size}",
                img.width,
                img.height
            );
            by_id.insert(*id, img);
        }
        let mut data = Self {
            image_size: size,
            frame_ids: Vec::with_capacity(poses.len()),
            inputs: Vec::with_capacity(poses.len()),
            targets: Vec::with_capacity(poses.len()),
        };
        for p in poses {
            let img = by_id.get(&p.frame_id).ok_or_else(|| {
                Error::InvalidArgument(format!("no image for annotated frame {}", p.frame_id))
            })?;
            data.frame_ids.push(p.frame_id);
            data.inputs.push(img.to_unit());
            data.targets.push(p.coords);
        }
        Ok(data)
    }

    /// Loads the annotated split of a synthetic (or imported) dataset directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let poses = synth::read_pose_csv(&dir.join(synth::ANNOTATED_CSV))?;
        let mut images = Vec::with_capacity(poses.len());
        for p in &poses {
            let path = synth::annotated_image_path(dir, p.frame_id);
            if !path.exists() {
                return Err(Error::InvalidArgument(format!(
                    "annotated frame {} has no image at {}",
                    p.frame_id,
                    path.display()
                )));
            }
            images.push((p.frame_id, GrayImage::read_pgm(&path)?));
        }
        Self::from_parts(&images, &poses)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn targets_flat(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().flat_map(|&i| self.targets[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseHyper {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub folds: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for PoseHyper {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 1e-4,
            batch: 8,
            folds: 5,
            seed: 0,
            variant: Variant::Scconv,
        }
    }
}

impl PoseHyper {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, InvalidArgument, "epochs must be >= 1");
        ensure!(self.batch >= 1, InvalidArgument, "batch must be >= 1");
        ensure!(self.lr > 0.0 && self.lr.is_finite(), InvalidArgument, "lr must be > 0");
        ensure!(self.folds >= 2, InvalidArgument, "folds must be >= 2");
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedBackbone {
    pub model: BackboneModel,
    /// Training-set MSE before the first update.
    pub initial_loss: f64,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains one backbone on the given rows.
pub fn train_backbone(
    data: &PoseDataset,
    rows: &[usize],
    hyper: &PoseHyper,
    seed: u64,
) -> Result<TrainedBackbone> {
    hyper.validate()?;
    ensure!(!rows.is_empty(), InvalidArgument, "no training rows");
    let mut model = BackboneModel::new(Architecture::new(hyper.variant, data.image_size), seed)?;

    let mut mean = [0.0; COORDS];
    for &i in rows {
        for (m, t) in mean.iter_mut().zip(&data.targets[i]) {
            *m += t;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
    model.set_head_bias(&mean);

    let train_inputs: Vec<Vec<f64>> = rows.iter().map(|&i| data.inputs[i].clone()).collect();
    let preds = predict_keypoints(&model, &train_inputs)?;
    let flat_pred: Vec<f64> = preds.iter().flatten().copied().collect();
    let initial_loss = mse(&data.targets_flat(rows), &flat_pred)?;

    let mut adam = AdamState::new(model.params().values().len(), AdamConfig::with_lr(hyper.lr));
    let mut rng = Rng::new(sub_seed(seed, 1));
    let mut order = rows.to_vec();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(hyper.batch) {
            let inputs: Vec<&[f64]> = chunk.iter().map(|&i| data.inputs[i].as_slice()).collect();
            let targets: Vec<[f64; COORDS]> = chunk.iter().map(|&i| data.targets[i]).collect();
            let (loss, grads) = model.loss_and_grad(&inputs, &targets)?;
            if !loss.is_finite() || !grads.values().iter().all(|g| g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "pose training diverged at epoch {epoch} (loss {loss})"
                )));
            }
            adam.step(model.params_mut().values_mut(), grads.values())?;
            total += loss * chunk.len() as f64;
        }
        let epoch_loss = total / order.len() as f64;
        log::debug!("pose_epoch epoch={epoch} loss={epoch_loss:.6}");
        epoch_losses.push(epoch_loss);
    }
    Ok(TrainedBackbone {
        model,
        initial_loss,
        epoch_losses,
    })
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub seed: u64,
    pub val_indices: Vec<usize>,
    pub trained: TrainedBackbone,
    pub val_mse: f64,
    pub val_mae: f64,
}

/// Mean ± standard deviation of fold metrics, one table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
}

impl SummaryRow {
    pub fn from_folds(model: &str, mses: &[f64], maes: &[f64]) -> Self {
        let (mse_mean, mse_std) = mean_std(mses);
        let (mae_mean, mae_std) = mean_std(maes);
        Self {
            model: model.to_string(),
            mse_mean,
            mse_std,
            mae_mean,
            mae_std,
        }
    }

    /// `model,mse,mae` with `mean±std` cells.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.2}±{:.2},{:.2}±{:.2}",
            self.model, self.mse_mean, self.mse_std, self.mae_mean, self.mae_std
        )
    }
}

#[derive(Debug, Clone)]
pub struct PoseCvResult {
    pub folds: Vec<FoldOutcome>,
    pub summary: SummaryRow,
}

/// K-fold cross-validated training of the pose regressor.
pub fn train_pose(data: &PoseDataset, hyper: &PoseHyper) -> Result<PoseCvResult> {
    hyper.validate()?;
    let folds = kfold_split(data.len(), hyper.folds, hyper.seed)?;
    let mut outcomes = Vec::with_capacity(folds.len());
    for (i, val) in folds.iter().enumerate() {
        let rows = train_indices(&folds, i);
        let seed = sub_seed(hyper.seed, i as u64);
        let trained = train_backbone(data, &rows, hyper, seed)?;
        let val_inputs: Vec<Vec<f64>> = val.iter().map(|&j| data.inputs[j].clone()).collect();
        let pred: Vec<f64> = predict_keypoints(&trained.model, &val_inputs)?
            .into_iter()
            .flatten()
            .collect();
        let truth = data.targets_flat(val);
        let (val_mse, val_mae) = (mse(&truth, &pred)?, mae(&truth, &pred)?);
        log::info!(
            "pose_fold fold={i} variant={} val_mse={val_mse:.4} val_mae={val_mae:.4}",
            hyper.variant.as_str()
        );
        outcomes.push(FoldOutcome {
            fold: i,
            seed,
            val_indices: val.clone(),
            trained,
            val_mse,
            val_mae,
        });
    }
    let mses: Vec<f64> = outcomes.iter().map(|o| o.val_mse).collect();
    let maes: Vec<f64> = outcomes.iter().map(|o| o.val_mae).collect();
    Ok(PoseCvResult {
        summary: SummaryRow::from_folds(hyper.variant.as_str(), &mses, &maes),
        folds: outcomes,
    })
}
