//! Extreme Learning Machine regression head over backbone features.
//!
//! Hidden parameters are drawn once from a seeded generator and never trained;
//! only the output weights β are fitted, in one least-squares solve.

use crate::backbone::{extract_features, forward_batch, BackboneModel, PoseDataset};
use crate::container;
use crate::error::{ensure, Error, Result};
use crate::eval::{kfold_split, mae, mse, train_indices};
use crate::numeric::{check_finite, gemm, solve_least_squares, sub_seed, Matrix, Operand, Rng};
use crate::params::{ParamLayout, Params};
use crate::synth::{GrayImage, PoseFrame, COORDS};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub const MODEL_KIND: &str = "elm";

/// Ridge strength used by `rbf_l2` when none is given.
pub const DEFAULT_RBF_L2_LAMBDA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElmKernel {
    Linear,
    Tanh,
    Rbf,
    RbfL2,
}

impl ElmKernel {
    pub const ALL: [ElmKernel; 4] = [Self::Linear, Self::Tanh, Self::Rbf, Self::RbfL2];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Tanh => "tanh",
            Self::Rbf => "rbf",
            Self::RbfL2 => "rbf_l2",
        }
    }

    pub fn is_radial(self) -> bool {
        matches!(self, Self::Rbf | Self::RbfL2)
    }

    /// The kernel's own λ when the caller does not pick one.
    pub fn default_lambda(self) -> f64 {
        if self == Self::RbfL2 {
            DEFAULT_RBF_L2_LAMBDA
        } else {
            0.0
        }
    }
}

impl fmt::Display for ElmKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ElmKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ELM kernel `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElmModel {
    pub kernel: ElmKernel,
    pub n_hidden: usize,
    pub input_dim: usize,
    pub lambda: f64,
    pub seed: u64,
    /// `D×L` projection for linear/tanh; `L×D` centers for the radial kernels.
    pub hidden: Matrix,
    /// Biases (linear/tanh) or widths γ (radial), length `L`.
    pub bias: Vec<f64>,
    /// Output weights, `L×16`.
    pub beta: Matrix,
    /// Input standardization applied before the hidden layer:
    /// `(x - shift) / scale`.
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    pub backbone_hash: Option<String>,
}

impl ElmModel {
    pub fn validate(&self) -> Result<()> {
        let (l, d) = (self.n_hidden, self.input_dim);
        let hidden_shape = if self.kernel.is_radial() { (l, d) } else { (d, l) };
        ensure!(self.hidden.shape() == hidden_shape, Dimension, "hidden parameters have the wrong shape");
        ensure!(self.bias.len() == l, Dimension, "hidden bias length {} != {l}", self.bias.len());
        ensure!(
            self.beta.shape() == (l, COORDS),
            Dimension,
            "output weights are {:?}, expected ({l}, {COORDS})",
            self.beta.shape()
        );
        ensure!(
            self.shift.len() == d && self.scale.len() == d,
            Dimension,
            "input scaler does not match {d} features"
        );
        if self.kernel.is_radial() {
            ensure!(self.bias.iter().all(|&g| g > 0.0), InvalidArgument, "RBF widths must be > 0");
        }
        check_lambda(self.kernel, self.lambda)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut layout = ParamLayout::new();
        let blocks = [
            ("hidden", vec![self.hidden.rows(), self.hidden.cols()], self.hidden.as_slice()),
            ("bias", vec![self.bias.len()], &self.bias[..]),
            ("beta", vec![self.beta.rows(), self.beta.cols()], self.beta.as_slice()),
            ("shift", vec![self.shift.len()], &self.shift[..]),
            ("scale", vec![self.scale.len()], &self.scale[..]),
        ];
        let mut values = Vec::new();
        for (name, shape, data) in &blocks {
            layout.push(*name, shape);
            values.extend_from_slice(data);
        }
        let meta = serde_json::json!({
            "kernel": self.kernel,
            "n_hidden": self.n_hidden,
            "input_dim": self.input_dim,
            "lambda": self.lambda,
            "seed": self.seed,
            "backbone_hash": self.backbone_hash,
        });
        container::write(path, MODEL_KIND, meta, &Params::from_values(layout, values)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            kernel: ElmKernel,
            n_hidden: usize,
            input_dim: usize,
            lambda: f64,
            seed: u64,
            backbone_hash: Option<String>,
        }
        let (header, params) = container::read(path, MODEL_KIND)?;
        let meta: Meta = serde_json::from_value(header.meta)
            .map_err(|e| Error::format(path, format!("ELM metadata: {e}")))?;
        let block = |name: &str| -> Result<(&[usize], &[f64])> {
            let idx = params
                .layout()
                .index_of(name)
                .ok_or_else(|| Error::format(path, format!("missing block `{name}`")))?;
            Ok((&params.layout().blocks()[idx].shape[..], params.block(idx)))
        };
        let matrix = |name: &str| -> Result<Matrix> {
            let (shape, data) = block(name)?;
            ensure!(shape.len() == 2, Dimension, "block `{name}` is not a matrix");
            Matrix::from_vec(shape[0], shape[1], data.to_vec())
        };
        let model = Self {
            kernel: meta.kernel,
            n_hidden: meta.n_hidden,
            input_dim: meta.input_dim,
            lambda: meta.lambda,
            seed: meta.seed,
            hidden: matrix("hidden")?,
            bias: block("bias")?.1.to_vec(),
            beta: matrix("beta")?,
            shift: block("shift")?.1.to_vec(),
            scale: block("scale")?.1.to_vec(),
            backbone_hash: meta.backbone_hash,
        };
        model.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(model)
    }

    fn standardize(&self, x: &Matrix) -> Result<Matrix> {
        ensure!(
            x.cols() == self.input_dim,
            Dimension,
            "ELM expects {} features, got {}",
            self.input_dim,
            x.cols()
        );
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.shift).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

fn check_lambda(kernel: ElmKernel, lambda: f64) -> Result<()> {
    ensure!(lambda.is_finite() && lambda >= 0.0, InvalidArgument, "lambda must be finite and >= 0");
    ensure!(
        (kernel == ElmKernel::RbfL2) == (lambda > 0.0),
        InvalidArgument,
        "kernel {kernel} with lambda {lambda}: only rbf_l2 takes a positive lambda"
    );
    Ok(())
}

/// Hidden-layer output `H` (`N×L`) for inputs already in the model's
/// standardized space.
pub fn kernel_activation(model: &ElmModel, x: &Matrix) -> Result<Matrix> {
    let (n, d) = x.shape();
    ensure!(d == model.input_dim, Dimension, "ELM expects {} features, got {d}", model.input_dim);
    let l = model.n_hidden;
    let mut h = Matrix::zeros(n, l);
    if n == 0 {
        return Ok(h);
    }
    if model.kernel.is_radial() {
        // ‖x - a‖² = ‖x‖² + ‖a‖² - 2 x·a
        gemm(
            n,
            d,
            l,
            -2.0,
            Operand::plain(x.as_slice(), d),
            Operand::transposed(model.hidden.as_slice(), d),
            0.0,
            h.as_mut_slice(),
        );
        let center_sq: Vec<f64> = model.hidden.row_iter().map(|a| a.iter().map(|v| v * v).sum()).collect();
        for i in 0..n {
            let x_sq: f64 = x.row(i).iter().map(|v| v * v).sum();
            for (j, v) in h.row_mut(i).iter_mut().enumerate() {
                let dist = (*v + x_sq + center_sq[j]).max(0.0);
                *v = (-model.bias[j] * dist).exp();
            }
        }
    } else {
        gemm(
            n,
            d,
            l,
            1.0,
            Operand::plain(x.as_slice(), d),
            Operand::plain(model.hidden.as_slice(), l),
            0.0,
            h.as_mut_slice(),
        );
        let tanh = model.kernel == ElmKernel::Tanh;
        for i in 0..n {
            for (v, b) in h.row_mut(i).iter_mut().zip(&model.bias) {
                *v += b;
                if tanh {
                    *v = v.tanh();
                }
            }
        }
    }
    Ok(h)
}

/// Fits an ELM on `features` (`N×D`) and `targets` (`N×16`).
///
/// `lambda` defaults to the kernel's own value when `None`. It weighs
/// `‖β‖²` against the mean squared training residual, so the ridge passed to
/// the solver is `lambda · N`.
pub fn elm_train(
    features: &Matrix,
    targets: &Matrix,
    kernel: ElmKernel,
    n_hidden: usize,
    lambda: Option<f64>,
    seed: u64,
) -> Result<ElmModel> {
    let (n, d) = features.shape();
    ensure!(n >= 2, InvalidArgument, "ELM training needs at least 2 samples, got {n}");
    ensure!(d >= 1, InvalidArgument, "ELM training needs at least one feature");
    ensure!(n_hidden >= 1, InvalidArgument, "n_hidden must be >= 1");
    ensure!(
        targets.shape() == (n, COORDS),
        Dimension,
        "targets are {:?}, expected ({n}, {COORDS})",
        targets.shape()
    );
    check_finite(features.as_slice(), "ELM features")?;
    check_finite(targets.as_slice(), "ELM targets")?;
    let lambda = lambda.unwrap_or_else(|| kernel.default_lambda());
    check_lambda(kernel, lambda)?;

    let mut shift = vec![0.0; d];
    for row in features.row_iter() {
        for (m, v) in shift.iter_mut().zip(row) {
            *m += v;
        }
    }
    shift.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; d];
    for row in features.row_iter() {
        for ((s, v), m) in scale.iter_mut().zip(row).zip(&shift) {
            *s += (v - m).powi(2);
        }
    }
    // radial kernels get a wider spread so the fixed width range stays smooth
    let spread = if kernel.is_radial() { d as f64 } else { (d as f64).sqrt() };
    for s in &mut scale {
        let std = (*s / n as f64).sqrt();
        *s = if std < 1e-12 { spread } else { std * spread };
    }

    let mut rng = Rng::new(seed);
    let mut model = ElmModel {
        kernel,
        n_hidden,
        input_dim: d,
        lambda,
        seed,
        hidden: Matrix::zeros(0, 0),
        bias: Vec::new(),
        beta: Matrix::zeros(n_hidden, COORDS),
        shift,
        scale,
        backbone_hash: None,
    };
    let x = model.standardize(features)?;
    if kernel.is_radial() {
        let mut centers = Matrix::zeros(n_hidden, d);
        let picked = rng.sample_without_replacement(n, n_hidden);
        for (j, &i) in picked.iter().enumerate() {
            centers.row_mut(j).copy_from_slice(x.row(i));
        }
        if n_hidden > n {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for row in x.row_iter() {
                for (k, v) in row.iter().enumerate() {
                    lo[k] = lo[k].min(*v);
                    hi[k] = hi[k].max(*v);
                }
            }
            for j in n..n_hidden {
                for (k, c) in centers.row_mut(j).iter_mut().enumerate() {
                    *c = rng.uniform(lo[k], hi[k]);
                }
            }
        }
        let (ln_lo, ln_hi) = (0.1f64.ln(), 10f64.ln());
        model.bias = (0..n_hidden).map(|_| rng.uniform(ln_lo, ln_hi).exp()).collect();
        model.hidden = centers;
    } else {
        model.hidden = rng.uniform_matrix(d, n_hidden, -1.0, 1.0);
        model.bias = (0..n_hidden).map(|_| rng.uniform(-1.0, 1.0)).collect();
    }

    let h = kernel_activation(&model, &x)?;
    model.beta = solve_least_squares(&h, targets, lambda * n as f64)?;
    check_finite(model.beta.as_slice(), "ELM output weights")?;
    Ok(model)
}

/// Predicted keypoints, `N×16`.
pub fn elm_predict(model: &ElmModel, features: &Matrix) -> Result<Matrix> {
    let x = model.standardize(features)?;
    kernel_activation(model, &x)?.matmul(&model.beta)
}

/// Backbone features followed by the ELM head, one pose per image.
pub fn refine_poses(
    backbone: &BackboneModel,
    elm: &ElmModel,
    images: &[GrayImage],
    frame_ids: &[u64],
) -> Result<Vec<PoseFrame>> {
    ensure!(
        images.len() == frame_ids.len(),
        Dimension,
        "{} images but {} frame ids",
        images.len(),
        frame_ids.len()
    );
    ensure!(
        elm.input_dim == backbone.feature_dim(),
        Dimension,
        "ELM expects {} features but the backbone produces {}",
        elm.input_dim,
        backbone.feature_dim()
    );
    let hash = backbone.hash();
    match &elm.backbone_hash {
        Some(h) if *h == hash => {}
        Some(h) => {
            return Err(Error::InvalidArgument(format!(
                "ELM was trained on backbone {h}, got {hash}"
            )))
        }
        None => {
            return Err(Error::InvalidArgument(
                "ELM model does not record the backbone it was trained on".into(),
            ))
        }
    }
    let pred = elm_predict(elm, &extract_features(backbone, images)?)?;
    Ok(frame_ids
        .iter()
        .zip(pred.row_iter())
        .map(|(&id, row)| PoseFrame::from_slice(id, row).expect("16 columns"))
        .collect())
}

/// Validation metrics of one fold, raw head against ELM refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineFold {
    pub fold: usize,
    pub raw_mse: f64,
    pub raw_mae: f64,
    pub elm_mse: f64,
    pub elm_mae: f64,
}

/// Refines every fold's backbone with an ELM trained on that fold's training
/// rows, scoring both heads on the held-out rows.
pub fn refine_cv(
    data: &PoseDataset,
    folds: &[(&BackboneModel, &[usize])],
    kernel: ElmKernel,
    n_hidden: usize,
    lambda: Option<f64>,
    seed: u64,
) -> Result<Vec<RefineFold>> {
    let targets = Matrix::from_rows(&data.targets)?;
    folds
        .iter()
        .enumerate()
        .map(|(k, (backbone, val))| {
            ensure!(!val.is_empty(), InvalidArgument, "fold {k} has no validation rows");
            let mut held_out = vec![false; data.len()];
            for &i in val.iter() {
                ensure!(i < data.len(), InvalidArgument, "fold {k} references row {i} of {}", data.len());
                held_out[i] = true;
            }
            let train: Vec<usize> = (0..data.len()).filter(|&i| !held_out[i]).collect();
            let (features, raw) = forward_batch(backbone, &data.inputs)?;
            let mut model = elm_train(
                &features.select_rows(&train),
                &targets.select_rows(&train),
                kernel,
                n_hidden,
                lambda,
                sub_seed(seed, k as u64),
            )?;
            model.backbone_hash = Some(backbone.hash());
            let truth = data.targets_flat(val);
            let raw_pred: Vec<f64> = val.iter().flat_map(|&i| raw[i]).collect();
            let elm_pred = elm_predict(&model, &features.select_rows(val))?;
            let fold = RefineFold {
                fold: k,
                raw_mse: mse(&truth, &raw_pred)?,
                raw_mae: mae(&truth, &raw_pred)?,
                elm_mse: mse(&truth, elm_pred.as_slice())?,
                elm_mae: mae(&truth, elm_pred.as_slice())?,
            };
            log::info!(
                "refine_fold fold={k} kernel={kernel} raw_mse={:.4} elm_mse={:.4}",
                fold.raw_mse,
                fold.elm_mse
            );
            Ok(fold)
        })
        .collect()
}

/// Inclusive neuron-count range for the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRange {
    pub min: usize,
    pub max: usize,
    pub step: usize,
}

impl Default for SweepRange {
    fn default() -> Self {
        Self {
            min: 100,
            max: 1000,
            step: 50,
        }
    }
}

impl SweepRange {
    pub fn counts(&self) -> Result<Vec<usize>> {
        ensure!(self.step > 0, InvalidArgument, "sweep step must be > 0");
        ensure!(self.max >= self.min, InvalidArgument, "sweep max {} < min {}", self.max, self.min);
        ensure!(self.min >= 1, InvalidArgument, "sweep min must be >= 1");
        Ok((self.min..=self.max).step_by(self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kernel: ElmKernel,
    pub n_hidden: usize,
    pub fold: usize,
    pub mse: f64,
    pub mae: f64,
}

pub const SWEEP_CSV_HEADER: &str = "kernel,n_hidden,fold,mse,mae";

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{:.6},{:.6}", self.kernel, self.n_hidden, self.fold, self.mse, self.mae)
    }
}

/// Cross-validated MSE/MAE for every kernel × neuron count × fold.
///
/// Fold assignment is shared by all cells; each cell draws its hidden layer
/// from its own sub-seed.
pub fn neuron_sweep(
    features: &Matrix,
    targets: &Matrix,
    kernels: &[ElmKernel],
    range: SweepRange,
    folds: usize,
    lambda: Option<f64>,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    let counts = range.counts()?;
    let n = features.rows();
    ensure!(n >= folds, InvalidArgument, "{n} samples cannot fill {folds} folds");
    let mut unique = Vec::new();
    for &k in kernels {
        if unique.contains(&k) {
            log::warn!("elm_sweep_duplicate_kernel kernel={k}");
        } else {
            unique.push(k);
        }
    }
    let splits = kfold_split(n, folds, seed)?;
    let cells: Vec<(ElmKernel, usize, usize)> = unique
        .iter()
        .flat_map(|&k| counts.iter().flat_map(move |&c| (0..folds).map(move |f| (k, c, f))))
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(kernel, n_hidden, fold))| {
            let train = train_indices(&splits, fold);
            let val = &splits[fold];
            let lam = lambda.filter(|_| kernel == ElmKernel::RbfL2);
            let model = elm_train(
                &features.select_rows(&train),
                &targets.select_rows(&train),
                kernel,
                n_hidden,
                lam,
                sub_seed(seed, idx as u64),
            )?;
            let pred = elm_predict(&model, &features.select_rows(val))?;
            let truth = targets.select_rows(val);
            Ok(SweepRow {
                kernel,
                n_hidden,
                fold,
                mse: mse(truth.as_slice(), pred.as_slice())?,
                mae: mae(truth.as_slice(), pred.as_slice())?,
            })
        })
        .collect()
}

/// Mean validation MSE per (kernel, neuron count), in sweep order.
pub fn sweep_curve(rows: &[SweepRow]) -> Vec<(ElmKernel, usize, f64)> {
    let mut out: Vec<(ElmKernel, usize, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(k, c, _, _)| *k == r.kernel && *c == r.n_hidden) {
            Some(e) => {
                e.2 += r.mse;
                e.3 += 1;
            }
            None => out.push((r.kernel, r.n_hidden, r.mse, 1)),
        }
    }
    out.into_iter().map(|(k, c, s, m)| (k, c, s / m as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine_data(n: usize, d: usize, seed: u64) -> (Matrix, Matrix) {
        let mut rng = Rng::new(seed);
        let x = rng.uniform_matrix(n, d, -2.0, 2.0);
        let a = rng.uniform_matrix(d, COORDS, -3.0, 3.0);
        let c: Vec<f64> = (0..COORDS).map(|_| rng.uniform(0.0, 96.0)).collect();
        let mut t = x.matmul(&a).unwrap();
        for i in 0..n {
            for (v, b) in t.row_mut(i).iter_mut().zip(&c) {
                *v += b;
            }
        }
        (x, t)
    }

    fn bare(kernel: ElmKernel, hidden: Matrix, bias: Vec<f64>) -> ElmModel {
        let d = if kernel.is_radial() { hidden.cols() } else { hidden.rows() };
        ElmModel {
            kernel,
            n_hidden: bias.len(),
            input_dim: d,
            lambda: kernel.default_lambda(),
            seed: 0,
            hidden,
            beta: Matrix::zeros(bias.len(), COORDS),
            bias,
            shift: vec![0.0; d],
            scale: vec![1.0; d],
            backbone_hash: None,
        }
    }

    #[test]
    fn activation_examples() {
        let x = Matrix::from_rows(&[[0.5, -1.0, 2.0], [3.0, 0.0, -0.25]]).unwrap();
        let lin = bare(ElmKernel::Linear, Matrix::identity(3), vec![0.0; 3]);
        assert_eq!(kernel_activation(&lin, &x).unwrap(), x);
        let tanh = bare(ElmKernel::Tanh, Matrix::zeros(3, 4), vec![0.0; 4]);
        assert!(kernel_activation(&tanh, &x).unwrap().as_slice().iter().all(|&v| v == 0.0));
        let rbf = bare(ElmKernel::Rbf, Matrix::from_rows(&[x.row(1)]).unwrap(), vec![0.7]);
        let h = kernel_activation(&rbf, &x).unwrap();
        assert!((h[(1, 0)] - 1.0).abs() < 1e-12);
        assert!(h[(0, 0)] < 1.0);
        assert!(kernel_activation(&lin, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn affine_recovery() {
        let (x, t) = affine_data(60, 6, 3);
        let m = elm_train(&x, &t, ElmKernel::Linear, 7, None, 11).unwrap();
        let p = elm_predict(&m, &x).unwrap();
        assert!(mse(t.as_slice(), p.as_slice()).unwrap() < 1e-12);
        assert!(p.max_abs_diff(&t) < 1e-6);
    }

    #[test]
    fn tanh_interpolates_distinct_samples() {
        let mut rng = Rng::new(8);
        let x = rng.uniform_matrix(50, 5, -1.0, 1.0);
        let t = rng.uniform_matrix(50, COORDS, 0.0, 96.0);
        let m = elm_train(&x, &t, ElmKernel::Tanh, 50, None, 2).unwrap();
        let p = elm_predict(&m, &x).unwrap();
        assert!(mse(t.as_slice(), p.as_slice()).unwrap() < 1e-4);
    }

    #[test]
    fn ridge_shrinks_beta_monotonically() {
        let (x, t) = affine_data(40, 4, 5);
        let norms: Vec<f64> = [1e-6, 1e-3, 1.0, 1e3]
            .iter()
            .map(|&l| {
                elm_train(&x, &t, ElmKernel::RbfL2, 30, Some(l), 9)
                    .unwrap()
                    .beta
                    .frobenius_norm()
            })
            .collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
    }

    #[test]
    fn ridge_limit_approaches_plain_rbf() {
        let (x, t) = affine_data(40, 4, 6);
        let plain = elm_train(&x, &t, ElmKernel::Rbf, 25, None, 4).unwrap();
        let dists: Vec<f64> = [1e-2, 1e-6, 1e-10]
            .iter()
            .map(|&l| {
                let m = elm_train(&x, &t, ElmKernel::RbfL2, 25, Some(l), 4).unwrap();
                m.beta.sub(&plain.beta).unwrap().frobenius_norm()
            })
            .collect();
        assert!(dists.windows(2).all(|w| w[1] < w[0]), "{dists:?}");
    }

    #[test]
    fn lambda_must_match_kernel() {
        let (x, t) = affine_data(10, 2, 1);
        assert!(elm_train(&x, &t, ElmKernel::Rbf, 5, Some(0.1), 0).is_err());
        assert!(elm_train(&x, &t, ElmKernel::RbfL2, 5, Some(0.0), 0).is_err());
        assert!(elm_train(&x.select_rows(&[0]), &t.select_rows(&[0]), ElmKernel::Linear, 5, None, 0).is_err());
    }

    #[test]
    fn more_centers_than_rows() {
        let (x, t) = affine_data(10, 3, 2);
        let m = elm_train(&x, &t, ElmKernel::Rbf, 25, None, 1).unwrap();
        assert_eq!(m.hidden.shape(), (25, 3));
        assert!(m.bias.iter().all(|&g| (0.1..=10.0).contains(&g)));
    }

    #[test]
    fn deterministic_and_roundtrip() {
        let (x, t) = affine_data(30, 4, 7);
        let a = elm_train(&x, &t, ElmKernel::Tanh, 12, None, 5).unwrap();
        let b = elm_train(&x, &t, ElmKernel::Tanh, 12, None, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(elm_predict(&a, &x.select_rows(&[3])).unwrap().shape(), (1, COORDS));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("elm.armf");
        a.save(&path).unwrap();
        assert_eq!(ElmModel::load(&path).unwrap(), a);
    }

    #[test]
    fn sweep_counts_and_dedup() {
        assert_eq!(SweepRange::default().counts().unwrap().len(), 19);
        let (x, t) = affine_data(20, 3, 4);
        let range = SweepRange { min: 2, max: 6, step: 2 };
        let rows = neuron_sweep(
            &x,
            &t,
            &[ElmKernel::Linear, ElmKernel::Tanh, ElmKernel::Linear],
            range,
            4,
            None,
            1,
        )
        .unwrap();
        assert_eq!(rows.len(), 2 * 3 * 4);
        assert_eq!(sweep_curve(&rows).len(), 6);
        assert!(neuron_sweep(&x.select_rows(&[0, 1]), &t.select_rows(&[0, 1]), &[ElmKernel::Linear], range, 4, None, 1).is_err());
    }
}
