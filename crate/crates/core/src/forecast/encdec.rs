//! Double-stacked recurrent encoder-decoder.
//!
//! Two encoder layers read the `n` past frames. The last hidden state of the
//! second layer is the context, fed as the input of every decoder step. The
//! decoder layers start from the final states of the matching encoder layers,
//! and a shared dense projection maps each of the `f` decoder outputs to 16
//! coordinates.

use super::cells::{CellKind, Layer, LayerGrads, Step};
use super::data::Standardizer;
use crate::container;
use crate::error::{ensure, Error, Result};
use crate::numeric::{gemm, Matrix, Operand, Rng};
use crate::params::{ParamLayout, Params};
use crate::synth::COORDS;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MODEL_KIND: &str = "forecast";

const LAYERS: [&str; 4] = ["enc1", "enc2", "dec1", "dec2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastShape {
    pub cell: CellKind,
    pub hidden: usize,
    pub past: usize,
    pub future: usize,
}

impl ForecastShape {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.hidden >= 1, InvalidArgument, "hidden size must be >= 1");
        ensure!(self.past >= 1, InvalidArgument, "past window must be >= 1");
        ensure!(self.future >= 1, InvalidArgument, "future window must be >= 1");
        Ok(())
    }

    fn layout(&self) -> ParamLayout {
        let gw = self.cell.gates() * self.hidden;
        let mut layout = ParamLayout::new();
        for (i, name) in LAYERS.iter().enumerate() {
            let input = if i == 0 { COORDS } else { self.hidden };
            layout.push(format!("{name}.w"), &[gw, input]);
            layout.push(format!("{name}.u"), &[gw, self.hidden]);
            layout.push(format!("{name}.b"), &[gw]);
        }
        layout.push("proj.w", &[COORDS, self.hidden]);
        layout.push("proj.b", &[COORDS]);
        layout
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    shape: ForecastShape,
    params: Params,
    pub stats: Standardizer,
}

/// Per-layer activations of one forward pass.
struct LayerTrace {
    init_h: Vec<f64>,
    init_c: Vec<f64>,
    steps: Vec<Step>,
}

impl LayerTrace {
    fn prev(&self, t: usize) -> (&[f64], &[f64]) {
        if t == 0 {
            (&self.init_h, &self.init_c)
        } else {
            (&self.steps[t - 1].h, &self.steps[t - 1].c)
        }
    }

    fn last(&self) -> (&[f64], &[f64]) {
        self.prev(self.steps.len())
    }
}

struct Trace {
    batch: usize,
    layers: [LayerTrace; 4],
    /// Standardized predictions, one `B×16` block per future step.
    outputs: Vec<Vec<f64>>,
}

impl ForecastModel {
    /// Glorot-uniform weights, zero biases (LSTM forget gates at 1) and
    /// identity standardization.
    pub fn new(shape: ForecastShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut params = Params::zeros(shape.layout());
        let mut rng = Rng::new(seed);
        let hd = shape.hidden;
        for i in 0..params.layout().blocks().len() {
            let spec = params.layout().blocks()[i].clone();
            if spec.shape.len() != 2 {
                continue;
            }
            let (fan_out, fan_in) = if spec.name.starts_with("proj") {
                (COORDS, hd)
            } else {
                (hd, spec.shape[1])
            };
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.block_mut(i).iter_mut().for_each(|v| *v = rng.uniform(-bound, bound));
        }
        if shape.cell == CellKind::Lstm {
            for name in LAYERS {
                let idx = params.layout().index_of(&format!("{name}.b")).expect("layer bias");
                params.block_mut(idx)[hd..2 * hd].iter_mut().for_each(|b| *b = 1.0);
            }
        }
        Ok(Self {
            shape,
            params,
            stats: Standardizer::default(),
        })
    }

    pub fn from_params(shape: ForecastShape, params: Params, stats: Standardizer) -> Result<Self> {
        shape.validate()?;
        stats.validate()?;
        let layout = shape.layout();
        ensure!(
            params.layout() == &layout,
            Dimension,
            "parameter blocks do not match a {} model with hidden size {}",
            shape.cell,
            shape.hidden
        );
        Ok(Self { shape, params, stats })
    }

    pub fn shape(&self) -> ForecastShape {
        self.shape
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn layer(&self, i: usize) -> Layer<'_> {
        Layer {
            kind: self.shape.cell,
            input: if i == 0 { COORDS } else { self.shape.hidden },
            hidden: self.shape.hidden,
            w: self.params.block(3 * i),
            u: self.params.block(3 * i + 1),
            b: self.params.block(3 * i + 2),
        }
    }

    fn state_zeros(&self, batch: usize) -> (Vec<f64>, Vec<f64>) {
        let h = vec![0.0; batch * self.shape.hidden];
        let c = if self.shape.cell == CellKind::Lstm { h.clone() } else { Vec::new() };
        (h, c)
    }

    /// `xs` holds one `B×16` standardized block per past step.
    fn forward(&self, xs: &[Vec<f64>], batch: usize) -> Trace {
        let ForecastShape { hidden: hd, future, .. } = self.shape;
        let run = |layer: Layer<'_>, init: (Vec<f64>, Vec<f64>), inputs: &mut dyn FnMut(usize) -> Vec<f64>, steps: usize| {
            let mut trace = LayerTrace {
                init_h: init.0,
                init_c: init.1,
                steps: Vec::with_capacity(steps),
            };
            for t in 0..steps {
                let x = inputs(t);
                let (h, c) = trace.prev(t);
                let s = layer.step(batch, &x, h, c);
                trace.steps.push(s);
            }
            trace
        };
        let enc1 = run(self.layer(0), self.state_zeros(batch), &mut |t| xs[t].clone(), xs.len());
        let enc2 = run(self.layer(1), self.state_zeros(batch), &mut |t| enc1.steps[t].h.clone(), xs.len());
        let context = enc2.last().0.to_vec();
        let init1 = (enc1.last().0.to_vec(), enc1.last().1.to_vec());
        let dec1 = run(self.layer(2), init1, &mut |_| context.clone(), future);
        let init2 = (enc2.last().0.to_vec(), enc2.last().1.to_vec());
        let dec2 = run(self.layer(3), init2, &mut |t| dec1.steps[t].h.clone(), future);

        let (pw, pb) = (self.params.block(12), self.params.block(13));
        let outputs = dec2
            .steps
            .iter()
            .map(|s| {
                let mut y = vec![0.0; batch * COORDS];
                for row in y.chunks_exact_mut(COORDS) {
                    row.copy_from_slice(pb);
                }
                gemm(batch, hd, COORDS, 1.0, Operand::plain(&s.h, hd), Operand::transposed(pw, hd), 1.0, &mut y);
                y
            })
            .collect();
        Trace {
            batch,
            layers: [enc1, enc2, dec1, dec2],
            outputs,
        }
    }

    /// Gradients for output gradients `dys` (one `B×16` block per future step).
    fn backward(&self, xs: &[Vec<f64>], trace: &Trace, dys: &[Vec<f64>]) -> Params {
        let batch = trace.batch;
        let hd = self.shape.hidden;
        let n = xs.len();
        let f = self.shape.future;
        let lstm = self.shape.cell == CellKind::Lstm;
        let mut grads = self.params.zeros_like();
        let [enc1, enc2, dec1, dec2] = &trace.layers;

        let pw = self.params.block(12).to_vec();
        let mut dh_out: Vec<Vec<f64>> = Vec::with_capacity(f);
        {
            let proj_range = grads.layout().range(12);
            let bias_range = grads.layout().range(13);
            let values = grads.values_mut();
            for (t, dy) in dys.iter().enumerate() {
                let h = &dec2.steps[t].h;
                gemm(COORDS, batch, hd, 1.0, Operand::transposed(dy, COORDS), Operand::plain(h, hd), 1.0, &mut values[proj_range.clone()]);
                for row in dy.chunks_exact(COORDS) {
                    for (b, v) in values[bias_range.clone()].iter_mut().zip(row) {
                        *b += v;
                    }
                }
                let mut dh = vec![0.0; batch * hd];
                gemm(batch, COORDS, hd, 1.0, Operand::plain(dy, COORDS), Operand::plain(&pw, hd), 0.0, &mut dh);
                dh_out.push(dh);
            }
        }

        let zero_c = || if lstm { vec![0.0; batch * hd] } else { Vec::new() };

        let carry0 = || (vec![0.0; batch * hd], zero_c());
        let (dec2_init, d_dec1_out) = self.layer_back(batch, 3, dec2, &|t| &dec1.steps[t].h, &dh_out, carry0(), true, &mut grads);
        let context = enc2.last().0;
        let (dec1_init, d_ctx) = self.layer_back(batch, 2, dec1, &|_| context, &d_dec1_out, carry0(), true, &mut grads);

        let mut dcontext = vec![0.0; batch * hd];
        for d in &d_ctx {
            for (a, b) in dcontext.iter_mut().zip(d) {
                *a += b;
            }
        }
        let mut enc2_ext = vec![vec![0.0; batch * hd]; n];
        enc2_ext[n - 1] = dcontext;
        let (_, d_enc1_out) = self.layer_back(batch, 1, enc2, &|t| &enc1.steps[t].h, &enc2_ext, dec2_init, true, &mut grads);
        self.layer_back(batch, 0, enc1, &|t| &xs[t], &d_enc1_out, dec1_init, false, &mut grads);
        grads
    }

    /// BPTT through one layer. `dh_ext[t]` is the gradient reaching the output
    /// of step t from above and `carry` the gradient on the final state.
    /// Returns the gradient on the initial state and, when asked, per-step
    /// input gradients.
    #[allow(clippy::too_many_arguments)]
    fn layer_back<'a>(
        &self,
        batch: usize,
        idx: usize,
        tr: &LayerTrace,
        inputs: &dyn Fn(usize) -> &'a [f64],
        dh_ext: &[Vec<f64>],
        carry: (Vec<f64>, Vec<f64>),
        want_dx: bool,
        grads: &mut Params,
    ) -> ((Vec<f64>, Vec<f64>), Vec<Vec<f64>>) {
        let layer = self.layer(idx);
        let start = self.params.layout().range(3 * idx).start;
        let (w, rest) = grads.values_mut()[start..].split_at_mut(layer.w.len());
        let (u, rest) = rest.split_at_mut(layer.u.len());
        let b = &mut rest[..layer.b.len()];
        let mut lg = LayerGrads { w, u, b };
        let steps = tr.steps.len();
        let mut dxs = vec![Vec::new(); steps];
        let (mut dh, mut dc) = carry;
        for t in (0..steps).rev() {
            let (h_prev, c_prev) = tr.prev(t);
            let dh_t: Vec<f64> = dh.iter().zip(&dh_ext[t]).map(|(a, b)| a + b).collect();
            let mut dx = if want_dx { vec![0.0; batch * layer.input] } else { Vec::new() };
            let (a, c) = layer.step_back(
                batch,
                inputs(t),
                h_prev,
                c_prev,
                &tr.steps[t],
                &dh_t,
                &dc,
                &mut lg,
                want_dx.then_some(&mut dx[..]),
            );
            dh = a;
            dc = c;
            dxs[t] = dx;
        }
        ((dh, dc), dxs)
    }

    fn check_windows(&self, pasts: &[Matrix], futures: Option<&[Matrix]>) -> Result<()> {
        ensure!(!pasts.is_empty(), InvalidArgument, "no input windows");
        for p in pasts {
            ensure!(
                p.shape() == (self.shape.past, COORDS),
                Dimension,
                "past window is {:?}, expected ({}, {COORDS})",
                p.shape(),
                self.shape.past
            );
        }
        if let Some(fs) = futures {
            ensure!(fs.len() == pasts.len(), Dimension, "{} pasts but {} futures", pasts.len(), fs.len());
            for f in fs {
                ensure!(
                    f.shape() == (self.shape.future, COORDS),
                    Dimension,
                    "future window is {:?}, expected ({}, {COORDS})",
                    f.shape(),
                    self.shape.future
                );
            }
        }
        Ok(())
    }

    /// Gathers time-major standardized blocks: `steps` rows starting at
    /// `offset` of every window.
    fn gather(&self, windows: &[&Matrix], steps: usize) -> Vec<Vec<f64>> {
        (0..steps)
            .map(|t| {
                let mut block = vec![0.0; windows.len() * COORDS];
                for (b, w) in windows.iter().enumerate() {
                    self.stats.standardize_row(w.row(t), &mut block[b * COORDS..(b + 1) * COORDS]);
                }
                block
            })
            .collect()
    }

    /// Pixel-space forecasts for a batch of past windows.
    pub fn predict(&self, pasts: &[Matrix]) -> Result<Vec<Matrix>> {
        self.check_windows(pasts, None)?;
        let refs: Vec<&Matrix> = pasts.iter().collect();
        let xs = self.gather(&refs, self.shape.past);
        let trace = self.forward(&xs, pasts.len());
        let mut out = vec![Matrix::zeros(self.shape.future, COORDS); pasts.len()];
        for (t, y) in trace.outputs.iter().enumerate() {
            for (b, m) in out.iter_mut().enumerate() {
                let row = m.row_mut(t);
                for k in 0..COORDS {
                    row[k] = y[b * COORDS + k] * self.stats.std[k] + self.stats.mean[k];
                }
            }
        }
        Ok(out)
    }

    /// Mean squared error in standardized space over all `B·f·16` outputs,
    /// with its gradient.
    pub fn loss_and_grad(&self, pasts: &[Matrix], futures: &[Matrix]) -> Result<(f64, Params)> {
        self.check_windows(pasts, Some(futures))?;
        let past_refs: Vec<&Matrix> = pasts.iter().collect();
        let future_refs: Vec<&Matrix> = futures.iter().collect();
        Ok(self.loss_and_grad_std(
            &self.gather(&past_refs, self.shape.past),
            &self.gather(&future_refs, self.shape.future),
            pasts.len(),
        ))
    }

    /// Same as [`Self::loss_and_grad`] on pre-standardized time-major blocks.
    pub(crate) fn loss_and_grad_std(&self, xs: &[Vec<f64>], targets: &[Vec<f64>], batch: usize) -> (f64, Params) {
        let trace = self.forward(xs, batch);
        let scale = 1.0 / (batch * self.shape.future * COORDS) as f64;
        let mut loss = 0.0;
        let dys: Vec<Vec<f64>> = trace
            .outputs
            .iter()
            .zip(targets)
            .map(|(y, t)| {
                y.iter()
                    .zip(t)
                    .map(|(a, b)| {
                        let r = a - b;
                        loss += r * r;
                        2.0 * r * scale
                    })
                    .collect()
            })
            .collect();
        (loss * scale, self.backward(xs, &trace, &dys))
    }

    /// Standardized predictions for pre-standardized blocks, one `B×16`
    /// block per future step.
    pub(crate) fn predict_std(&self, xs: &[Vec<f64>], batch: usize) -> Vec<Vec<f64>> {
        self.forward(xs, batch).outputs
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let meta = serde_json::json!({
            "shape": self.shape,
            "stats": self.stats,
            "seed": seed,
        });
        container::write(path, MODEL_KIND, meta, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, params) = container::read(path, MODEL_KIND)?;
        let shape: ForecastShape = serde_json::from_value(header.meta["shape"].clone())
            .map_err(|e| Error::format(path, format!("shape: {e}")))?;
        let stats: Standardizer = serde_json::from_value(header.meta["stats"].clone())
            .map_err(|e| Error::format(path, format!("stats: {e}")))?;
        Self::from_params(shape, params, stats).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Forecasts `f×16` future frames from one `n×16` past window.
pub fn encdec_forward(model: &ForecastModel, past: &Matrix) -> Result<Matrix> {
    Ok(model.predict(std::slice::from_ref(past))?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_diff_slice, relative_error};

    fn shape(cell: CellKind, hidden: usize, past: usize, future: usize) -> ForecastShape {
        ForecastShape {
            cell,
            hidden,
            past,
            future,
        }
    }

    #[test]
    fn output_shapes() {
        let mut rng = Rng::new(1);
        for (n, f) in [(10, 1), (3, 120), (60, 5)] {
            let m = ForecastModel::new(shape(CellKind::Gru, 5, n, f), 2).unwrap();
            let y = encdec_forward(&m, &rng.uniform_matrix(n, COORDS, 0.0, 96.0)).unwrap();
            assert_eq!(y.shape(), (f, COORDS));
        }
        let m = ForecastModel::new(shape(CellKind::Lstm, 5, 4, 2), 2).unwrap();
        assert!(encdec_forward(&m, &Matrix::zeros(3, COORDS)).is_err());
    }

    #[test]
    fn zero_model_outputs_zero() {
        for cell in CellKind::ALL {
            let mut m = ForecastModel::new(shape(cell, 4, 5, 3), 0).unwrap();
            m.params_mut().values_mut().iter_mut().for_each(|v| *v = 0.0);
            let mut rng = Rng::new(2);
            let y = encdec_forward(&m, &rng.uniform_matrix(5, COORDS, -1.0, 1.0)).unwrap();
            assert!(y.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for cell in CellKind::ALL {
            for seed in 0..3 {
                let mut rng = Rng::new(seed + 40);
                let mut model = ForecastModel::new(shape(cell, 4, 3, 2), seed).unwrap();
                model.params_mut().values_mut().iter_mut().for_each(|v| *v = rng.uniform(-0.6, 0.6));
                let pasts: Vec<Matrix> = (0..2).map(|_| rng.uniform_matrix(3, COORDS, -1.0, 1.0)).collect();
                let futures: Vec<Matrix> = (0..2).map(|_| rng.uniform_matrix(2, COORDS, -1.0, 1.0)).collect();
                let (_, g) = model.loss_and_grad(&pasts, &futures).unwrap();
                let base = model.params().values().to_vec();
                let numeric = finite_diff_slice(
                    |v| {
                        let mut m = model.clone();
                        m.params_mut().values_mut().copy_from_slice(v);
                        m.loss_and_grad(&pasts, &futures).unwrap().0
                    },
                    &base,
                    1e-6,
                )
                .unwrap();
                for (i, spec) in g.layout().blocks().iter().enumerate() {
                    let r = g.layout().range(i);
                    let err = relative_error(&g.values()[r.clone()], &numeric[r]);
                    assert!(err < 1e-4, "{cell} {} err {err}", spec.name);
                }
            }
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let mut m = ForecastModel::new(shape(CellKind::Lstm, 3, 4, 2), 9).unwrap();
        m.stats.mean[3] = 12.5;
        m.stats.std[0] = 2.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.armf");
        m.save(&path, 9).unwrap();
        assert_eq!(ForecastModel::load(&path).unwrap(), m);
    }
}
