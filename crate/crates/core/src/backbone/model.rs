use super::ops::{self, Conv2d};
use super::scconv::{self, ScCache, ScGrads, ScWeights};
use crate::container;
use crate::error::{ensure, Error, Result};
use crate::numeric::{Matrix, Rng};
use crate::params::{ParamLayout, Params};
use crate::synth::{GrayImage, COORDS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MODEL_KIND: &str = "backbone";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Scconv,
    Plain,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Scconv => "scconv",
            Variant::Plain => "plain",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scconv" => Ok(Variant::Scconv),
            "plain" => Ok(Variant::Plain),
            other => Err(Error::InvalidArgument(format!("unknown backbone variant {other:?}"))),
        }
    }
}

/// Network shape: stride-2 stem, two widened blocks each followed by 2×2
/// pooling, global average pooling and a 16-way linear head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub variant: Variant,
    pub input_size: usize,
    pub stem_channels: usize,
    pub block_channels: [usize; 2],
    pub pool_rate: usize,
}

impl Architecture {
    pub fn new(variant: Variant, input_size: usize) -> Self {
        Self {
            variant,
            input_size,
            stem_channels: 8,
            block_channels: [16, 32],
            pool_rate: 4,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.block_channels[1]
    }

    /// Spatial sides seen by the stem output and by the two blocks.
    fn sides(&self) -> [usize; 3] {
        let s1 = self.input_size / 2;
        [s1, s1, s1 / 2]
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.input_size;
        ensure!(
            s >= 16 && s.is_multiple_of(16),
            InvalidArgument,
            "input size {s} must be a positive multiple of 16"
        );
        for (i, &c) in self.block_channels.iter().enumerate() {
            ensure!(c % 2 == 0 && c > 0, InvalidArgument, "block {i} width {c} must be even");
        }
        let [_, b1, b2] = self.sides();
        for side in [b1, b2] {
            ensure!(
                self.pool_rate > 0 && side % self.pool_rate == 0,
                InvalidArgument,
                "pooling rate {} must divide block side {side}",
                self.pool_rate
            );
        }
        Ok(())
    }

    fn stem(&self) -> Conv2d {
        Conv2d {
            cin: 1,
            cout: self.stem_channels,
            kernel: 3,
            stride: 2,
            pad: 1,
        }
    }

    fn widen(&self, i: usize) -> Conv2d {
        let cin = if i == 0 { self.stem_channels } else { self.block_channels[0] };
        Conv2d::pointwise(cin, self.block_channels[i])
    }
}

#[derive(Debug, Clone, Copy)]
enum BlockSlots {
    Sc { w: [usize; 4], b: [usize; 4] },
    Plain { w: usize, b: usize },
}

#[derive(Debug, Clone, Copy)]
struct Slots {
    stem: (usize, usize),
    widen: [(usize, usize); 2],
    block: [BlockSlots; 2],
    head: (usize, usize),
}

fn build_layout(arch: &Architecture) -> (ParamLayout, Slots) {
    let mut l = ParamLayout::new();
    let conv_block = |l: &mut ParamLayout, name: &str, cv: Conv2d| {
        let w = l.push(format!("{name}.w"), &[cv.cout, cv.cin, cv.kernel, cv.kernel]);
        let b = l.push(format!("{name}.b"), &[cv.cout]);
        (w, b)
    };
    let stem = conv_block(&mut l, "stem", arch.stem());
    let mut widen = [(0, 0); 2];
    let mut block = [BlockSlots::Plain { w: 0, b: 0 }; 2];
    for i in 0..2 {
        widen[i] = conv_block(&mut l, &format!("widen{}", i + 1), arch.widen(i));
        let c = arch.block_channels[i];
        block[i] = match arch.variant {
            Variant::Scconv => {
                let mut w = [0; 4];
                let mut b = [0; 4];
                for k in 0..4 {
                    let (wi, bi) =
                        conv_block(&mut l, &format!("block{}.f{}", i + 1, k + 1), Conv2d::same3(c / 2, c / 2));
                    w[k] = wi;
                    b[k] = bi;
                }
                BlockSlots::Sc { w, b }
            }
            Variant::Plain => {
                let (w, b) = conv_block(&mut l, &format!("block{}.conv", i + 1), Conv2d::same3(c, c));
                BlockSlots::Plain { w, b }
            }
        };
    }
    let head_w = l.push("head.w", &[COORDS, arch.feature_dim()]);
    let head_b = l.push("head.b", &[COORDS]);
    (
        l,
        Slots {
            stem,
            widen,
            block,
            head: (head_w, head_b),
        },
    )
}

/// Cached activations of one forward pass.
pub(crate) struct Trace {
    input: Vec<f64>,
    stem: Vec<f64>,
    widened: [Vec<f64>; 2],
    block_cache: [Option<ScCache>; 2],
    activated: [Vec<f64>; 2],
    pooled1: Vec<f64>,
    pub features: Vec<f64>,
    pub output: [f64; COORDS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneModel {
    arch: Architecture,
    params: Params,
    slots_cache: SlotsCache,
}

// Slots are derived from the architecture; wrapped so the model stays
// comparable with `PartialEq`.
#[derive(Debug, Clone, Copy)]
struct SlotsCache(Slots);
impl PartialEq for SlotsCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl BackboneModel {
    /// Glorot-uniform convolution weights, zero biases, zero head.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let (layout, slots) = build_layout(&arch);
        let mut params = Params::zeros(layout);
        let mut rng = Rng::new(seed);
        for idx in 0..params.layout().blocks().len() {
            let spec = params.layout().blocks()[idx].clone();
            if spec.name.starts_with("head") || spec.shape.len() != 4 {
                continue;
            }
            let (cout, cin, k) = (spec.shape[0], spec.shape[1], spec.shape[2]);
            let bound = (6.0 / ((cin + cout) * k * k) as f64).sqrt();
            for v in params.block_mut(idx) {
                *v = rng.uniform(-bound, bound);
            }
        }
        Ok(Self {
            arch,
            params,
            slots_cache: SlotsCache(slots),
        })
    }

    pub fn from_params(arch: Architecture, params: Params) -> Result<Self> {
        arch.validate()?;
        let (layout, slots) = build_layout(&arch);
        ensure!(
            layout == *params.layout(),
            Dimension,
            "parameter blocks do not match the {} architecture",
            arch.variant.as_str()
        );
        Ok(Self {
            arch,
            params,
            slots_cache: SlotsCache(slots),
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn feature_dim(&self) -> usize {
        self.arch.feature_dim()
    }

    pub fn head_bias(&self) -> &[f64] {
        self.params.block(self.slots().head.1)
    }

    pub fn set_head_bias(&mut self, bias: &[f64]) {
        let idx = self.slots().head.1;
        self.params.block_mut(idx).copy_from_slice(bias);
    }

    fn slots(&self) -> Slots {
        self.slots_cache.0
    }

    fn sc_weights(&self, i: usize) -> Option<ScWeights<'_>> {
        match self.slots().block[i] {
            BlockSlots::Sc { w, b } => Some(ScWeights {
                w: w.map(|k| self.params.block(k)),
                b: b.map(|k| self.params.block(k)),
            }),
            BlockSlots::Plain { .. } => None,
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        let s = self.arch.input_size;
        ensure!(
            input.len() == s * s,
            Dimension,
            "backbone expects a {s}x{s} image, got {} pixels",
            input.len()
        );
        Ok(())
    }

    pub(crate) fn trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let slots = self.slots();
        let p = &self.params;
        let [s1, _, s2] = self.arch.sides();
        let s = self.arch.input_size;

        let stem_out = self.arch.stem().forward(input, s, s, p.block(slots.stem.0), p.block(slots.stem.1));
        let stem = ops::relu(&stem_out);

        let mut widened: [Vec<f64>; 2] = Default::default();
        let mut block_cache: [Option<ScCache>; 2] = [None, None];
        let mut activated: [Vec<f64>; 2] = Default::default();
        let mut pooled1 = Vec::new();
        let mut current = stem.clone();
        let mut side = s1;
        for i in 0..2 {
            let c = self.arch.block_channels[i];
            let (wi, bi) = slots.widen[i];
            widened[i] = self.arch.widen(i).forward(&current, side, side, p.block(wi), p.block(bi));
            let out = match self.slots().block[i] {
                BlockSlots::Sc { .. } => {
                    let weights = self.sc_weights(i).expect("scconv slots");
                    let (out, cache) =
                        scconv::forward(&widened[i], c, side, side, self.arch.pool_rate, weights);
                    block_cache[i] = Some(cache);
                    out
                }
                BlockSlots::Plain { w, b } => {
                    Conv2d::same3(c, c).forward(&widened[i], side, side, p.block(w), p.block(b))
                }
            };
            activated[i] = ops::relu(&out);
            let pooled = ops::avg_pool(&activated[i], c, side, side, 2);
            side /= 2;
            if i == 0 {
                pooled1 = pooled.clone();
            }
            current = pooled;
        }
        debug_assert_eq!(side, s2 / 2);
        let features = ops::global_avg_pool(&current, self.arch.feature_dim(), side * side);

        let (hw, hb) = slots.head;
        let head_w = p.block(hw);
        let mut output = [0.0; COORDS];
        output.copy_from_slice(p.block(hb));
        let d = features.len();
        for (o, out) in output.iter_mut().enumerate() {
            *out += head_w[o * d..(o + 1) * d].iter().zip(&features).map(|(w, f)| w * f).sum::<f64>();
        }
        Ok(Trace {
            input: input.to_vec(),
            stem,
            widened,
            block_cache,
            activated,
            pooled1,
            features,
            output,
        })
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂output`.
    pub(crate) fn backward(&self, t: &Trace, doutput: &[f64; COORDS], grads: &mut Params) {
        let slots = self.slots();
        let p = &self.params;
        let [s1, _, _] = self.arch.sides();
        let s = self.arch.input_size;
        let d = self.arch.feature_dim();

        let (hw, hb) = slots.head;
        let head_w = p.block(hw);
        let mut dfeat = vec![0.0; d];
        {
            let gw = grads.block_mut(hw);
            for o in 0..COORDS {
                for j in 0..d {
                    gw[o * d + j] += doutput[o] * t.features[j];
                    dfeat[j] += head_w[o * d + j] * doutput[o];
                }
            }
        }
        for (g, v) in grads.block_mut(hb).iter_mut().zip(doutput) {
            *g += v;
        }

        // global average pool of the last pooled map
        let side_last = s1 / 4;
        let area = (side_last * side_last) as f64;
        let mut dcur: Vec<f64> = dfeat
            .iter()
            .flat_map(|g| std::iter::repeat_n(g / area, side_last * side_last))
            .collect();

        for i in (0..2).rev() {
            let c = self.arch.block_channels[i];
            let side = s1 >> i;
            let mut dact = vec![0.0; c * side * side];
            ops::avg_pool_backward(&dcur, c, side, side, 2, &mut dact);
            let mut dblock = vec![0.0; dact.len()];
            ops::relu_backward(&t.activated[i], &dact, &mut dblock);

            let dwidened = match slots.block[i] {
                BlockSlots::Sc { w, b } => {
                    let weights = self.sc_weights(i).expect("scconv slots");
                    let mut gw: [Vec<f64>; 4] = std::array::from_fn(|k| vec![0.0; p.block(w[k]).len()]);
                    let mut gb: [Vec<f64>; 4] = std::array::from_fn(|k| vec![0.0; p.block(b[k]).len()]);
                    let [w1, w2, w3, w4] = &mut gw;
                    let [b1, b2, b3, b4] = &mut gb;
                    let dx = scconv::backward(
                        &t.widened[i],
                        c,
                        side,
                        side,
                        self.arch.pool_rate,
                        weights,
                        t.block_cache[i].as_ref().expect("scconv cache"),
                        &dblock,
                        ScGrads {
                            w: [w1, w2, w3, w4],
                            b: [b1, b2, b3, b4],
                        },
                    );
                    for k in 0..4 {
                        add_into(grads.block_mut(w[k]), &gw[k]);
                        add_into(grads.block_mut(b[k]), &gb[k]);
                    }
                    dx
                }
                BlockSlots::Plain { w, b } => {
                    let mut dx = vec![0.0; dblock.len()];
                    let (mut gw, mut gb) = (vec![0.0; p.block(w).len()], vec![0.0; c]);
                    Conv2d::same3(c, c).backward(
                        &t.widened[i],
                        side,
                        side,
                        p.block(w),
                        &dblock,
                        &mut gw,
                        &mut gb,
                        Some(&mut dx),
                    );
                    add_into(grads.block_mut(w), &gw);
                    add_into(grads.block_mut(b), &gb);
                    dx
                }
            };

            let (wi, bi) = slots.widen[i];
            let widen = self.arch.widen(i);
            let input = if i == 0 { &t.stem } else { &t.pooled1 };
            let mut dinput = vec![0.0; input.len()];
            let (mut gw, mut gb) = (vec![0.0; p.block(wi).len()], vec![0.0; p.block(bi).len()]);
            widen.backward(input, side, side, p.block(wi), &dwidened, &mut gw, &mut gb, Some(&mut dinput));
            add_into(grads.block_mut(wi), &gw);
            add_into(grads.block_mut(bi), &gb);
            dcur = dinput;
        }

        // stem ReLU and convolution
        let mut dstem = vec![0.0; dcur.len()];
        ops::relu_backward(&t.stem, &dcur, &mut dstem);
        let (sw, sb) = slots.stem;
        let (mut gw, mut gb) = (vec![0.0; p.block(sw).len()], vec![0.0; p.block(sb).len()]);
        self.arch.stem().backward(&t.input, s, s, p.block(sw), &dstem, &mut gw, &mut gb, None);
        add_into(grads.block_mut(sw), &gw);
        add_into(grads.block_mut(sb), &gb);
    }

    /// Features and keypoints for one image given as `[0, 1]` intensities.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, [f64; COORDS])> {
        let t = self.trace(input)?;
        Ok((t.features, t.output))
    }

    /// Mean squared error over `batch × 16` outputs and its parameter gradient.
    pub fn loss_and_grad(&self, inputs: &[&[f64]], targets: &[[f64; COORDS]]) -> Result<(f64, Params)> {
        use rayon::prelude::*;
        ensure!(
            inputs.len() == targets.len() && !inputs.is_empty(),
            Dimension,
            "{} inputs for {} targets",
            inputs.len(),
            targets.len()
        );
        let n = (inputs.len() * COORDS) as f64;
        let per_sample: Vec<Result<(f64, Params)>> = inputs
            .par_iter()
            .zip(targets.par_iter())
            .map(|(x, y)| {
                let t = self.trace(x)?;
                let mut dout = [0.0; COORDS];
                let mut loss = 0.0;
                for k in 0..COORDS {
                    let r = t.output[k] - y[k];
                    loss += r * r;
                    dout[k] = 2.0 * r / n;
                }
                let mut g = self.params.zeros_like();
                self.backward(&t, &dout, &mut g);
                Ok((loss, g))
            })
            .collect();
        // summed in sample order so the result does not depend on scheduling
        let mut total = 0.0;
        let mut grads = self.params.zeros_like();
        for r in per_sample {
            let (l, g) = r?;
            total += l;
            grads.add_assign(&g);
        }
        Ok((total / n, grads))
    }

    /// SHA-256 of the architecture and parameter bytes, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.arch).expect("architecture serializes"));
        for v in self.params.values() {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let meta = serde_json::json!({
            "architecture": self.arch,
            "variant": self.arch.variant,
            "seed": seed,
            "feature_dim": self.feature_dim(),
        });
        container::write(path, MODEL_KIND, meta, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, params) = container::read(path, MODEL_KIND)?;
        let arch: Architecture = serde_json::from_value(header.meta["architecture"].clone())
            .map_err(|e| Error::format(path, format!("architecture: {e}")))?;
        Self::from_params(arch, params)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Runs one image through the network: `(features, keypoints)`.
pub fn backbone_forward(image: &GrayImage, model: &BackboneModel) -> Result<(Vec<f64>, [f64; COORDS])> {
    let s = model.architecture().input_size;
    ensure!(
        image.width == s && image.height == s,
        Dimension,
        "image is {}x{}, the backbone expects {s}x{s}",
        image.width,
        image.height
    );
    model.forward(&image.to_unit())
}

/// Penultimate pooled features, one row per image.
pub fn extract_features(model: &BackboneModel, images: &[GrayImage]) -> Result<Matrix> {
    use rayon::prelude::*;
    let rows: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| backbone_forward(img, model).map(|(f, _)| f))
        .collect::<Result<_>>()?;
    let mut m = Matrix::zeros(rows.len(), model.feature_dim());
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from_slice(r);
    }
    Ok(m)
}

/// Features (`N×D`) and raw head predictions for `[0, 1]` intensity inputs.
pub fn forward_batch(model: &BackboneModel, inputs: &[Vec<f64>]) -> Result<(Matrix, Vec<[f64; COORDS]>)> {
    use rayon::prelude::*;
    let outs: Vec<(Vec<f64>, [f64; COORDS])> = inputs.par_iter().map(|x| model.forward(x)).collect::<Result<_>>()?;
    let mut features = Matrix::zeros(outs.len(), model.feature_dim());
    for (i, (f, _)) in outs.iter().enumerate() {
        features.row_mut(i).copy_from_slice(f);
    }
    Ok((features, outs.into_iter().map(|(_, k)| k).collect()))
}

/// Raw head predictions, one 16-vector per image.
pub fn predict_keypoints(model: &BackboneModel, inputs: &[Vec<f64>]) -> Result<Vec<[f64; COORDS]>> {
    use rayon::prelude::*;
    inputs
        .par_iter()
        .map(|x| model.forward(x).map(|(_, k)| k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_diff_slice, relative_error};

    fn random_input(size: usize, seed: u64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        (0..size * size).map(|_| rng.next_f64()).collect()
    }

    fn randomize_all(model: &mut BackboneModel, seed: u64) {
        let mut rng = Rng::new(seed);
        model
            .params_mut()
            .values_mut()
            .iter_mut()
            .for_each(|v| *v = rng.uniform(-0.5, 0.5));
    }

    #[test]
    fn zero_head_outputs_bias() {
        let mut m = BackboneModel::new(Architecture::new(Variant::Scconv, 32), 1).unwrap();
        let bias: Vec<f64> = (0..16).map(|k| k as f64 * 1.5).collect();
        m.set_head_bias(&bias);
        let (f, k) = m.forward(&random_input(32, 3)).unwrap();
        assert_eq!(f.len(), 32);
        assert_eq!(k.to_vec(), bias);
    }

    #[test]
    fn zero_image_gives_zero_features() {
        let m = BackboneModel::new(Architecture::new(Variant::Scconv, 96), 2).unwrap();
        let img = GrayImage::new(96, 96);
        let feats = extract_features(&m, &[img.clone(), img]).unwrap();
        assert_eq!(feats.shape(), (2, 32));
        assert!(feats.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_wrong_size() {
        let m = BackboneModel::new(Architecture::new(Variant::Plain, 32), 2).unwrap();
        assert!(m.forward(&[0.0; 100]).is_err());
        assert!(Architecture::new(Variant::Plain, 40).validate().is_err());
    }

    fn full_gradient_check(variant: Variant, seed: u64) {
        let mut m = BackboneModel::new(Architecture::new(variant, 16), seed).unwrap();
        randomize_all(&mut m, seed + 10);
        let inputs = [random_input(16, seed + 20), random_input(16, seed + 21)];
        let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
        let mut rng = Rng::new(seed + 30);
        let targets: Vec<[f64; COORDS]> =
            (0..2).map(|_| std::array::from_fn(|_| rng.uniform(-1.0, 1.0))).collect();
        let (_, g) = m.loss_and_grad(&refs, &targets).unwrap();
        let base = m.params().values().to_vec();
        let numeric = finite_diff_slice(
            |v| {
                let mut q = m.clone();
                q.params_mut().values_mut().copy_from_slice(v);
                q.loss_and_grad(&refs, &targets).unwrap().0
            },
            &base,
            1e-5,
        )
        .unwrap();
        for (idx, spec) in m.params().layout().blocks().iter().enumerate() {
            let r = m.params().layout().range(idx);
            let err = relative_error(&g.values()[r.clone()], &numeric[r]);
            assert!(err < 1e-4, "{:?} {}: relative error {err}", variant, spec.name);
        }
    }

    #[test]
    fn scconv_network_gradients() {
        full_gradient_check(Variant::Scconv, 1);
    }

    #[test]
    fn plain_network_gradients() {
        full_gradient_check(Variant::Plain, 2);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let m = BackboneModel::new(Architecture::new(Variant::Scconv, 32), 9).unwrap();
        let path = dir.path().join("b.armf");
        m.save(&path, 9).unwrap();
        let back = BackboneModel::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash(), m.hash());
    }
}
