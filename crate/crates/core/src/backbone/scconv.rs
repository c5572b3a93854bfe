//! Self-calibrated convolution block.
//!
//! The input is split into two channel halves. The first half is calibrated:
//! a gate `M = σ(X1 + up_r(F2(avgpool_r(X1))))` modulates `F3(X1)` before a
//! final `F4`; the second half goes through a plain `F1`. Outputs are
//! concatenated back to the full width.

use super::ops::{self, Conv2d};
use crate::error::{ensure, Result};

/// Borrowed weights of one block; index 0..4 maps to F1..F4.
#[derive(Clone, Copy)]
pub(crate) struct ScWeights<'a> {
    pub w: [&'a [f64]; 4],
    pub b: [&'a [f64]; 4],
}

/// Gradient buffers matching [`ScWeights`].
pub(crate) struct ScGrads<'a> {
    pub w: [&'a mut [f64]; 4],
    pub b: [&'a mut [f64]; 4],
}

/// Intermediate maps kept for the backward pass.
pub(crate) struct ScCache {
    pooled: Vec<f64>,
    gate: Vec<f64>,
    calib: Vec<f64>,
    gated: Vec<f64>,
}

pub(crate) fn check_geometry(c: usize, h: usize, w: usize, rate: usize) -> Result<()> {
    ensure!(c.is_multiple_of(2) && c > 0, InvalidArgument, "SCConv needs an even channel count, got {c}");
    ensure!(
        rate > 0 && h.is_multiple_of(rate) && w.is_multiple_of(rate),
        InvalidArgument,
        "pooling rate {rate} must divide the {h}x{w} feature map"
    );
    Ok(())
}

pub(crate) fn forward(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    rate: usize,
    p: ScWeights<'_>,
) -> (Vec<f64>, ScCache) {
    let half = c / 2;
    let hw = h * w;
    let conv = Conv2d::same3(half, half);
    let (x1, x2) = x.split_at(half * hw);
    let (hp, wp) = (h / rate, w / rate);

    let pooled = ops::avg_pool(x1, half, h, w, rate);
    let context = conv.forward(&pooled, hp, wp, p.w[1], p.b[1]);
    let up = ops::upsample(&context, half, hp, wp, rate);
    let gate: Vec<f64> = x1.iter().zip(&up).map(|(a, b)| crate::numeric::sigmoid(a + b)).collect();
    let calib = conv.forward(x1, h, w, p.w[2], p.b[2]);
    let gated: Vec<f64> = calib.iter().zip(&gate).map(|(a, m)| a * m).collect();
    let y1 = conv.forward(&gated, h, w, p.w[3], p.b[3]);
    let y2 = conv.forward(x2, h, w, p.w[0], p.b[0]);

    let mut out = y1;
    out.extend_from_slice(&y2);
    (
        out,
        ScCache {
            pooled,
            gate,
            calib,
            gated,
        },
    )
}

/// Accumulates parameter gradients and returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    rate: usize,
    p: ScWeights<'_>,
    cache: &ScCache,
    dout: &[f64],
    g: ScGrads<'_>,
) -> Vec<f64> {
    let half = c / 2;
    let hw = h * w;
    let conv = Conv2d::same3(half, half);
    let (x1, x2) = x.split_at(half * hw);
    let (dy1, dy2) = dout.split_at(half * hw);
    let (hp, wp) = (h / rate, w / rate);
    let ScGrads { w: [gw1, gw2, gw3, gw4], b: [gb1, gb2, gb3, gb4] } = g;

    let mut dx = vec![0.0; c * hw];
    let (dx1, dx2) = dx.split_at_mut(half * hw);

    conv.backward(x2, h, w, p.w[0], dy2, gw1, gb1, Some(dx2));

    let mut dgated = vec![0.0; half * hw];
    conv.backward(&cache.gated, h, w, p.w[3], dy1, gw4, gb4, Some(&mut dgated));

    let mut dcalib = vec![0.0; half * hw];
    let mut dpre = vec![0.0; half * hw];
    for i in 0..half * hw {
        let m = cache.gate[i];
        dcalib[i] = dgated[i] * m;
        dpre[i] = dgated[i] * cache.calib[i] * m * (1.0 - m);
    }
    conv.backward(x1, h, w, p.w[2], &dcalib, gw3, gb3, Some(&mut *dx1));

    // gate pre-activation = X1 + upsampled context
    for (d, v) in dx1.iter_mut().zip(&dpre) {
        *d += v;
    }
    let dcontext = ops::upsample_backward(&dpre, half, hp, wp, rate);
    let mut dpooled = vec![0.0; half * hp * wp];
    conv.backward(&cache.pooled, hp, wp, p.w[1], &dcontext, gw2, gb2, Some(&mut dpooled));
    ops::avg_pool_backward(&dpooled, half, h, w, rate, dx1);
    dx
}

/// Owned parameters of a stand-alone block of `channels` width.
#[derive(Debug, Clone, PartialEq)]
pub struct ScConvParams {
    pub channels: usize,
    pub pool_rate: usize,
    /// F1..F4 weights, each `(C/2)×(C/2)×3×3`.
    pub weights: [Vec<f64>; 4],
    pub biases: [Vec<f64>; 4],
}

impl ScConvParams {
    pub fn zeros(channels: usize, pool_rate: usize) -> Self {
        let half = channels / 2;
        let wl = half * half * 9;
        Self {
            channels,
            pool_rate,
            weights: std::array::from_fn(|_| vec![0.0; wl]),
            biases: std::array::from_fn(|_| vec![0.0; half]),
        }
    }

    pub fn random(channels: usize, pool_rate: usize, rng: &mut crate::numeric::Rng) -> Self {
        let mut p = Self::zeros(channels, pool_rate);
        let half = channels / 2;
        let bound = (6.0 / (2 * half * 9) as f64).sqrt();
        for w in &mut p.weights {
            w.iter_mut().for_each(|v| *v = rng.uniform(-bound, bound));
        }
        for b in &mut p.biases {
            b.iter_mut().for_each(|v| *v = rng.uniform(-0.1, 0.1));
        }
        p
    }

    pub(crate) fn view(&self) -> ScWeights<'_> {
        ScWeights {
            w: std::array::from_fn(|i| self.weights[i].as_slice()),
            b: std::array::from_fn(|i| self.biases[i].as_slice()),
        }
    }
}

/// A `C×H×W` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }
}

/// Applies one self-calibrated convolution block.
pub fn scconv_forward(x: &FeatureMap, p: &ScConvParams) -> Result<FeatureMap> {
    ensure!(
        x.channels == p.channels,
        Dimension,
        "block expects {} channels, input has {}",
        p.channels,
        x.channels
    );
    check_geometry(x.channels, x.height, x.width, p.pool_rate)?;
    let (data, _) = forward(&x.data, x.channels, x.height, x.width, p.pool_rate, p.view());
    Ok(FeatureMap {
        data,
        ..x.clone()
    })
}

/// Gradients of `Σ dout ⊙ scconv(x)` with respect to the input and every
/// parameter, in the layout of [`ScConvParams`].
pub fn scconv_backward(x: &FeatureMap, p: &ScConvParams, dout: &[f64]) -> Result<(Vec<f64>, ScConvParams)> {
    check_geometry(x.channels, x.height, x.width, p.pool_rate)?;
    ensure!(dout.len() == x.data.len(), Dimension, "output gradient has the wrong size");
    let (_, cache) = forward(&x.data, x.channels, x.height, x.width, p.pool_rate, p.view());
    let mut grads = ScConvParams::zeros(p.channels, p.pool_rate);
    let [w1, w2, w3, w4] = &mut grads.weights;
    let [b1, b2, b3, b4] = &mut grads.biases;
    let dx = backward(
        &x.data,
        x.channels,
        x.height,
        x.width,
        p.pool_rate,
        p.view(),
        &cache,
        dout,
        ScGrads {
            w: [w1, w2, w3, w4],
            b: [b1, b2, b3, b4],
        },
    );
    Ok((dx, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_diff_slice, relative_error, Rng};

    #[test]
    fn zero_block_gives_zero_output() {
        let x = FeatureMap::zeros(8, 8, 8);
        let y = scconv_forward(&x, &ScConvParams::zeros(8, 4)).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn preserves_shape() {
        let mut rng = Rng::new(1);
        let mut x = FeatureMap::zeros(8, 24, 24);
        x.data.iter_mut().for_each(|v| *v = rng.uniform(-1.0, 1.0));
        let y = scconv_forward(&x, &ScConvParams::random(8, 4, &mut rng)).unwrap();
        assert_eq!((y.channels, y.height, y.width), (8, 24, 24));
    }

    #[test]
    fn geometry_errors() {
        assert!(scconv_forward(&FeatureMap::zeros(7, 8, 8), &ScConvParams::zeros(7, 4)).is_err());
        assert!(scconv_forward(&FeatureMap::zeros(8, 10, 8), &ScConvParams::zeros(8, 4)).is_err());
        assert!(scconv_forward(&FeatureMap::zeros(6, 8, 8), &ScConvParams::zeros(8, 4)).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            let mut rng = Rng::new(100 + seed);
            let mut x = FeatureMap::zeros(4, 8, 8);
            x.data.iter_mut().for_each(|v| *v = rng.uniform(-1.0, 1.0));
            let p = ScConvParams::random(4, 4, &mut rng);
            let probe: Vec<f64> = (0..x.data.len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let loss = |x: &FeatureMap, p: &ScConvParams| -> f64 {
                let y = scconv_forward(x, p).unwrap();
                y.data.iter().zip(&probe).map(|(a, b)| a * b).sum()
            };
            let (dx, g) = scconv_backward(&x, &p, &probe).unwrap();
            let nx = finite_diff_slice(
                |v| loss(&FeatureMap { data: v.to_vec(), ..x.clone() }, &p),
                &x.data,
                1e-5,
            )
            .unwrap();
            assert!(relative_error(&dx, &nx) < 1e-4);
            for i in 0..4 {
                let nw = finite_diff_slice(
                    |v| {
                        let mut q = p.clone();
                        q.weights[i] = v.to_vec();
                        loss(&x, &q)
                    },
                    &p.weights[i],
                    1e-5,
                )
                .unwrap();
                let nb = finite_diff_slice(
                    |v| {
                        let mut q = p.clone();
                        q.biases[i] = v.to_vec();
                        loss(&x, &q)
                    },
                    &p.biases[i],
                    1e-5,
                )
                .unwrap();
                assert!(relative_error(&g.weights[i], &nw) < 1e-4, "F{} weights", i + 1);
                assert!(relative_error(&g.biases[i], &nb) < 1e-4, "F{} biases", i + 1);
            }
        }
    }
}
