//! Per-sample CNN kernels on `C×H×W` buffers, with their backward passes.
//! Backward functions accumulate into their gradient outputs.

use crate::numeric::{gemm, sigmoid, Operand};

/// Geometry of a square-kernel 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    /// 3×3, stride 1, zero "same" padding.
    pub fn same3(cin: usize, cout: usize) -> Self {
        Self {
            cin,
            cout,
            kernel: 3,
            stride: 1,
            pad: 1,
        }
    }

    pub fn pointwise(cin: usize, cout: usize) -> Self {
        Self {
            cin,
            cout,
            kernel: 1,
            stride: 1,
            pad: 0,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }

    fn im2col(&self, input: &[f64], h: usize, w: usize, cols: &mut Vec<f64>) {
        let (ho, wo) = self.out_size(h, w);
        let k = self.kernel;
        cols.clear();
        cols.resize(self.cin * k * k * ho * wo, 0.0);
        let mut row = 0;
        for c in 0..self.cin {
            let plane = &input[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[oy * wo + ox] = src[ix as usize];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[f64], h: usize, w: usize, dinput: &mut [f64]) {
        let (ho, wo) = self.out_size(h, w);
        let k = self.kernel;
        let mut row = 0;
        for c in 0..self.cin {
            let plane = &mut dinput[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += src[oy * wo + ox];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// `out = weight ⋆ input + bias`; returns the `cout×ho×wo` output.
    pub fn forward(&self, input: &[f64], h: usize, w: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.cin * h * w);
        debug_assert_eq!(weight.len(), self.weight_len());
        let (ho, wo) = self.out_size(h, w);
        let hw = ho * wo;
        let mut out = vec![0.0; self.cout * hw];
        for (o, b) in bias.iter().enumerate() {
            out[o * hw..(o + 1) * hw].fill(*b);
        }
        let kk = self.cin * self.kernel * self.kernel;
        let mut cols = Vec::new();
        let cols: &[f64] = if self.is_pointwise() {
            input
        } else {
            self.im2col(input, h, w, &mut cols);
            &cols
        };
        gemm(
            self.cout,
            kk,
            hw,
            1.0,
            Operand::plain(weight, kk),
            Operand::plain(cols, hw),
            1.0,
            &mut out,
        );
        out
    }

    /// Accumulates weight, bias and (optionally) input gradients.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        input: &[f64],
        h: usize,
        w: usize,
        weight: &[f64],
        dout: &[f64],
        dweight: &mut [f64],
        dbias: &mut [f64],
        dinput: Option<&mut [f64]>,
    ) {
        let (ho, wo) = self.out_size(h, w);
        let hw = ho * wo;
        let kk = self.cin * self.kernel * self.kernel;
        for (o, db) in dbias.iter_mut().enumerate() {
            *db += dout[o * hw..(o + 1) * hw].iter().sum::<f64>();
        }
        let mut scratch = Vec::new();
        let cols: &[f64] = if self.is_pointwise() {
            input
        } else {
            self.im2col(input, h, w, &mut scratch);
            &scratch
        };
        // dW += dout · colsᵀ
        gemm(
            self.cout,
            hw,
            kk,
            1.0,
            Operand::plain(dout, hw),
            Operand::transposed(cols, hw),
            1.0,
            dweight,
        );
        if let Some(dinput) = dinput {
            if self.is_pointwise() {
                gemm(
                    kk,
                    self.cout,
                    hw,
                    1.0,
                    Operand::transposed(weight, kk),
                    Operand::plain(dout, hw),
                    1.0,
                    dinput,
                );
            } else {
                let mut dcols = vec![0.0; kk * hw];
                gemm(
                    kk,
                    self.cout,
                    hw,
                    1.0,
                    Operand::transposed(weight, kk),
                    Operand::plain(dout, hw),
                    0.0,
                    &mut dcols,
                );
                self.col2im_add(&dcols, h, w, dinput);
            }
        }
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// `dx += dy` where the ReLU output was positive.
pub fn relu_backward(out: &[f64], dy: &[f64], dx: &mut [f64]) {
    for ((d, &o), &g) in dx.iter_mut().zip(out).zip(dy) {
        if o > 0.0 {
            *d += g;
        }
    }
}

pub fn sigmoid_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid(v)).collect()
}

/// Non-overlapping `r×r` average pooling of each channel.
pub fn avg_pool(x: &[f64], c: usize, h: usize, w: usize, r: usize) -> Vec<f64> {
    let (ho, wo) = (h / r, w / r);
    let inv = 1.0 / (r * r) as f64;
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            let drow = &mut dst[(y / r) * wo..(y / r + 1) * wo];
            for (x, v) in row.iter().enumerate() {
                drow[x / r] += v;
            }
        }
        dst.iter_mut().for_each(|v| *v *= inv);
    }
    out
}

pub fn avg_pool_backward(dy: &[f64], c: usize, h: usize, w: usize, r: usize, dx: &mut [f64]) {
    let (ho, wo) = (h / r, w / r);
    let inv = 1.0 / (r * r) as f64;
    for ch in 0..c {
        let src = &dy[ch * ho * wo..(ch + 1) * ho * wo];
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            let srow = &src[(y / r) * wo..(y / r + 1) * wo];
            for (x, d) in plane[y * w..(y + 1) * w].iter_mut().enumerate() {
                *d += srow[x / r] * inv;
            }
        }
    }
}

/// Nearest-neighbour upsampling by `r` of a `c×h×w` map.
pub fn upsample(x: &[f64], c: usize, h: usize, w: usize, r: usize) -> Vec<f64> {
    let (ho, wo) = (h * r, w * r);
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        for y in 0..ho {
            for xo in 0..wo {
                dst[y * wo + xo] = plane[(y / r) * w + xo / r];
            }
        }
    }
    out
}

/// Gradient of [`upsample`]: sums each `r×r` block.
pub fn upsample_backward(dy: &[f64], c: usize, h: usize, w: usize, r: usize) -> Vec<f64> {
    let (ho, wo) = (h * r, w * r);
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        let src = &dy[ch * ho * wo..(ch + 1) * ho * wo];
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for y in 0..ho {
            for xo in 0..wo {
                plane[(y / r) * w + xo / r] += src[y * wo + xo];
            }
        }
    }
    dx
}

/// Per-channel mean over the spatial extent.
pub fn global_avg_pool(x: &[f64], c: usize, hw: usize) -> Vec<f64> {
    (0..c)
        .map(|ch| x[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_diff_slice, relative_error, Rng};

    fn naive_conv(cv: &Conv2d, x: &[f64], h: usize, w: usize, wt: &[f64], b: &[f64]) -> Vec<f64> {
        let (ho, wo) = cv.out_size(h, w);
        let k = cv.kernel;
        let mut out = vec![0.0; cv.cout * ho * wo];
        for o in 0..cv.cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[o];
                    for c in 0..cv.cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * cv.stride + ky) as isize - cv.pad as isize;
                                let ix = (ox * cv.stride + kx) as isize - cv.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += wt[((o * cv.cin + c) * k + ky) * k + kx]
                                        * x[(c * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out[(o * ho + oy) * wo + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = Rng::new(5);
        for cv in [
            Conv2d::same3(3, 4),
            Conv2d::pointwise(3, 5),
            Conv2d { cin: 2, cout: 3, kernel: 3, stride: 2, pad: 1 },
        ] {
            let (h, w) = (6, 8);
            let x: Vec<f64> = (0..cv.cin * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let wt: Vec<f64> = (0..cv.weight_len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let b: Vec<f64> = (0..cv.cout).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let fast = cv.forward(&x, h, w, &wt, &b);
            let slow = naive_conv(&cv, &x, h, w, &wt, &b);
            assert!(relative_error(&fast, &slow) < 1e-14);
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = Rng::new(6);
        for seed in 0..3u64 {
            for cv in [
                Conv2d::same3(2, 3),
                Conv2d::pointwise(3, 2),
                Conv2d { cin: 1, cout: 2, kernel: 3, stride: 2, pad: 1 },
            ] {
                let (h, w) = (6, 6);
                let x: Vec<f64> = (0..cv.cin * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let wt: Vec<f64> = (0..cv.weight_len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let b: Vec<f64> = (0..cv.cout).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let (ho, wo) = cv.out_size(h, w);
                let probe: Vec<f64> =
                    (0..cv.cout * ho * wo).map(|i| ((i as u64 + seed) % 7) as f64 - 3.0).collect();
                let loss = |x: &[f64], wt: &[f64], b: &[f64]| -> f64 {
                    cv.forward(x, h, w, wt, b).iter().zip(&probe).map(|(a, p)| a * p).sum()
                };
                let mut dw = vec![0.0; wt.len()];
                let mut db = vec![0.0; b.len()];
                let mut dx = vec![0.0; x.len()];
                cv.backward(&x, h, w, &wt, &probe, &mut dw, &mut db, Some(&mut dx));
                let nw = finite_diff_slice(|p| loss(&x, p, &b), &wt, 1e-5).unwrap();
                let nb = finite_diff_slice(|p| loss(&x, &wt, p), &b, 1e-5).unwrap();
                let nx = finite_diff_slice(|p| loss(p, &wt, &b), &x, 1e-5).unwrap();
                assert!(relative_error(&dw, &nw) < 1e-8);
                assert!(relative_error(&db, &nb) < 1e-8);
                assert!(relative_error(&dx, &nx) < 1e-8);
            }
        }
    }

    #[test]
    fn pooling_and_upsampling_are_adjoint() {
        // <up(a), b> == <a, up_backward(b)>
        let mut rng = Rng::new(8);
        let a: Vec<f64> = (0..2 * 3 * 3).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..2 * 12 * 12).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let lhs: f64 = upsample(&a, 2, 3, 3, 4).iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(upsample_backward(&b, 2, 3, 3, 4)).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let p = avg_pool(&b, 2, 12, 12, 4);
        let mut back = vec![0.0; b.len()];
        avg_pool_backward(&a, 2, 12, 12, 4, &mut back);
        let lhs: f64 = p.iter().zip(&a).map(|(x, y)| x * y).sum();
        let rhs: f64 = b.iter().zip(&back).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn constant_maps() {
        let x = vec![2.5; 3 * 8 * 8];
        assert_eq!(global_avg_pool(&x, 3, 64), vec![2.5; 3]);
        assert!(avg_pool(&x, 3, 8, 8, 2).iter().all(|&v| (v - 2.5).abs() < 1e-15));
        let s = sigmoid_vec(&[-1e3, 0.0, 1e3]);
        assert_eq!(s, vec![0.0, 0.5, 1.0]);
        assert!(relu(&[-1.0, 2.0]).iter().all(|&v| v >= 0.0));
    }
}
