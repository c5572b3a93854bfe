//! LSTM and GRU cells, batched over the rows of a minibatch.
//!
//! A layer stores `W` (`G·Hd × in`), `U` (`G·Hd × Hd`) and `b` (`G·Hd`) with
//! gate blocks stacked in row order: `i, f, g, o` for the LSTM and `z, r, n`
//! for the GRU. The GRU applies the reset gate before `U_n` (Cho et al.).

use crate::error::{ensure, Error, Result};
use crate::numeric::{gemm, sigmoid, Matrix, Operand};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub const ALL: [CellKind; 2] = [Self::Lstm, Self::Gru];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lstm => "lstm",
            Self::Gru => "gru",
        }
    }

    /// Number of stacked gate blocks.
    pub fn gates(self) -> usize {
        match self {
            Self::Lstm => 4,
            Self::Gru => 3,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(Self::Lstm),
            "gru" => Ok(Self::Gru),
            other => Err(Error::InvalidArgument(format!("unknown cell `{other}` (lstm or gru)"))),
        }
    }
}

/// Borrowed weights of one recurrent layer.
#[derive(Clone, Copy)]
pub(crate) struct Layer<'a> {
    pub kind: CellKind,
    pub input: usize,
    pub hidden: usize,
    pub w: &'a [f64],
    pub u: &'a [f64],
    pub b: &'a [f64],
}

pub(crate) struct LayerGrads<'a> {
    pub w: &'a mut [f64],
    pub u: &'a mut [f64],
    pub b: &'a mut [f64],
}

/// Activations of one time step for a batch.
pub(crate) struct Step {
    /// Post-activation gates, `B × G·Hd`.
    gates: Vec<f64>,
    /// Reset-gated previous state (GRU only), `B × Hd`.
    rh: Vec<f64>,
    /// tanh of the new cell state (LSTM only).
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    /// New cell state (LSTM only, empty for the GRU).
    pub c: Vec<f64>,
}

impl Layer<'_> {
    /// Advances `batch` rows one step. `c` is ignored by the GRU.
    pub fn step(&self, batch: usize, x: &[f64], h: &[f64], c: &[f64]) -> Step {
        let hd = self.hidden;
        let gw = self.kind.gates() * hd;
        let mut a = vec![0.0; batch * gw];
        for row in a.chunks_exact_mut(gw) {
            row.copy_from_slice(self.b);
        }
        gemm(
            batch,
            self.input,
            gw,
            1.0,
            Operand::plain(x, self.input),
            Operand::transposed(self.w, self.input),
            1.0,
            &mut a,
        );
        match self.kind {
            CellKind::Lstm => {
                gemm(batch, hd, gw, 1.0, Operand::plain(h, hd), Operand::transposed(self.u, hd), 1.0, &mut a);
                let mut new_c = vec![0.0; batch * hd];
                let mut tanh_c = vec![0.0; batch * hd];
                let mut new_h = vec![0.0; batch * hd];
                for r in 0..batch {
                    let g = &mut a[r * gw..(r + 1) * gw];
                    for k in 0..hd {
                        g[k] = sigmoid(g[k]);
                        g[hd + k] = sigmoid(g[hd + k]);
                        g[2 * hd + k] = g[2 * hd + k].tanh();
                        g[3 * hd + k] = sigmoid(g[3 * hd + k]);
                        let idx = r * hd + k;
                        let cn = g[hd + k] * c[idx] + g[k] * g[2 * hd + k];
                        new_c[idx] = cn;
                        tanh_c[idx] = cn.tanh();
                        new_h[idx] = g[3 * hd + k] * tanh_c[idx];
                    }
                }
                Step {
                    gates: a,
                    rh: Vec::new(),
                    tanh_c,
                    h: new_h,
                    c: new_c,
                }
            }
            CellKind::Gru => {
                let mut ah = vec![0.0; batch * 2 * hd];
                gemm(
                    batch,
                    hd,
                    2 * hd,
                    1.0,
                    Operand::plain(h, hd),
                    Operand::transposed(&self.u[..2 * hd * hd], hd),
                    0.0,
                    &mut ah,
                );
                let mut rh = vec![0.0; batch * hd];
                for r in 0..batch {
                    let g = &mut a[r * gw..(r + 1) * gw];
                    for k in 0..2 * hd {
                        g[k] = sigmoid(g[k] + ah[r * 2 * hd + k]);
                    }
                    for k in 0..hd {
                        rh[r * hd + k] = g[hd + k] * h[r * hd + k];
                    }
                }
                let mut an = vec![0.0; batch * hd];
                gemm(
                    batch,
                    hd,
                    hd,
                    1.0,
                    Operand::plain(&rh, hd),
                    Operand::transposed(&self.u[2 * hd * hd..], hd),
                    0.0,
                    &mut an,
                );
                let mut new_h = vec![0.0; batch * hd];
                for r in 0..batch {
                    let g = &mut a[r * gw..(r + 1) * gw];
                    for k in 0..hd {
                        let n = (g[2 * hd + k] + an[r * hd + k]).tanh();
                        g[2 * hd + k] = n;
                        let z = g[k];
                        new_h[r * hd + k] = (1.0 - z) * h[r * hd + k] + z * n;
                    }
                }
                Step {
                    gates: a,
                    rh,
                    tanh_c: Vec::new(),
                    h: new_h,
                    c: Vec::new(),
                }
            }
        }
    }

    /// Backpropagates one step. `dh`/`dc` are gradients flowing into the new
    /// state; returns the gradients for the previous `(h, c)`. Parameter
    /// gradients and `dx` (when given) are accumulated.
    #[allow(clippy::too_many_arguments)]
    pub fn step_back(
        &self,
        batch: usize,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        step: &Step,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LayerGrads<'_>,
        dx: Option<&mut [f64]>,
    ) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let gw = self.kind.gates() * hd;
        let mut da = vec![0.0; batch * gw];
        let mut dh_prev = vec![0.0; batch * hd];
        let mut dc_prev = Vec::new();
        match self.kind {
            CellKind::Lstm => {
                dc_prev = vec![0.0; batch * hd];
                for r in 0..batch {
                    let g = &step.gates[r * gw..(r + 1) * gw];
                    let d = &mut da[r * gw..(r + 1) * gw];
                    for k in 0..hd {
                        let idx = r * hd + k;
                        let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                        let tc = step.tanh_c[idx];
                        let dct = dc[idx] + dh[idx] * o * (1.0 - tc * tc);
                        d[k] = dct * gg * i * (1.0 - i);
                        d[hd + k] = dct * c_prev[idx] * f * (1.0 - f);
                        d[2 * hd + k] = dct * i * (1.0 - gg * gg);
                        d[3 * hd + k] = dh[idx] * tc * o * (1.0 - o);
                        dc_prev[idx] = dct * f;
                    }
                }
                gemm(batch, gw, hd, 1.0, Operand::plain(&da, gw), Operand::plain(self.u, hd), 0.0, &mut dh_prev);
                gemm(gw, batch, hd, 1.0, Operand::transposed(&da, gw), Operand::plain(h_prev, hd), 1.0, grads.u);
            }
            CellKind::Gru => {
                let mut dan = vec![0.0; batch * hd];
                for r in 0..batch {
                    let g = &step.gates[r * gw..(r + 1) * gw];
                    let d = &mut da[r * gw..(r + 1) * gw];
                    for k in 0..hd {
                        let idx = r * hd + k;
                        let (z, n) = (g[k], g[2 * hd + k]);
                        d[k] = dh[idx] * (n - h_prev[idx]) * z * (1.0 - z);
                        let dn = dh[idx] * z * (1.0 - n * n);
                        d[2 * hd + k] = dn;
                        dan[idx] = dn;
                        dh_prev[idx] = dh[idx] * (1.0 - z);
                    }
                }
                let un = &self.u[2 * hd * hd..];
                let mut drh = vec![0.0; batch * hd];
                gemm(batch, hd, hd, 1.0, Operand::plain(&dan, hd), Operand::plain(un, hd), 0.0, &mut drh);
                gemm(
                    hd,
                    batch,
                    hd,
                    1.0,
                    Operand::transposed(&dan, hd),
                    Operand::plain(&step.rh, hd),
                    1.0,
                    &mut grads.u[2 * hd * hd..],
                );
                for r in 0..batch {
                    let g = &step.gates[r * gw..(r + 1) * gw];
                    for k in 0..hd {
                        let idx = r * hd + k;
                        let rr = g[hd + k];
                        da[r * gw + hd + k] = drh[idx] * h_prev[idx] * rr * (1.0 - rr);
                        dh_prev[idx] += drh[idx] * rr;
                    }
                }
                // z and r blocks of U act on h directly
                gemm(
                    batch,
                    2 * hd,
                    hd,
                    1.0,
                    Operand::plain(&da, gw),
                    Operand::plain(&self.u[..2 * hd * hd], hd),
                    1.0,
                    &mut dh_prev,
                );
                gemm(
                    2 * hd,
                    batch,
                    hd,
                    1.0,
                    Operand::transposed(&da, gw),
                    Operand::plain(h_prev, hd),
                    1.0,
                    &mut grads.u[..2 * hd * hd],
                );
            }
        }
        gemm(gw, batch, self.input, 1.0, Operand::transposed(&da, gw), Operand::plain(x, self.input), 1.0, grads.w);
        for row in da.chunks_exact(gw) {
            for (b, v) in grads.b.iter_mut().zip(row) {
                *b += v;
            }
        }
        if let Some(dx) = dx {
            gemm(batch, gw, self.input, 1.0, Operand::plain(&da, gw), Operand::plain(self.w, self.input), 1.0, dx);
        }
        (dh_prev, dc_prev)
    }
}

/// Owned parameters of a single recurrent cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub kind: CellKind,
    /// `G·Hd × in`
    pub w: Matrix,
    /// `G·Hd × Hd`
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl CellParams {
    pub fn zeros(kind: CellKind, input: usize, hidden: usize) -> Self {
        let gw = kind.gates() * hidden;
        Self {
            kind,
            w: Matrix::zeros(gw, input),
            u: Matrix::zeros(gw, hidden),
            b: vec![0.0; gw],
        }
    }

    pub fn input(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden(&self) -> usize {
        self.u.cols()
    }

    fn check(&self, kind: CellKind, x: &[f64], h: &[f64]) -> Result<()> {
        ensure!(self.kind == kind, InvalidArgument, "expected {kind} parameters, got {}", self.kind);
        let (hd, gw) = (self.hidden(), kind.gates() * self.hidden());
        ensure!(
            self.w.rows() == gw && self.u.rows() == gw && self.b.len() == gw,
            Dimension,
            "{kind} parameters need {gw} gate rows"
        );
        ensure!(x.len() == self.input(), Dimension, "input has {} values, cell expects {}", x.len(), self.input());
        ensure!(h.len() == hd, Dimension, "state has {} values, cell expects {hd}", h.len());
        Ok(())
    }

    fn layer(&self) -> Layer<'_> {
        Layer {
            kind: self.kind,
            input: self.input(),
            hidden: self.hidden(),
            w: self.w.as_slice(),
            u: self.u.as_slice(),
            b: &self.b,
        }
    }
}

/// Gradients of one cell step.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrads {
    pub params: CellParams,
    pub dx: Vec<f64>,
    pub dh: Vec<f64>,
    /// Empty for the GRU.
    pub dc: Vec<f64>,
}

/// One LSTM step: `(h', c')`.
pub fn lstm_cell_forward(x: &[f64], h: &[f64], c: &[f64], p: &CellParams) -> Result<(Vec<f64>, Vec<f64>)> {
    p.check(CellKind::Lstm, x, h)?;
    ensure!(c.len() == h.len(), Dimension, "cell state has {} values, expected {}", c.len(), h.len());
    let s = p.layer().step(1, x, h, c);
    Ok((s.h, s.c))
}

/// Gradients of `dh'·h' + dc'·c'` for one LSTM step.
pub fn lstm_cell_backward(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    p: &CellParams,
    dh_new: &[f64],
    dc_new: &[f64],
) -> Result<CellGrads> {
    p.check(CellKind::Lstm, x, h)?;
    ensure!(
        c.len() == h.len() && dh_new.len() == h.len() && dc_new.len() == h.len(),
        Dimension,
        "state gradients must match the hidden size"
    );
    cell_backward(x, h, c, p, dh_new, dc_new)
}

/// One GRU step: `h'`.
pub fn gru_cell_forward(x: &[f64], h: &[f64], p: &CellParams) -> Result<Vec<f64>> {
    p.check(CellKind::Gru, x, h)?;
    Ok(p.layer().step(1, x, h, &[]).h)
}

/// Gradients of `dh'·h'` for one GRU step.
pub fn gru_cell_backward(x: &[f64], h: &[f64], p: &CellParams, dh_new: &[f64]) -> Result<CellGrads> {
    p.check(CellKind::Gru, x, h)?;
    ensure!(dh_new.len() == h.len(), Dimension, "state gradient must match the hidden size");
    cell_backward(x, h, &[], p, dh_new, &[])
}

fn cell_backward(x: &[f64], h: &[f64], c: &[f64], p: &CellParams, dh: &[f64], dc: &[f64]) -> Result<CellGrads> {
    let layer = p.layer();
    let step = layer.step(1, x, h, c);
    let mut g = CellParams::zeros(p.kind, p.input(), p.hidden());
    let mut dx = vec![0.0; x.len()];
    let (dh_prev, dc_prev) = {
        let mut grads = LayerGrads {
            w: g.w.as_mut_slice(),
            u: g.u.as_mut_slice(),
            b: &mut g.b,
        };
        layer.step_back(1, x, h, c, &step, dh, dc, &mut grads, Some(&mut dx))
    };
    Ok(CellGrads {
        params: g,
        dx,
        dh: dh_prev,
        dc: dc_prev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_diff_slice, relative_error, Rng};

    fn random_cell(kind: CellKind, input: usize, hidden: usize, rng: &mut Rng) -> CellParams {
        let gw = kind.gates() * hidden;
        CellParams {
            kind,
            w: rng.uniform_matrix(gw, input, -0.8, 0.8),
            u: rng.uniform_matrix(gw, hidden, -0.8, 0.8),
            b: (0..gw).map(|_| rng.uniform(-0.5, 0.5)).collect(),
        }
    }

    fn vec(rng: &mut Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    #[test]
    fn zero_cells_stay_zero() {
        let p = CellParams::zeros(CellKind::Lstm, 3, 2);
        let (h, c) = lstm_cell_forward(&[0.0; 3], &[0.0; 2], &[0.0; 2], &p).unwrap();
        assert_eq!((h, c), (vec![0.0; 2], vec![0.0; 2]));
        let p = CellParams::zeros(CellKind::Gru, 3, 2);
        assert_eq!(gru_cell_forward(&[0.0; 3], &[0.0; 2], &p).unwrap(), vec![0.0; 2]);
    }

    #[test]
    fn saturated_gates_hold_state() {
        let mut rng = Rng::new(4);
        let hd = 3;
        let mut p = random_cell(CellKind::Lstm, 2, hd, &mut rng);
        p.w = Matrix::zeros(4 * hd, 2);
        p.u = Matrix::zeros(4 * hd, hd);
        p.b[..hd].iter_mut().for_each(|b| *b = -50.0);
        p.b[hd..2 * hd].iter_mut().for_each(|b| *b = 50.0);
        let c = vec![0.3, -0.7, 1.2];
        let (_, c2) = lstm_cell_forward(&[0.4, -0.2], &[0.1, 0.2, 0.3], &c, &p).unwrap();
        assert!(c2.iter().zip(&c).all(|(a, b)| (a - b).abs() < 1e-9));

        let mut p = random_cell(CellKind::Gru, 2, hd, &mut rng);
        p.w.as_mut_slice()[..hd * 2].iter_mut().for_each(|v| *v = 0.0);
        p.u.as_mut_slice()[..hd * hd].iter_mut().for_each(|v| *v = 0.0);
        p.b[..hd].iter_mut().for_each(|b| *b = -50.0);
        let h = vec![0.5, -0.25, 0.9];
        let h2 = gru_cell_forward(&[0.4, -0.2], &h, &p).unwrap();
        assert!(h2.iter().zip(&h).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn shape_errors() {
        let p = CellParams::zeros(CellKind::Lstm, 3, 2);
        assert!(lstm_cell_forward(&[0.0; 2], &[0.0; 2], &[0.0; 2], &p).is_err());
        assert!(gru_cell_forward(&[0.0; 3], &[0.0; 2], &p).is_err());
    }

    #[test]
    fn cell_gradients_match_finite_differences() {
        for kind in CellKind::ALL {
            for seed in 0..3 {
                let mut rng = Rng::new(seed + 10);
                let (input, hd) = (3, 4);
                let p = random_cell(kind, input, hd, &mut rng);
                let (x, h, c) = (vec(&mut rng, input), vec(&mut rng, hd), vec(&mut rng, hd));
                let (wh, wc) = (vec(&mut rng, hd), vec(&mut rng, hd));
                let loss = |x: &[f64], h: &[f64], c: &[f64], p: &CellParams| -> f64 {
                    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
                    match kind {
                        CellKind::Lstm => {
                            let (h2, c2) = lstm_cell_forward(x, h, c, p).unwrap();
                            dot(&h2, &wh) + dot(&c2, &wc)
                        }
                        CellKind::Gru => dot(&gru_cell_forward(x, h, p).unwrap(), &wh),
                    }
                };
                let g = match kind {
                    CellKind::Lstm => lstm_cell_backward(&x, &h, &c, &p, &wh, &wc).unwrap(),
                    CellKind::Gru => gru_cell_backward(&x, &h, &p, &wh).unwrap(),
                };
                let eps = 1e-6;
                let nx = finite_diff_slice(|v| loss(v, &h, &c, &p), &x, eps).unwrap();
                let nh = finite_diff_slice(|v| loss(&x, v, &c, &p), &h, eps).unwrap();
                let nw = finite_diff_slice(
                    |v| {
                        let mut q = p.clone();
                        q.w.as_mut_slice().copy_from_slice(v);
                        loss(&x, &h, &c, &q)
                    },
                    p.w.as_slice(),
                    eps,
                )
                .unwrap();
                let nu = finite_diff_slice(
                    |v| {
                        let mut q = p.clone();
                        q.u.as_mut_slice().copy_from_slice(v);
                        loss(&x, &h, &c, &q)
                    },
                    p.u.as_slice(),
                    eps,
                )
                .unwrap();
                let nb = finite_diff_slice(
                    |v| {
                        let mut q = p.clone();
                        q.b.copy_from_slice(v);
                        loss(&x, &h, &c, &q)
                    },
                    &p.b,
                    eps,
                )
                .unwrap();
                assert!(relative_error(&g.dx, &nx) < 1e-4, "{kind} dx");
                assert!(relative_error(&g.dh, &nh) < 1e-4, "{kind} dh");
                assert!(relative_error(g.params.w.as_slice(), &nw) < 1e-4, "{kind} dW");
                assert!(relative_error(g.params.u.as_slice(), &nu) < 1e-4, "{kind} dU");
                assert!(relative_error(&g.params.b, &nb) < 1e-4, "{kind} db");
                if kind == CellKind::Lstm {
                    let nc = finite_diff_slice(|v| loss(&x, &h, v, &p), &c, eps).unwrap();
                    assert!(relative_error(&g.dc, &nc) < 1e-4, "lstm dc");
                }
            }
        }
    }
}
