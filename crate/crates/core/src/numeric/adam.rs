use super::Matrix;
use crate::error::{ensure, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment estimates for bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Applies one update in place and advances the step counter.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        ensure!(
            params.len() == grads.len() && params.len() == self.m.len(),
            Dimension,
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            self.m.len()
        );
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            if g == 0.0 && self.m[i] == 0.0 {
                // exact no-op keeps all-zero gradient runs bit-identical
                continue;
            }
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Matrix-shaped wrapper around [`AdamState::step`].
pub fn adam_step(params: &mut Matrix, grads: &Matrix, state: &mut AdamState) -> Result<()> {
    ensure!(
        params.shape() == grads.shape(),
        Dimension,
        "adam: params {:?} vs grads {:?}",
        params.shape(),
        grads.shape()
    );
    state.step(params.as_mut_slice(), grads.as_slice())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= k);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_step(g: f64) -> f64 {
        let mut p = Matrix::zeros(1, 1);
        let mut st = AdamState::new(1, AdamConfig::with_lr(1e-4));
        adam_step(&mut p, &Matrix::filled(1, 1, g), &mut st).unwrap();
        assert_eq!(st.t, 1);
        p[(0, 0)]
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε)
        let p = scalar_step(1.0);
        assert!((p - (-1e-4 / (1.0 + 1e-8))).abs() < 1e-18, "{p}");
        assert!((p + 9.9999e-5).abs() < 1e-9);
        let p = scalar_step(-2.0);
        assert!((p - 1e-4 * 2.0 / (2.0 + 1e-8)).abs() < 1e-18, "{p}");
    }

    #[test]
    fn zero_gradients_leave_params_bit_identical() {
        let mut p = Matrix::from_rows(&[[0.1, -3.0], [7.5, 1e-300]]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(4, AdamConfig::default());
        for _ in 0..100 {
            adam_step(&mut p, &Matrix::zeros(2, 2), &mut st).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.t, 100);
    }

    #[test]
    fn shape_mismatch() {
        let mut st = AdamState::new(2, AdamConfig::default());
        assert!(adam_step(&mut Matrix::zeros(2, 1), &Matrix::zeros(1, 2), &mut st).is_err());
        assert!(adam_step(&mut Matrix::zeros(3, 1), &Matrix::zeros(3, 1), &mut st).is_err());
    }

    #[test]
    fn second_moment_nonnegative() {
        let mut st = AdamState::new(3, AdamConfig::default());
        let mut p = vec![0.0; 3];
        for k in 0..10 {
            let g = [k as f64 - 5.0, -1.0, 0.3];
            st.step(&mut p, &g).unwrap();
        }
        assert!(st.v.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![0.3, 0.4];
        clip_global_norm(&mut g, 1.0);
        assert_eq!(g, vec![0.3, 0.4]);
    }
}
