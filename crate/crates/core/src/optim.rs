//! Adam with standard bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[inline]
fn update(cfg: &AdamConfig, t: u64, p: &mut f64, g: f64, m: &mut f64, v: &mut f64) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let mhat = *m / (1.0 - cfg.beta1.powi(t as i32));
    let vhat = *v / (1.0 - cfg.beta2.powi(t as i32));
    *p -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
}

/// Dense Adam state for one flat parameter block.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, len: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        for i in 0..params.len() {
            update(&self.cfg, self.t, &mut params[i], grads[i], &mut self.m[i], &mut self.v[i]);
        }
    }
}

/// Lazy row-sparse Adam for embedding tables: only rows that received a
/// gradient in the step are updated. Bias correction uses the global step.
#[derive(Debug, Clone)]
pub struct RowAdam {
    cfg: AdamConfig,
    m: Matrix,
    v: Matrix,
    t: u64,
}

impl RowAdam {
    pub fn new(cfg: AdamConfig, rows: usize, cols: usize) -> Self {
        Self {
            cfg,
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
        }
    }

    /// Updates `rows` of `params` from the matching rows of `grads`.
    /// Columns outside `cols` are left untouched.
    pub fn step_rows(
        &mut self,
        params: &mut Matrix,
        grads: &Matrix,
        rows: &[usize],
        cols: std::ops::Range<usize>,
    ) {
        self.t += 1;
        for &r in rows {
            let (p, g) = (params.row_mut(r), grads.row(r));
            let (m, v) = (self.m.row_mut(r), self.v.row_mut(r));
            for j in cols.clone() {
                update(&self.cfg, self.t, &mut p[j], g[j], &mut m[j], &mut v[j]);
            }
        }
    }
}
