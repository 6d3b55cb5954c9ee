//! Discrete fractional-order integral and derivative operators.
//!
//! Both operators use the Grünwald–Letnikov convolution with a fixed
//! short-memory window:
//!
//! ```text
//! D^β e(t_k) ≈ dt^(-β) Σ_j w_j(β)  e(t_{k-j})
//! I^α e(t_k) ≈ dt^(α)  Σ_j w_j(-α) e(t_{k-j})
//! ```
//!
//! with `w_0 = 1`, `w_j = w_{j-1} (1 - (order + 1) / j)`. Pre-history is zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MEMORY_LEN: usize = 4096;

/// Grünwald–Letnikov binomial weights of the given order.
pub fn gl_coefficients(order: f64, n: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n);
    if n == 0 {
        return w;
    }
    w.push(1.0);
    for j in 1..n {
        let prev = w[j - 1];
        w.push(prev * (1.0 - (order + 1.0) / j as f64));
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FracKind {
    Integral,
    Derivative,
}

/// Fixed-capacity sample history, newest first, stored twice so the
/// window is always one contiguous slice.
#[derive(Debug, Clone)]
struct History {
    buf: Vec<f64>,
    cap: usize,
    head: usize,
    len: usize,
}

impl History {
    fn new(cap: usize) -> Self {
        Self {
            buf: vec![0.0; 2 * cap],
            cap,
            head: 0,
            len: 0,
        }
    }

    fn push(&mut self, x: f64) {
        if self.cap == 0 {
            return;
        }
        self.head = if self.head == 0 { self.cap - 1 } else { self.head - 1 };
        self.buf[self.head] = x;
        self.buf[self.head + self.cap] = x;
        self.len = (self.len + 1).min(self.cap);
    }

    fn window(&self) -> &[f64] {
        &self.buf[self.head..self.head + self.len]
    }

    fn clear(&mut self) {
        self.buf.iter_mut().for_each(|v| *v = 0.0);
        self.head = 0;
        self.len = 0;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Stateful GL operator. One sample in, one sample out, at a fixed `dt`.
#[derive(Debug, Clone)]
pub struct FracOperator {
    order: f64,
    kind: FracKind,
    dt: f64,
    memory_len: usize,
    weights: Vec<f64>,
    scale: f64,
    history: History,
}

impl FracOperator {
    pub fn new(kind: FracKind, order: f64, dt: f64, memory_len: usize) -> Result<Self> {
        if !(order > 0.0 && order < 2.0) {
            return Err(Error::invalid(format!("fractional order must lie in (0, 2), got {order}")));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if memory_len == 0 {
            return Err(Error::invalid("memory_len must be at least 1"));
        }
        let (weights, scale) = match kind {
            FracKind::Derivative => (gl_coefficients(order, memory_len), dt.powf(-order)),
            FracKind::Integral => (gl_coefficients(-order, memory_len), dt.powf(order)),
        };
        Ok(Self {
            order,
            kind,
            dt,
            memory_len,
            weights,
            scale,
            // the current sample occupies weight 0, so memory_len - 1 past samples
            history: History::new(memory_len - 1),
        })
    }

    pub fn derivative(order: f64, dt: f64) -> Result<Self> {
        Self::new(FracKind::Derivative, order, dt, DEFAULT_MEMORY_LEN)
    }

    pub fn integral(order: f64, dt: f64) -> Result<Self> {
        Self::new(FracKind::Integral, order, dt, DEFAULT_MEMORY_LEN)
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn kind(&self) -> FracKind {
        self.kind
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn memory_len(&self) -> usize {
        self.memory_len
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.weights
    }

    /// Number of past samples currently held.
    pub fn history_len(&self) -> usize {
        self.history.len
    }

    /// Output the operator would produce for `sample`, without recording it.
    pub fn peek(&self, sample: f64) -> f64 {
        let past = dot(&self.weights[1..], self.history.window());
        self.scale * (self.weights[0] * sample + past)
    }

    /// Records `sample` as the newest input without computing an output.
    pub fn push(&mut self, sample: f64) {
        self.history.push(sample);
    }

    pub fn apply(&mut self, sample: f64) -> f64 {
        let y = self.peek(sample);
        self.push(sample);
        y
    }

    /// Clears the input history; weights are kept.
    pub fn reset(&mut self) {
        self.history.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(gl_coefficients(1.0, 4), vec![1.0, -1.0, 0.0, 0.0]);
        assert_eq!(gl_coefficients(0.0, 4), vec![1.0, 0.0, 0.0, 0.0]);
        // hand-unrolled: w_j = w_{j-1} (1 - 1.5/j)
        assert!(close(&gl_coefficients(0.5, 4), &[1.0, -0.5, -0.125, -0.0625], 1e-15));
        // integral weights are all non-negative
        assert!(gl_coefficients(-0.7, 200).iter().all(|w| *w > 0.0));
        assert!(gl_coefficients(-1.0, 50).iter().all(|w| *w == 1.0));
    }

    #[test]
    fn rejects_out_of_range_order() {
        assert!(FracOperator::derivative(0.0, 0.01).is_err());
        assert!(FracOperator::integral(2.0, 0.01).is_err());
        assert!(FracOperator::integral(0.5, 0.0).is_err());
        assert!(FracOperator::new(FracKind::Integral, 0.5, 0.1, 0).is_err());
    }

    #[test]
    fn derivative_of_ramp() {
        let dt = 0.01;
        let mut d = FracOperator::derivative(1.0, dt).unwrap();
        let mut last = 0.0;
        for k in 0..500 {
            last = d.apply(k as f64 * dt);
        }
        assert!((last - 1.0).abs() < 1e-9);
    }

    #[test]
    fn integral_of_constant() {
        let mut op = FracOperator::integral(1.0, 0.1).unwrap();
        let mut out = 0.0;
        for _ in 0..100 {
            out = op.apply(1.0);
        }
        assert!((out - 10.0).abs() / 10.0 < 0.02);
    }

    #[test]
    fn half_integral_of_constant() {
        // Riemann-Liouville: I^0.5 1 = t^0.5 / Γ(1.5), Γ(1.5) = √π / 2
        let gamma_1_5 = std::f64::consts::PI.sqrt() / 2.0;
        let dt = 0.01;
        let mut op = FracOperator::integral(0.5, dt).unwrap();
        for k in 0..2000 {
            let y = op.apply(1.0);
            let t = k as f64 * dt;
            if t >= 1.0 {
                let exact = t.sqrt() / gamma_1_5;
                assert!((y - exact).abs() / exact < 0.05, "t={t}: {y} vs {exact}");
            }
        }
    }

    #[test]
    fn reset_behaviour() {
        let mut op = FracOperator::derivative(0.6, 0.01).unwrap();
        for k in 0..20 {
            op.apply(k as f64);
        }
        op.reset();
        assert_eq!(op.history_len(), 0);
        assert_eq!(op.apply(0.0), 0.0);

        let mut once = FracOperator::integral(0.8, 0.05).unwrap();
        let mut twice = once.clone();
        for x in [1.0, -2.0, 3.5] {
            once.apply(x);
            twice.apply(x);
        }
        once.reset();
        twice.reset();
        twice.reset();
        for x in [0.3, 0.1, -0.9] {
            assert_eq!(once.apply(x), twice.apply(x));
        }
    }

    #[test]
    fn window_is_bounded() {
        let mut op = FracOperator::new(FracKind::Derivative, 0.5, 0.1, 8).unwrap();
        for k in 0..100 {
            op.apply(k as f64);
            assert!(op.history_len() <= 7);
        }
        // with a full window the output is the truncated convolution
        let w = gl_coefficients(0.5, 8);
        let expected: f64 = (0..8).map(|j| w[j] * (100 - j) as f64).sum::<f64>() * 0.1f64.powf(-0.5);
        assert!((op.apply(100.0) - expected).abs() < 1e-9);
    }
}
