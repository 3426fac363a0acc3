//! Dense-layer building blocks with hand-written backprop and Adam.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// Fully connected layer; weights are (fan_in, fan_out).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    /// Xavier-uniform initialization.
    pub fn init<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound));
        Self {
            w,
            b: Array1::zeros(fan_out),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Backprop through `y = x W + b`: accumulates into `grad`, returns dx.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut LinearGrad) -> Array2<f64> {
        grad.w += &x.t().dot(dy);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }

    pub fn zero_grad(&self) -> LinearGrad {
        LinearGrad {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LinearGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

pub(crate) fn tanh(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(f64::tanh)
}

/// Gradient through tanh given its output: dy * (1 - y^2).
pub(crate) fn tanh_backward(y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    dy * &y.mapv(|v| 1.0 - v * v)
}

/// Adam state for one layer.
#[derive(Debug, Clone)]
pub(crate) struct AdamLayer {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
}

impl AdamLayer {
    pub fn new(layer: &Linear) -> Self {
        Self {
            m_w: Array2::zeros(layer.w.raw_dim()),
            v_w: Array2::zeros(layer.w.raw_dim()),
            m_b: Array1::zeros(layer.b.raw_dim()),
            v_b: Array1::zeros(layer.b.raw_dim()),
        }
    }

    pub fn update(&mut self, layer: &mut Linear, grad: &LinearGrad, lr: f64, t: usize) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let t = t as i32;
        let c1 = 1.0 - B1.powi(t);
        let c2 = 1.0 - B2.powi(t);

        azip_update(&mut self.m_w, &mut self.v_w, &grad.w, &mut layer.w, lr, c1, c2, B1, B2, EPS);
        for i in 0..layer.b.len() {
            let g = grad.b[i];
            self.m_b[i] = B1 * self.m_b[i] + (1.0 - B1) * g;
            self.v_b[i] = B2 * self.v_b[i] + (1.0 - B2) * g * g;
            let m_hat = self.m_b[i] / c1;
            let v_hat = self.v_b[i] / c2;
            layer.b[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn azip_update(
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    g: &Array2<f64>,
    p: &mut Array2<f64>,
    lr: f64,
    c1: f64,
    c2: f64,
    b1: f64,
    b2: f64,
    eps: f64,
) {
    ndarray::Zip::from(m)
        .and(v)
        .and(g)
        .and(p)
        .for_each(|m, v, &g, p| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
}
