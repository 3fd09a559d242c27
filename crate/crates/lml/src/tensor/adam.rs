//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    /// Betas default to (0.5, 0.999); lr to 1e-4.
    pub fn new(param_shapes: &[Vec<usize>], lr: f64, beta1: f64, beta2: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            epsilon: 1e-8,
            step: 0,
            m: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    pub fn set_moments(&mut self, m: Vec<Tensor>, v: Vec<Tensor>, step: u64) {
        self.m = m;
        self.v = v;
        self.step = step;
    }

    /// One update over a parameter list. Missing gradients leave the
    /// corresponding parameter (and its moments) untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<Tensor>]) -> Result<()> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let Some(g) = &grads[i] else { continue };
            if g.shape() != params[i].shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    detail: format!("param {:?} vs grad {:?}", params[i].shape(), g.shape()),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite { op: "adam_step" });
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::from_vec(vec![1.0, -2.0]);
        let before = p.clone();
        let mut st = AdamState::new(&[vec![2]], 1e-4, 0.5, 0.999);
        st.step(&mut [&mut p], &[Some(Tensor::zeros(&[2]))]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn single_step_moves_by_lr() {
        // hand evaluation: m = (1-b1)g, v = (1-b2)g², after bias correction
        // mhat = g, vhat = g², so delta = -lr·g/(|g|+eps) ≈ -lr for g=1
        let mut p = Tensor::scalar(0.0);
        let mut st = AdamState::new(&[vec![1]], 1e-4, 0.5, 0.999);
        st.step(&mut [&mut p], &[Some(Tensor::scalar(1.0))]).unwrap();
        assert!((p.item() + 1e-4).abs() < 1e-9);
    }

    #[test]
    fn quadratic_descent_is_monotone() {
        // minimize f(x) = x² with exact gradients for 1000 steps
        let mut p = Tensor::scalar(3.0);
        let mut st = AdamState::new(&[vec![1]], 0.01, 0.5, 0.999);
        let mut last = f64::INFINITY;
        let mut worst_increase: f64 = 0.0;
        for _ in 0..1000 {
            let g = Tensor::scalar(2.0 * p.item());
            st.step(&mut [&mut p], &[Some(g)]).unwrap();
            let f = p.item() * p.item();
            worst_increase = worst_increase.max(f - last);
            last = f;
        }
        assert!(last < 1e-3, "loss after 1000 steps: {last}");
        assert!(worst_increase <= 0.0, "loss increased by {worst_increase}");
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = Tensor::scalar(0.0);
        let mut st = AdamState::new(&[vec![1]], 1e-4, 0.5, 0.999);
        assert!(st
            .step(&mut [&mut p], &[Some(Tensor::scalar(f64::NAN))])
            .is_err());
    }
}
