use super::Tensor;
use crate::error::{Error, Result};

/// Adam with bias correction. Moment buffers are created lazily on the first
/// step and then tied to parameter position.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Applies one update to every parameter and zeroes its gradient.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Tensor>) -> Result<()> {
        let mut params: Vec<&mut Tensor> = params.into_iter().collect();
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.grad.is_none() {
                return Err(Error::Contract(format!("parameter {i} has no gradient")));
            }
            if self.first[i].len() != p.len() {
                return Err(Error::dim("adam", &[self.first[i].len()], p.shape()));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let grad = p.grad.take().expect("checked above");
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.grad = Some(vec![0.0; grad.len()]);
        }
        Ok(())
    }
}
