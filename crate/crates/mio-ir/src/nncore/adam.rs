use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Bias-corrected Adam. Moment buffers are indexed like the parameter list
/// they were created for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(param_sizes: &[usize]) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn adam_step(
        &mut self,
        params: &mut [Tensor],
        grads: &[Tensor],
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "Adam state tracks {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.numel() != m.len() || g.numel() != m.len() {
                return Err(Error::shape("parameter/gradient size drifted from Adam state"));
            }
            let pd = p.data_mut();
            let gd = g.data();
            for i in 0..pd.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gd[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gd[i] * gd[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut st = AdamState::new(&[3]);
        let mut p = vec![Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()];
        let g = vec![Tensor::zeros(vec![3])];
        st.adam_step(&mut p, &g, 1e-3).unwrap();
        assert_eq!(p[0].data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // With bias correction, |update| = lr * |g| / (|g| + eps') ~ lr for |g| >> eps.
        let mut st = AdamState::new(&[1]);
        let mut p = vec![Tensor::scalar(0.0)];
        let g = vec![Tensor::scalar(3.7)];
        st.adam_step(&mut p, &g, 1e-2).unwrap();
        let update = p[0].item();
        assert!((update.abs() - 1e-2).abs() < 1e-6 * 1e-2 + 1e-9);
        assert!(update < 0.0);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut st = AdamState::new(&[2]);
            let mut p = vec![Tensor::new(vec![2], vec![1.0, -1.0]).unwrap()];
            for i in 0..50 {
                let g = vec![Tensor::new(vec![2], vec![(i as f64).sin(), (i as f64).cos()]).unwrap()];
                st.adam_step(&mut p, &g, 1e-3).unwrap();
            }
            p[0].clone()
        };
        assert_eq!(run(), run());
    }
}
