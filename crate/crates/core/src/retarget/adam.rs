use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Adam with bias-corrected moments, one moment pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(lr: f64, params: &[Tensor]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    /// One update of `params` in place along `grads`.
    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::usage("optimizer state does not match the parameters"));
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.len() != self.m[k].len() {
                return Err(Error::usage("gradient shape does not match its parameter"));
            }
            if self.lr == 0.0 {
                // Moments still advance so a later nonzero rate sees the same state.
                for (i, &gi) in g.as_slice().iter().enumerate() {
                    self.m[k][i] = self.beta1 * self.m[k][i] + (1.0 - self.beta1) * gi;
                    self.v[k][i] = self.beta2 * self.v[k][i] + (1.0 - self.beta2) * gi * gi;
                }
                continue;
            }
            let data = p.as_mut_slice();
            for (i, &gi) in g.as_slice().iter().enumerate() {
                let m = self.beta1 * self.m[k][i] + (1.0 - self.beta1) * gi;
                let v = self.beta2 * self.v[k][i] + (1.0 - self.beta2) * gi * gi;
                self.m[k][i] = m;
                self.v[k][i] = v;
                data[i] -= self.lr * (m / c1) / ((v / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Scale `grads` so their joint Euclidean norm is at most `max_norm`;
/// returns the norm before scaling.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::squared_norm).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            *g = g.map(|x| x * k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_the_gradient_sign() {
        let mut p = vec![Tensor::column(&[1.0, -2.0, 0.5])];
        let mut opt = Adam::new(0.1, &p);
        let g = vec![Tensor::column(&[3.0, -0.01, 0.0])];
        opt.update(&mut p, &g).unwrap();
        let d = p[0].as_slice();
        assert!((d[0] - 0.9).abs() < 1e-9);
        assert!((d[1] + 1.9).abs() < 1e-6);
        assert_eq!(d[2], 0.5);
    }

    #[test]
    fn zero_rate_leaves_parameters_bit_identical() {
        let p0 = vec![Tensor::column(&[0.3, -0.7])];
        let mut p = p0.clone();
        let mut opt = Adam::new(0.0, &p);
        for _ in 0..5 {
            opt.update(&mut p, &[Tensor::column(&[1.0, 2.0])]).unwrap();
        }
        assert_eq!(p, p0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![Tensor::column(&[4.0, -3.0])];
        let mut opt = Adam::new(0.05, &p);
        for _ in 0..2000 {
            let g = p[0].map(|x| 2.0 * x);
            opt.update(&mut p, &[g]).unwrap();
        }
        assert!(p[0].squared_norm() < 1e-4);
    }

    #[test]
    fn clipping_caps_the_joint_norm() {
        let mut g = vec![Tensor::column(&[3.0]), Tensor::column(&[4.0])];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        let n: f64 = g.iter().map(Tensor::squared_norm).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }
}
