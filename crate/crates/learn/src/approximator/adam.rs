use serde::{Deserialize, Serialize};

use crate::error::LearnError;

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one descent step along `grad`. A non-finite gradient is
    /// rejected before any state changes.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), LearnError> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(LearnError::Dimension {
                what: "optimizer state",
                expected: self.m.len(),
                got: grad.len().min(params.len()),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(LearnError::NonFinite("gradient"));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_fresh_state_is_a_no_op() {
        let mut p = vec![0.3, -1.2, 4.0];
        let before = p.clone();
        let mut opt = Adam::new(1e-3, 3);
        opt.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut p = vec![0.0, 0.0];
        let mut opt = Adam::new(1e-2, 2);
        for _ in 0..200 {
            opt.step(&mut p, &[2.0, -0.5]).unwrap();
        }
        assert!(p[0] < -1.0);
        assert!(p[1] > 1.0);
    }

    #[test]
    fn identical_states_give_identical_updates() {
        let mut a = Adam::new(1e-3, 2);
        let mut pa = vec![1.0, 2.0];
        a.step(&mut pa, &[0.1, 0.2]).unwrap();
        let mut b = a.clone();
        let mut pb = pa.clone();
        a.step(&mut pa, &[-0.3, 0.7]).unwrap();
        b.step(&mut pb, &[-0.3, 0.7]).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut opt = Adam::new(1e-3, 1);
        let mut p = vec![1.0];
        assert!(matches!(opt.step(&mut p, &[f64::NAN]), Err(LearnError::NonFinite(_))));
        assert_eq!(p, vec![1.0]);
        assert_eq!(opt.steps(), 0);
    }
}
