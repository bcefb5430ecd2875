//! Adam with a decaying step size α/√t and a decaying first-moment rate
//! β1·λ^(t−1).

use crate::error::{Error, Result};
use crate::mlp::{Gradients, Mlp};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    /// Per-step decay of β1.
    pub lambda: T,
    pub epsilon: T,
}

impl<T: Real> Default for AdamConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: T::lit(1e-3),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            lambda: T::lit(0.5),
            epsilon: T::lit(1e-8),
        }
    }
}

impl<T: Real> AdamConfig<T> {
    pub fn check(&self) -> Result<()> {
        let in_unit = |x: T| x >= T::zero() && x < T::one();
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if self.beta2 > T::zero() && self.beta1 * self.beta1 / self.beta2.sqrt() >= T::one() {
            return Err(Error::Config("beta1^2 / sqrt(beta2) must be below 1".into()));
        }
        if self.lambda < T::zero() || self.lambda > T::one() {
            return Err(Error::Config("lambda must lie in [0, 1]".into()));
        }
        if !(self.learning_rate > T::zero()) || self.epsilon < T::zero() {
            return Err(Error::Config("learning rate must be positive and epsilon nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig<T>,
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step_count: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig<T>, n_params: usize) -> Self {
        Self {
            config,
            first_moment: vec![T::zero(); n_params],
            second_moment: vec![T::zero(); n_params],
            step_count: 0,
        }
    }

    /// Coefficients for the next step: (step size α/√t, first-moment rate
    /// β1·λ^(t−1), first bias correction 1−β1^t, second 1−β2^t).
    fn advance(&mut self) -> (T, T, T, T) {
        self.step_count += 1;
        let t = self.step_count;
        let c = &self.config;
        let tf = T::from_u64(t).unwrap();
        let exp = t.min(i32::MAX as u64) as i32;
        let beta1_t = c.beta1 * c.lambda.powi(exp - 1);
        let lr = c.learning_rate / tf.sqrt();
        let bc1 = T::one() - c.beta1.powi(exp);
        let bc2 = T::one() - c.beta2.powi(exp);
        (lr, beta1_t, bc1, bc2)
    }

    #[inline]
    fn update(&mut self, k: usize, param: &mut T, g: T, coeffs: (T, T, T, T)) {
        let (lr, beta1_t, bc1, bc2) = coeffs;
        let c = &self.config;
        let m = beta1_t * self.first_moment[k] + (T::one() - beta1_t) * g;
        let v = c.beta2 * self.second_moment[k] + (T::one() - c.beta2) * g * g;
        self.first_moment[k] = m;
        self.second_moment[k] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        *param -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
    }
}

/// One Adam step on a flat parameter vector.
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Dimension {
            expected: state.first_moment.len(),
            actual: grads.len(),
        });
    }
    let coeffs = state.advance();
    for (k, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
        state.update(k, p, g, coeffs);
    }
    Ok(())
}

/// One Adam step applied in place to a network.
pub fn adam_step_mlp<T: Real>(net: &mut Mlp<T>, grads: &Gradients<T>, state: &mut AdamState<T>) -> Result<()> {
    if net.param_count() != state.first_moment.len() {
        return Err(Error::Dimension {
            expected: state.first_moment.len(),
            actual: net.param_count(),
        });
    }
    let coeffs = state.advance();
    net.zip_params_mut(grads, |k, p, g| state.update(k, p, g, coeffs));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn plain(lr: f64, beta1: f64, beta2: f64, lambda: f64) -> AdamConfig<f64> {
        AdamConfig {
            learning_rate: lr,
            beta1,
            beta2,
            lambda,
            epsilon: 1e-8,
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut s = AdamState::new(AdamConfig::default(), 3);
        for _ in 0..50 {
            adam_step(&mut p, &[0.0; 3], &mut s).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(plain(1e-3, 0.9, 0.999, 1.0), 1);
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        assert_relative_eq!(p[0], -1e-3, max_relative = 1e-6);
    }

    #[test]
    fn sign_descent_without_moments() {
        let mut p = vec![0.0, 0.0];
        let mut s = AdamState::new(plain(0.1, 0.0, 0.0, 1.0), 2);
        let mut expected = 0.0;
        for t in 1..=10 {
            adam_step(&mut p, &[3.0, -0.02], &mut s).unwrap();
            expected += 0.1 / (t as f64).sqrt();
            assert_relative_eq!(p[0], -expected, max_relative = 1e-6);
            assert_relative_eq!(p[1], expected, max_relative = 1e-5);
        }
    }

    #[test]
    fn quadratic_descends_after_burn_in() {
        let mut w = vec![1.0, -1.5];
        let mut s = AdamState::new(plain(0.05, 0.9, 0.999, 0.5), 2);
        let mut losses = Vec::new();
        for _ in 0..500 {
            let g: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
            adam_step(&mut w, &g, &mut s).unwrap();
            losses.push(w.iter().map(|x| x * x).sum::<f64>());
        }
        let window = |i: usize| losses[i..i + 50].iter().sum::<f64>();
        for i in (50..450).step_by(50) {
            assert!(window(i + 50) < window(i), "window at {i}");
        }
        assert!(losses[499] < losses[0]);
    }

    #[test]
    fn second_moment_stays_nonnegative() {
        let mut p = vec![0.3; 4];
        let mut s = AdamState::new(AdamConfig::default(), 4);
        for t in 0..100 {
            let g: Vec<f64> = (0..4).map(|k| ((t * 7 + k) as f64).sin()).collect();
            adam_step(&mut p, &g, &mut s).unwrap();
            assert!(s.second_moment.iter().all(|&v| v >= 0.0));
        }
        assert_eq!(s.step_count, 100);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::<f64>::default().check().is_ok());
        assert!(plain(1e-3, 1.0, 0.999, 0.5).check().is_err());
        assert!(plain(1e-3, 0.9, 0.5, 0.5).check().is_err());
        assert!(plain(1e-3, 0.9, 0.999, 1.5).check().is_err());
    }
}
