use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Config(format!(
                "Adam state holds {} parameters, got {} params and {} gradients",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut adam = AdamState::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 3.0];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_is_learning_rate_sized() {
        let mut adam = AdamState::new(2, 1e-3);
        let mut p = vec![0.0, 0.0];
        adam.step(&mut p, &[5.0, -0.02]).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-9);
        assert!((p[1] - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn minimises_square() {
        let mut adam = AdamState::new(1, 1e-2);
        let mut x = [1.0];
        let mut prev = 1.0_f64;
        for _ in 0..100 {
            let g = [2.0 * x[0]];
            adam.step(&mut x, &g).unwrap();
            assert!(x[0].abs() < prev);
            prev = x[0].abs();
        }
        assert!(x[0].abs() < 0.5);
    }

    #[test]
    fn shape_mismatch() {
        let mut adam = AdamState::new(2, 1e-3);
        assert!(adam.step(&mut [0.0], &[0.0]).is_err());
    }
}
