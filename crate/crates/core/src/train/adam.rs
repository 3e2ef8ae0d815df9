//! Adam optimizer over the flat parameter vector.

use crate::error::{Error, Result};

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(params: usize) -> Self {
        AdamState { m: vec![0.0; params], v: vec![0.0; params], t: 0 }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam over {} params, {} grads, {} state entries",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut st, 0.1, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_against_gradient_sign() {
        let mut p = vec![0.0, 0.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.5, -2.0], &mut st, 0.01, 0.9, 0.999, 1e-8).unwrap();
        // Bias correction makes the very first update -lr * g/(|g|+eps).
        assert!((p[0] + 0.01).abs() < 1e-6);
        assert!((p[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn constant_gradient_update_magnitude_approaches_lr() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1);
        let mut prev = 0.0;
        let mut step = 0.0;
        for _ in 0..200 {
            adam_step(&mut p, &[0.37], &mut st, 0.05, 0.9, 0.999, 1e-8).unwrap();
            step = prev - p[0];
            prev = p[0];
        }
        assert!((step - 0.05).abs() < 1e-4, "limit step {step} should approach lr");
    }
}
