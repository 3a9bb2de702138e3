use crate::{NeuralError, Parameter, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Parameter<T>], config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.tensor.numel()]).collect();
        AdamState {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam update of `params` from their current gradients.
///
/// Fails without touching anything if any parameter has no gradient.
pub fn adam_step<T: Scalar>(params: &[Parameter<T>], state: &mut AdamState<T>) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "optimizer tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    let mut grads = Vec::with_capacity(params.len());
    for (i, p) in params.iter().enumerate() {
        let g = p
            .tensor
            .grad()
            .ok_or_else(|| NeuralError::MissingGrad(p.name.clone()))?;
        if state.m[i].len() != g.len() {
            return Err(NeuralError::ShapeMismatch(format!("moment shape for `{}`", p.name)));
        }
        grads.push(g);
    }

    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let b1 = T::of(c.beta1);
    let b2 = T::of(c.beta2);
    let one = T::one();
    let bc1 = T::of(1.0 - c.beta1.powi(t));
    let bc2 = T::of(1.0 - c.beta2.powi(t));
    let lr = T::of(c.learning_rate);
    let eps = T::of(c.epsilon);

    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let mut w = p.tensor.to_vec();
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..w.len() {
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            w[j] = w[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        p.tensor.set_values(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_grad(p: &Parameter<f64>, target: f64) {
        p.tensor.zero_grad();
        let d = p.tensor.add_scalar(-target);
        d.mul(&d).unwrap().sum().backward().unwrap();
    }

    #[test]
    fn first_step_is_a_sign_step() {
        let p = Parameter::new("w", vec![1], vec![1.0]).unwrap();
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(std::slice::from_ref(&p), cfg);
        square_grad(&p, 0.0);
        adam_step(std::slice::from_ref(&p), &mut st).unwrap();
        // m_hat = g, v_hat = g^2 so the step is lr * g / (|g| + eps)
        let w = p.tensor.item();
        assert!((w - 0.9).abs() < 1e-7, "{w}");
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let p = Parameter::new("w", vec![2], vec![0.5, -1.5]).unwrap();
        let mut st = AdamState::new(std::slice::from_ref(&p), AdamConfig::default());
        p.tensor.mul(&crate::Tensor::zeros(vec![2])).unwrap().sum().backward().unwrap();
        adam_step(std::slice::from_ref(&p), &mut st).unwrap();
        assert_eq!(p.tensor.to_vec(), vec![0.5, -1.5]);
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let p = Parameter::new("w", vec![1], vec![0.0]).unwrap();
        let cfg = AdamConfig {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let mut st = AdamState::new(std::slice::from_ref(&p), cfg);
        for _ in 0..2000 {
            square_grad(&p, 3.0);
            adam_step(std::slice::from_ref(&p), &mut st).unwrap();
        }
        let w = p.tensor.item();
        assert!((w - 3.0).abs() <= 1e-3, "{w}");
    }

    #[test]
    fn missing_grad_is_reported() {
        let p = Parameter::<f64>::new("dangling", vec![1], vec![1.0]).unwrap();
        let mut st = AdamState::new(std::slice::from_ref(&p), AdamConfig::default());
        assert_eq!(
            adam_step(std::slice::from_ref(&p), &mut st),
            Err(NeuralError::MissingGrad("dangling".into()))
        );
        assert_eq!(st.step, 0);
    }
}
