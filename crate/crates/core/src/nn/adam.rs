use super::mlp::{Gradients, Mlp};

/// Adaptive-moment gradient descent over the flat parameter vector of one
/// network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, params: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; params],
            v: vec![0.0; params],
        }
    }

    pub fn for_net(learning_rate: f64, net: &Mlp) -> Self {
        Self::new(learning_rate, net.param_count())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Activation, Dense};
    use ndarray::array;

    #[test]
    fn first_step_moves_each_parameter_by_lr() {
        // with bias correction the first update is lr * sign(g)
        let mut net = Mlp {
            layers: vec![Dense {
                weights: array![[1.0], [2.0]],
                bias: array![0.5],
            }],
            activation: Activation::Identity,
        };
        let grads = Gradients {
            layers: vec![Dense {
                weights: array![[3.0], [-0.01]],
                bias: array![0.0],
            }],
        };
        let mut opt = Adam::for_net(0.1, &net);
        opt.step(&mut net, &grads);
        let p = net.params_vec();
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - 2.1).abs() < 1e-5);
        assert_eq!(p[2], 0.5);
    }
}
