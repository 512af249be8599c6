use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Elu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z`, given `a = apply(z)`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(inputs, outputs)`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs).max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        Dense {
            weights: Array2::from_shape_simple_fn((inputs, outputs), || rng.sample(dist)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights);
        z += &self.bias;
        z
    }
}

/// Fully connected network: every hidden layer uses `activation`, the final
/// layer is linear (output heads live in [`super::loss`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Intermediate values of a forward pass, needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights *= s;
            l.bias *= s;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }
}

impl Mlp {
    /// `sizes = [inputs, hidden..., outputs]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an Mlp needs at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Mlp { layers, activation }
    }

    pub fn with_zero_output(mut self) -> Self {
        let last = self.layers.last_mut().expect("nonempty");
        last.weights.fill(0.0);
        last.bias.fill(0.0);
        self
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.forward(a.view());
            if i < last {
                let act = self.activation;
                a.mapv_inplace(|z| act.apply(z));
            }
        }
        a
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Trace {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(a.view());
            inputs.push(a);
            if i < last {
                let act = self.activation;
                a = z.mapv(|v| act.apply(v));
                pre.push(z);
            } else {
                a = z;
            }
        }
        Trace {
            inputs,
            pre,
            output: a,
        }
    }

    /// Back-propagates `d_output` (gradient of the loss w.r.t. the network
    /// output) and returns parameter gradients plus the gradient w.r.t. the
    /// network input.
    pub fn backward(&self, trace: &Trace, d_output: ArrayView2<f64>) -> (Gradients, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_output.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let a_prev = &trace.inputs[i];
            grads.push(Dense {
                weights: a_prev.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            let mut d_prev = delta.dot(&layer.weights.t());
            if i > 0 {
                let act = self.activation;
                Zip::from(&mut d_prev)
                    .and(&trace.pre[i - 1])
                    .and(a_prev)
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            }
            delta = d_prev;
        }
        grads.reverse();
        (Gradients { layers: grads }, delta)
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn params_vec(&self) -> Vec<f64> {
        self.params().collect()
    }

    pub fn set_params(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.param_count());
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
    }

    /// Layer shapes, for checkpoints.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.inputs(), l.outputs())).collect()
    }

    pub fn from_shapes(shapes: &[(usize, usize)], activation: Activation, params: &[f64]) -> Self {
        let mut net = Mlp {
            layers: shapes.iter().map(|&(i, o)| Dense::zeros(i, o)).collect(),
            activation,
        };
        net.set_params(params);
        net
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::array;

    #[test]
    fn forward_matches_predict() {
        let mut rng = seed::rng(1);
        let net = Mlp::new(&[3, 5, 2], Activation::Tanh, &mut rng);
        let x = array![[0.1, -0.2, 0.3], [1.0, 2.0, -1.0]];
        assert_eq!(net.forward(x.view()).output, net.predict(x.view()));
    }

    #[test]
    fn param_roundtrip() {
        let mut rng = seed::rng(2);
        let net = Mlp::new(&[4, 3, 1], Activation::Elu, &mut rng);
        let p = net.params_vec();
        let copy = Mlp::from_shapes(&net.shapes(), Activation::Elu, &p);
        assert_eq!(copy, net);
    }

    #[test]
    fn elu_derivative_is_continuous_at_zero() {
        let a = Activation::Elu;
        let left = a.derivative(-1e-12, a.apply(-1e-12));
        let right = a.derivative(1e-12, a.apply(1e-12));
        assert!((left - right).abs() < 1e-9);
    }
}
