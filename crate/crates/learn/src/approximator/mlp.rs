use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Fully-connected network layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
    /// Multiplier on the initial range of the last layer.
    pub final_layer_scale: f64,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, hidden: Activation, output: Activation) -> Self {
        Self {
            widths,
            hidden,
            output,
            final_layer_scale: 1.0,
        }
    }

    pub fn with_final_layer_scale(mut self, scale: f64) -> Self {
        self.final_layer_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.widths.len() < 3 {
            return Err(LearnError::Spec("a network needs at least one hidden layer".into()));
        }
        if self.widths.contains(&0) {
            return Err(LearnError::Spec("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers() {
            self.output
        } else {
            self.hidden
        }
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `inputs[l]` is the input to layer `l`; the last entry is the output.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().unwrap()
    }
}

/// Network parameters in one flat vector, layer by layer: weights
/// (row-major, `out × in`) then biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
}

impl Mlp {
    /// Uniform fan-in initialization: every weight and bias of a layer with
    /// `fan_in` inputs is drawn from `±1/√fan_in`.
    pub fn new(spec: MlpSpec, rng: &mut impl Rng) -> Result<Self, LearnError> {
        spec.validate()?;
        let mut params = Vec::with_capacity(spec.param_count());
        let layers = spec.layers();
        for (l, w) in spec.widths.windows(2).enumerate() {
            let mut bound = 1.0 / (w[0] as f64).sqrt();
            if l + 1 == layers {
                bound *= spec.final_layer_scale;
            }
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-1.0..=1.0) * bound);
            }
        }
        Ok(Self { spec, params })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self, LearnError> {
        spec.validate()?;
        let params = vec![0.0; spec.param_count()];
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self, LearnError> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(LearnError::Dimension {
                what: "parameter vector",
                expected: spec.param_count(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(LearnError::NonFinite("parameters"));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Hard copy of another network's parameters.
    pub fn copy_from(&mut self, other: &Mlp) {
        debug_assert_eq!(self.spec, other.spec);
        self.params.copy_from_slice(&other.params);
    }

    fn check_input(&self, x: &[f64]) -> Result<(), LearnError> {
        if x.len() != self.spec.input_dim() {
            return Err(LearnError::Dimension {
                what: "network input",
                expected: self.spec.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        self.check_input(x)?;
        let mut current = x.to_vec();
        let mut offset = 0;
        for (l, w) in self.spec.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let act = self.spec.activation(l);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            current = (0..fan_out)
                .map(|o| act.apply(bias[o] + dot(&weights[o * fan_in..(o + 1) * fan_in], &current)))
                .collect();
            offset += fan_in * fan_out + fan_out;
        }
        Ok(current)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace, LearnError> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.spec.widths.len());
        let mut pre = Vec::with_capacity(self.spec.layers());
        inputs.push(x.to_vec());
        let mut offset = 0;
        for (l, w) in self.spec.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let act = self.spec.activation(l);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let input = inputs.last().unwrap();
            let z: Vec<f64> = (0..fan_out)
                .map(|o| bias[o] + dot(&weights[o * fan_in..(o + 1) * fan_in], input))
                .collect();
            inputs.push(z.iter().map(|&v| act.apply(v)).collect());
            pre.push(z);
            offset += fan_in * fan_out + fan_out;
        }
        Ok(Trace { inputs, pre })
    }

    /// Reverse pass. Adds `∂(upstream · output)/∂θ` into `param_grad` and
    /// returns the gradient with respect to the input.
    pub fn backward_into(
        &self,
        trace: &Trace,
        upstream: &[f64],
        param_grad: &mut [f64],
    ) -> Result<Vec<f64>, LearnError> {
        self.backward(trace, upstream, Some(param_grad))
    }

    /// Gradient of `upstream · f(x)` with respect to the input only.
    pub fn input_gradient(&self, trace: &Trace, upstream: &[f64]) -> Result<Vec<f64>, LearnError> {
        self.backward(trace, upstream, None)
    }

    fn backward(
        &self,
        trace: &Trace,
        upstream: &[f64],
        mut param_grad: Option<&mut [f64]>,
    ) -> Result<Vec<f64>, LearnError> {
        if upstream.len() != self.spec.output_dim() {
            return Err(LearnError::Dimension {
                what: "upstream gradient",
                expected: self.spec.output_dim(),
                got: upstream.len(),
            });
        }
        if let Some(g) = &param_grad {
            if g.len() != self.params.len() {
                return Err(LearnError::Dimension {
                    what: "gradient buffer",
                    expected: self.params.len(),
                    got: g.len(),
                });
            }
        }
        let mut offsets = Vec::with_capacity(self.spec.layers());
        let mut offset = 0;
        for w in self.spec.widths.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }

        let mut delta = upstream.to_vec();
        for l in (0..self.spec.layers()).rev() {
            let (fan_in, fan_out) = (self.spec.widths[l], self.spec.widths[l + 1]);
            let act = self.spec.activation(l);
            let z = &trace.pre[l];
            let a = &trace.inputs[l + 1];
            for o in 0..fan_out {
                delta[o] *= act.derivative(z[o], a[o]);
            }
            let input = &trace.inputs[l];
            let base = offsets[l];
            if let Some(param_grad) = param_grad.as_deref_mut() {
                let (w_grad, rest) = param_grad[base..].split_at_mut(fan_in * fan_out);
                for o in 0..fan_out {
                    let d = delta[o];
                    if d != 0.0 {
                        for (g, x) in w_grad[o * fan_in..(o + 1) * fan_in].iter_mut().zip(input) {
                            *g += d * x;
                        }
                    }
                    rest[o] += d;
                }
            }
            let weights = &self.params[base..base + fan_in * fan_out];
            let mut next = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d != 0.0 {
                    for (n, w) in next.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                        *n += d * w;
                    }
                }
            }
            delta = next;
        }
        Ok(delta)
    }

    /// Sign pattern of every ReLU pre-activation in `trace`. Gradient checks
    /// use it to detect finite-difference steps that cross a kink.
    pub fn relu_pattern(&self, trace: &Trace) -> Vec<bool> {
        trace
            .pre
            .iter()
            .enumerate()
            .filter(|(l, _)| self.spec.activation(*l) == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|&v| v > 0.0))
            .collect()
    }

    /// Parameter and input gradients of `upstream · f(x)`.
    pub fn gradient(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>), LearnError> {
        let trace = self.forward_trace(x)?;
        let mut grad = vec![0.0; self.params.len()];
        let input_grad = self.backward_into(&trace, upstream, &mut grad)?;
        Ok((grad, input_grad))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
