use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

/// Layer widths of a fully connected network. The activation applies to hidden layers
/// only; the output layer is linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub const DEFAULT_HIDDEN: [usize; 3] = [256, 128, 64];

    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        MlpSpec { input_dim, hidden_dims, output_dim, activation: Activation::Relu }
    }

    /// `input -> [256, 128, 64] -> output` with ReLU.
    pub fn standard(input_dim: usize, output_dim: usize) -> Self {
        Self::new(input_dim, Self::DEFAULT_HIDDEN.to_vec(), output_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Shape(format!("all MLP dims must be >= 1, got {self:?}")));
        }
        Ok(())
    }

    /// Widths of every layer boundary, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_dims);
        w.push(self.output_dim);
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    w_offset: usize,
    b_offset: usize,
}

/// Parameters of an MLP, stored flat: per layer the `fan_in x fan_out` weight matrix
/// (row-major) followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<LayerLayout>,
    params: Vec<f64>,
}

/// Activations recorded by a forward pass, consumed by the backward passes.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    batch: usize,
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l` (post-activation).
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_recorded(&self) -> bool {
        !self.acts.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn clear(&mut self) {
        self.acts.clear();
        self.batch = 0;
    }

    /// Output of the recorded forward pass.
    pub fn output(&self) -> Option<&[f64]> {
        self.acts.last().map(|v| v.as_slice())
    }
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let widths = spec.widths();
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w_offset = offset;
            let b_offset = w_offset + fan_in * fan_out;
            offset = b_offset + fan_out;
            layers.push(LayerLayout { fan_in, fan_out, w_offset, b_offset });
        }
        Ok(Mlp { spec, layers, params: vec![0.0; offset] })
    }

    /// He-scaled uniform weights, zero biases, output layer multiplied by `output_scale`.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, output_scale: f64, rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(spec)?;
        let n = mlp.layers.len();
        for (i, layer) in mlp.layers.clone().into_iter().enumerate() {
            let bound = (6.0 / layer.fan_in as f64).sqrt();
            let scale = if i + 1 == n { output_scale } else { 1.0 };
            for w in &mut mlp.params[layer.w_offset..layer.b_offset] {
                *w = scale * rng.random_range(-bound..bound);
            }
        }
        Ok(mlp)
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        let mut mlp = Self::zeros(spec)?;
        if params.len() != mlp.params.len() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", mlp.params.len(), params.len())));
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight matrix (`fan_in x fan_out`, row-major) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let ly = self.layers[l];
        (&self.params[ly.w_offset..ly.b_offset], &self.params[ly.b_offset..ly.b_offset + ly.fan_out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let ly = self.layers[l];
        let (w, rest) = self.params[ly.w_offset..ly.b_offset + ly.fan_out].split_at_mut(ly.b_offset - ly.w_offset);
        (w, rest)
    }

    fn check_input(&self, input: &Tensor) -> Result<usize> {
        if input.last_dim() != self.spec.input_dim {
            return Err(Error::Shape(format!("input last dimension {} does not match MLP input_dim {}", input.last_dim(), self.spec.input_dim)));
        }
        Ok(input.rows())
    }

    fn layer_forward(&self, l: usize, batch: usize, x: &[f64]) -> Vec<f64> {
        let ly = self.layers[l];
        let (w, b) = self.layer(l);
        let mut out = Vec::with_capacity(batch * ly.fan_out);
        for _ in 0..batch {
            out.extend_from_slice(b);
        }
        gemm(batch, ly.fan_in, ly.fan_out, 1.0, x, false, w, false, 1.0, &mut out);
        if l + 1 < self.layers.len() {
            for v in &mut out {
                if *v <= 0.0 {
                    *v = 0.0;
                }
            }
        }
        out
    }

    /// Inference-only forward pass.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let batch = self.check_input(input)?;
        let mut x = self.layer_forward(0, batch, input.data());
        for l in 1..self.layers.len() {
            x = self.layer_forward(l, batch, &x);
        }
        Tensor::matrix(batch, self.spec.output_dim, x)
    }

    /// Forward pass that records activations into `tape`, replacing its contents.
    pub fn forward_recorded(&self, input: &Tensor, tape: &mut Tape) -> Result<Tensor> {
        let batch = self.check_input(input)?;
        tape.clear();
        tape.batch = batch;
        tape.acts.push(input.data().to_vec());
        for l in 0..self.layers.len() {
            let next = self.layer_forward(l, batch, &tape.acts[l]);
            tape.acts.push(next);
        }
        let out = tape.acts.last().cloned().unwrap_or_default();
        Tensor::matrix(batch, self.spec.output_dim, out)
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        if !tape.is_recorded() {
            return Err(Error::State("backward called without a recorded forward pass".into()));
        }
        if tape.acts.len() != self.layers.len() + 1 || tape.acts[0].len() != tape.batch * self.spec.input_dim {
            return Err(Error::State("tape was recorded by a network of a different shape".into()));
        }
        Ok(())
    }

    /// Reverse pass. `grad_output` is dL/d(output) with the output's shape. Parameter
    /// gradients are accumulated into `param_grads`; the input gradient is returned.
    pub fn backward_into(&self, tape: &Tape, grad_output: &[f64], param_grads: &mut [f64]) -> Result<Vec<f64>> {
        self.check_tape(tape)?;
        let batch = tape.batch;
        if grad_output.len() != batch * self.spec.output_dim {
            return Err(Error::Shape(format!("output gradient has {} values, expected {}", grad_output.len(), batch * self.spec.output_dim)));
        }
        if param_grads.len() != self.params.len() {
            return Err(Error::Shape("gradient buffer does not match parameter count".into()));
        }
        let mut delta = grad_output.to_vec();
        for l in (0..self.layers.len()).rev() {
            let ly = self.layers[l];
            if l + 1 < self.layers.len() {
                // relu'(z) = 1 for z > 0, 0 otherwise (including z = 0)
                for (d, &a) in delta.iter_mut().zip(&tape.acts[l + 1]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let (gw, gb) = param_grads[ly.w_offset..ly.b_offset + ly.fan_out].split_at_mut(ly.b_offset - ly.w_offset);
            gemm(ly.fan_in, batch, ly.fan_out, 1.0, &tape.acts[l], true, &delta, false, 1.0, gw);
            for row in delta.chunks_exact(ly.fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            let (w, _) = self.layer(l);
            let mut prev = vec![0.0; batch * ly.fan_in];
            gemm(batch, ly.fan_out, ly.fan_in, 1.0, &delta, false, w, true, 0.0, &mut prev);
            delta = prev;
        }
        Ok(delta)
    }

    /// Reverse pass returning fresh parameter and input gradients.
    pub fn backward(&self, tape: &Tape, grad_output: &[f64]) -> Result<Gradients> {
        let mut params = vec![0.0; self.params.len()];
        let input = self.backward_into(tape, grad_output, &mut params)?;
        Ok(Gradients { params, input })
    }

    /// Input-gradient penalty for a scalar-output network.
    ///
    /// For each recorded sample `b` computes `p_b = |dD/dx (x_b)|^2` and accumulates
    /// `sum_b weights[b] * dp_b/dtheta` into `param_grads`. ReLU masks are piecewise
    /// constant, so the penalty depends only on the weights and bias gradients vanish.
    pub fn input_grad_penalty_into(&self, tape: &Tape, weights: &[f64], param_grads: &mut [f64]) -> Result<Vec<f64>> {
        self.check_tape(tape)?;
        if self.spec.output_dim != 1 {
            return Err(Error::Shape("input-gradient penalty needs a scalar-output network".into()));
        }
        let batch = tape.batch;
        if weights.len() != batch {
            return Err(Error::Shape(format!("{} penalty weights for batch {batch}", weights.len())));
        }
        if param_grads.len() != self.params.len() {
            return Err(Error::Shape("gradient buffer does not match parameter count".into()));
        }
        let n_layers = self.layers.len();
        // deltas[l]: d(output)/d(pre-activation of layer l), shape [batch, fan_out(l)].
        let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
        deltas[n_layers - 1] = vec![1.0; batch];
        for l in (1..n_layers).rev() {
            let ly = self.layers[l];
            let (w, _) = self.layer(l);
            let mut prev = vec![0.0; batch * ly.fan_in];
            gemm(batch, ly.fan_out, ly.fan_in, 1.0, &deltas[l], false, w, true, 0.0, &mut prev);
            for (d, &a) in prev.iter_mut().zip(&tape.acts[l]) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            deltas[l - 1] = prev;
        }
        let ly0 = self.layers[0];
        let (w0, _) = self.layer(0);
        let mut g = vec![0.0; batch * ly0.fan_in];
        gemm(batch, ly0.fan_out, ly0.fan_in, 1.0, &deltas[0], false, w0, true, 0.0, &mut g);
        let penalties: Vec<f64> = g.chunks_exact(ly0.fan_in).map(|r| r.iter().map(|v| v * v).sum()).collect();

        // Reverse through the linear map theta -> g with the masks frozen.
        let mut a: Vec<f64> = g.chunks_exact(ly0.fan_in).zip(weights).flat_map(|(r, &c)| r.iter().map(move |v| 2.0 * c * v)).collect();
        for l in 0..n_layers {
            let ly = self.layers[l];
            let gw = &mut param_grads[ly.w_offset..ly.b_offset];
            gemm(ly.fan_in, batch, ly.fan_out, 1.0, &a, true, &deltas[l], false, 1.0, gw);
            if l + 1 < n_layers {
                let (w, _) = self.layer(l);
                let mut next = vec![0.0; batch * ly.fan_out];
                gemm(batch, ly.fan_in, ly.fan_out, 1.0, &a, false, w, false, 0.0, &mut next);
                for (v, &act) in next.iter_mut().zip(&tape.acts[l + 1]) {
                    if act <= 0.0 {
                        *v = 0.0;
                    }
                }
                a = next;
            }
        }
        Ok(penalties)
    }
}

/// Result of [`Mlp::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}
