//! Small fully connected relu networks over flat parameter vectors.
//!
//! Parameters are stored layer by layer, weights row-major then biases, so
//! a whole network is one contiguous slice of the game state. Hidden layers
//! use relu, the output layer is linear (raw logits for the critic, raw
//! coordinates for the generator).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Var};

/// Layer widths from input to output, e.g. `[16, 8, 8, 2]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArch {
    layer_dims: Vec<usize>,
}

impl MlpArch {
    pub fn new(layer_dims: Vec<usize>) -> Self {
        assert!(layer_dims.len() >= 2, "need at least input and output");
        assert!(layer_dims.iter().all(|&d| d >= 1));
        Self { layer_dims }
    }

    /// `hidden_layers` hidden layers of `hidden_units` units each.
    pub fn with_hidden(input: usize, hidden_layers: usize, hidden_units: usize, output: usize) -> Self {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat(hidden_units).take(hidden_layers));
        dims.push(output);
        Self::new(dims)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Weight shapes `(out, in)` per layer.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.layer_dims
            .windows(2)
            .map(|w| (w[1], w[0]))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.weight_shapes()
            .iter()
            .map(|(out, inp)| out * inp + out)
            .sum()
    }
}

/// A network with concrete parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub arch: MlpArch,
    pub values: Vec<f64>,
}

impl MlpParams {
    pub fn new(arch: MlpArch, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), arch.param_count());
        Self { arch, values }
    }

    pub fn init(arch: MlpArch, rng: &mut ChaCha8Rng) -> Self {
        let values = init_params(&arch, rng);
        Self { arch, values }
    }
}

/// He-style initialization: weights N(0, 2/fan_in), biases zero.
pub fn init_params(arch: &MlpArch, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut values = Vec::with_capacity(arch.param_count());
    for (out, inp) in arch.weight_shapes() {
        let std = (2.0 / inp as f64).sqrt();
        for _ in 0..out * inp {
            let z: f64 = rng.sample(StandardNormal);
            values.push(std * z);
        }
        values.extend(std::iter::repeat(0.0).take(out));
    }
    values
}

/// Plain forward pass over `f64` values.
pub fn mlp_forward(arch: &MlpArch, params: &[f64], input: &[f64]) -> Vec<f64> {
    assert_eq!(params.len(), arch.param_count());
    assert_eq!(input.len(), arch.input_dim());
    let shapes = arch.weight_shapes();
    let last = shapes.len() - 1;
    let mut activ = input.to_vec();
    let mut offset = 0;
    for (layer, (out, inp)) in shapes.iter().enumerate() {
        let weights = &params[offset..offset + out * inp];
        let biases = &params[offset + out * inp..offset + out * inp + out];
        offset += out * inp + out;
        let mut next = Vec::with_capacity(*out);
        for u in 0..*out {
            let mut z = biases[u];
            for j in 0..*inp {
                z += weights[u * inp + j] * activ[j];
            }
            if layer < last && z <= 0.0 {
                z = 0.0;
            }
            next.push(z);
        }
        activ = next;
    }
    activ
}

fn layer(
    tape: &Tape,
    weights: &[Var],
    biases: &[Var],
    out: usize,
    inp: usize,
    input: &[Var],
    relu: bool,
) -> Vec<Var> {
    let mut next = Vec::with_capacity(out);
    for u in 0..out {
        let mut terms: Vec<Var> = Vec::with_capacity(inp + 1);
        for j in 0..inp {
            terms.push(&weights[u * inp + j] * &input[j]);
        }
        terms.push(biases[u].clone());
        let z = tape.sum(&terms);
        next.push(if relu { z.relu() } else { z });
    }
    next
}

/// Forward pass recorded on a tape; parameters and inputs are tape
/// variables (inputs may be constants created by the caller).
pub fn mlp_forward_vars(tape: &Tape, arch: &MlpArch, params: &[Var], input: &[Var]) -> Vec<Var> {
    assert_eq!(params.len(), arch.param_count());
    assert_eq!(input.len(), arch.input_dim());
    let shapes = arch.weight_shapes();
    let last = shapes.len() - 1;
    let mut offset = 0;
    let mut activ: Vec<Var> = input.to_vec();
    for (idx, (out, inp)) in shapes.iter().enumerate() {
        let weights = &params[offset..offset + out * inp];
        let biases = &params[offset + out * inp..offset + out * inp + out];
        offset += out * inp + out;
        activ = layer(tape, weights, biases, *out, *inp, &activ, idx < last);
    }
    activ
}
