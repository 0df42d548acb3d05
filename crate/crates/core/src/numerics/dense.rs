use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::NumericsError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Softplus => softplus(x),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(x),
            Activation::Identity => 1.0,
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerShape {
    fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// A chain of fully-connected layers stored in one flat parameter vector.
///
/// Each layer contributes an input-major weight block (`inputs × outputs`)
/// followed by its bias. Input-major storage lets the forward and backward
/// passes skip zero inputs, which dominate one-hot tile encodings.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    layers: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

/// Activation record of one forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Tape {
    /// Pre-activation values of every layer, input layer first.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    /// Same layout as [`DenseNet::params`].
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl DenseNet {
    /// Random fan-in scaled uniform init: He bound `sqrt(6/fan_in)` for ReLU
    /// layers, `sqrt(3/fan_in)` otherwise. Biases start at zero.
    pub fn new(input_dim: usize, widths: &[(usize, Activation)], rng: &mut crate::Rng) -> Self {
        assert!(!widths.is_empty(), "a net needs at least one layer");
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input_dim;
        for &(outputs, activation) in widths {
            layers.push(LayerShape {
                inputs: prev,
                outputs,
                activation,
            });
            prev = outputs;
        }
        let mut net = Self::zeros(layers);
        for (li, layer) in net.layers.clone().iter().enumerate() {
            let gain = match layer.activation {
                Activation::Relu => 6.0,
                _ => 3.0,
            };
            let bound = (gain / layer.inputs as f64).sqrt();
            let off = net.offsets[li];
            for w in &mut net.params[off..off + layer.inputs * layer.outputs] {
                *w = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn zeros(layers: Vec<LayerShape>) -> Self {
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.param_count();
        }
        Self {
            layers,
            offsets,
            params: vec![0.0; total],
        }
    }

    pub fn from_params(layers: Vec<LayerShape>, params: Vec<f64>) -> Result<Self, NumericsError> {
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(NumericsError::DimMismatch {
                    expected: pair[0].outputs,
                    got: pair[1].inputs,
                });
            }
        }
        let mut net = Self::zeros(layers);
        if params.len() != net.params.len() {
            return Err(NumericsError::DimMismatch {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Mutable views of layer `i`'s weights (input-major) and bias.
    pub fn layer_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let l = self.layers[i];
        let off = self.offsets[i];
        let (w, rest) = self.params[off..off + l.param_count()].split_at_mut(l.inputs * l.outputs);
        (w, rest)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NumericsError> {
        if x.len() != self.input_dim() {
            return Err(NumericsError::DimMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Output only, without recording a tape.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NumericsError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for (li, l) in self.layers.iter().enumerate() {
            let mut pre = self.affine(li, &cur);
            for v in &mut pre {
                *v = l.activation.apply(*v);
            }
            cur = pre;
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape), NumericsError> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (li, l) in self.layers.iter().enumerate() {
            let pre = self.affine(li, &cur);
            let out: Vec<f64> = pre.iter().map(|&v| l.activation.apply(v)).collect();
            inputs.push(cur);
            pres.push(pre);
            cur = out;
        }
        Ok((cur, Tape { inputs, pre: pres }))
    }

    fn affine(&self, li: usize, x: &[f64]) -> Vec<f64> {
        let l = self.layers[li];
        let off = self.offsets[li];
        let w = &self.params[off..off + l.inputs * l.outputs];
        let b = &self.params[off + l.inputs * l.outputs..off + l.param_count()];
        let mut y = b.to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &w[i * l.outputs..(i + 1) * l.outputs];
            for (yo, &wo) in y.iter_mut().zip(row) {
                *yo += xi * wo;
            }
        }
        y
    }

    pub fn backward(&self, tape: &Tape, grad_out: &[f64]) -> Gradients {
        let mut params = vec![0.0; self.params.len()];
        let input = self
            .accumulate(tape, grad_out, &mut params, true)
            .expect("input gradient requested");
        Gradients { params, input }
    }

    /// Adds this sample's parameter gradients into `acc` and optionally
    /// returns the gradient with respect to the net input.
    pub fn accumulate(
        &self,
        tape: &Tape,
        grad_out: &[f64],
        acc: &mut [f64],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        assert_eq!(grad_out.len(), self.output_dim());
        assert_eq!(acc.len(), self.params.len());
        let mut g = grad_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let l = self.layers[li];
            let off = self.offsets[li];
            for (gi, &p) in g.iter_mut().zip(&tape.pre[li]) {
                *gi *= l.activation.derivative(p);
            }
            let x = &tape.inputs[li];
            let nw = l.inputs * l.outputs;
            {
                let (dw, db) = acc[off..off + l.param_count()].split_at_mut(nw);
                for (dbo, &go) in db.iter_mut().zip(&g) {
                    *dbo += go;
                }
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    for (d, &go) in dw[i * l.outputs..(i + 1) * l.outputs].iter_mut().zip(&g) {
                        *d += xi * go;
                    }
                }
            }
            if li == 0 && !want_input {
                return None;
            }
            let w = &self.params[off..off + nw];
            g = (0..l.inputs)
                .map(|i| {
                    w[i * l.outputs..(i + 1) * l.outputs]
                        .iter()
                        .zip(&g)
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
        }
        Some(g)
    }
}
