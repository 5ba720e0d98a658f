//! Fully connected networks, batched, with a tape for reverse mode.
//!
//! A layer computes `act(x · W + b)` with `W` stored as (in × out). Batches
//! are rows of a 2-D array.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Tensor;
use crate::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// d act / dz expressed through the activation output `a`.
    fn derivative_at_output(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// Layer widths and activations; enough to rebuild a network shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    /// `hidden` activation on every hidden layer, `output` on the last.
    pub fn new(widths: &[usize], hidden: Activation, output: Activation) -> Self {
        let n = widths.len().saturating_sub(1);
        let activations = (0..n).map(|i| if i + 1 == n { output } else { hidden }).collect();
        Self { widths: widths.to_vec(), activations }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.widths.len() < 2 {
            return Err(LearnError::Config("an MLP needs at least input and output widths".into()));
        }
        if self.widths.contains(&0) {
            return Err(LearnError::Config("layer widths must be positive".into()));
        }
        if self.activations.len() != self.widths.len() - 1 {
            return Err(LearnError::Dimension {
                what: "activation count",
                expected: self.widths.len() - 1,
                got: self.activations.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations recorded by a forward pass: `values[0]` is the input batch,
/// `values[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct Tape {
    values: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.values.last().expect("tape holds at least the input")
    }
}

/// Per-layer gradients plus the gradient with respect to the input batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub input: Array2<f64>,
}

impl MlpGrads {
    /// Flat views in the same order as [`Mlp::params`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| {
                [w.as_slice().expect("standard layout"), b.as_slice().expect("standard layout")]
            })
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

impl Mlp {
    /// Xavier-uniform weights and zero biases; when `output_scale` is set the
    /// last layer is drawn from U(−scale, scale) instead.
    pub fn new<R: Rng + ?Sized>(
        spec: &MlpSpec,
        output_scale: Option<f64>,
        rng: &mut R,
    ) -> Result<Self, LearnError> {
        spec.validate()?;
        let n = spec.activations.len();
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (spec.widths[l], spec.widths[l + 1]);
                let limit = match output_scale {
                    Some(s) if l + 1 == n => s,
                    _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let weight = Array2::from_shape_fn((fan_in, fan_out), |_| {
                    if limit > 0.0 {
                        rng.random_range(-limit..limit)
                    } else {
                        0.0
                    }
                });
                let bias = if matches!(output_scale, Some(s) if l + 1 == n && s > 0.0) {
                    Array1::from_shape_fn(fan_out, |_| rng.random_range(-limit..limit))
                } else {
                    Array1::zeros(fan_out)
                };
                Dense { weight, bias, activation: spec.activations[l] }
            })
            .collect();
        Ok(Self { layers })
    }

    /// All-zero parameters.
    pub fn zeros(spec: &MlpSpec) -> Result<Self, LearnError> {
        spec.validate()?;
        let layers = spec
            .activations
            .iter()
            .enumerate()
            .map(|(l, &activation)| Dense {
                weight: Array2::zeros((spec.widths[l], spec.widths[l + 1])),
                bias: Array1::zeros(spec.widths[l + 1]),
                activation,
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, LearnError> {
        if layers.is_empty() {
            return Err(LearnError::Config("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].weight.ncols() != pair[1].weight.nrows() {
                return Err(LearnError::Dimension {
                    what: "layer chain",
                    expected: pair[0].weight.ncols(),
                    got: pair[1].weight.nrows(),
                });
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.weight.ncols() {
                return Err(LearnError::Dimension {
                    what: "bias length",
                    expected: layer.weight.ncols(),
                    got: layer.bias.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn spec(&self) -> MlpSpec {
        let mut widths = vec![self.input_dim()];
        widths.extend(self.layers.iter().map(|l| l.weight.ncols()));
        MlpSpec { widths, activations: self.layers.iter().map(|l| l.activation).collect() }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Flat parameter views: W₀, b₀, W₁, b₁, …
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [l.weight.as_slice().expect("standard layout"), l.bias.as_slice().expect("standard layout")]
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Tape), LearnError> {
        if x.ncols() != self.input_dim() {
            return Err(LearnError::Dimension { what: "input width", expected: self.input_dim(), got: x.ncols() });
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_owned());
        for layer in &self.layers {
            let prev = values.last().expect("non-empty");
            let mut z = prev.dot(&layer.weight);
            z += &layer.bias;
            let act = layer.activation;
            if act != Activation::Identity {
                z.mapv_inplace(|v| act.apply(v));
            }
            values.push(z);
        }
        let tape = Tape { values };
        Ok((tape.output().clone(), tape))
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<(Array1<f64>, Tape), LearnError> {
        let batch = x.insert_axis(Axis(0));
        let (y, tape) = self.forward_batch(batch)?;
        Ok((y.row(0).to_owned(), tape))
    }

    /// Forward pass without keeping a tape.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LearnError> {
        if x.ncols() != self.input_dim() {
            return Err(LearnError::Dimension { what: "input width", expected: self.input_dim(), got: x.ncols() });
        }
        let mut cur = x.to_owned();
        for layer in &self.layers {
            let mut z = cur.dot(&layer.weight);
            z += &layer.bias;
            let act = layer.activation;
            if act != Activation::Identity {
                z.mapv_inplace(|v| act.apply(v));
            }
            cur = z;
        }
        Ok(cur)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.predict_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Reverse pass for d(loss)/d(output) = `upstream` (batch × out).
    pub fn backward(&self, tape: &Tape, upstream: ArrayView2<f64>) -> Result<MlpGrads, LearnError> {
        if tape.values.len() != self.layers.len() + 1 {
            return Err(LearnError::Dimension {
                what: "tape depth",
                expected: self.layers.len() + 1,
                got: tape.values.len(),
            });
        }
        let out = tape.output();
        if upstream.dim() != out.dim() {
            return Err(LearnError::Dimension { what: "upstream width", expected: out.ncols(), got: upstream.ncols() });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let a = &tape.values[l + 1];
            let act = layer.activation;
            if act != Activation::Identity {
                ndarray::Zip::from(&mut delta).and(a).for_each(|d, &av| *d *= act.derivative_at_output(av));
            }
            let input = &tape.values[l];
            // the product of a transposed view may come back column-major
            let dw = input.t().dot(&delta).as_standard_layout().into_owned();
            let db = delta.sum_axis(Axis(0));
            delta = delta.dot(&layer.weight.t());
            grads.push((dw, db));
        }
        grads.reverse();
        Ok(MlpGrads { layers: grads, input: delta })
    }

    /// Serializes the parameters as named tensors `{prefix}.{l}.weight|bias`.
    pub fn to_tensors(&self, prefix: &str) -> Vec<Tensor> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, layer)| {
                [
                    Tensor::from_array2(format!("{prefix}.{l}.weight"), &layer.weight),
                    Tensor::from_array1(format!("{prefix}.{l}.bias"), &layer.bias),
                ]
            })
            .collect()
    }

    /// Rebuilds a network of shape `spec` from tensors written by [`Mlp::to_tensors`].
    pub fn from_tensors(spec: &MlpSpec, prefix: &str, tensors: &[Tensor]) -> Result<Self, LearnError> {
        let mut net = Self::zeros(spec)?;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let find = |name: String| {
                tensors
                    .iter()
                    .find(|t| t.name == name)
                    .ok_or_else(|| LearnError::Config(format!("missing tensor {name}")))
            };
            let w = find(format!("{prefix}.{l}.weight"))?;
            layer.weight = w.to_array2()?;
            let b = find(format!("{prefix}.{l}.bias"))?;
            layer.bias = b.to_array1()?;
            let expect = (spec.widths[l], spec.widths[l + 1]);
            if layer.weight.dim() != expect || layer.bias.len() != expect.1 {
                return Err(LearnError::Dimension { what: "checkpoint layer shape", expected: expect.1, got: layer.bias.len() });
            }
        }
        Ok(net)
    }
}
