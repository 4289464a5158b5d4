//! Fully connected trunk feeding three linear heads: anchor logits, per-anchor
//! `(x, y)` offsets and an absolute head producing `z` plus an unnormalized
//! orientation quaternion.
//!
//! Parameters live in one flat `Vec<f64>`. Layers are stored in order (trunk
//! layers, classifier, offset head, absolute head), each as a row-major
//! `out x in` weight block followed by `out` biases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outputs of the absolute head: `z` and four orientation components.
pub const ABSOLUTE_DIM: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    #[inline]
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub num_anchors: usize,
    #[serde(default)]
    pub activation: Activation,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be positive".into()));
        }
        if self.num_anchors == 0 {
            return Err(Error::InvalidSpec("num_anchors must be positive".into()));
        }
        if let Some(i) = self.hidden_layers.iter().position(|&w| w == 0) {
            return Err(Error::InvalidSpec(format!("hidden layer {i} has zero width")));
        }
        Ok(())
    }

    /// Width of the vector the heads read from.
    pub fn trunk_width(&self) -> usize {
        self.hidden_layers.last().copied().unwrap_or(self.input_dim)
    }

    /// Shapes of every layer in storage order.
    pub fn layers(&self) -> Vec<LayerShape> {
        let mut shapes = Vec::with_capacity(self.hidden_layers.len() + 3);
        let mut offset = 0;
        let mut push = |inputs: usize, outputs: usize| {
            let shape = LayerShape {
                inputs,
                outputs,
                offset,
            };
            offset += shape.len();
            shapes.push(shape);
        };
        let mut width = self.input_dim;
        for &h in &self.hidden_layers {
            push(width, h);
            width = h;
        }
        push(width, self.num_anchors);
        push(width, 2 * self.num_anchors);
        push(width, ABSOLUTE_DIM);
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(LayerShape::len).sum()
    }
}

/// Position of one dense layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    /// Index of the first weight.
    pub offset: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn weights<'a>(&self, flat: &'a [f64]) -> &'a [f64] {
        &flat[self.offset..self.offset + self.inputs * self.outputs]
    }

    fn biases<'a>(&self, flat: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.inputs * self.outputs;
        &flat[start..start + self.outputs]
    }

    fn apply(&self, flat: &[f64], x: &[f64], out: &mut Vec<f64>) {
        let w = self.weights(flat);
        out.clear();
        out.extend_from_slice(self.biases(flat));
        for (j, o) in out.iter_mut().enumerate() {
            let row = &w[j * self.inputs..(j + 1) * self.inputs];
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Accumulates weight/bias gradients into `grad` and, if requested, the
    /// gradient with respect to the layer input into `dx`.
    fn backprop(&self, flat: &[f64], x: &[f64], delta: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        let n_w = self.inputs * self.outputs;
        {
            let (gw, gb) = grad[self.offset..self.offset + self.len()].split_at_mut(n_w);
            for (j, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[j] += d;
                for (g, &xi) in gw[j * self.inputs..(j + 1) * self.inputs].iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
        }
        if let Some(dx) = dx {
            let w = self.weights(flat);
            for (j, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (g, &wji) in dx.iter_mut().zip(&w[j * self.inputs..(j + 1) * self.inputs]) {
                    *g += wji * d;
                }
            }
        }
    }
}

/// Network weights together with the spec that fixes their layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    spec: NetworkSpec,
    values: Vec<f64>,
}

impl Parameters {
    /// Wraps a flat vector, checking its length against the spec.
    pub fn from_vec(spec: NetworkSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let expected = spec.param_count();
        if values.len() != expected {
            return Err(Error::InvalidInput(format!(
                "parameter vector has {} entries, spec needs {expected}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(Parameters { spec, values })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let n = spec.param_count();
        Parameters::from_vec(spec, vec![0.0; n])
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Raw network outputs for one input.
///
/// The same shape is used for gradients of a scalar loss with respect to the
/// outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosePrediction {
    pub logits: Vec<f64>,
    pub offsets: Vec<[f64; 2]>,
    pub z: f64,
    pub orient_raw: [f64; 4],
}

pub type PredictionGrad = PosePrediction;

impl PosePrediction {
    pub fn zeros(num_anchors: usize) -> Self {
        PosePrediction {
            logits: vec![0.0; num_anchors],
            offsets: vec![[0.0; 2]; num_anchors],
            z: 0.0,
            orient_raw: [0.0; 4],
        }
    }

    pub fn num_anchors(&self) -> usize {
        self.logits.len()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// Flattened as `logits, offsets (x0, y0, x1, ...), z, orient_raw`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.logits.len() + ABSOLUTE_DIM);
        v.extend_from_slice(&self.logits);
        v.extend(self.offsets.iter().flatten());
        v.push(self.z);
        v.extend_from_slice(&self.orient_raw);
        v
    }

    pub fn from_flat(num_anchors: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != 3 * num_anchors + ABSOLUTE_DIM {
            return Err(Error::InvalidInput(format!(
                "flat prediction of length {} does not fit {num_anchors} anchors",
                flat.len()
            )));
        }
        let (logits, rest) = flat.split_at(num_anchors);
        let (offs, rest) = rest.split_at(2 * num_anchors);
        Ok(PosePrediction {
            logits: logits.to_vec(),
            offsets: offs.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
            z: rest[0],
            orient_raw: [rest[1], rest[2], rest[3], rest[4]],
        })
    }
}

/// Draws initial weights: uniform in `+-sqrt(6 / fan_in)` for relu and
/// `+-sqrt(3 / fan_in)` for tanh. Biases start at zero except the
/// orientation outputs, which start at the identity quaternion so an all-zero
/// feature vector still yields a normalizable orientation.
pub fn init(spec: &NetworkSpec) -> Result<Parameters> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gain = match spec.activation {
        Activation::Relu => 6.0,
        Activation::Tanh => 3.0,
    };
    let mut values = vec![0.0; spec.param_count()];
    for layer in spec.layers() {
        let limit = (gain / layer.inputs as f64).sqrt();
        let n_w = layer.inputs * layer.outputs;
        for w in &mut values[layer.offset..layer.offset + n_w] {
            *w = rng.random_range(-limit..limit);
        }
    }
    let abs_head = spec.layers()[spec.hidden_layers.len() + 2];
    values[abs_head.offset + abs_head.inputs * abs_head.outputs + 1] = 1.0;
    Parameters::from_vec(spec.clone(), values)
}

/// Intermediate values kept from a forward pass for reuse in backward.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    /// Input to trunk layer `i` is `inputs[i]`; the last entry is the trunk output.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn trunk_output(&self) -> &[f64] {
        self.inputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn check_feature(params: &Parameters, feature: &[f64]) -> Result<()> {
    if feature.len() != params.spec.input_dim {
        return Err(Error::InvalidInput(format!(
            "feature has dimension {}, network expects {}",
            feature.len(),
            params.spec.input_dim
        )));
    }
    Ok(())
}

pub fn forward(params: &Parameters, feature: &[f64]) -> Result<PosePrediction> {
    forward_cached(params, feature).map(|(p, _)| p)
}

pub fn forward_cached(params: &Parameters, feature: &[f64]) -> Result<(PosePrediction, ForwardCache)> {
    check_feature(params, feature)?;
    let spec = &params.spec;
    let layers = spec.layers();
    let n_trunk = spec.hidden_layers.len();
    let flat = &params.values;

    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(n_trunk + 1),
        pre: Vec::with_capacity(n_trunk),
    };
    cache.inputs.push(feature.to_vec());
    for layer in &layers[..n_trunk] {
        let mut pre = Vec::new();
        layer.apply(flat, cache.inputs.last().unwrap(), &mut pre);
        let out = pre.iter().map(|&v| spec.activation.apply(v)).collect();
        cache.pre.push(pre);
        cache.inputs.push(out);
    }

    let trunk = cache.trunk_output();
    let mut logits = Vec::new();
    let mut offs = Vec::new();
    let mut abs = Vec::new();
    layers[n_trunk].apply(flat, trunk, &mut logits);
    layers[n_trunk + 1].apply(flat, trunk, &mut offs);
    layers[n_trunk + 2].apply(flat, trunk, &mut abs);

    let pred = PosePrediction {
        logits,
        offsets: offs.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        z: abs[0],
        orient_raw: [abs[1], abs[2], abs[3], abs[4]],
    };
    Ok((pred, cache))
}

/// Gradient of a scalar loss with respect to every parameter, given the
/// gradient of that loss with respect to the network outputs.
pub fn backward(params: &Parameters, feature: &[f64], upstream: &PredictionGrad) -> Result<Vec<f64>> {
    let (_, cache) = forward_cached(params, feature)?;
    let mut grad = vec![0.0; params.len()];
    backward_cached(params, &cache, upstream, &mut grad)?;
    Ok(grad)
}

/// Adds the parameter gradient into `grad` using a cache from [`forward_cached`].
pub fn backward_cached(
    params: &Parameters,
    cache: &ForwardCache,
    upstream: &PredictionGrad,
    grad: &mut [f64],
) -> Result<()> {
    let spec = &params.spec;
    let n = spec.num_anchors;
    if upstream.logits.len() != n || upstream.offsets.len() != n {
        return Err(Error::InvalidInput(format!(
            "upstream gradient has {} logits / {} offsets, network has {n} anchors",
            upstream.logits.len(),
            upstream.offsets.len()
        )));
    }
    if grad.len() != params.len() {
        return Err(Error::InvalidInput("gradient buffer has the wrong length".into()));
    }
    let layers = spec.layers();
    let n_trunk = spec.hidden_layers.len();
    let flat = &params.values;
    let trunk = cache.trunk_output();

    let d_offsets: Vec<f64> = upstream.offsets.iter().flatten().copied().collect();
    let d_abs = [
        upstream.z,
        upstream.orient_raw[0],
        upstream.orient_raw[1],
        upstream.orient_raw[2],
        upstream.orient_raw[3],
    ];

    let mut delta = vec![0.0; trunk.len()];
    let want_dx = n_trunk > 0;
    for (layer, d) in layers[n_trunk..]
        .iter()
        .zip([upstream.logits.as_slice(), &d_offsets, &d_abs])
    {
        layer.backprop(flat, trunk, d, grad, want_dx.then_some(delta.as_mut_slice()));
    }

    for li in (0..n_trunk).rev() {
        let pre = &cache.pre[li];
        let out = &cache.inputs[li + 1];
        for ((d, &p), &o) in delta.iter_mut().zip(pre).zip(out) {
            *d *= spec.activation.derivative(p, o);
        }
        let input = &cache.inputs[li];
        let mut next = vec![0.0; input.len()];
        layers[li].backprop(flat, input, &delta, grad, (li > 0).then_some(next.as_mut_slice()));
        delta = next;
    }
    Ok(())
}
