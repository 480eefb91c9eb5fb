//! Dense feed-forward networks with exact reverse-mode gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `y = act(W x + b)` with `W` stored `[out × in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameters of a multilayer perceptron. Actors, critics and distilled
/// policies all share this representation.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

/// Per-layer gradients (or Adam moments) mirroring an [`MlpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

/// Result of a vector-Jacobian product for a single input.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBundle {
    pub params: MlpGrads,
    pub input: Vec<f64>,
}

/// Activations recorded by [`MlpParams::forward_batch`]; `acts[0]` is the
/// batch input and `acts[k + 1]` the output of layer `k`.
#[derive(Clone, Debug)]
pub struct ForwardTape {
    acts: Vec<Array2<f64>>,
}

impl ForwardTape {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("tape holds at least the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.acts[0]
    }
}

impl MlpParams {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("network needs at least one layer"));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape(format!(
                    "layer {k}: bias length {} != out dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(Error::shape(format!("layer {k}: zero-sized dimension")));
            }
            if k > 0 && layers[k - 1].out_dim() != layer.in_dim() {
                return Err(Error::shape(format!(
                    "layer {} out {} does not chain into layer {k} in {}",
                    k - 1,
                    layers[k - 1].out_dim(),
                    layer.in_dim()
                )));
            }
            if !layer.weight.iter().chain(layer.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {k} parameters")));
            }
        }
        Ok(Self { layers })
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation. `sizes` lists
    /// every width from input to output; hidden layers use tanh.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], output: Activation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::shape("need at least input and output sizes"));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
                if fan_in == 0 || fan_out == 0 {
                    return Err(Error::shape("zero-sized layer"));
                }
                let bound = 1.0 / (fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound)
                    .map_err(|e| Error::invalid(e.to_string()))?;
                let weight = Array2::from_shape_fn((fan_out, fan_in), |_| dist.sample(rng));
                let bias = Array1::from_shape_fn(fan_out, |_| dist.sample(rng));
                let activation = if k + 1 == n { output } else { Activation::Tanh };
                Ok(Layer {
                    weight,
                    bias,
                    activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.activation == b.activation)
    }

    /// Forward pass for a single input vector.
    pub fn apply(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "input length {} != network input dim {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut x = Array1::from(input.to_vec());
        for layer in &self.layers {
            let mut z = layer.weight.dot(&x);
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            x = z;
        }
        Ok(x.to_vec())
    }

    /// Exact gradients of `upstream · f(input)` with respect to every
    /// parameter and to the input.
    pub fn vjp(&self, input: &[f64], upstream: &[f64]) -> Result<GradBundle> {
        if upstream.len() != self.output_dim() {
            return Err(Error::shape(format!(
                "upstream length {} != network output dim {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if input.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "input length {} != network input dim {}",
                input.len(),
                self.input_dim()
            )));
        }
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
            .map_err(|e| Error::shape(e.to_string()))?;
        let tape = self.forward_batch(x)?;
        let up = Array2::from_shape_vec((1, upstream.len()), upstream.to_vec())
            .map_err(|e| Error::shape(e.to_string()))?;
        let (grads, input_grad) = self.backward_batch(&tape, up.view(), true)?;
        Ok(GradBundle {
            params: grads.expect("requested parameter gradients"),
            input: input_grad.row(0).to_vec(),
        })
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward_batch(&self, x: Array2<f64>) -> Result<ForwardTape> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "batch width {} != network input dim {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for layer in &self.layers {
            let prev = acts.last().expect("non-empty");
            let mut z = prev.dot(&layer.weight.t());
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            acts.push(z);
        }
        Ok(ForwardTape { acts })
    }

    /// Batched forward pass without keeping intermediate activations.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "batch width {} != network input dim {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut cur: Option<Array2<f64>> = None;
        for layer in &self.layers {
            let mut z = match &cur {
                None => x.dot(&layer.weight.t()),
                Some(h) => h.dot(&layer.weight.t()),
            };
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            cur = Some(z);
        }
        Ok(cur.expect("at least one layer"))
    }

    /// Output of the first layer only (used as a feature encoder).
    pub fn first_layer_features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "batch width {} != network input dim {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let layer = &self.layers[0];
        let mut z = x.dot(&layer.weight.t());
        z += &layer.bias;
        z.mapv_inplace(|v| layer.activation.apply(v));
        Ok(z)
    }

    /// Reverse pass over a recorded tape. `upstream` is the gradient of the
    /// scalar objective with respect to the batch output. Returns parameter
    /// gradients summed over the batch (when `with_params`) and the gradient
    /// with respect to the batch input.
    pub fn backward_batch(
        &self,
        tape: &ForwardTape,
        upstream: ArrayView2<f64>,
        with_params: bool,
    ) -> Result<(Option<MlpGrads>, Array2<f64>)> {
        let out = tape.output();
        if upstream.dim() != out.dim() || tape.acts.len() != self.layers.len() + 1 {
            return Err(Error::shape(format!(
                "upstream {:?} does not match tape output {:?}",
                upstream.dim(),
                out.dim()
            )));
        }
        let mut grads = with_params.then(|| Vec::with_capacity(self.layers.len()));
        let mut g = upstream.to_owned();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let y = &tape.acts[k + 1];
            if layer.activation != Activation::Identity {
                ndarray::Zip::from(&mut g)
                    .and(y)
                    .for_each(|gi, &yi| *gi *= layer.activation.grad_from_output(yi));
            }
            if let Some(gs) = grads.as_mut() {
                let gw = g.t().dot(&tape.acts[k]);
                let gb = g.sum_axis(Axis(0));
                gs.push((gw, gb));
            }
            g = g.dot(&layer.weight);
        }
        let grads = grads.map(|mut gs| {
            gs.reverse();
            MlpGrads { layers: gs }
        });
        Ok((grads, g))
    }
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn matches(&self, params: &MlpParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|((w, b), l)| w.dim() == l.weight.dim() && b.len() == l.bias.len())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &MlpGrads, scale: f64) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape("gradient layer counts differ"));
        }
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            if w.dim() != ow.dim() || b.len() != ob.len() {
                return Err(Error::shape("gradient tensor shapes differ"));
            }
            w.scaled_add(scale, ow);
            b.scaled_add(scale, ob);
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            w.mapv_inplace(|v| v * s);
            b.mapv_inplace(|v| v * s);
        }
    }

    /// Name of the first tensor holding a non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        self.layers.iter().enumerate().find_map(|(k, (w, b))| {
            if !w.iter().all(|v| v.is_finite()) {
                Some(format!("layer {k} weight gradient"))
            } else if !b.iter().all(|v| v.is_finite()) {
                Some(format!("layer {k} bias gradient"))
            } else {
                None
            }
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}
