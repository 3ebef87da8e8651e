//! Convolutional network with explicit forward and reverse passes.
//!
//! Layer vocabulary: convolution (always ReLU), max-pooling, cross-channel
//! response normalization, and fully connected layers with relu / softmax /
//! identity activations plus optional inverted dropout. The final layer is a
//! 2-way softmax. All loops are plain and deterministic; gradients are exact
//! reverse-mode accumulation of the weighted cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::image::ImageTensor;
use crate::learners::activations::softmax;
use crate::learners::loss::{instance_log_likelihood, logit_gradient};
use crate::rng::Rng;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Bias constant of the response-normalization denominator.
const LRN_BIAS: f64 = 2.0;

/// Weight init: zero-mean Gaussian with std sqrt(2 / fan_in), biases zero.
/// A fixed small std starves tiny desk-scale layers (fan-in 9..128) of
/// signal; fan-in scaling keeps activations comparable at every size.
pub fn init_std(fan_in: usize) -> f64 {
    (2.0 / fan_in.max(1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Softmax,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Convolution {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    ResponseNorm {
        radius: usize,
        alpha: f64,
        beta: f64,
    },
    FullyConnected {
        out_dim: usize,
        activation: Activation,
        dropout_rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvNetSpec {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

/// Shape of a layer's output: a channel map or a flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerShape {
    Map { channels: usize, height: usize, width: usize },
    Vector(usize),
}

impl LayerShape {
    pub fn len(&self) -> usize {
        match self {
            LayerShape::Map { channels, height, width } => channels * height * width,
            LayerShape::Vector(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dims(&self) -> Vec<usize> {
        match self {
            LayerShape::Map { channels, height, width } => vec![*channels, *height, *width],
            LayerShape::Vector(n) => vec![*n],
        }
    }
}

impl ConvNetSpec {
    /// Small default for desk-scale runs: 32x32 grayscale, two conv blocks
    /// and two fully connected layers.
    pub fn desk_small() -> Self {
        ConvNetSpec {
            input_height: 32,
            input_width: 32,
            input_channels: 1,
            layers: vec![
                LayerSpec::Convolution { out_channels: 8, kernel: 5, stride: 1, padding: 0 },
                LayerSpec::MaxPool { kernel: 2, stride: 2 },
                LayerSpec::Convolution { out_channels: 16, kernel: 5, stride: 1, padding: 0 },
                LayerSpec::MaxPool { kernel: 2, stride: 2 },
                LayerSpec::FullyConnected {
                    out_dim: 64,
                    activation: Activation::Relu,
                    dropout_rate: 0.5,
                },
                LayerSpec::FullyConnected {
                    out_dim: 2,
                    activation: Activation::Softmax,
                    dropout_rate: 0.0,
                },
            ],
        }
    }

    /// The classic eight-layer architecture at 227x227x3: five convolutions
    /// (response norm + pooling after the first, second and fifth) and three
    /// fully connected layers ending in the 2-way softmax.
    pub fn alexnet_shaped() -> Self {
        let lrn = LayerSpec::ResponseNorm { radius: 2, alpha: 1e-4, beta: 0.75 };
        ConvNetSpec {
            input_height: 227,
            input_width: 227,
            input_channels: 3,
            layers: vec![
                LayerSpec::Convolution { out_channels: 96, kernel: 11, stride: 4, padding: 0 },
                lrn.clone(),
                LayerSpec::MaxPool { kernel: 3, stride: 2 },
                LayerSpec::Convolution { out_channels: 256, kernel: 5, stride: 1, padding: 2 },
                lrn.clone(),
                LayerSpec::MaxPool { kernel: 3, stride: 2 },
                LayerSpec::Convolution { out_channels: 384, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Convolution { out_channels: 384, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Convolution { out_channels: 256, kernel: 3, stride: 1, padding: 1 },
                lrn,
                LayerSpec::MaxPool { kernel: 3, stride: 2 },
                LayerSpec::FullyConnected {
                    out_dim: 4096,
                    activation: Activation::Relu,
                    dropout_rate: 0.5,
                },
                LayerSpec::FullyConnected {
                    out_dim: 4096,
                    activation: Activation::Relu,
                    dropout_rate: 0.5,
                },
                LayerSpec::FullyConnected {
                    out_dim: 2,
                    activation: Activation::Softmax,
                    dropout_rate: 0.0,
                },
            ],
        }
    }

    /// Chain shapes through the layers. Index 0 is the input shape, index
    /// k + 1 the output of layer k. Errors on inconsistent chains.
    pub fn chain_shapes(&self) -> Result<Vec<LayerShape>> {
        if self.input_height == 0 || self.input_width == 0 || self.input_channels == 0 {
            return Err(CoreError::InvalidSpec("zero input dimension".into()));
        }
        let mut shapes = vec![LayerShape::Map {
            channels: self.input_channels,
            height: self.input_height,
            width: self.input_width,
        }];
        for (k, layer) in self.layers.iter().enumerate() {
            let prev = shapes.last().unwrap().clone();
            let next = match layer {
                LayerSpec::Convolution { out_channels, kernel, stride, padding } => {
                    let LayerShape::Map { height, width, .. } = prev else {
                        return Err(CoreError::InvalidSpec(format!(
                            "layer {k}: convolution after a fully connected layer"
                        )));
                    };
                    if *out_channels == 0 || *kernel == 0 || *stride == 0 {
                        return Err(CoreError::InvalidSpec(format!("layer {k}: zero conv field")));
                    }
                    let h = conv_out(height, *kernel, *stride, *padding)
                        .ok_or_else(|| CoreError::InvalidSpec(format!("layer {k}: kernel exceeds input")))?;
                    let w = conv_out(width, *kernel, *stride, *padding)
                        .ok_or_else(|| CoreError::InvalidSpec(format!("layer {k}: kernel exceeds input")))?;
                    LayerShape::Map { channels: *out_channels, height: h, width: w }
                }
                LayerSpec::MaxPool { kernel, stride } => {
                    let LayerShape::Map { channels, height, width } = prev else {
                        return Err(CoreError::InvalidSpec(format!(
                            "layer {k}: pooling after a fully connected layer"
                        )));
                    };
                    if *kernel == 0 || *stride == 0 {
                        return Err(CoreError::InvalidSpec(format!("layer {k}: zero pool field")));
                    }
                    let h = pool_out(height, *kernel, *stride)
                        .ok_or_else(|| CoreError::InvalidSpec(format!("layer {k}: pool exceeds input")))?;
                    let w = pool_out(width, *kernel, *stride)
                        .ok_or_else(|| CoreError::InvalidSpec(format!("layer {k}: pool exceeds input")))?;
                    LayerShape::Map { channels, height: h, width: w }
                }
                LayerSpec::ResponseNorm { beta, alpha, .. } => {
                    if !matches!(prev, LayerShape::Map { .. }) {
                        return Err(CoreError::InvalidSpec(format!(
                            "layer {k}: response norm after a fully connected layer"
                        )));
                    }
                    if *alpha < 0.0 || *beta <= 0.0 {
                        return Err(CoreError::InvalidSpec(format!("layer {k}: bad norm constants")));
                    }
                    prev
                }
                LayerSpec::FullyConnected { out_dim, activation, dropout_rate } => {
                    if *out_dim == 0 {
                        return Err(CoreError::InvalidSpec(format!("layer {k}: zero out_dim")));
                    }
                    if !(0.0..1.0).contains(dropout_rate) {
                        return Err(CoreError::InvalidSpec(format!(
                            "layer {k}: dropout rate {dropout_rate} outside [0, 1)"
                        )));
                    }
                    let last = k == self.layers.len() - 1;
                    if matches!(activation, Activation::Softmax) && (!last || *dropout_rate != 0.0) {
                        return Err(CoreError::InvalidSpec(format!(
                            "layer {k}: softmax only allowed on the final layer, without dropout"
                        )));
                    }
                    LayerShape::Vector(*out_dim)
                }
            };
            shapes.push(next);
        }
        match self.layers.last() {
            Some(LayerSpec::FullyConnected { out_dim: 2, activation: Activation::Softmax, .. }) => {}
            _ => {
                return Err(CoreError::InvalidSpec(
                    "final layer must be fully connected, out_dim 2, softmax".into(),
                ))
            }
        }
        Ok(shapes)
    }
}

fn conv_out(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn pool_out(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if input < kernel {
        return None;
    }
    Some((input - kernel) / stride + 1)
}

/// Weight/bias pair of a parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub weights: Tensor<F>,
    pub bias: Tensor<F>,
}

/// Per-layer gradient tensors, parallel to `ConvNet::params`.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub layers: Vec<Option<LayerParams<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(net: &ConvNet<F>) -> Self {
        Gradients {
            layers: net
                .params
                .iter()
                .map(|p| {
                    p.as_ref().map(|lp| LayerParams {
                        weights: Tensor::zeros(lp.weights.shape()),
                        bias: Tensor::zeros(lp.bias.shape()),
                    })
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients<F>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                a.weights.scaled_add(F::one(), &b.weights);
                a.bias.scaled_add(F::one(), &b.bias);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().flatten().all(|lp| lp.weights.all_finite() && lp.bias.all_finite())
    }
}

#[derive(Debug, Clone)]
pub struct ConvNet<F> {
    pub spec: ConvNetSpec,
    pub params: Vec<Option<LayerParams<F>>>,
    shapes: Vec<LayerShape>,
}

/// One forward evaluation with everything the reverse pass needs.
pub struct ForwardPass<F> {
    /// Class probabilities [p(real), p(fake)].
    pub probs: [F; 2],
    /// outputs[0] is the input map; outputs[k + 1] is layer k's output.
    pub outputs: Vec<Tensor<F>>,
    /// Inverted-dropout scale per unit for fully connected layers in train
    /// mode (0 = dropped, 1/keep = kept); None when dropout was inactive.
    dropout_scales: Vec<Option<Vec<F>>>,
}

impl<F: Real> ConvNet<F> {
    /// Seeded Gaussian init, std scaled by layer fan-in, biases zero.
    pub fn init(spec: ConvNetSpec, seed: u64) -> Result<Self> {
        let shapes = spec.chain_shapes()?;
        let mut rng = Rng::stream(seed, 0x1817);
        let mut params = Vec::with_capacity(spec.layers.len());
        for (k, layer) in spec.layers.iter().enumerate() {
            params.push(match layer {
                LayerSpec::Convolution { out_channels, kernel, .. } => {
                    let in_channels = match &shapes[k] {
                        LayerShape::Map { channels, .. } => *channels,
                        LayerShape::Vector(_) => unreachable!("validated"),
                    };
                    let fan_in = in_channels * kernel * kernel;
                    Some(LayerParams {
                        weights: gaussian_tensor(
                            &[*out_channels, in_channels, *kernel, *kernel],
                            init_std(fan_in),
                            &mut rng,
                        ),
                        bias: Tensor::zeros(&[*out_channels]),
                    })
                }
                LayerSpec::FullyConnected { out_dim, .. } => {
                    let in_dim = shapes[k].len();
                    Some(LayerParams {
                        weights: gaussian_tensor(&[*out_dim, in_dim], init_std(in_dim), &mut rng),
                        bias: Tensor::zeros(&[*out_dim]),
                    })
                }
                _ => None,
            });
        }
        Ok(ConvNet { spec, params, shapes })
    }

    /// Rebuild a network from explicit parameters (deserialization path).
    pub fn from_params(spec: ConvNetSpec, params: Vec<Option<LayerParams<F>>>) -> Result<Self> {
        let shapes = spec.chain_shapes()?;
        let template = ConvNet::<F>::init(spec.clone(), 0)?;
        if params.len() != template.params.len() {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} layer parameter slots", template.params.len()),
                found: format!("{}", params.len()),
            });
        }
        for (got, want) in params.iter().zip(&template.params) {
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) => {
                    if g.weights.shape() != w.weights.shape() || g.bias.shape() != w.bias.shape() {
                        return Err(CoreError::ShapeMismatch {
                            expected: format!("{:?}", w.weights.shape()),
                            found: format!("{:?}", g.weights.shape()),
                        });
                    }
                }
                _ => {
                    return Err(CoreError::ShapeMismatch {
                        expected: "matching parameterized layers".into(),
                        found: "parameter slot mismatch".into(),
                    })
                }
            }
        }
        Ok(ConvNet { spec, params, shapes })
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.weights.len() + p.bias.len())
            .sum()
    }

    fn input_tensor(&self, img: &ImageTensor<F>) -> Result<Tensor<F>> {
        let want = (self.spec.input_height, self.spec.input_width, self.spec.input_channels);
        if (img.height, img.width, img.channels) != want {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{}x{}x{} input", want.0, want.1, want.2),
                found: format!("{}x{}x{}", img.height, img.width, img.channels),
            });
        }
        // HWC image -> CHW map.
        let mut t = Tensor::zeros(&[img.channels, img.height, img.width]);
        for c in 0..img.channels {
            for y in 0..img.height {
                for x in 0..img.width {
                    let i = t.idx3(c, y, x);
                    t.data_mut()[i] = img.at(y, x, c);
                }
            }
        }
        Ok(t)
    }

    /// Run the layer chain. Dropout is applied only in train mode, with masks
    /// drawn from the given seed (inverted scaling keeps expectations equal).
    pub fn forward(
        &self,
        img: &ImageTensor<F>,
        train_mode: bool,
        dropout_seed: u64,
    ) -> Result<ForwardPass<F>> {
        let mut outputs = vec![self.input_tensor(img)?];
        let mut dropout_scales: Vec<Option<Vec<F>>> = Vec::with_capacity(self.spec.layers.len());
        let mut dropout_rng = Rng::stream(dropout_seed, 0xd209);
        for (k, layer) in self.spec.layers.iter().enumerate() {
            let input = outputs.last().unwrap();
            let mut scales = None;
            let out = match layer {
                LayerSpec::Convolution { .. } => self.conv_forward(k, input),
                LayerSpec::MaxPool { kernel, stride } => {
                    maxpool_forward(input, *kernel, *stride, &self.shapes[k + 1])
                }
                LayerSpec::ResponseNorm { radius, alpha, beta } => {
                    lrn_forward(input, *radius, *alpha, *beta)
                }
                LayerSpec::FullyConnected { activation, dropout_rate, .. } => {
                    let mut v = self.fc_forward(k, input);
                    match activation {
                        Activation::Relu => crate::learners::activations::relu_inplace(v.data_mut()),
                        Activation::Softmax => {
                            let s = softmax(v.data());
                            v.data_mut().copy_from_slice(&s);
                        }
                        Activation::None => {}
                    }
                    if train_mode && *dropout_rate > 0.0 {
                        let keep = 1.0 - dropout_rate;
                        let inv = F::of(1.0 / keep);
                        let mask: Vec<F> = (0..v.len())
                            .map(|_| if dropout_rng.next_bool(keep) { inv } else { F::zero() })
                            .collect();
                        for (x, m) in v.data_mut().iter_mut().zip(&mask) {
                            *x *= *m;
                        }
                        scales = Some(mask);
                    }
                    v
                }
            };
            dropout_scales.push(scales);
            outputs.push(out);
        }
        let last = outputs.last().unwrap().data();
        let probs = [last[0], last[1]];
        Ok(ForwardPass { probs, outputs, dropout_scales })
    }

    fn conv_forward(&self, k: usize, input: &Tensor<F>) -> Tensor<F> {
        let (kernel, stride, padding) = match &self.spec.layers[k] {
            LayerSpec::Convolution { kernel, stride, padding, .. } => (*kernel, *stride, *padding),
            _ => unreachable!("conv_forward on non-conv layer"),
        };
        let p = self.params[k].as_ref().expect("conv has params");
        let [in_c, in_h, in_w] = [input.shape()[0], input.shape()[1], input.shape()[2]];
        let dims = self.shapes[k + 1].dims();
        let (out_c, out_h, out_w) = (dims[0], dims[1], dims[2]);
        let mut out = Tensor::zeros(&[out_c, out_h, out_w]);
        let w = p.weights.data();
        for oc in 0..out_c {
            let bias = p.bias.data()[oc];
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let mut acc = bias;
                    for ic in 0..in_c {
                        for kh in 0..kernel {
                            let ih = (oh * stride + kh) as isize - padding as isize;
                            if ih < 0 || ih >= in_h as isize {
                                continue;
                            }
                            for kw in 0..kernel {
                                let iw = (ow * stride + kw) as isize - padding as isize;
                                if iw < 0 || iw >= in_w as isize {
                                    continue;
                                }
                                let wi = ((oc * in_c + ic) * kernel + kh) * kernel + kw;
                                acc += w[wi] * input.at3(ic, ih as usize, iw as usize);
                            }
                        }
                    }
                    // Convolutions always ReLU.
                    let i = out.idx3(oc, oh, ow);
                    out.data_mut()[i] = acc.max(F::zero());
                }
            }
        }
        out
    }

    fn fc_forward(&self, k: usize, input: &Tensor<F>) -> Tensor<F> {
        let p = self.params[k].as_ref().expect("fc has params");
        let in_dim = input.len();
        let out_dim = p.bias.len();
        let w = p.weights.data();
        let x = input.data();
        let mut out = Tensor::zeros(&[out_dim]);
        for o in 0..out_dim {
            let mut acc = p.bias.data()[o];
            let row = &w[o * in_dim..(o + 1) * in_dim];
            for (wi, xi) in row.iter().zip(x) {
                acc += *wi * *xi;
            }
            out.data_mut()[o] = acc;
        }
        out
    }

    /// Reverse pass from a gradient at the final-layer logits (the softmax /
    /// cross-entropy gradient is fused there). Returns exact parameter
    /// gradients for this single forward evaluation.
    pub fn backward(&self, pass: &ForwardPass<F>, logit_grad: &[F; 2]) -> Gradients<F> {
        let mut grads = Gradients::zeros_like(self);
        let n_layers = self.spec.layers.len();
        // Gradient flowing into the output of each layer; start at the final
        // layer's pre-activation (logits).
        let mut grad_out: Vec<F> = logit_grad.to_vec();
        let mut softmax_pending = true;
        for k in (0..n_layers).rev() {
            let input = &pass.outputs[k];
            let output = &pass.outputs[k + 1];
            grad_out = match &self.spec.layers[k] {
                LayerSpec::FullyConnected { activation, .. } => {
                    let mut g = grad_out;
                    if softmax_pending {
                        // g already sits at the logits of the softmax layer.
                        debug_assert!(matches!(activation, Activation::Softmax));
                        softmax_pending = false;
                    } else {
                        if let Some(mask) = &pass.dropout_scales[k] {
                            for (gi, m) in g.iter_mut().zip(mask) {
                                *gi *= *m;
                            }
                        }
                        if matches!(activation, Activation::Relu) {
                            for (gi, &o) in g.iter_mut().zip(output.data()) {
                                if o <= F::zero() {
                                    *gi = F::zero();
                                }
                            }
                        }
                    }
                    self.fc_backward(k, input, &g, &mut grads)
                }
                LayerSpec::Convolution { kernel, stride, padding, .. } => {
                    self.conv_backward(k, input, output, &grad_out, *kernel, *stride, *padding, &mut grads)
                }
                LayerSpec::MaxPool { kernel, stride } => {
                    maxpool_backward(input, output, &grad_out, *kernel, *stride)
                }
                LayerSpec::ResponseNorm { radius, alpha, beta } => {
                    lrn_backward(input, &grad_out, *radius, *alpha, *beta)
                }
            };
        }
        grads
    }

    fn fc_backward(
        &self,
        k: usize,
        input: &Tensor<F>,
        grad_z: &[F],
        grads: &mut Gradients<F>,
    ) -> Vec<F> {
        let p = self.params[k].as_ref().expect("fc has params");
        let g = grads.layers[k].as_mut().expect("fc grad slot");
        let in_dim = input.len();
        let x = input.data();
        let w = p.weights.data();
        let mut grad_in = vec![F::zero(); in_dim];
        for (o, &gz) in grad_z.iter().enumerate() {
            g.bias.data_mut()[o] += gz;
            let row = o * in_dim;
            let gw_row = &mut g.weights.data_mut()[row..row + in_dim];
            for i in 0..in_dim {
                gw_row[i] += gz * x[i];
                grad_in[i] += w[row + i] * gz;
            }
        }
        grad_in
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        k: usize,
        input: &Tensor<F>,
        output: &Tensor<F>,
        grad_out: &[F],
        kernel: usize,
        stride: usize,
        padding: usize,
        grads: &mut Gradients<F>,
    ) -> Vec<F> {
        let p = self.params[k].as_ref().expect("conv has params");
        let g = grads.layers[k].as_mut().expect("conv grad slot");
        let [in_c, in_h, in_w] = [input.shape()[0], input.shape()[1], input.shape()[2]];
        let [out_c, out_h, out_w] = [output.shape()[0], output.shape()[1], output.shape()[2]];
        let w = p.weights.data();
        let mut grad_in = vec![F::zero(); input.len()];
        for oc in 0..out_c {
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let oi = output.idx3(oc, oh, ow);
                    // ReLU subgradient: zero where the activation clipped.
                    if output.data()[oi] <= F::zero() {
                        continue;
                    }
                    let gz = grad_out[oi];
                    if gz == F::zero() {
                        continue;
                    }
                    g.bias.data_mut()[oc] += gz;
                    for ic in 0..in_c {
                        for kh in 0..kernel {
                            let ih = (oh * stride + kh) as isize - padding as isize;
                            if ih < 0 || ih >= in_h as isize {
                                continue;
                            }
                            for kw in 0..kernel {
                                let iw = (ow * stride + kw) as isize - padding as isize;
                                if iw < 0 || iw >= in_w as isize {
                                    continue;
                                }
                                let wi = ((oc * in_c + ic) * kernel + kh) * kernel + kw;
                                let xi = input.idx3(ic, ih as usize, iw as usize);
                                g.weights.data_mut()[wi] += gz * input.data()[xi];
                                grad_in[xi] += w[wi] * gz;
                            }
                        }
                    }
                }
            }
        }
        grad_in
    }

    /// Class probabilities in eval mode (deterministic, no dropout).
    pub fn predict_proba(&self, img: &ImageTensor<F>) -> Result<[F; 2]> {
        Ok(self.forward(img, false, 0)?.probs)
    }

    pub fn predict(&self, img: &ImageTensor<F>) -> Result<crate::learners::Prediction<F>> {
        let probs = self.predict_proba(img)?;
        Ok(crate::learners::Prediction::from_prob_fake(probs[1]))
    }
}

fn gaussian_tensor<F: Real>(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor<F> {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = F::of(rng.next_gaussian() * std);
    }
    t
}

fn maxpool_forward<F: Real>(
    input: &Tensor<F>,
    kernel: usize,
    stride: usize,
    out_shape: &LayerShape,
) -> Tensor<F> {
    let dims = out_shape.dims();
    let (c_n, out_h, out_w) = (dims[0], dims[1], dims[2]);
    let mut out = Tensor::zeros(&[c_n, out_h, out_w]);
    for c in 0..c_n {
        for oh in 0..out_h {
            for ow in 0..out_w {
                let mut best = F::neg_infinity();
                for kh in 0..kernel {
                    for kw in 0..kernel {
                        let v = input.at3(c, oh * stride + kh, ow * stride + kw);
                        if v > best {
                            best = v;
                        }
                    }
                }
                let i = out.idx3(c, oh, ow);
                out.data_mut()[i] = best;
            }
        }
    }
    out
}

/// Gradient routed to the first maximal position in (kh, kw) scan order.
fn maxpool_backward<F: Real>(
    input: &Tensor<F>,
    output: &Tensor<F>,
    grad_out: &[F],
    kernel: usize,
    stride: usize,
) -> Vec<F> {
    let [c_n, out_h, out_w] = [output.shape()[0], output.shape()[1], output.shape()[2]];
    let mut grad_in = vec![F::zero(); input.len()];
    for c in 0..c_n {
        for oh in 0..out_h {
            for ow in 0..out_w {
                let mut best = F::neg_infinity();
                let mut best_idx = 0usize;
                for kh in 0..kernel {
                    for kw in 0..kernel {
                        let idx = input.idx3(c, oh * stride + kh, ow * stride + kw);
                        let v = input.data()[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                grad_in[best_idx] += grad_out[output.idx3(c, oh, ow)];
            }
        }
    }
    grad_in
}

/// Cross-channel response normalization:
/// y_c = x_c * (bias + alpha * sum_{|j-c| <= radius} x_j^2)^(-beta).
fn lrn_forward<F: Real>(input: &Tensor<F>, radius: usize, alpha: f64, beta: f64) -> Tensor<F> {
    let [c_n, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2]];
    let alpha = F::of(alpha);
    let beta = F::of(beta);
    let bias = F::of(LRN_BIAS);
    let mut out = Tensor::zeros(input.shape());
    for y in 0..h {
        for x in 0..w {
            for c in 0..c_n {
                let lo = c.saturating_sub(radius);
                let hi = (c + radius).min(c_n - 1);
                let mut sum_sq = F::zero();
                for j in lo..=hi {
                    let v = input.at3(j, y, x);
                    sum_sq += v * v;
                }
                let denom = bias + alpha * sum_sq;
                let i = out.idx3(c, y, x);
                out.data_mut()[i] = input.at3(c, y, x) * denom.powf(-beta);
            }
        }
    }
    out
}

fn lrn_backward<F: Real>(
    input: &Tensor<F>,
    grad_out: &[F],
    radius: usize,
    alpha: f64,
    beta: f64,
) -> Vec<F> {
    let [c_n, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2]];
    let alpha_f = F::of(alpha);
    let beta_f = F::of(beta);
    let bias = F::of(LRN_BIAS);
    let two = F::of(2.0);
    let mut grad_in = vec![F::zero(); input.len()];
    for y in 0..h {
        for x in 0..w {
            // Denominators for every channel at this location.
            let denoms: Vec<F> = (0..c_n)
                .map(|c| {
                    let lo = c.saturating_sub(radius);
                    let hi = (c + radius).min(c_n - 1);
                    let mut s = F::zero();
                    for j in lo..=hi {
                        let v = input.at3(j, y, x);
                        s += v * v;
                    }
                    bias + alpha_f * s
                })
                .collect();
            for j in 0..c_n {
                let idx_j = input.idx3(j, y, x);
                let direct = grad_out[idx_j] * denoms[j].powf(-beta_f);
                let lo = j.saturating_sub(radius);
                let hi = (j + radius).min(c_n - 1);
                let mut cross = F::zero();
                for c in lo..=hi {
                    let idx_c = input.idx3(c, y, x);
                    cross += grad_out[idx_c]
                        * input.data()[idx_c]
                        * denoms[c].powf(-beta_f - F::one());
                }
                grad_in[idx_j] =
                    direct - two * alpha_f * beta_f * input.data()[idx_j] * cross;
            }
        }
    }
    grad_in
}

/// Intermediate layers usable as transferred features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureLayer {
    /// Output of the max-pool that follows the last convolution.
    C5Pooled,
    /// First fully connected layer before the output layer.
    Fc6,
    /// Second fully connected layer before the output layer.
    Fc7,
}

impl FeatureLayer {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c5_pooled" | "c5-pooled" | "c5" => Some(FeatureLayer::C5Pooled),
            "fc6" => Some(FeatureLayer::Fc6),
            "fc7" => Some(FeatureLayer::Fc7),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureLayer::C5Pooled => "C5_pooled",
            FeatureLayer::Fc6 => "FC6",
            FeatureLayer::Fc7 => "FC7",
        }
    }
}

/// Locate the spec index of a feature layer, or error if the architecture
/// does not contain it.
pub fn feature_layer_index(spec: &ConvNetSpec, layer: FeatureLayer) -> Result<usize> {
    let absent = || CoreError::LayerAbsent(layer.name().to_string());
    match layer {
        FeatureLayer::C5Pooled => {
            let last_conv = spec
                .layers
                .iter()
                .rposition(|l| matches!(l, LayerSpec::Convolution { .. }))
                .ok_or_else(absent)?;
            spec.layers[last_conv..]
                .iter()
                .position(|l| matches!(l, LayerSpec::MaxPool { .. }))
                .map(|off| last_conv + off)
                .ok_or_else(absent)
        }
        FeatureLayer::Fc6 | FeatureLayer::Fc7 => {
            let want = if layer == FeatureLayer::Fc6 { 0 } else { 1 };
            let fcs: Vec<usize> = spec
                .layers
                .iter()
                .enumerate()
                .filter(|(_, l)| matches!(l, LayerSpec::FullyConnected { .. }))
                .map(|(i, _)| i)
                .collect();
            // The final output layer does not count as FC6/FC7.
            if fcs.len() < want + 2 {
                return Err(absent());
            }
            Ok(fcs[want])
        }
    }
}

/// Flattened activation after the named layer, eval mode.
pub fn extract_features<F: Real>(
    net: &ConvNet<F>,
    img: &ImageTensor<F>,
    layer: FeatureLayer,
) -> Result<Vec<F>> {
    let idx = feature_layer_index(&net.spec, layer)?;
    let pass = net.forward(img, false, 0)?;
    Ok(pass.outputs[idx + 1].data().to_vec())
}

/// Weighted-loss value and exact gradients accumulated over a batch.
/// Dropout masks (train mode) are drawn per instance from `seed`.
pub fn batch_gradients<F: Real>(
    net: &ConvNet<F>,
    images: &[&ImageTensor<F>],
    labels: &[u8],
    weights: &[F],
    train_mode: bool,
    seed: u64,
) -> Result<(F, Gradients<F>)> {
    if images.len() != labels.len() || labels.len() != weights.len() {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{} images/labels/weights", images.len()),
            found: format!("{} labels, {} weights", labels.len(), weights.len()),
        });
    }
    let mut grads = Gradients::zeros_like(net);
    let mut loss = F::zero();
    for (i, ((img, &y), &w)) in images.iter().zip(labels).zip(weights).enumerate() {
        let pass = net.forward(img, train_mode, mix_seed(seed, i as u64))?;
        loss -= w * instance_log_likelihood(&pass.probs, y);
        let g = net.backward(&pass, &logit_gradient(&pass.probs, y, w));
        grads.accumulate(&g);
    }
    Ok((loss, grads))
}

/// Expected (weights, bias) shapes of each layer's parameters.
pub fn param_shapes(spec: &ConvNetSpec) -> Result<Vec<Option<(Vec<usize>, Vec<usize>)>>> {
    let shapes = spec.chain_shapes()?;
    Ok(spec
        .layers
        .iter()
        .enumerate()
        .map(|(k, layer)| match layer {
            LayerSpec::Convolution { out_channels, kernel, .. } => {
                let in_channels = match &shapes[k] {
                    LayerShape::Map { channels, .. } => *channels,
                    LayerShape::Vector(_) => unreachable!("validated"),
                };
                Some((
                    vec![*out_channels, in_channels, *kernel, *kernel],
                    vec![*out_channels],
                ))
            }
            LayerSpec::FullyConnected { out_dim, .. } => {
                Some((vec![*out_dim, shapes[k].len()], vec![*out_dim]))
            }
            _ => None,
        })
        .collect())
}

pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(tag.wrapping_mul(0xbf58_476d_1ce4_e5b9))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fc(out_dim: usize, activation: Activation, dropout_rate: f64) -> LayerSpec {
        LayerSpec::FullyConnected { out_dim, activation, dropout_rate }
    }

    fn spec_with(layers: Vec<LayerSpec>) -> ConvNetSpec {
        ConvNetSpec { input_height: 8, input_width: 8, input_channels: 1, layers }
    }

    #[test]
    fn presets_chain() {
        assert!(ConvNetSpec::desk_small().chain_shapes().is_ok());
        assert!(ConvNetSpec::alexnet_shaped().chain_shapes().is_ok());
    }

    #[test]
    fn final_layer_must_be_two_way_softmax() {
        let bad = spec_with(vec![fc(2, Activation::Relu, 0.0)]);
        assert!(bad.chain_shapes().is_err());
        let bad = spec_with(vec![fc(3, Activation::Softmax, 0.0)]);
        assert!(bad.chain_shapes().is_err());
        let bad = spec_with(vec![LayerSpec::MaxPool { kernel: 2, stride: 2 }]);
        assert!(bad.chain_shapes().is_err());
    }

    #[test]
    fn softmax_only_on_final_layer_and_without_dropout() {
        let bad = spec_with(vec![
            fc(4, Activation::Softmax, 0.0),
            fc(2, Activation::Softmax, 0.0),
        ]);
        assert!(bad.chain_shapes().is_err());
        let bad = spec_with(vec![fc(2, Activation::Softmax, 0.5)]);
        assert!(bad.chain_shapes().is_err());
    }

    #[test]
    fn map_layers_rejected_after_flattening() {
        let bad = spec_with(vec![
            fc(4, Activation::Relu, 0.0),
            LayerSpec::Convolution { out_channels: 2, kernel: 3, stride: 1, padding: 0 },
            fc(2, Activation::Softmax, 0.0),
        ]);
        assert!(bad.chain_shapes().is_err());
    }

    #[test]
    fn oversized_kernels_rejected() {
        let bad = spec_with(vec![
            LayerSpec::Convolution { out_channels: 2, kernel: 9, stride: 1, padding: 0 },
            fc(2, Activation::Softmax, 0.0),
        ]);
        assert!(bad.chain_shapes().is_err());
        let bad = spec_with(vec![
            LayerSpec::MaxPool { kernel: 9, stride: 1 },
            fc(2, Activation::Softmax, 0.0),
        ]);
        assert!(bad.chain_shapes().is_err());
    }

    #[test]
    fn input_shape_mismatch_is_an_error() {
        let net = ConvNet::<f64>::init(ConvNetSpec::desk_small(), 1).unwrap();
        let wrong = crate::image::ImageTensor::constant(16, 16, 1, 0.0);
        assert!(net.forward(&wrong, false, 0).is_err());
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = ConvNetSpec::desk_small();
        let text = serde_json::to_string(&spec).unwrap();
        let back: ConvNetSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
