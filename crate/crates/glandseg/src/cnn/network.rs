//! Network description, parameter container and whole-net forward/backward.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cnn::layers::{self, conv_output_dim, pool_output_dim};
use crate::cnn::tensor::Tensor;
use crate::error::{Error, Result};

/// One layer of a sequential network. Convolutions are "valid" with stride
/// 1 and square kernels; pooling is 2x2 with stride 2.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv { filters: usize, kernel: usize },
    Relu,
    MaxPool,
    FullyConnected { units: usize },
    Dropout { rate: f64 },
    Softmax,
}

/// Shape of the data between layers: spatial planes or flattened features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Spatial { c: usize, h: usize, w: usize },
    Flat { features: usize },
}

impl Activation {
    pub fn features(&self) -> usize {
        match *self {
            Activation::Spatial { c, h, w } => c * h * w,
            Activation::Flat { features } => features,
        }
    }
}

/// Ordered layer sequence with its input patch geometry and class count.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub input_size: usize,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Validate the layer chain and return the activation shape after each
    /// layer (element 0 is the input shape).
    pub fn shape_chain(&self) -> Result<Vec<Activation>> {
        let mut shapes = vec![Activation::Spatial {
            c: self.input_channels,
            h: self.input_size,
            w: self.input_size,
        }];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = *shapes.last().unwrap();
            let next = match (layer, cur) {
                (LayerSpec::Conv { filters, kernel }, Activation::Spatial { h, w, .. }) => {
                    if *kernel == 0 || h < *kernel || w < *kernel {
                        return Err(Error::InvalidParam(format!(
                            "layer {i}: {kernel}x{kernel} kernel does not fit {h}x{w} input"
                        )));
                    }
                    Activation::Spatial {
                        c: *filters,
                        h: conv_output_dim(h, *kernel),
                        w: conv_output_dim(w, *kernel),
                    }
                }
                (LayerSpec::MaxPool, Activation::Spatial { c, h, w }) => {
                    if h < 2 || w < 2 {
                        return Err(Error::InvalidParam(format!(
                            "layer {i}: cannot pool {h}x{w} plane"
                        )));
                    }
                    Activation::Spatial {
                        c,
                        h: pool_output_dim(h),
                        w: pool_output_dim(w),
                    }
                }
                (LayerSpec::Conv { .. }, Activation::Flat { .. })
                | (LayerSpec::MaxPool, Activation::Flat { .. }) => {
                    return Err(Error::InvalidParam(format!(
                        "layer {i}: spatial layer after flatten"
                    )))
                }
                (LayerSpec::FullyConnected { units }, prev) => Activation::Flat {
                    features: {
                        let _ = prev.features();
                        *units
                    },
                },
                (LayerSpec::Relu, prev) | (LayerSpec::Dropout { .. }, prev) => prev,
                (LayerSpec::Softmax, prev) => prev,
            };
            shapes.push(next);
        }
        match (self.layers.last(), shapes.last()) {
            (Some(LayerSpec::Softmax), Some(last)) if last.features() == self.classes => {}
            _ => {
                return Err(Error::InvalidParam(format!(
                    "network must end in softmax over {} classes",
                    self.classes
                )))
            }
        }
        Ok(shapes)
    }

    /// Spatial extents after each conv/pool layer, for architecture checks.
    pub fn spatial_extents(&self) -> Result<Vec<usize>> {
        Ok(self
            .shape_chain()?
            .iter()
            .skip(1)
            .zip(self.layers.iter())
            .filter(|(_, l)| matches!(l, LayerSpec::Conv { .. } | LayerSpec::MaxPool))
            .filter_map(|(s, _)| match s {
                Activation::Spatial { h, .. } => Some(*h),
                Activation::Flat { .. } => None,
            })
            .collect())
    }

    /// Flattened feature count entering the first fully connected layer.
    pub fn flatten_features(&self) -> Result<usize> {
        let shapes = self.shape_chain()?;
        for (i, layer) in self.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::FullyConnected { .. }) {
                return Ok(shapes[i].features());
            }
        }
        Err(Error::InvalidParam("network has no fully connected layer".into()))
    }

    pub fn parameter_count(&self) -> Result<usize> {
        let shapes = self.shape_chain()?;
        let mut count = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv { filters, kernel } => {
                    let in_c = match shapes[i] {
                        Activation::Spatial { c, .. } => c,
                        Activation::Flat { .. } => unreachable!("validated chain"),
                    };
                    count += filters * (in_c * kernel * kernel) + filters;
                }
                LayerSpec::FullyConnected { units } => {
                    count += units * shapes[i].features() + units;
                }
                _ => {}
            }
        }
        Ok(count)
    }
}

/// The Object-Net: four-class gland/background x benign/malignant
/// classifier on 101x101 patches.
pub fn object_net_spec() -> NetworkSpec {
    conv_net(
        101,
        4,
        &[(80, 11, true), (96, 7, true), (128, 5, true), (160, 3, false)],
        &[1024, 512],
        0.5,
    )
}

/// The Separator-Net: binary classifier for gland-separating structures on
/// 101x101 patches.
pub fn separator_net_spec() -> NetworkSpec {
    conv_net(
        101,
        2,
        &[(64, 9, true), (96, 7, true), (128, 5, true), (160, 3, false)],
        &[1024, 512],
        0.5,
    )
}

/// Desk-scale Object-Net: same layer pattern at one-eighth the filter
/// counts on 33x33 patches.
pub fn tiny_object_net_spec() -> NetworkSpec {
    conv_net(
        33,
        4,
        &[(10, 5, true), (12, 3, true), (16, 3, true), (20, 2, false)],
        &[128, 64],
        0.5,
    )
}

/// Desk-scale Separator-Net.
pub fn tiny_separator_net_spec() -> NetworkSpec {
    conv_net(
        33,
        2,
        &[(8, 5, true), (12, 3, true), (16, 3, true), (20, 2, false)],
        &[128, 64],
        0.5,
    )
}

/// Layer pattern shared by all variants: convolutional feature extractor
/// (pooling after the first three conv layers), then a fully connected
/// classifier with dropout on the two hidden layers.
fn conv_net(
    input: usize,
    classes: usize,
    convs: &[(usize, usize, bool)],
    hidden: &[usize],
    dropout: f64,
) -> NetworkSpec {
    let mut layers = Vec::new();
    for &(filters, kernel, pool) in convs {
        layers.push(LayerSpec::Conv { filters, kernel });
        layers.push(LayerSpec::Relu);
        if pool {
            layers.push(LayerSpec::MaxPool);
        }
    }
    for &units in hidden {
        layers.push(LayerSpec::FullyConnected { units });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Dropout { rate: dropout });
    }
    layers.push(LayerSpec::FullyConnected { units: classes });
    layers.push(LayerSpec::Softmax);
    let spec = NetworkSpec {
        input_channels: 1,
        input_size: input,
        classes,
        layers,
    };
    spec.shape_chain().expect("built-in architectures chain");
    spec
}

/// Per-layer weight/bias tensors, aligned with the spec's layer list
/// (`None` for parameter-free layers).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Option<ParamPair>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamPair {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

impl ModelParams {
    /// Glorot-style uniform init, biases zero. Deterministic in the RNG.
    pub fn init(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        let shapes = spec.shape_chain()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let pair = match layer {
                LayerSpec::Conv { filters, kernel } => {
                    let in_c = match shapes[i] {
                        Activation::Spatial { c, .. } => c,
                        Activation::Flat { .. } => unreachable!("validated chain"),
                    };
                    let fan_in = in_c * kernel * kernel;
                    let fan_out = filters * kernel * kernel;
                    Some(init_pair(*filters, in_c, *kernel, *kernel, fan_in, fan_out, rng))
                }
                LayerSpec::FullyConnected { units } => {
                    let features = shapes[i].features();
                    Some(init_pair(*units, features, 1, 1, features, *units, rng))
                }
                _ => None,
            };
            layers.push(pair);
        }
        Ok(ModelParams { layers })
    }

    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|p| {
                    p.as_ref().map(|pp| ParamPair {
                        weight: Tensor::zeros(pp.weight.n, pp.weight.c, pp.weight.h, pp.weight.w),
                        bias: vec![0.0; pp.bias.len()],
                    })
                })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().flatten().all(|p| {
            p.weight.all_finite() && p.bias.iter().all(|b| b.is_finite())
        })
    }

    /// Visit every scalar parameter in a fixed order.
    pub fn for_each_scalar_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for p in self.layers.iter_mut().flatten() {
            for v in p.weight.data.iter_mut() {
                f(v);
            }
            for b in p.bias.iter_mut() {
                f(b);
            }
        }
    }
}

fn init_pair(
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> ParamPair {
    let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..n * c * h * w)
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    ParamPair {
        weight: Tensor::from_vec(n, c, h, w, data),
        bias: vec![0.0; n],
    }
}

/// Everything the backward pass needs from a forward pass: the input to
/// each layer plus layer-local state.
pub struct ForwardCache {
    pub inputs: Vec<Tensor>,
    pub aux: Vec<LayerAux>,
    pub output: Tensor,
    pub training: bool,
}

pub enum LayerAux {
    None,
    PoolArgmax(Vec<usize>),
    DropoutMask(Vec<f64>),
}

/// Run the network on a batch. In training mode dropout masks are drawn
/// from `rng`; in inference mode dropout is the identity and the RNG is
/// untouched. Returns per-item class distributions with the cache needed
/// for [`backward`].
pub fn forward(
    spec: &NetworkSpec,
    params: &ModelParams,
    batch: &Tensor,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<ForwardCache> {
    if batch.c != spec.input_channels || batch.h != spec.input_size || batch.w != spec.input_size {
        return Err(Error::DimMismatch(format!(
            "batch {}x{}x{} does not match network input {}x{}x{}",
            batch.c, batch.h, batch.w, spec.input_channels, spec.input_size, spec.input_size
        )));
    }
    let mut inputs = Vec::with_capacity(spec.layers.len());
    let mut aux = Vec::with_capacity(spec.layers.len());
    let mut current = batch.clone();
    for (i, layer) in spec.layers.iter().enumerate() {
        let next = match layer {
            LayerSpec::Conv { .. } => {
                let p = params.layers[i].as_ref().expect("conv has parameters");
                aux.push(LayerAux::None);
                layers::conv_forward(&current, &p.weight, &p.bias)
            }
            LayerSpec::Relu => {
                aux.push(LayerAux::None);
                layers::relu_forward(&current)
            }
            LayerSpec::MaxPool => {
                let (out, argmax) = layers::maxpool_forward(&current);
                aux.push(LayerAux::PoolArgmax(argmax));
                out
            }
            LayerSpec::FullyConnected { .. } => {
                let p = params.layers[i].as_ref().expect("fc has parameters");
                aux.push(LayerAux::None);
                layers::fc_forward(&current, &p.weight, &p.bias)
            }
            LayerSpec::Dropout { rate } => {
                if training && *rate > 0.0 {
                    let mask = layers::dropout_mask(current.len(), *rate, rng);
                    let out = layers::dropout_apply(&current, &mask);
                    aux.push(LayerAux::DropoutMask(mask));
                    out
                } else {
                    aux.push(LayerAux::None);
                    current.clone()
                }
            }
            LayerSpec::Softmax => {
                aux.push(LayerAux::None);
                layers::softmax_forward(&current)
            }
        };
        inputs.push(current);
        current = next;
    }
    Ok(ForwardCache {
        inputs,
        aux,
        output: current,
        training,
    })
}

/// Mean negative log-likelihood loss and parameter gradients for the batch
/// cached in `cache`.
pub fn backward(
    spec: &NetworkSpec,
    params: &ModelParams,
    cache: &ForwardCache,
    targets: &[usize],
) -> Result<(ModelParams, f64)> {
    if !cache.training {
        return Err(Error::InvalidParam(
            "backward requires a cache from a training-mode forward".into(),
        ));
    }
    if targets.len() != cache.output.n {
        return Err(Error::DimMismatch(format!(
            "{} targets for a batch of {}",
            targets.len(),
            cache.output.n
        )));
    }
    let loss = layers::nll_loss(&cache.output, targets);
    let mut grads = params.zeros_like();
    let mut grad = layers::softmax_nll_backward(&cache.output, targets);
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let input = &cache.inputs[i];
        grad = match layer {
            LayerSpec::Softmax => {
                // combined with the loss above; grad already holds dL/dlogits
                grad
            }
            LayerSpec::Dropout { .. } => match &cache.aux[i] {
                LayerAux::DropoutMask(mask) => layers::dropout_apply(&grad, mask),
                _ => grad,
            },
            LayerSpec::FullyConnected { .. } => {
                let p = params.layers[i].as_ref().expect("fc has parameters");
                let (gi, gw, gb) = layers::fc_backward(input, &p.weight, &grad);
                grads.layers[i] = Some(ParamPair {
                    weight: gw,
                    bias: gb,
                });
                gi
            }
            LayerSpec::Relu => layers::relu_backward(input, &grad),
            LayerSpec::MaxPool => match &cache.aux[i] {
                LayerAux::PoolArgmax(argmax) => {
                    layers::maxpool_backward((input.n, input.c, input.h, input.w), argmax, &grad)
                }
                _ => unreachable!("pool cache"),
            },
            LayerSpec::Conv { .. } => {
                let p = params.layers[i].as_ref().expect("conv has parameters");
                let (gi, gw, gb) = layers::conv_backward(input, &p.weight, &grad);
                grads.layers[i] = Some(ParamPair {
                    weight: gw,
                    bias: gb,
                });
                gi
            }
        };
    }
    Ok((grads, loss))
}
