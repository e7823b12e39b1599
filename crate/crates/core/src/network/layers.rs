//! Network building blocks: conv-bn-relu units, pooling, inception modules.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{
    batchnorm_backward, batchnorm_forward, channel_concat, channel_split, conv2d_backward,
    conv2d_forward, maxpool_backward, maxpool_forward, relu_backward, relu_forward, BatchNormCache,
    BatchNormParams, BnMode, Conv2dCache, MaxPoolCache, Scalar, Tensor,
};

use super::config::InceptionSpec;
use super::params::Parameters;

/// Uniform Glorot initialization: variance `2 / (fan_in + fan_out)`.
pub fn xavier_uniform<T: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut SeededRng,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::of(rng.range(-limit, limit))).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// Batch-norm hyper-parameters shared by all layers of a network.
#[derive(Clone, Copy, Debug)]
pub struct BnSettings {
    pub momentum: f64,
    pub epsilon: f64,
}

/// Running-statistic replacements produced by a train-mode forward pass.
pub type RunningUpdates<T> = Vec<(String, Tensor<T>)>;

#[derive(Clone, Debug)]
pub enum Layer {
    /// Convolution without bias, batch norm, ReLU.
    ConvBnRelu {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool {
        window: usize,
        stride: usize,
        padding: usize,
    },
}

#[derive(Clone, Debug)]
pub enum LayerCache<T> {
    ConvBnRelu {
        conv: Conv2dCache<T>,
        bn: BatchNormCache<T>,
        pre_activation: Tensor<T>,
    },
    MaxPool(MaxPoolCache),
}

fn out_dim(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    (k <= padded && stride > 0).then(|| (padded - k) / stride + 1)
}

impl Layer {
    pub fn conv(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Layer::ConvBnRelu {
            name: name.into(),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    /// Output `(channels, height, width)` for the given input, or a config error.
    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let [c, h, w] = input;
        match self {
            Layer::ConvBnRelu {
                name,
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if c != *in_channels {
                    return Err(Error::Config(format!(
                        "layer `{name}` expects {in_channels} channels but receives {c}"
                    )));
                }
                match (
                    out_dim(h, *kernel, *stride, *padding),
                    out_dim(w, *kernel, *stride, *padding),
                ) {
                    (Some(oh), Some(ow)) => Ok([*out_channels, oh, ow]),
                    _ => Err(Error::Config(format!(
                        "layer `{name}`: kernel {kernel} does not fit {h}x{w}"
                    ))),
                }
            }
            Layer::MaxPool {
                window,
                stride,
                padding,
            } => {
                if padding >= window {
                    return Err(Error::Config(
                        "pool padding must be below the window".into(),
                    ));
                }
                match (
                    out_dim(h, *window, *stride, *padding),
                    out_dim(w, *window, *stride, *padding),
                ) {
                    (Some(oh), Some(ow)) => Ok([c, oh, ow]),
                    _ => Err(Error::Config(format!(
                        "pool window {window} does not fit {h}x{w}"
                    ))),
                }
            }
        }
    }

    pub fn init_params<T: Scalar>(&self, params: &mut Parameters<T>, rng: &mut SeededRng) {
        if let Layer::ConvBnRelu {
            name,
            in_channels,
            out_channels,
            kernel,
            ..
        } = self
        {
            let area = kernel * kernel;
            params.insert(
                format!("{name}.conv.weight"),
                xavier_uniform(
                    &[*out_channels, *in_channels, *kernel, *kernel],
                    in_channels * area,
                    out_channels * area,
                    rng,
                ),
            );
            params.insert(
                format!("{name}.bn.gamma"),
                Tensor::full(&[*out_channels], T::one()),
            );
            params.insert(format!("{name}.bn.beta"), Tensor::zeros(&[*out_channels]));
            params.insert(
                format!("{name}.bn.running_mean"),
                Tensor::zeros(&[*out_channels]),
            );
            params.insert(
                format!("{name}.bn.running_var"),
                Tensor::full(&[*out_channels], T::one()),
            );
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        params: &Parameters<T>,
        x: &Tensor<T>,
        mode: BnMode,
        bn: BnSettings,
        updates: &mut RunningUpdates<T>,
    ) -> Result<(Tensor<T>, LayerCache<T>)> {
        match self {
            Layer::ConvBnRelu {
                name,
                stride,
                padding,
                ..
            } => {
                let weight = params.get(&format!("{name}.conv.weight"))?;
                let (y, conv) = conv2d_forward(x, weight, None, *stride, *padding)?;
                let bn_out = batchnorm_forward(
                    &y,
                    BatchNormParams {
                        gamma: params.get(&format!("{name}.bn.gamma"))?,
                        beta: params.get(&format!("{name}.bn.beta"))?,
                        running_mean: params.get(&format!("{name}.bn.running_mean"))?,
                        running_var: params.get(&format!("{name}.bn.running_var"))?,
                        epsilon: bn.epsilon,
                        momentum: bn.momentum,
                    },
                    mode,
                )?;
                if let Some((rm, rv)) = bn_out.running {
                    updates.push((format!("{name}.bn.running_mean"), rm));
                    updates.push((format!("{name}.bn.running_var"), rv));
                }
                let out = relu_forward(&bn_out.output);
                Ok((
                    out,
                    LayerCache::ConvBnRelu {
                        conv,
                        bn: bn_out.cache,
                        pre_activation: bn_out.output,
                    },
                ))
            }
            Layer::MaxPool {
                window,
                stride,
                padding,
            } => {
                let (out, cache) = maxpool_forward(x, *window, *stride, *padding)?;
                Ok((out, LayerCache::MaxPool(cache)))
            }
        }
    }

    /// Returns the input gradient and pushes parameter gradients into `grads`.
    pub fn backward<T: Scalar>(
        &self,
        cache: &LayerCache<T>,
        grad: &Tensor<T>,
        grads: &mut Parameters<T>,
    ) -> Result<Tensor<T>> {
        match (self, cache) {
            (
                Layer::ConvBnRelu { name, .. },
                LayerCache::ConvBnRelu {
                    conv,
                    bn,
                    pre_activation,
                },
            ) => {
                let g = relu_backward(grad, pre_activation)?;
                let bg = batchnorm_backward(&g, bn)?;
                let cg = conv2d_backward(&bg.input, conv)?;
                grads.insert(format!("{name}.bn.gamma"), bg.gamma);
                grads.insert(format!("{name}.bn.beta"), bg.beta);
                grads.insert(format!("{name}.conv.weight"), cg.weights);
                Ok(cg.input)
            }
            (Layer::MaxPool { .. }, LayerCache::MaxPool(c)) => maxpool_backward(grad, c),
            _ => Err(Error::Usage(
                "layer cache does not belong to this layer".into(),
            )),
        }
    }
}

/// A chain of layers run one after another.
pub(crate) fn chain_forward<T: Scalar>(
    layers: &[Layer],
    params: &Parameters<T>,
    x: &Tensor<T>,
    mode: BnMode,
    bn: BnSettings,
    updates: &mut RunningUpdates<T>,
) -> Result<(Tensor<T>, Vec<LayerCache<T>>)> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut cur = x.clone();
    for layer in layers {
        let (next, cache) = layer.forward(params, &cur, mode, bn, updates)?;
        caches.push(cache);
        cur = next;
    }
    Ok((cur, caches))
}

pub(crate) fn chain_backward<T: Scalar>(
    layers: &[Layer],
    caches: &[LayerCache<T>],
    grad: &Tensor<T>,
    grads: &mut Parameters<T>,
) -> Result<Tensor<T>> {
    if caches.len() != layers.len() {
        return Err(Error::Usage("missing forward cache for layer chain".into()));
    }
    let mut g = grad.clone();
    for (layer, cache) in layers.iter().zip(caches).rev() {
        g = layer.backward(cache, &g, grads)?;
    }
    Ok(g)
}

/// An inception module (or its reduced, stride-2 variant).
#[derive(Clone, Debug)]
pub struct InceptionModule {
    name: String,
    spec: InceptionSpec,
    branches: Vec<Vec<Layer>>,
}

#[derive(Clone, Debug)]
pub struct InceptionCache<T> {
    branches: Vec<Vec<LayerCache<T>>>,
    widths: Vec<usize>,
}

impl InceptionModule {
    pub fn new(name: impl Into<String>, spec: InceptionSpec) -> Result<Self> {
        spec.validate()?;
        let name = name.into();
        let s = spec.stride;
        let cin = spec.in_channels;
        let mut branches = Vec::new();
        if spec.include_1x1_output {
            branches.push(vec![Layer::conv(
                format!("{name}.b1x1.0"),
                cin,
                spec.out_1x1,
                1,
                1,
                0,
            )]);
        }
        branches.push(vec![
            Layer::conv(format!("{name}.b3x3.0"), cin, spec.reduce_3x3, 1, 1, 0),
            Layer::conv(
                format!("{name}.b3x3.1"),
                spec.reduce_3x3,
                spec.out_3x3,
                3,
                s,
                1,
            ),
        ]);
        branches.push(vec![
            Layer::conv(
                format!("{name}.bdbl.0"),
                cin,
                spec.reduce_double_3x3,
                1,
                1,
                0,
            ),
            Layer::conv(
                format!("{name}.bdbl.1"),
                spec.reduce_double_3x3,
                spec.out_double_3x3,
                3,
                1,
                1,
            ),
            Layer::conv(
                format!("{name}.bdbl.2"),
                spec.out_double_3x3,
                spec.out_double_3x3,
                3,
                s,
                1,
            ),
        ]);
        let mut pool = vec![Layer::MaxPool {
            window: 3,
            stride: s,
            padding: 1,
        }];
        if !spec.is_reduced() {
            pool.push(Layer::conv(
                format!("{name}.bpool.1"),
                cin,
                spec.pool_proj,
                1,
                1,
                0,
            ));
        }
        branches.push(pool);
        Ok(Self {
            name,
            spec,
            branches,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &InceptionSpec {
        &self.spec
    }

    pub fn out_channels(&self) -> usize {
        self.spec.out_channels()
    }

    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut spatial = None;
        let mut channels = 0;
        for branch in &self.branches {
            let mut shape = input;
            for layer in branch {
                shape = layer.output_shape(shape)?;
            }
            match spatial {
                None => spatial = Some((shape[1], shape[2])),
                Some(hw) if hw != (shape[1], shape[2]) => {
                    return Err(Error::Config(format!(
                        "module `{}`: branches disagree on spatial size",
                        self.name
                    )))
                }
                _ => {}
            }
            channels += shape[0];
        }
        let (h, w) = spatial.expect("at least one branch");
        Ok([channels, h, w])
    }

    pub fn init_params<T: Scalar>(&self, params: &mut Parameters<T>, rng: &mut SeededRng) {
        for layer in self.branches.iter().flatten() {
            layer.init_params(params, rng);
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        params: &Parameters<T>,
        x: &Tensor<T>,
        mode: BnMode,
        bn: BnSettings,
        updates: &mut RunningUpdates<T>,
    ) -> Result<(Tensor<T>, InceptionCache<T>)> {
        let [_, c, _, _] = x.dims4("inception")?;
        if c != self.spec.in_channels {
            return Err(Error::shape(
                "inception",
                format!(
                    "module `{}` expects {} channels, got {c}",
                    self.name, self.spec.in_channels
                ),
            ));
        }
        let mut outputs = Vec::with_capacity(self.branches.len());
        let mut caches = Vec::with_capacity(self.branches.len());
        for branch in &self.branches {
            let (out, cache) = chain_forward(branch, params, x, mode, bn, updates)?;
            outputs.push(out);
            caches.push(cache);
        }
        let widths = outputs.iter().map(|o| o.shape()[1]).collect();
        let refs: Vec<&Tensor<T>> = outputs.iter().collect();
        Ok((
            channel_concat(&refs)?,
            InceptionCache {
                branches: caches,
                widths,
            },
        ))
    }

    pub fn backward<T: Scalar>(
        &self,
        cache: &InceptionCache<T>,
        grad: &Tensor<T>,
        grads: &mut Parameters<T>,
    ) -> Result<Tensor<T>> {
        let parts = channel_split(grad, &cache.widths)?;
        let mut dx: Option<Tensor<T>> = None;
        for ((branch, caches), g) in self.branches.iter().zip(&cache.branches).zip(&parts) {
            let d = chain_backward(branch, caches, g, grads)?;
            match dx.as_mut() {
                None => dx = Some(d),
                Some(acc) => acc.add_assign(&d)?,
            }
        }
        dx.ok_or_else(|| Error::Usage("inception module without branches".into()))
    }
}
