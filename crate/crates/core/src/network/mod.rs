//! The mini inception-style network: stem, inception modules, tail, tanh
//! embedding and softmax head.

mod config;
mod layers;
mod params;

pub use config::{ConvSpec, InceptionSpec, NetworkConfig, PoolSpec, StemLayer};
pub use layers::{
    xavier_uniform, BnSettings, InceptionCache, InceptionModule, Layer, LayerCache, RunningUpdates,
};
pub use params::{ParamKind, Parameters};

use layers::{chain_backward, chain_forward};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{
    fully_connected_backward, fully_connected_forward, tanh_backward, tanh_forward, BnMode,
    LinearCache, Scalar, Tensor,
};

/// Prefix of the softmax head's parameters. Everything else is "body".
pub const HEAD_PREFIX: &str = "head.";

pub fn is_head_param(name: &str) -> bool {
    name.starts_with(HEAD_PREFIX)
}

/// Layer structure derived from a [`NetworkConfig`]. Holds no weights.
#[derive(Clone, Debug)]
pub struct Network {
    config: NetworkConfig,
    stem: Vec<Layer>,
    modules: Vec<InceptionModule>,
    tail: Vec<Layer>,
    flat_dim: usize,
}

/// Intermediate values kept by a train-mode forward pass.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    stem: Vec<LayerCache<T>>,
    modules: Vec<InceptionCache<T>>,
    tail: Vec<LayerCache<T>>,
    tail_shape: Vec<usize>,
    embed: LinearCache<T>,
    head: LinearCache<T>,
}

#[derive(Clone, Debug)]
pub struct ForwardPass<T> {
    pub logits: Tensor<T>,
    pub embedding: Tensor<T>,
    /// New batch-norm running statistics (train mode only).
    pub running_updates: RunningUpdates<T>,
    pub tape: Option<Tape<T>>,
}

#[derive(Clone, Debug)]
pub struct Gradients<T> {
    /// Gradients of every trainable parameter.
    pub params: Parameters<T>,
    pub input: Tensor<T>,
}

/// Builds the layer structure and Xavier-initialized parameters.
pub fn build_network<T: Scalar>(
    config: &NetworkConfig,
    rng: &mut SeededRng,
) -> Result<(Network, Parameters<T>)> {
    let net = Network::new(config.clone())?;
    let params = net.init_params(rng);
    Ok((net, params))
}

impl Network {
    /// Validates the config and checks channel and spatial plumbing.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut shape = config.input_shape;
        let mut stem = Vec::new();
        for (i, s) in config.stem.iter().enumerate() {
            let layer = match s {
                StemLayer::Conv(c) => Layer::conv(
                    format!("stem.{i}"),
                    shape[0],
                    c.out_channels,
                    c.kernel,
                    c.stride,
                    c.padding,
                ),
                StemLayer::MaxPool(p) => Layer::MaxPool {
                    window: p.window,
                    stride: p.stride,
                    padding: p.padding,
                },
            };
            shape = layer.output_shape(shape)?;
            stem.push(layer);
        }
        let mut modules = Vec::new();
        for (i, spec) in config.modules.iter().enumerate() {
            if spec.in_channels != shape[0] {
                return Err(Error::Config(format!(
                    "module {i} expects {} input channels but the previous layer yields {}",
                    spec.in_channels, shape[0]
                )));
            }
            let m = InceptionModule::new(format!("inc.{i}"), spec.clone())?;
            shape = m.output_shape(shape)?;
            modules.push(m);
        }
        let p = &config.tail_pool;
        let c = &config.tail_conv;
        let pool = Layer::MaxPool {
            window: p.window,
            stride: p.stride,
            padding: p.padding,
        };
        shape = pool.output_shape(shape)?;
        let conv = Layer::conv(
            "tail",
            shape[0],
            c.out_channels,
            c.kernel,
            c.stride,
            c.padding,
        );
        shape = conv.output_shape(shape)?;
        let tail = vec![pool, conv];
        let flat_dim = shape.iter().product();
        Ok(Self {
            config,
            stem,
            modules,
            tail,
            flat_dim,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn modules(&self) -> &[InceptionModule] {
        &self.modules
    }

    /// Width of the flattened tail output feeding the embedding layer.
    pub fn flat_dim(&self) -> usize {
        self.flat_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn bn(&self) -> BnSettings {
        BnSettings {
            momentum: self.config.bn_momentum,
            epsilon: self.config.bn_epsilon,
        }
    }

    pub fn init_params<T: Scalar>(&self, rng: &mut SeededRng) -> Parameters<T> {
        let mut params = Parameters::new();
        for layer in &self.stem {
            layer.init_params(&mut params, rng);
        }
        for m in &self.modules {
            m.init_params(&mut params, rng);
        }
        for layer in &self.tail {
            layer.init_params(&mut params, rng);
        }
        let (f, e) = (self.flat_dim, self.config.embed_dim);
        params.insert("embed.weight", xavier_uniform(&[e, f], f, e, rng));
        params.insert("embed.bias", Tensor::zeros(&[e]));
        self.init_head(&mut params, rng);
        params
    }

    fn init_head<T: Scalar>(&self, params: &mut Parameters<T>, rng: &mut SeededRng) {
        let (e, k) = (self.config.embed_dim, self.config.num_classes);
        params.insert("head.weight", xavier_uniform(&[k, e], e, k, rng));
        params.insert("head.bias", Tensor::zeros(&[k]));
    }

    /// Same body with a freshly initialized head of `num_classes` outputs.
    pub fn with_new_head<T: Scalar>(
        &self,
        params: &Parameters<T>,
        num_classes: usize,
        rng: &mut SeededRng,
    ) -> Result<(Network, Parameters<T>)> {
        let mut config = self.config.clone();
        config.num_classes = num_classes;
        let net = Network::new(config)?;
        let mut p = params.clone();
        net.init_head(&mut p, rng);
        Ok((net, p))
    }

    /// Checks that `params` holds exactly the tensors this network needs.
    pub fn check_params<T: Scalar>(&self, params: &Parameters<T>) -> Result<()> {
        let mut rng = SeededRng::new(0);
        let reference: Parameters<T> = self.init_params(&mut rng);
        if reference.len() != params.len() {
            return Err(Error::Config(format!(
                "network needs {} parameter tensors, got {}",
                reference.len(),
                params.len()
            )));
        }
        for (name, t) in reference.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, network expects {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(
        &self,
        params: &Parameters<T>,
        batch: &Tensor<T>,
        mode: BnMode,
    ) -> Result<ForwardPass<T>> {
        let [b, c, h, w] = batch.dims4("network")?;
        if [c, h, w] != self.config.input_shape {
            return Err(Error::shape(
                "network",
                format!(
                    "batch images are {c}x{h}x{w}, network expects {:?}",
                    self.config.input_shape
                ),
            ));
        }
        let bn = self.bn();
        let mut updates = Vec::new();
        let (mut x, stem) = chain_forward(&self.stem, params, batch, mode, bn, &mut updates)?;
        let mut module_caches = Vec::with_capacity(self.modules.len());
        for m in &self.modules {
            let (y, cache) = m.forward(params, &x, mode, bn, &mut updates)?;
            module_caches.push(cache);
            x = y;
        }
        let (x, tail) = chain_forward(&self.tail, params, &x, mode, bn, &mut updates)?;
        let tail_shape = x.shape().to_vec();
        let flat = x.reshape(&[b, self.flat_dim])?;
        let (pre, embed) = fully_connected_forward(
            &flat,
            params.get("embed.weight")?,
            params.get("embed.bias")?,
        )?;
        let embedding = tanh_forward(&pre);
        let (logits, head) = fully_connected_forward(
            &embedding,
            params.get("head.weight")?,
            params.get("head.bias")?,
        )?;
        let tape = (mode == BnMode::Train).then_some(Tape {
            stem,
            modules: module_caches,
            tail,
            tail_shape,
            embed,
            head,
        });
        Ok(ForwardPass {
            logits,
            embedding,
            running_updates: updates,
            tape,
        })
    }

    /// Backpropagates `grad_logits` through a recorded train-mode pass.
    pub fn backward<T: Scalar>(
        &self,
        pass: &ForwardPass<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<Gradients<T>> {
        let tape = pass.tape.as_ref().ok_or_else(|| {
            Error::Usage("missing forward cache: backward needs a train-mode forward".into())
        })?;
        let mut grads = Parameters::new();
        let head = fully_connected_backward(grad_logits, &tape.head)?;
        grads.insert("head.weight", head.weights);
        grads.insert("head.bias", head.bias);
        let g = tanh_backward(&head.input, &pass.embedding)?;
        let embed = fully_connected_backward(&g, &tape.embed)?;
        grads.insert("embed.weight", embed.weights);
        grads.insert("embed.bias", embed.bias);
        let g = embed.input.reshape(&tape.tail_shape)?;
        let mut g = chain_backward(&self.tail, &tape.tail, &g, &mut grads)?;
        for (m, cache) in self.modules.iter().zip(&tape.modules).rev() {
            g = m.backward(cache, &g, &mut grads)?;
        }
        let input = chain_backward(&self.stem, &tape.stem, &g, &mut grads)?;
        Ok(Gradients {
            params: grads,
            input,
        })
    }

    /// Inference-mode embeddings for a batch, `B × embed_dim`.
    pub fn embed<T: Scalar>(&self, params: &Parameters<T>, batch: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(params, batch, BnMode::Inference)?.embedding)
    }
}

/// Embedding of one `C×H×W` image (inference mode).
pub fn extract_embedding<T: Scalar>(
    net: &Network,
    params: &Parameters<T>,
    image: &Tensor<T>,
) -> Result<Vec<T>> {
    let mut shape = vec![1];
    shape.extend_from_slice(image.shape());
    if shape.len() != 4 {
        return Err(Error::shape(
            "extract_embedding",
            format!("expected one CxHxW image, got shape {:?}", image.shape()),
        ));
    }
    let batch = image.clone().reshape(&shape)?;
    Ok(net.embed(params, &batch)?.into_data())
}

/// Writes the running statistics of a train-mode pass into `params`.
pub fn apply_running_updates<T: Scalar>(
    params: &mut Parameters<T>,
    updates: RunningUpdates<T>,
) -> Result<()> {
    for (name, t) in updates {
        *params.get_mut(&name)? = t;
    }
    Ok(())
}
