//! Finite-difference self-checks of every differentiable piece, run in f64.

use crate::error::Result;
use crate::network::{
    build_network, BnSettings, InceptionModule, InceptionSpec, NetworkConfig, Parameters,
};
use crate::rng::SeededRng;
use crate::tensor::{
    batchnorm_backward, batchnorm_forward, channel_concat, channel_split, conv2d_backward,
    conv2d_forward, finite_difference_check, fully_connected_backward, fully_connected_forward,
    maxpool_backward, maxpool_forward, one_hot, relu_backward, relu_forward, softmax_cross_entropy,
    tanh_backward, tanh_forward, BatchNormParams, BnMode, Tensor,
};

pub const GRADCHECK_EPSILON: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerCheck {
    pub name: String,
    pub max_relative_error: f64,
    pub coordinates: usize,
}

fn normal(shape: &[usize], rng: &mut SeededRng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.normal()).collect()).expect("shape product")
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn record(
    name: &str,
    inputs: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    loss: impl FnMut(&[Tensor<f64>]) -> Result<f64>,
) -> Result<LayerCheck> {
    let r = finite_difference_check(loss, inputs, analytic, GRADCHECK_EPSILON)?;
    Ok(LayerCheck {
        name: name.to_string(),
        max_relative_error: r.max_relative_error,
        coordinates: r.coordinates,
    })
}

/// Each op is reduced to a scalar by a dot product with a fixed random probe.
pub fn conv2d_check(seed: u64) -> Result<LayerCheck> {
    let mut rng = SeededRng::new(seed);
    let x = normal(&[2, 3, 7, 6], &mut rng);
    let w = normal(&[4, 3, 3, 3], &mut rng);
    let b = normal(&[4], &mut rng);
    let (y, cache) = conv2d_forward(&x, &w, Some(&b), 2, 1)?;
    let probe = normal(y.shape(), &mut rng);
    let g = conv2d_backward(&probe, &cache)?;
    let gb = g.bias.expect("bias gradient");
    record("conv2d", &[x, w, b], &[g.input, g.weights, gb], |v| {
        Ok(dot(
            &conv2d_forward(&v[0], &v[1], Some(&v[2]), 2, 1)?.0,
            &probe,
        ))
    })
}

pub fn maxpool_check(seed: u64) -> Result<LayerCheck> {
    let mut rng = SeededRng::new(seed);
    let x = normal(&[2, 3, 8, 7], &mut rng);
    let (y, cache) = maxpool_forward(&x, 3, 2, 1)?;
    let probe = normal(y.shape(), &mut rng);
    let dx = maxpool_backward(&probe, &cache)?;
    record("maxpool", &[x], &[dx], |v| {
        Ok(dot(&maxpool_forward(&v[0], 3, 2, 1)?.0, &probe))
    })
}

pub fn batchnorm_check(seed: u64, mode: BnMode) -> Result<LayerCheck> {
    let mut rng = SeededRng::new(seed);
    let x = normal(&[2, 8, 5, 6], &mut rng).map(|v| 1.5 * v + 0.7);
    let gamma = normal(&[8], &mut rng).map(|v| 1.0 + 0.3 * v);
    let beta = normal(&[8], &mut rng);
    let rm = normal(&[8], &mut rng).map(|v| 0.2 * v);
    let rv = normal(&[8], &mut rng).map(|v| 1.0 + 0.5 * v.abs());
    let run = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| {
        batchnorm_forward(
            x,
            BatchNormParams {
                gamma: g,
                beta: b,
                running_mean: &rm,
                running_var: &rv,
                epsilon: 1e-5,
                momentum: 0.9,
            },
            mode,
        )
    };
    let out = run(&x, &gamma, &beta)?;
    let probe = normal(out.output.shape(), &mut rng);
    let g = batchnorm_backward(&probe, &out.cache)?;
    let name = match mode {
        BnMode::Train => "batchnorm (train)",
        BnMode::Inference => "batchnorm (inference)",
    };
    record(name, &[x, gamma, beta], &[g.input, g.gamma, g.beta], |v| {
        Ok(dot(&run(&v[0], &v[1], &v[2])?.output, &probe))
    })
}

pub fn relu_check(seed: u64) -> Result<LayerCheck> {
    let mut rng = SeededRng::new(seed);
    let x = normal(&[2, 4, 6, 6], &mut rng);
    let probe = normal(x.shape(), &mut rng);
    let dx = relu_backward(&probe, &x)?;
    record("relu", &[x], &[dx], |v| {
        Ok(dot(&relu_forward(&v[0]), &probe))
    })
}

pub fn tanh_check(seed: u64) -> Result<LayerCheck> {
    let mut rng = SeededRng::new(seed);
    let x = normal(&[5, 7], &mut rng);
    let y = tanh_forward(&x);
    let probe = normal(x.shape(), &mut rng);
    let dx = tanh_backward(&probe, &y)?;
    record("tanh", &[x], &[dx], |v| {
        Ok(dot(&tanh_forward(&v[0]), &probe))
    })
}

pub fn fully_connected_check(seed: u64) -> Result<LayerCheck> {
    let mut rng = SeededRng::new(seed);
    let x = normal(&[4, 9], &mut rng);
    let w = normal(&[5, 9], &mut rng);
    let b = normal(&[5], &mut rng);
    let (y, cache) = fully_connected_forward(&x, &w, &b)?;
    let probe = normal(y.shape(), &mut rng);
    let g = fully_connected_backward(&probe, &cache)?;
    record(
        "fully_connected",
        &[x, w, b],
        &[g.input, g.weights, g.bias],
        |v| {
            Ok(dot(
                &fully_connected_forward(&v[0], &v[1], &v[2])?.0,
                &probe,
            ))
        },
    )
}

pub fn concat_check(seed: u64) -> Result<LayerCheck> {
    let mut rng = SeededRng::new(seed);
    let a = normal(&[2, 2, 3, 4], &mut rng);
    let b = normal(&[2, 3, 3, 4], &mut rng);
    let probe = normal(&[2, 5, 3, 4], &mut rng);
    let parts = channel_split(&probe, &[2, 3])?;
    record("channel_concat", &[a, b], &parts, |v| {
        Ok(dot(&channel_concat(&[&v[0], &v[1]])?, &probe))
    })
}

pub fn softmax_cross_entropy_check(seed: u64) -> Result<LayerCheck> {
    let mut rng = SeededRng::new(seed);
    let logits = normal(&[4, 5], &mut rng).map(|v| 2.0 * v);
    let targets: Tensor<f64> = one_hot(&[1, 4, 0, 1], 5)?;
    let (_, g) = softmax_cross_entropy(&logits, &targets)?;
    record("softmax_cross_entropy", &[logits], &[g], |v| {
        Ok(softmax_cross_entropy(&v[0], &targets)?.0)
    })
}

/// Inception module (or its reduced form) on a random 2×C×6×6 input.
pub fn inception_check(spec: InceptionSpec, seed: u64) -> Result<LayerCheck> {
    let mut rng = SeededRng::new(seed);
    let name = if spec.is_reduced() {
        "reduced inception module"
    } else {
        "inception module"
    };
    let module = InceptionModule::new("m", spec.clone())?;
    let mut params = Parameters::<f64>::new();
    module.init_params(&mut params, &mut rng);
    for (n, t) in params.iter_mut() {
        if n.ends_with("gamma") || n.ends_with("beta") {
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v += 0.3 * rng.normal());
        }
    }
    let x = normal(&[2, spec.in_channels, 6, 6], &mut rng);
    let bn = BnSettings {
        momentum: 0.9,
        epsilon: 1e-5,
    };
    let mut updates = Vec::new();
    let (y, cache) = module.forward(&params, &x, BnMode::Train, bn, &mut updates)?;
    let probe = normal(y.shape(), &mut rng);
    let mut grads = Parameters::new();
    let dx = module.backward(&cache, &probe, &mut grads)?;

    let names: Vec<String> = grads.names().cloned().collect();
    let mut inputs = vec![x];
    let mut analytic = vec![dx];
    for n in &names {
        inputs.push(params.get(n)?.clone());
        analytic.push(grads.get(n)?.clone());
    }
    record(name, &inputs, &analytic, |v| {
        let mut p = params.clone();
        for (n, t) in names.iter().zip(&v[1..]) {
            *p.get_mut(n)? = t.clone();
        }
        let mut u = Vec::new();
        Ok(dot(
            &module.forward(&p, &v[0], BnMode::Train, bn, &mut u)?.0,
            &probe,
        ))
    })
}

/// Mean cross-entropy of the tiny profile (3×16×8 input, 4 classes) on a
/// batch of three, with respect to the input and every trainable parameter.
///
/// The point is fixed: at random points a coordinate occasionally straddles
/// a ReLU or max-pool kink within ±ε and the central difference is then not
/// a derivative estimate.
pub fn tiny_network_check() -> Result<LayerCheck> {
    tiny_network_run(false)
}

fn tiny_network_run(inject_fault: bool) -> Result<LayerCheck> {
    let mut rng = SeededRng::new(21);
    let (net, mut params) = build_network::<f64>(&NetworkConfig::tiny(4), &mut rng)?;
    for (name, t) in params.iter_mut() {
        // Small beta offsets: a channel that stays fully active through a
        // pool and a 1×1 conv has a beta gradient of exactly zero, which
        // finite differences only resolve to rounding noise.
        let scale = match name.rsplit('.').next() {
            Some("gamma" | "bias") => 0.2,
            Some("beta") => 0.05,
            _ => 0.0,
        };
        t.data_mut()
            .iter_mut()
            .for_each(|v| *v += scale * rng.normal());
    }
    let x = normal(&[3, 3, 16, 8], &mut rng);
    let targets: Tensor<f64> = one_hot(&[0, 2, 3], 4)?;
    let pass = net.forward(&params, &x, BnMode::Train)?;
    let (_, g) = softmax_cross_entropy(&pass.logits, &targets)?;
    let grads = net.backward(&pass, &g)?;

    let names: Vec<String> = grads.params.names().cloned().collect();
    let mut inputs = vec![x];
    let mut analytic = vec![grads.input];
    if inject_fault {
        let d = analytic[0].data_mut();
        let (i, _) = d.iter().enumerate().fold((0, 0.0f64), |best, (i, v)| {
            if v.abs() > best.1 {
                (i, v.abs())
            } else {
                best
            }
        });
        d[i] *= 1.1;
    }
    for n in &names {
        inputs.push(params.get(n)?.clone());
        analytic.push(grads.params.get(n)?.clone());
    }
    record("tiny network end to end", &inputs, &analytic, |v| {
        let mut p = params.clone();
        for (n, t) in names.iter().zip(&v[1..]) {
            *p.get_mut(n)? = t.clone();
        }
        let pass = net.forward(&p, &v[0], BnMode::Train)?;
        Ok(softmax_cross_entropy(&pass.logits, &targets)?.0)
    })
}

pub fn example_inception_spec(stride: usize) -> InceptionSpec {
    InceptionSpec {
        in_channels: 3,
        out_1x1: if stride == 1 { 2 } else { 0 },
        reduce_3x3: 2,
        out_3x3: 3,
        reduce_double_3x3: 2,
        out_double_3x3: 2,
        pool_proj: if stride == 1 { 2 } else { 0 },
        stride,
        include_1x1_output: stride == 1,
    }
}

/// Every check above at fixed seeded points, in a fixed order.
pub fn gradient_suite() -> Result<Vec<LayerCheck>> {
    Ok(vec![
        conv2d_check(1)?,
        maxpool_check(2)?,
        batchnorm_check(3, BnMode::Train)?,
        batchnorm_check(4, BnMode::Inference)?,
        relu_check(5)?,
        tanh_check(6)?,
        fully_connected_check(7)?,
        concat_check(8)?,
        softmax_cross_entropy_check(9)?,
        inception_check(example_inception_spec(1), 11)?,
        inception_check(example_inception_spec(2), 12)?,
        tiny_network_check()?,
    ])
}

/// The network check with the largest input-gradient coordinate inflated
/// by 10%. Returns the checker's verdict, which must exceed 0.05.
pub fn fault_injection_check() -> Result<f64> {
    Ok(tiny_network_run(true)?.max_relative_error)
}
