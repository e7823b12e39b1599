use soma_forge::network::{
    build_network, extract_embedding, xavier_uniform, InceptionModule, InceptionSpec, Network,
    NetworkConfig,
};
use soma_forge::tensor::BnMode;
use soma_forge::{Error, SeededRng, Tensor};

fn random_tensor(shape: &[usize], rng: &mut SeededRng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

#[test]
fn mini_profile_builds_and_chains() {
    let mut rng = SeededRng::new(1);
    let (net, params) = build_network::<f32>(&NetworkConfig::mini(10), &mut rng).unwrap();
    net.check_params(&params).unwrap();
    assert_eq!(
        params.get("embed.weight").unwrap().shape(),
        &[256, net.flat_dim()]
    );
    assert_eq!(params.get("head.weight").unwrap().shape(), &[10, 256]);
    let mut prev = 24;
    for m in net.modules() {
        assert_eq!(m.spec().in_channels, prev);
        prev = m.out_channels();
    }
    // 128x64 -> stem /4 -> 32x16, reduced module -> 16x8, tail pool -> 8x4.
    assert_eq!(net.flat_dim(), 128 * 8 * 4);
}

#[test]
fn broken_channel_plumbing_is_a_config_error() {
    let mut cfg = NetworkConfig::mini(10);
    cfg.modules[1].in_channels = 63;
    assert!(matches!(Network::new(cfg), Err(Error::Config(_))));
}

#[test]
fn xavier_standard_deviation() {
    let mut rng = SeededRng::new(3);
    let w: Tensor<f64> = xavier_uniform(&[100, 100], 100, 100, &mut rng);
    let n = w.len() as f64;
    let mean = w.data().iter().sum::<f64>() / n;
    let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let expected = (2.0f64 / 200.0).sqrt();
    assert!(
        (var.sqrt() - expected).abs() < 0.1 * expected,
        "std {}",
        var.sqrt()
    );
}

#[test]
fn same_seed_same_parameters() {
    let cfg = NetworkConfig::tiny(4);
    let (_, a) = build_network::<f32>(&cfg, &mut SeededRng::new(9)).unwrap();
    let (_, b) = build_network::<f32>(&cfg, &mut SeededRng::new(9)).unwrap();
    for ((na, ta), (nb, tb)) in a.iter().zip(b.iter()) {
        assert_eq!(na, nb);
        let bits_a: Vec<u32> = ta.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u32> = tb.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }
}

#[test]
fn embedding_bounded_and_pure() {
    let mut rng = SeededRng::new(4);
    let cfg = NetworkConfig::mini(5);
    let (net, params) = build_network::<f32>(&cfg, &mut rng).unwrap();
    let img: Tensor<f32> = random_tensor(&[1, 3, 128, 64], &mut rng).cast();
    let batch = Tensor::stack(&[&img.clone().reshape(&[3, 128, 64]).unwrap(); 2]).unwrap();
    let e = net.embed(&params, &batch).unwrap();
    assert_eq!(e.shape(), &[2, 256]);
    assert!(e.data().iter().all(|v| v.abs() < 1.0));
    assert_eq!(e.data()[..256], e.data()[256..]);

    let zero = Tensor::<f32>::zeros(&[3, 128, 64]);
    let z = extract_embedding(&net, &params, &zero).unwrap();
    assert_eq!(z.len(), 256);
    assert!(z.iter().all(|v| v.is_finite() && v.abs() < 1.0));
    assert_eq!(z, extract_embedding(&net, &params, &zero).unwrap());
}

#[test]
fn embedding_ignores_the_head() {
    let mut rng = SeededRng::new(5);
    let (net, params) = build_network::<f64>(&NetworkConfig::tiny(4), &mut rng).unwrap();
    let img = random_tensor(&[3, 16, 8], &mut rng);
    let before = extract_embedding(&net, &params, &img).unwrap();
    let (net7, params7) = net.with_new_head(&params, 7, &mut rng).unwrap();
    assert_eq!(params7.get("head.weight").unwrap().shape(), &[7, 8]);
    assert_eq!(before, extract_embedding(&net7, &params7, &img).unwrap());
}

#[test]
fn backward_without_forward_cache_is_usage_error() {
    let mut rng = SeededRng::new(6);
    let (net, params) = build_network::<f64>(&NetworkConfig::tiny(4), &mut rng).unwrap();
    let x = random_tensor(&[2, 3, 16, 8], &mut rng);
    let pass = net.forward(&params, &x, BnMode::Inference).unwrap();
    let g = Tensor::zeros(pass.logits.shape());
    assert!(matches!(net.backward(&pass, &g), Err(Error::Usage(_))));
}

#[test]
fn wrong_input_shape_is_rejected() {
    let mut rng = SeededRng::new(6);
    let (net, params) = build_network::<f64>(&NetworkConfig::tiny(4), &mut rng).unwrap();
    let x = Tensor::zeros(&[1, 3, 8, 8]);
    assert!(matches!(
        net.forward(&params, &x, BnMode::Inference),
        Err(Error::Shape { .. })
    ));
}

#[test]
fn reduced_module_halves_spatial_dims() {
    let spec = InceptionSpec {
        in_channels: 3,
        out_1x1: 0,
        reduce_3x3: 2,
        out_3x3: 3,
        reduce_double_3x3: 2,
        out_double_3x3: 2,
        pool_proj: 0,
        stride: 2,
        include_1x1_output: false,
    };
    let m = InceptionModule::new("r", spec).unwrap();
    assert_eq!(m.output_shape([3, 16, 16]).unwrap(), [3 + 3 + 2, 8, 8]);
    assert_eq!(m.output_shape([3, 7, 5]).unwrap(), [8, 4, 3]);
}

#[test]
fn stride_one_module_preserves_spatial_dims() {
    let spec = NetworkConfig::mini(3).modules[0].clone();
    let m = InceptionModule::new("m", spec).unwrap();
    assert_eq!(m.output_shape([24, 32, 16]).unwrap(), [64, 32, 16]);
}
