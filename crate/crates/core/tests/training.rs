use soma_forge::network::{build_network, is_head_param, NetworkConfig, Parameters};
use soma_forge::tensor::{one_hot, softmax_cross_entropy, BnMode};
use soma_forge::training::{
    evaluate_classifier, finetune, load_checkpoint, save_checkpoint, sgd_momentum_step, train,
    Checkpoint, LabeledSet, OptimizerState, SgdSettings, TrainConfig,
};
use soma_forge::{Error, Scalar, SeededRng, Tensor};

/// Images of `classes` kinds: a bright square whose vertical position encodes
/// the class, plus pixel noise.
fn blobs<T: Scalar>(classes: usize, per_class: usize, seed: u64) -> LabeledSet<T> {
    let mut rng = SeededRng::new(seed);
    let (h, w) = (16, 8);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..classes * per_class {
        let c = i % classes;
        let top = 1 + c * (h - 4) / classes.max(2).saturating_sub(1).max(1);
        let top = top.min(h - 4);
        let left = 1 + rng.below(w - 4);
        let mut data = vec![0.0; 3 * h * w];
        for ch in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let inside = (top..top + 3).contains(&y) && (left..left + 3).contains(&x);
                    data[(ch * h + y) * w + x] =
                        if inside { 1.0 } else { -0.5 } + 0.2 * rng.normal();
                }
            }
        }
        images.push(Tensor::<f64>::from_f64(&[3, h, w], &data).unwrap().cast());
        labels.push(c);
    }
    LabeledSet::from_images(&images, labels).unwrap()
}

fn quick_config(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        max_epochs,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn bits<T: Scalar>(p: &Parameters<T>, keep: impl Fn(&str) -> bool) -> Vec<(String, Vec<u8>)> {
    p.iter()
        .filter(|(n, _)| keep(n))
        .map(|(n, t)| {
            let mut b = Vec::new();
            for v in t.data() {
                v.write_le(&mut b);
            }
            (n.clone(), b)
        })
        .collect()
}

fn pretrained(seed: u64, epochs: usize) -> Checkpoint<f32> {
    let data = blobs::<f32>(3, 8, seed);
    let (net, params) =
        build_network::<f32>(&NetworkConfig::tiny(3), &mut SeededRng::new(seed)).unwrap();
    train(&net, params, &data, &data, &quick_config(epochs)).unwrap()
}

#[test]
fn separable_blobs_are_learned_within_twenty_epochs() {
    let tr = blobs::<f32>(3, 30, 1);
    let val = blobs::<f32>(3, 10, 2);
    let (net, params) =
        build_network::<f32>(&NetworkConfig::tiny(3), &mut SeededRng::new(7)).unwrap();
    let ckpt = train(&net, params, &tr, &val, &quick_config(20)).unwrap();
    let eval = evaluate_classifier(&net, &ckpt.params, &val, 16, 1).unwrap();
    assert!(
        eval.accuracy() > 0.95,
        "validation accuracy {}",
        eval.accuracy()
    );
    assert_eq!(ckpt.history.len(), 20);
    assert!(ckpt.history.last().unwrap().val_accuracy > 0.95);
}

#[test]
fn same_seed_same_checkpoint_bytes() {
    let a = pretrained(4, 3).to_bytes().unwrap();
    let b = pretrained(4, 3).to_bytes().unwrap();
    assert_eq!(a, b);
}

#[test]
fn first_batch_loss_is_near_log_k() {
    // Balanced batch of 32 over K = 10 classes through the default profile.
    let k = 10;
    let mut rng = SeededRng::new(11);
    let (net, params) = build_network::<f32>(&NetworkConfig::mini(k), &mut rng).unwrap();
    let n = 32 * 3 * 128 * 64;
    let x = Tensor::from_vec(
        &[32, 3, 128, 64],
        (0..n).map(|_| rng.normal() as f32).collect(),
    )
    .unwrap();
    let labels: Vec<usize> = (0..32).map(|i| i % k).collect();
    let logits = net.forward(&params, &x, BnMode::Train).unwrap().logits;
    let (loss, _) = softmax_cross_entropy(&logits, &one_hot(&labels, k).unwrap()).unwrap();
    let ln_k = (k as f64).ln();
    assert!(
        (loss.f64() - ln_k).abs() <= 0.1 * ln_k,
        "first-batch loss {} vs ln K {}",
        loss.f64(),
        ln_k
    );
}

#[test]
fn one_small_step_decreases_the_loss() {
    let data = blobs::<f64>(3, 4, 5);
    let (net, mut params) =
        build_network::<f64>(&NetworkConfig::tiny(3), &mut SeededRng::new(5)).unwrap();
    let x = data.images().clone();
    let targets = one_hot(data.labels(), 3).unwrap();
    let loss_of = |p: &Parameters<f64>| {
        let pass = net.forward(p, &x, BnMode::Train).unwrap();
        softmax_cross_entropy(&pass.logits, &targets).unwrap()
    };
    let pass = net.forward(&params, &x, BnMode::Train).unwrap();
    let (before, g) = softmax_cross_entropy(&pass.logits, &targets).unwrap();
    let grads = net.backward(&pass, &g).unwrap();
    let mut state = OptimizerState::new(&params, 1e-4);
    let plain = SgdSettings {
        momentum: 0.0,
        weight_decay: 0.0,
    };
    sgd_momentum_step(&mut params, &grads.params, &mut state, plain, |_| 1.0).unwrap();
    let (after, _) = loss_of(&params);
    assert!(after < before, "loss {before} -> {after}");
}

#[test]
fn zero_step_finetune_keeps_body_and_resizes_head() {
    let base = pretrained(6, 1);
    let data = blobs::<f32>(5, 2, 8);
    let tuned = finetune(&base, &data, &data, 5, &quick_config(0)).unwrap();
    let body = |n: &str| !is_head_param(n);
    assert_eq!(bits(&base.params, body), bits(&tuned.params, body));
    assert_eq!(tuned.params.get("head.weight").unwrap().shape(), &[5, 8]);
    assert_eq!(tuned.params.get("head.bias").unwrap().shape(), &[5]);
    assert_eq!(tuned.network.num_classes, 5);
}

#[test]
fn frozen_body_is_bitwise_unchanged_by_finetuning() {
    let base = pretrained(9, 1);
    let data = blobs::<f32>(4, 4, 10);
    let config = TrainConfig {
        body_lr_ratio: 0.0,
        ..quick_config(2)
    };
    let tuned = finetune(&base, &data, &data, 4, &config).unwrap();
    let body = |n: &str| !is_head_param(n);
    assert_eq!(bits(&base.params, body), bits(&tuned.params, body));
    assert_ne!(
        bits(&base.params, is_head_param).len(),
        0,
        "head entries present"
    );
    assert_eq!(tuned.params.get("head.weight").unwrap().shape(), &[4, 8]);
}

#[test]
fn finetuning_updates_the_body() {
    let base = pretrained(12, 1);
    let data = blobs::<f32>(3, 4, 13);
    let tuned = finetune(&base, &data, &data, 3, &quick_config(1)).unwrap();
    let w0 = base.params.get("embed.weight").unwrap();
    let w1 = tuned.params.get("embed.weight").unwrap();
    assert_ne!(w0, w1);
}

#[test]
fn checkpoint_file_round_trip_is_byte_identical() {
    let ckpt = pretrained(14, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.somf");
    save_checkpoint(&path, &ckpt).unwrap();
    let loaded = load_checkpoint::<f32>(&path).unwrap();
    assert_eq!(loaded, ckpt);
    let path2 = dir.path().join("b.somf");
    save_checkpoint(&path2, &loaded).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&path2).unwrap()
    );
    loaded.network().unwrap();
}

#[test]
fn f64_parameters_round_trip_exactly() {
    let mut rng = SeededRng::new(15);
    let (net, params) = build_network::<f64>(&NetworkConfig::tiny(2), &mut rng).unwrap();
    let ckpt = Checkpoint {
        network: net.config().clone(),
        params: params.clone(),
        optimizer: None,
        history: Vec::new(),
        seed: 15,
        train_config: None,
    };
    let back = Checkpoint::<f64>::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
    assert_eq!(bits(&back.params, |_| true), bits(&params, |_| true));
    assert!(matches!(
        Checkpoint::<f32>::from_bytes(&ckpt.to_bytes().unwrap()),
        Err(Error::Format(_))
    ));
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let bytes = pretrained(16, 1).to_bytes().unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let mut bad_version = bytes.clone();
    bad_version[4] = 2;
    let truncated = &bytes[..bytes.len() - 3];
    let mut trailing = bytes.clone();
    trailing.push(0);
    for b in [
        &bad_magic[..],
        &bad_version,
        truncated,
        &trailing,
        &bytes[..10],
    ] {
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(b),
            Err(Error::Format(_))
        ));
    }
}

#[test]
fn out_of_range_labels_are_data_errors() {
    let data = blobs::<f32>(3, 2, 17);
    let (net, params) =
        build_network::<f32>(&NetworkConfig::tiny(2), &mut SeededRng::new(17)).unwrap();
    let err = train(&net, params.clone(), &data, &data, &quick_config(1)).unwrap_err();
    assert!(matches!(err, Error::Data(_)), "{err}");

    let empty = data.subset(&[]).unwrap();
    let err = train(&net, params, &empty, &data, &quick_config(1)).unwrap_err();
    assert!(matches!(err, Error::Data(_)), "{err}");
}

#[test]
fn invalid_config_is_rejected() {
    let (net, params) =
        build_network::<f32>(&NetworkConfig::tiny(3), &mut SeededRng::new(18)).unwrap();
    let data = blobs::<f32>(3, 2, 18);
    for cfg in [
        TrainConfig {
            initial_lr: 0.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            lr_factor: 1.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
    ] {
        let err = train(&net, params.clone(), &data, &data, &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
