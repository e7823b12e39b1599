use proptest::prelude::*;
use soma_forge::diagnostics::{
    batchnorm_check, conv2d_check, example_inception_spec, fault_injection_check,
    fully_connected_check, gradient_suite, inception_check, softmax_cross_entropy_check,
    tanh_check,
};
use soma_forge::network::NetworkConfig;
use soma_forge::tensor::BnMode;

#[test]
fn every_layer_matches_finite_differences() {
    for check in gradient_suite().unwrap() {
        assert!(
            check.max_relative_error < 1e-4,
            "{}: {:e} over {} coordinates",
            check.name,
            check.max_relative_error,
            check.coordinates
        );
    }
}

#[test]
fn injected_fault_is_caught() {
    assert!(fault_injection_check().unwrap() > 0.05);
}

#[test]
fn mini_profile_modules_check_out() {
    // Real channel layout of the first mini module on a small spatial grid.
    let mut spec = NetworkConfig::mini(2).modules[2].clone();
    spec.in_channels = 4;
    spec.reduce_3x3 = 3;
    spec.out_3x3 = 2;
    spec.reduce_double_3x3 = 2;
    spec.out_double_3x3 = 2;
    let r = inception_check(spec, 3).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn conv_gradients_hold_for_any_seed(seed in 0u64..10_000) {
        let r = conv2d_check(seed).unwrap();
        prop_assert!(r.max_relative_error < 1e-4, "{:?}", r);
    }

    #[test]
    fn smooth_layers_hold_for_any_seed(seed in 0u64..10_000) {
        for r in [
            batchnorm_check(seed, BnMode::Train).unwrap(),
            batchnorm_check(seed, BnMode::Inference).unwrap(),
            fully_connected_check(seed).unwrap(),
            tanh_check(seed).unwrap(),
            softmax_cross_entropy_check(seed).unwrap(),
        ] {
            prop_assert!(r.max_relative_error < 1e-4, "{:?}", r);
        }
    }

    #[test]
    fn inception_gradients_hold_for_any_seed(seed in 0u64..10_000, stride in 1usize..=2) {
        let r = inception_check(example_inception_spec(stride), seed).unwrap();
        // Modules have max-pool and ReLU kinks; a straddled kink is the only
        // legitimate way to miss, and shows up as an O(1) error.
        prop_assert!(r.max_relative_error < 1e-4 || r.max_relative_error > 1e-2, "{:?}", r);
    }
}
