use proptest::prelude::*;
use soma_forge::network::{Network, NetworkConfig};
use soma_forge::reid_eval::{
    average_precision, cmc, cross_validate, describe, describe_batch, evaluate_multi_shot,
    evaluate_single_shot, mean_average_precision, oracle, rank_multi_shot, rank_single_shot,
    CameraFilter, Descriptor, EvalReport, GalleryIndex, LabeledDescriptor, Protocol, Query, Shot,
};
use soma_forge::{Error, SeededRng, Tensor};

fn random_gallery(
    rng: &mut SeededRng,
    identities: usize,
    images: usize,
    dim: usize,
) -> Vec<(Descriptor, usize, u32)> {
    (0..images)
        .map(|i| {
            // Quantized coordinates make exact distance ties common.
            let values = (0..dim)
                .map(|_| (rng.range(-1.0, 1.0) * 4.0).round() / 4.0 + 1e-3)
                .collect();
            (
                Descriptor { values, source: i },
                rng.below(identities),
                rng.below(3) as u32,
            )
        })
        .collect()
}

fn protocol(shot: Shot, filter: CameraFilter, seed: u64) -> Protocol {
    Protocol {
        shot,
        filter,
        seed,
        round: 0,
    }
}

/// Rankings, CMC and mAP agree with the naive oracles on random instances.
fn check_instance(seed: u64) {
    let mut rng = SeededRng::new(seed);
    let ids = 1 + rng.below(20);
    let n = 2 + rng.below(199);
    let dim = 2 + rng.below(6);
    let items = random_gallery(&mut rng, ids, n, dim);
    let split = n / 4 + 1;
    let (queries, gallery) = items.split_at(split);
    let index = GalleryIndex::new(gallery.to_vec()).unwrap();
    for filter in [CameraFilter::None, CameraFilter::CrossCamera] {
        let mut relevance = Vec::new();
        for (d, id, cam) in queries {
            let q = Query {
                descriptor: d,
                identity: *id,
                camera: *cam,
            };
            let expected = oracle::single_shot(&d.values, *id, *cam, gallery, filter);
            match rank_single_shot(&q, &index, filter) {
                Ok(r) => {
                    let got: Vec<usize> = r.iter().map(|x| x.index).collect();
                    assert_eq!(got, expected, "seed {seed}");
                    relevance.push(got.iter().map(|&g| gallery[g].1 == *id).collect());
                }
                Err(Error::Domain(_)) => assert!(expected.is_empty()),
                Err(e) => panic!("{e}"),
            }
        }
        let max_rank = gallery.len();
        assert_eq!(
            cmc(&relevance, max_rank).rates,
            oracle::cmc(&relevance, max_rank)
        );
        let (aps, map) = mean_average_precision(&relevance);
        let expected: Vec<f64> = relevance
            .iter()
            .filter_map(|r| oracle::average_precision(r))
            .collect();
        assert_eq!(aps.len(), expected.len());
        for (a, b) in aps.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        if !expected.is_empty() {
            let m = expected.iter().sum::<f64>() / expected.len() as f64;
            assert!((map - m).abs() < 1e-12);
        }

        let probes: Vec<&Descriptor> = queries.iter().take(3).map(|q| &q.0).collect();
        let raw: Vec<&[f64]> = probes.iter().map(|p| p.values.as_slice()).collect();
        let (pid, cams) = (queries[0].1, [queries[0].2]);
        let expected = oracle::multi_shot(&raw, pid, &cams, gallery, filter);
        match rank_multi_shot(&probes, pid, &cams, &index, filter) {
            Ok(r) => {
                let got: Vec<usize> = r.iter().map(|x| x.identity).collect();
                assert_eq!(got, expected, "seed {seed}");
            }
            Err(Error::Domain(_)) => assert!(expected.is_empty()),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn fifty_random_instances_match_the_oracles() {
    for seed in 0..50 {
        check_instance(seed);
    }
}

#[test]
fn random_descriptors_give_chance_rank_one() {
    let mut rng = SeededRng::new(11);
    let g = 10;
    let mut hits = 0.0;
    let trials = 2000;
    for t in 0..trials {
        let items: Vec<LabeledDescriptor> = (0..g * 2)
            .map(|i| LabeledDescriptor {
                descriptor: Descriptor {
                    values: (0..8).map(|_| rng.normal()).collect(),
                    source: i,
                },
                identity: i / 2,
                camera: 0,
            })
            .collect();
        let r = evaluate_single_shot(&items, protocol(Shot::SingleShot, CameraFilter::None, t), 0)
            .unwrap();
        hits += r.rank1();
    }
    let rate = hits / trials as f64;
    // 20 000 queries; the standard error at p = 0.1 is about 0.002.
    assert!((rate - 0.1).abs() < 0.01, "rank-1 {rate}");
}

fn labeled(seed: u64, ids: usize, per: usize) -> Vec<LabeledDescriptor> {
    let mut rng = SeededRng::new(seed);
    (0..ids * per)
        .map(|i| LabeledDescriptor {
            descriptor: Descriptor {
                values: (0..6)
                    .map(|_| rng.normal() + (i / per) as f64 * 0.3)
                    .collect(),
                source: i,
            },
            identity: i / per,
            camera: (i % 2) as u32,
        })
        .collect()
}

fn check_report(r: &EvalReport) {
    for w in r.cmc.rates.windows(2) {
        assert!(w[1] >= w[0]);
    }
    assert!(r.cmc.rates.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(*r.cmc.rates.last().unwrap(), 1.0);
    let mean = r.ap.iter().sum::<f64>() / r.ap.len() as f64;
    assert!((r.map - mean).abs() < 1e-12);
}

#[test]
fn protocol_reports_are_consistent_and_reproducible() {
    let items = labeled(1, 8, 5);
    for shot in [Shot::SingleShot, Shot::MultiShot] {
        for filter in [CameraFilter::None, CameraFilter::CrossCamera] {
            let p = protocol(shot, filter, 9);
            let eval = |p| match shot {
                Shot::SingleShot => evaluate_single_shot(&items, p, 0),
                Shot::MultiShot => evaluate_multi_shot(&items, p, 0),
            };
            let a = eval(p).unwrap();
            check_report(&a);
            assert_eq!(a.protocol.shot, shot);
            assert_eq!(a, eval(p).unwrap());
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), a);
        }
    }
    let single =
        evaluate_single_shot(&items, protocol(Shot::SingleShot, CameraFilter::None, 9), 0).unwrap();
    assert_eq!(single.gallery_size, 8);
    assert_eq!(single.cmc.queries, 32);
    let multi =
        evaluate_multi_shot(&items, protocol(Shot::MultiShot, CameraFilter::None, 9), 0).unwrap();
    assert_eq!(multi.gallery_size, 8);
    assert_eq!(multi.cmc.queries, 8);
}

#[test]
fn one_probe_one_image_multi_shot_is_single_shot() {
    let mut rng = SeededRng::new(5);
    let gallery = random_gallery(&mut rng, 6, 6, 4)
        .into_iter()
        .enumerate()
        .map(|(i, (d, _, c))| (d, i, c))
        .collect::<Vec<_>>();
    let index = GalleryIndex::new(gallery.clone()).unwrap();
    let q = Descriptor {
        values: vec![0.3, -0.1, 0.7, 0.2],
        source: 99,
    };
    let single: Vec<usize> = rank_single_shot(
        &Query {
            descriptor: &q,
            identity: 0,
            camera: 9,
        },
        &index,
        CameraFilter::None,
    )
    .unwrap()
    .iter()
    .map(|r| gallery[r.index].1)
    .collect();
    let multi: Vec<usize> = rank_multi_shot(&[&q], 0, &[9], &index, CameraFilter::None)
        .unwrap()
        .iter()
        .map(|r| r.identity)
        .collect();
    assert_eq!(single, multi);
}

#[test]
fn cross_validation_partitions_follow_the_seed() {
    let ids: Vec<usize> = (0..10).collect();
    let mut seen = Vec::new();
    let cv = cross_validate(&ids, 4, 3, 21, |r, train, test| {
        assert_eq!((train.len(), test.len()), (6, 4));
        assert!(test.iter().all(|t| !train.contains(t)));
        seen.push(test.to_vec());
        let items: Vec<LabeledDescriptor> = labeled(r as u64, 10, 3)
            .into_iter()
            .filter(|d| test.contains(&d.identity))
            .collect();
        evaluate_single_shot(
            &items,
            protocol(Shot::SingleShot, CameraFilter::None, 21),
            0,
        )
    })
    .unwrap();
    assert_eq!(cv.reports.len(), 3);
    let mut again = Vec::new();
    cross_validate(&ids, 4, 3, 21, |_, _, test| {
        again.push(test.to_vec());
        evaluate_single_shot(
            &labeled(0, 3, 2),
            protocol(Shot::SingleShot, CameraFilter::None, 0),
            0,
        )
    })
    .unwrap();
    assert_eq!(seen, again);
    assert_ne!(seen[0], seen[1]);

    let one = cross_validate(&ids, 4, 1, 21, |_, _, _| {
        evaluate_single_shot(
            &labeled(0, 3, 2),
            protocol(Shot::SingleShot, CameraFilter::None, 0),
            0,
        )
    })
    .unwrap();
    assert_eq!(one.summary.std_rank1, 0.0);
    assert_eq!(one.summary.rounds, 1);
    assert!(cross_validate(&ids, 10, 1, 0, |_, _, _| unreachable!()).is_err());
    assert!(cross_validate(&ids, 2, 0, 0, |_, _, _| unreachable!()).is_err());
}

#[test]
fn descriptors_are_mirror_consistent() {
    let net = Network::new(NetworkConfig::tiny(3)).unwrap();
    let params = net.init_params::<f64>(&mut SeededRng::new(2));
    let mut rng = SeededRng::new(3);
    let img = Tensor::<f64>::from_f64(
        &[3, 16, 8],
        &(0..3 * 16 * 8)
            .map(|_| rng.range(-1.0, 1.0))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let d = describe(&net, &params, &img, 4).unwrap();
    assert_eq!(d.len(), 2 * net.embed_dim());
    assert_eq!(d.source, 4);
    assert!(d.values.iter().all(|v| v.abs() < 1.0));
    let m = describe(&net, &params, &img.flip_width(), 4).unwrap();
    assert_eq!(m, d.swap_halves());

    let stack = Tensor::stack(&[&img, &img.flip_width(), &img]).unwrap();
    let all = describe_batch(&net, &params, &stack, 2).unwrap();
    assert_eq!(all.len(), 3);
    assert_eq!(all[0].values, d.values);
    assert_eq!(all[1].values, m.values);
    assert_eq!(all[2].source, 2);

    let mini = Network::new(NetworkConfig::mini(4)).unwrap();
    assert_eq!(2 * mini.embed_dim(), 512);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ranking_ignores_global_positive_scaling(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let mut rng = SeededRng::new(seed);
        let gallery: Vec<_> = (0..30)
            .map(|i| (Descriptor { values: (0..5).map(|_| rng.normal()).collect(), source: i }, i % 7, 0))
            .collect();
        let q = Descriptor { values: (0..5).map(|_| rng.normal()).collect(), source: 0 };
        let scale = |d: &Descriptor| Descriptor { values: d.values.iter().map(|v| v * c).collect(), source: d.source };
        let a = GalleryIndex::new(gallery.clone()).unwrap();
        let b = GalleryIndex::new(gallery.iter().map(|(d, i, k)| (scale(d), *i, *k)).collect()).unwrap();
        let qs = scale(&q);
        let order = |g: &GalleryIndex, d: &Descriptor| -> Vec<usize> {
            rank_single_shot(&Query { descriptor: d, identity: 0, camera: 1 }, g, CameraFilter::None)
                .unwrap().iter().map(|r| r.index).collect()
        };
        prop_assert_eq!(order(&a, &q), order(&b, &qs));
    }

    #[test]
    fn cmc_is_monotone_and_ap_matches_oracle(flags in prop::collection::vec(prop::collection::vec(any::<bool>(), 1..30), 1..20)) {
        let c = cmc(&flags, 0);
        for w in c.rates.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        if c.queries > 0 {
            prop_assert_eq!(*c.rates.last().unwrap(), 1.0);
        }
        for f in &flags {
            match (average_precision(f), oracle::average_precision(f)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }
}
