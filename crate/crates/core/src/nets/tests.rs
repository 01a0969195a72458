use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffcore::{finite_difference_check_coords, Tape};
use crate::imgops::{Image, Mask};
use crate::lossmetrics::{classification_loss, weight_map, weighted_dice_with_map, LossWeights};

fn conv_count(cin: usize, cout: usize, k: usize) -> usize {
    cout * cin * k * k + cout
}

fn region_count(c: [usize; 4]) -> usize {
    let mut n = conv_count(1, c[0], 7);
    let ins = [c[0], c[0], c[1], c[2]];
    for i in 0..4 {
        n += conv_count(ins[i], c[i], 3) + conv_count(c[i], c[i], 3) + conv_count(ins[i], c[i], 1);
    }
    n + decoder_count(c, false) + conv_count(c[0], 1, 1)
}

fn decoder_count(c: [usize; 4], inject: bool) -> usize {
    let outs = [c[0], c[0], c[1], c[2]];
    (0..4)
        .map(|i| {
            let m = (c[i] / 4).max(2);
            let extra = usize::from(inject && i < 3);
            conv_count(c[i] + extra, m, 1) + conv_count(m, outs[i], 3)
        })
        .sum()
}

fn mscmt_count(cfg: &NetworkConfig) -> usize {
    let c = cfg.base_channels;
    let in_ch = if cfg.cascade_level == CascadeLevel::None {
        1
    } else {
        2
    };
    let inj = if cfg.multiscale { in_ch } else { 0 };
    let ins = [in_ch, c[0] + inj, c[1] + inj, c[2] + inj];
    let mut n = 0;
    for i in 0..4 {
        n += conv_count(ins[i], c[i], 3) + conv_count(c[i], c[i], 3) + conv_count(ins[i], c[i], 1);
        n += 2 * conv_count(c[i], c[i], 3);
    }
    let full = cfg.cascade_level == CascadeLevel::Full;
    n += decoder_count(c, full) + conv_count(c[0] + usize::from(full), 1, 1);
    if cfg.multitask {
        let width = c[3]
            + if cfg.aggregation {
                c.iter().sum::<usize>()
            } else {
                0
            };
        n += width * cfg.fc_hidden
            + cfg.fc_hidden
            + cfg.fc_hidden * cfg.num_classes
            + cfg.num_classes;
    }
    n
}

fn tiny(cascade: CascadeLevel) -> NetworkConfig {
    NetworkConfig {
        input_size: 16,
        base_channels: [2, 3, 4, 5],
        multiscale: true,
        cascade_level: cascade,
        multitask: true,
        aggregation: true,
        fc_hidden: 6,
        num_classes: 3,
    }
}

fn random_image(n: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(n, n, (0..n * n).map(|_| rng.random::<f32>()).collect()).unwrap()
}

fn disc_mask(n: usize, r: f64) -> Mask {
    let c = n as f64 / 2.0;
    let bits = (0..n * n)
        .map(|i| {
            let (y, x) = ((i / n) as f64 + 0.5, (i % n) as f64 + 0.5);
            (y - c).powi(2) + (x - c).powi(2) <= r * r
        })
        .collect();
    Mask::new(n, n, bits).unwrap()
}

#[test]
fn region_net_output_contract() {
    let cfg = NetworkConfig::region(64, [4, 8, 16, 32]);
    let net = build_region_net::<f32>(&cfg, 7).unwrap();
    let mut tape = Tape::new(net.params());
    let out = net.forward(&mut tape, &random_image(64, 1), None).unwrap();
    assert_eq!(tape.shape(out.seg), &[1, 64, 64]);
    assert!(tape.value(out.seg).iter().all(|&v| v > 0.0 && v < 1.0));
    assert!(out.class_probs.is_none());
}

#[test]
fn builds_are_seed_deterministic() {
    let cfg = NetworkConfig::region(32, [4, 8, 16, 32]);
    let a = build_region_net::<f32>(&cfg, 3).unwrap();
    let b = build_region_net::<f32>(&cfg, 3).unwrap();
    let c = build_region_net::<f32>(&cfg, 4).unwrap();
    let bits = |n: &Network<f32>| -> Vec<u32> {
        n.params()
            .iter()
            .flat_map(|p| p.value.iter().map(|v| v.to_bits()))
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&c));
    let img = random_image(32, 2);
    let pa = a.predict(&img, None).unwrap();
    let pb = b.predict(&img, None).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn parameter_counts_match_closed_form() {
    for c in [[4, 8, 16, 32], [8, 16, 32, 64], [3, 5, 7, 11]] {
        let net = build_region_net::<f32>(&NetworkConfig::region(32, c), 0).unwrap();
        assert_eq!(net.num_parameters(), region_count(c));
    }
    for cascade in [CascadeLevel::None, CascadeLevel::Common, CascadeLevel::Full] {
        for multiscale in [false, true] {
            for (multitask, aggregation) in [(false, false), (true, false), (true, true)] {
                let cfg = NetworkConfig {
                    input_size: 32,
                    base_channels: [4, 8, 12, 16],
                    multiscale,
                    cascade_level: cascade,
                    multitask,
                    aggregation,
                    fc_hidden: 10,
                    num_classes: 3,
                };
                let net = build_mscmt_net::<f32>(&cfg, 0).unwrap();
                assert_eq!(net.num_parameters(), mscmt_count(&cfg), "{cfg:?}");
            }
        }
    }
}

#[test]
fn invalid_configs_and_inputs_are_rejected() {
    assert!(build_region_net::<f32>(&NetworkConfig::region(40, [4, 8, 16, 32]), 0).is_err());
    let bad = NetworkConfig {
        multitask: false,
        ..tiny(CascadeLevel::Full)
    };
    assert!(build_mscmt_net::<f32>(&bad, 0).is_err());

    let net = build_mscmt_net::<f32>(&tiny(CascadeLevel::Full), 0).unwrap();
    let img = random_image(16, 0);
    assert!(net.predict(&random_image(32, 0), Some(&img)).is_err());
    assert!(net.predict(&img, None).is_err());
    assert!(net.predict(&img, Some(&random_image(32, 0))).is_err());
}

#[test]
fn mscmt_output_contract() {
    let cfg = NetworkConfig {
        input_size: 32,
        ..NetworkConfig::default()
    };
    let net = build_mscmt_net::<f32>(&cfg, 11).unwrap();
    let p = net
        .predict(&random_image(32, 5), Some(&random_image(32, 6)))
        .unwrap();
    assert_eq!(p.seg_map.len(), 32 * 32);
    assert!(p.seg_map.iter().all(|&v| v > 0.0 && v < 1.0));
    let probs = p.class_probs.unwrap();
    assert_eq!(probs.len(), 3);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);

    let single = NetworkConfig {
        multitask: false,
        aggregation: false,
        ..cfg
    };
    let net = build_mscmt_net::<f32>(&single, 11).unwrap();
    assert!(net
        .predict(&random_image(32, 5), Some(&random_image(32, 6)))
        .unwrap()
        .class_probs
        .is_none());
}

#[test]
fn cascade_none_ignores_the_map() {
    let net = build_mscmt_net::<f32>(&tiny(CascadeLevel::None), 1).unwrap();
    let img = random_image(16, 3);
    let a = net
        .predict(&img, Some(&Image::filled(16, 16, 0.0)))
        .unwrap();
    let b = net
        .predict(&img, Some(&Image::filled(16, 16, 1.0)))
        .unwrap();
    let c = net.predict(&img, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn cascaded_nets_respond_to_the_map() {
    for level in [CascadeLevel::Common, CascadeLevel::Full] {
        let net = build_mscmt_net::<f32>(&tiny(level), 1).unwrap();
        let img = random_image(16, 3);
        let a = net
            .predict(&img, Some(&Image::filled(16, 16, 0.0)))
            .unwrap();
        let b = net
            .predict(&img, Some(&Image::filled(16, 16, 1.0)))
            .unwrap();
        assert!(
            a.seg_map.iter().zip(&b.seg_map).any(|(x, y)| x != y),
            "{level}"
        );
    }
}

#[test]
fn aggregation_widens_classifier_by_channel_sum() {
    let on = tiny(CascadeLevel::Full);
    let off = NetworkConfig {
        aggregation: false,
        ..on.clone()
    };
    let width = |cfg: &NetworkConfig| {
        build_mscmt_net::<f32>(cfg, 0)
            .unwrap()
            .params()
            .by_name("cls.fc1.weight")
            .unwrap()
            .shape[1]
    };
    assert_eq!(width(&on) - width(&off), 2 + 3 + 4 + 5);
    assert_eq!(width(&off), 5);
}

fn shapes(cfg: &NetworkConfig) -> BTreeMap<String, Vec<usize>> {
    build_mscmt_net::<f32>(cfg, 0)
        .unwrap()
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.shape.clone()))
        .collect()
}

fn changed(a: &BTreeMap<String, Vec<usize>>, b: &BTreeMap<String, Vec<usize>>) -> Vec<String> {
    let mut names: Vec<String> = a.keys().chain(b.keys()).cloned().collect();
    names.sort();
    names.dedup();
    names.into_iter().filter(|n| a.get(n) != b.get(n)).collect()
}

#[test]
fn toggling_one_flag_touches_only_its_layers() {
    let base = tiny(CascadeLevel::Full);
    let s = |c: &NetworkConfig| shapes(c);

    let no_agg = NetworkConfig {
        aggregation: false,
        ..base.clone()
    };
    assert_eq!(changed(&s(&base), &s(&no_agg)), ["cls.fc1.weight"]);

    let no_task = NetworkConfig {
        multitask: false,
        ..no_agg.clone()
    };
    assert_eq!(
        changed(&s(&no_agg), &s(&no_task)),
        [
            "cls.fc1.bias",
            "cls.fc1.weight",
            "cls.fc2.bias",
            "cls.fc2.weight"
        ]
    );

    let no_ms = NetworkConfig {
        multiscale: false,
        ..base.clone()
    };
    assert_eq!(
        changed(&s(&base), &s(&no_ms)),
        [
            "enc2.conv_a.weight",
            "enc2.proj.weight",
            "enc3.conv_a.weight",
            "enc3.proj.weight",
            "enc4.conv_a.weight",
            "enc4.proj.weight"
        ]
    );

    let common = NetworkConfig {
        cascade_level: CascadeLevel::Common,
        ..base.clone()
    };
    assert_eq!(
        changed(&s(&base), &s(&common)),
        [
            "dec1.reduce.weight",
            "dec2.reduce.weight",
            "dec3.reduce.weight",
            "head.weight"
        ]
    );

    let none = NetworkConfig {
        cascade_level: CascadeLevel::None,
        multiscale: false,
        ..base.clone()
    };
    let common_single = NetworkConfig {
        cascade_level: CascadeLevel::Common,
        multiscale: false,
        ..base
    };
    assert_eq!(
        changed(&s(&none), &s(&common_single)),
        ["enc1.conv_a.weight", "enc1.proj.weight"]
    );
}

/// Separate backward passes for the segmentation and classification terms.
fn split_gradients(
    net: &Network<f64>,
    img: &Image,
    map: &Image,
    mask: &Mask,
    label: usize,
) -> [crate::diffcore::Gradients<f64>; 3] {
    let w = LossWeights::default();
    let wmap = weight_map(mask, &w).unwrap();
    let run = |seg_coef: f64, cls_coef: f64| {
        let mut tape = Tape::new(net.params());
        let out = net.forward(&mut tape, img, Some(map)).unwrap();
        let pred = tape.value(out.seg).to_vec();
        let (l, g) = weighted_dice_with_map(mask, &pred, &wmap).unwrap();
        let seg = tape.loss(out.seg, l, g).unwrap();
        let probs = tape.value(out.class_probs.unwrap()).to_vec();
        let (lc, gc) = classification_loss(label, &probs).unwrap();
        let cls = tape.loss(out.class_probs.unwrap(), lc, gc).unwrap();
        let total = tape.combine(&[(seg, seg_coef), (cls, cls_coef)]).unwrap();
        tape.backward(total).unwrap()
    };
    [run(2.0, 1.0), run(1.0, 0.0), run(0.0, 1.0)]
}

#[test]
fn combined_gradient_is_weighted_sum_of_task_gradients() {
    let net = build_mscmt_net::<f64>(&tiny(CascadeLevel::Full), 9).unwrap();
    let img = random_image(16, 1);
    let map = disc_mask(16, 4.0).to_image();
    let mask = disc_mask(16, 5.0);
    let [both, seg, cls] = split_gradients(&net, &img, &map, &mask, 2);
    let mut reached_cls = false;
    for p in net.params().iter() {
        let id = net.params().id_of(&p.name).unwrap();
        let n = p.value.len();
        let zero = vec![0.0; n];
        let b = both.get(id).unwrap_or(&zero);
        let s = seg.get(id).unwrap_or(&zero);
        let c = cls.get(id).unwrap_or(&zero);
        for i in 0..n {
            let expect = 2.0 * s[i] + c[i];
            let scale = expect.abs().max(b[i].abs()).max(1e-12);
            assert!((b[i] - expect).abs() / scale <= 1e-6, "{} [{i}]", p.name);
        }
        if p.name.starts_with("enc") && c.iter().any(|&v| v != 0.0) {
            reached_cls = true;
        }
        if p.name.starts_with("cls.") {
            assert!(
                s.iter().all(|&v| v == 0.0),
                "seg loss must not reach {}",
                p.name
            );
        }
    }
    assert!(
        reached_cls,
        "classification gradient should reach the shared encoder"
    );
}

#[test]
fn one_backward_reaches_both_heads_and_encoder() {
    let mut net = build_mscmt_net::<f32>(&tiny(CascadeLevel::Full), 2).unwrap();
    let img = random_image(16, 8);
    let map = disc_mask(16, 4.0).to_image();
    let mask = disc_mask(16, 5.0);
    let grads = {
        let mut tape = Tape::new(net.params());
        let out = net.forward(&mut tape, &img, Some(&map)).unwrap();
        let target = Target {
            mask: &mask,
            label: 1,
            weights: None,
        };
        let terms =
            record_objective(&net, &mut tape, &out, target, &LossWeights::default()).unwrap();
        tape.backward(terms.total).unwrap()
    };
    net.params_mut().accumulate(&grads);
    for prefix in ["cls.", "head.", "dec1.", "enc1.", "enc4."] {
        assert!(net.params().grad_norm(prefix) > 0.0, "{prefix}");
    }
}

fn check_full_chain(net: Network<f64>, seed: u64) {
    let img = random_image(16, seed);
    let map = disc_mask(16, 4.0).to_image();
    let mask = disc_mask(16, 5.0);
    let map = net.config().uses_map().then_some(&map);
    let target = Target {
        mask: &mask,
        label: 1,
        weights: None,
    };
    let r =
        network_gradient_check(&net, &img, map, target, &LossWeights::default(), 10, seed).unwrap();
    assert_eq!(r.coords.len(), 10);
    assert!(
        r.max_relative_error <= 1e-4,
        "max relative error {}",
        r.max_relative_error
    );
    assert!(
        r.max_flat_abs_error <= 1e-8,
        "flat-coordinate error {}",
        r.max_flat_abs_error
    );
}

#[test]
fn region_chain_passes_finite_differences() {
    let net = build_region_net::<f64>(&NetworkConfig::region(16, [2, 3, 4, 5]), 21).unwrap();
    check_full_chain(net, 21);
}

#[test]
fn mscmt_chain_passes_finite_differences() {
    for (i, level) in [CascadeLevel::None, CascadeLevel::Common, CascadeLevel::Full]
        .into_iter()
        .enumerate()
    {
        let net = build_mscmt_net::<f64>(&tiny(level), 30 + i as u64).unwrap();
        check_full_chain(net, 30 + i as u64);
    }
}

#[test]
fn single_precision_region_gradient_matches_double_differences() {
    let cfg = NetworkConfig::region(16, [2, 3, 4, 5]);
    let net32 = build_region_net::<f32>(&cfg, 5).unwrap();
    let mut net64: Network<f64> = net32.cast();
    let img = random_image(16, 5);
    let mask = disc_mask(16, 5.0);
    let g32: Vec<f64> = {
        let mut tape = Tape::new(net32.params());
        let out = net32.forward(&mut tape, &img, None).unwrap();
        let target = Target {
            mask: &mask,
            label: 0,
            weights: None,
        };
        let terms =
            record_objective(&net32, &mut tape, &out, target, &LossWeights::default()).unwrap();
        let g = tape.backward(terms.total).unwrap();
        net32
            .params()
            .iter()
            .flat_map(|p| {
                let id = net32.params().id_of(&p.name).unwrap();
                g.get(id).map_or(vec![0.0; p.value.len()], |s| {
                    s.iter().map(|&v| v as f64).collect()
                })
            })
            .collect()
    };
    let point = net64.params().flat_values();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let coords: Vec<usize> = (0..5).map(|_| rng.random_range(0..point.len())).collect();
    let target = Target {
        mask: &mask,
        label: 0,
        weights: None,
    };
    let err = finite_difference_check_coords(
        |x| {
            net64.params_mut().set_flat_values(x).unwrap();
            objective_value(&net64, &img, None, target, &LossWeights::default()).unwrap()
        },
        &point,
        &g32,
        1e-6,
        &coords,
    );
    assert!(err <= 1e-3, "max relative error {err}");
}
