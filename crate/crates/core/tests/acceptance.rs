//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. `ACCEPTANCE_ONLY=3,7` restricts the run;
//! `UPDATE_GOLDEN=1` rewrites the ablation golden file.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use mscmt::datapipe::{stratified_kfold_ids, synth_generate};
use mscmt::diffcore::{finite_difference_check, ParamStore, Tape, Tensor, Var};
use mscmt::harness::*;
use mscmt::imgops::{
    boundary_pixels, center_of_gravity, clahe, convex_hull_fill, crop_box, largest_component,
    BorderMode, BoundingBox, ClaheParams, Image, Mask,
};
use mscmt::lossmetrics::*;
use mscmt::nets::{build_mscmt_net, CascadeLevel, NetworkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion: pass flag plus a one-line summary.
struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn random_mask(r: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> Mask {
    Mask::new(h, w, (0..h * w).map(|_| r.random_bool(p)).collect()).unwrap()
}

// ---------------------------------------------------------------- 1

/// Checks `op` against central differences w.r.t. every input coordinate.
/// The scalar probe `Σ rᵢ yᵢ` gives each output its own weight.
fn op_check<F>(shapes: &[Vec<usize>], seed: u64, op: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let mut r = rng(seed);
    let sizes: Vec<usize> = shapes.iter().map(|s| s.iter().product()).collect();
    let point = uniform(&mut r, sizes.iter().sum());
    let store = ParamStore::<f64>::new();
    let build = |tape: &mut Tape<f64>, flat: &[f64]| -> Vec<Var> {
        let mut off = 0;
        shapes
            .iter()
            .zip(&sizes)
            .map(|(s, &n)| {
                let v = tape.input(
                    Tensor::new(s.clone(), flat[off..off + n].to_vec()).unwrap(),
                    true,
                );
                off += n;
                v
            })
            .collect()
    };
    let out_len = {
        let mut tape = Tape::new(&store);
        let xs = build(&mut tape, &point);
        let y = op(&mut tape, &xs);
        tape.value(y).len()
    };
    let weights = uniform(&mut r, out_len);
    let loss = |tape: &mut Tape<f64>, xs: &[Var]| {
        let y = op(tape, xs);
        let v = tape.value(y).iter().zip(&weights).map(|(a, b)| a * b).sum();
        tape.loss(y, v, weights.clone()).unwrap()
    };
    let mut tape = Tape::new(&store);
    let xs = build(&mut tape, &point);
    let l = loss(&mut tape, &xs);
    tape.backward(l).unwrap();
    let analytic: Vec<f64> = xs
        .iter()
        .zip(&sizes)
        .flat_map(|(&x, &n)| tape.grad(x).map_or(vec![0.0; n], <[f64]>::to_vec))
        .collect();
    finite_difference_check(
        |pt| {
            let mut tape = Tape::new(&store);
            let xs = build(&mut tape, pt);
            let l = loss(&mut tape, &xs);
            tape.scalar(l)
        },
        &point,
        &analytic,
        1e-6,
    )
}

type OpCase = (
    &'static str,
    Vec<Vec<usize>>,
    fn(&mut Tape<f64>, &[Var]) -> Var,
);

fn op_cases() -> Vec<OpCase> {
    vec![
        (
            "conv3x3 s1",
            vec![vec![2, 5, 5], vec![3, 2, 3, 3], vec![3]],
            |t, x| t.conv2d(x[0], x[1], Some(x[2]), 1, 1).unwrap(),
        ),
        (
            "conv3x3 s2",
            vec![vec![2, 6, 6], vec![3, 2, 3, 3], vec![3]],
            |t, x| t.conv2d(x[0], x[1], Some(x[2]), 2, 1).unwrap(),
        ),
        (
            "conv1x1 s2",
            vec![vec![2, 6, 6], vec![2, 2, 1, 1]],
            |t, x| t.conv2d(x[0], x[1], None, 2, 0).unwrap(),
        ),
        (
            "conv7x7",
            vec![vec![1, 8, 8], vec![2, 1, 7, 7], vec![2]],
            |t, x| t.conv2d(x[0], x[1], Some(x[2]), 1, 3).unwrap(),
        ),
        ("maxpool", vec![vec![2, 4, 4]], |t, x| {
            t.maxpool2d(x[0], 2).unwrap()
        }),
        ("global maxpool", vec![vec![3, 4, 4]], |t, x| {
            t.global_maxpool(x[0]).unwrap()
        }),
        ("upsample", vec![vec![2, 3, 3]], |t, x| {
            t.upsample2x(x[0]).unwrap()
        }),
        ("relu", vec![vec![2, 3, 3]], |t, x| t.relu(x[0]).unwrap()),
        ("sigmoid", vec![vec![2, 3, 3]], |t, x| {
            t.sigmoid(x[0]).unwrap()
        }),
        ("softmax", vec![vec![5]], |t, x| t.softmax(x[0]).unwrap()),
        ("concat", vec![vec![2, 3, 3], vec![1, 3, 3]], |t, x| {
            t.concat_channels(x[0], x[1]).unwrap()
        }),
        ("add", vec![vec![2, 3, 3], vec![2, 3, 3]], |t, x| {
            t.add(x[0], x[1]).unwrap()
        }),
        ("dense", vec![vec![6], vec![4, 6], vec![4]], |t, x| {
            t.dense(x[0], x[1], x[2]).unwrap()
        }),
        ("reshape", vec![vec![2, 3, 3]], |t, x| {
            t.reshape(x[0], vec![18]).unwrap()
        }),
        ("sum", vec![vec![2, 3]], |t, x| t.sum(x[0])),
        ("loss+combine", vec![vec![4], vec![3]], |t, x| {
            let sq = |t: &mut Tape<f64>, v: Var| {
                let vals = t.value(v).to_vec();
                let val = vals.iter().map(|a| a * a).sum();
                t.loss(v, val, vals.iter().map(|a| 2.0 * a).collect())
                    .unwrap()
            };
            let (a, b) = (sq(t, x[0]), sq(t, x[1]));
            t.combine(&[(a, 2.0), (b, 1.0)]).unwrap()
        }),
    ]
}

fn c1_gradients() -> Verdict {
    let t = Instant::now();
    let mut worst_op: (f64, &str) = (0.0, "");
    for (name, shapes, op) in op_cases() {
        for seed in 0..10 {
            let e = op_check(&shapes, 1000 + seed, op);
            if e > worst_op.0 {
                worst_op = (e, name);
            }
        }
    }
    let mut worst_net: (f64, String) = (0.0, String::new());
    let mut worst_flat: f64 = 0.0;
    for seed in 0..10 {
        for e in cmd_gradcheck(seed, 10).unwrap() {
            if e.report.max_relative_error > worst_net.0 {
                worst_net = (e.report.max_relative_error, e.chain.clone());
            }
            worst_flat = worst_flat.max(e.report.max_flat_abs_error);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        worst_op.0 <= 1e-4 && worst_net.0 <= 1e-4 && worst_flat <= 1e-8 && secs < 60.0,
        format!(
            "{} ops × 10 points: max rel {:.1e} ({}); 4 network chains × 10 points: max rel {:.1e} ({}), flat abs {:.1e}; {secs:.1}s",
            op_cases().len(),
            worst_op.0,
            worst_op.1,
            worst_net.0,
            worst_net.1,
            worst_flat
        ),
    )
}

// ---------------------------------------------------------------- 2

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

fn c2_metric_oracle() -> Verdict {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let (h, w) = (r.random_range(1..=16), r.random_range(1..=16));
        let p = if case % 10 == 0 {
            0.0
        } else {
            r.random_range(0.0..1.0)
        };
        let gt = random_mask(&mut r, h, w, p);
        let q = if case % 20 == 0 {
            0.0
        } else {
            r.random_range(0.0..1.0)
        };
        let pr = random_mask(&mut r, h, w, q);
        let (mut inter, mut g, mut s, mut both_off) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..h * w {
            let (a, b) = (gt.bits()[i], pr.bits()[i]);
            inter += (a && b) as u8 as f64;
            g += a as u8 as f64;
            s += b as u8 as f64;
            both_off += (!a && !b) as u8 as f64;
        }
        let n = (h * w) as f64;
        let union = g + s - inter;
        let bg_union = n - inter;
        let o_dice = ratio(2.0 * inter, g + s);
        let o_iou = ratio(inter, union);
        let o_miou = (o_iou + ratio(both_off, bg_union)) / 2.0;
        worst = worst
            .max((dice(&gt, &pr).unwrap() - o_dice).abs())
            .max((iou(&gt, &pr).unwrap() - o_iou).abs())
            .max((mean_iou(&gt, &pr).unwrap() - o_miou).abs());

        let len = r.random_range(1..60);
        let t: Vec<usize> = (0..len).map(|_| r.random_range(0..3)).collect();
        let q: Vec<usize> = (0..len).map(|_| r.random_range(0..3)).collect();
        let rates = confusion_and_rates(&t, &q, 3).unwrap();
        let mut counts = [[0u64; 3]; 3];
        for (&a, &b) in t.iter().zip(&q) {
            counts[a][b] += 1;
        }
        for (j, row) in counts.iter().enumerate() {
            if rates.matrix.counts[j] != row.to_vec() {
                worst = f64::INFINITY;
            }
            let total: u64 = row.iter().sum();
            let expect = (total > 0).then(|| row[j] as f64 / total as f64);
            match (rates.row_rates[j], expect) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (None, None) => {}
                _ => worst = f64::INFINITY,
            }
        }
        let correct = t.iter().zip(&q).filter(|(a, b)| a == b).count() as f64;
        worst = worst.max((rates.accuracy - correct / len as f64).abs());
        let defined: Vec<f64> = (0..3)
            .filter_map(|j| {
                let s: u64 = counts[j].iter().sum();
                (s > 0).then(|| counts[j][j] as f64 / s as f64)
            })
            .collect();
        let o_macro = defined.iter().sum::<f64>() / defined.len() as f64;
        worst = worst.max((rates.macro_rate - o_macro).abs());
    }
    verdict(
        worst <= 1e-12,
        format!("200 fixtures, max deviation {worst:.1e}"),
    )
}

// ---------------------------------------------------------------- 3

fn c3_table_arithmetic() -> Verdict {
    let table = [[1402usize, 14, 10], [10, 903, 17], [8, 9, 691]];
    let (mut t, mut p) = (Vec::new(), Vec::new());
    for (i, row) in table.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            t.extend(std::iter::repeat_n(i, n));
            p.extend(std::iter::repeat_n(j, n));
        }
    }
    let rates = confusion_and_rates(&t, &p, 3).unwrap();
    let published = [98.317, 97.097, 97.597];
    let got: Vec<f64> = rates.row_rates.iter().map(|r| 100.0 * r.unwrap()).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (g, want) in got.iter().zip(published) {
        let good = (g - want).abs() <= 1e-3;
        ok &= good;
        parts.push(format!(
            "{g:.4} vs {want}{}",
            if good { "" } else { " (off)" }
        ));
    }
    let macro_pct = 100.0 * rates.macro_rate;
    let acc = 100.0 * rates.accuracy;
    ok &= (macro_pct - 97.67).abs() <= 1e-3;
    ok &= (acc - 97.781).abs() <= 1e-3
        && rates.matrix.trace() == 2996
        && rates.matrix.total() == 3064;
    verdict(
        ok,
        format!(
            "rows [{}]; macro {macro_pct:.4} vs 97.67; accuracy 2996/3064 = {acc:.4} \
             (published headline 97.981 disagrees with these counts; recorded, not reconciled)",
            parts.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- 4

fn disc(size: usize, cy: f64, cx: f64, radius: f64) -> Mask {
    let pts: Vec<(usize, usize)> = (0..size)
        .flat_map(|r| (0..size).map(move |c| (r, c)))
        .filter(|&(r, c)| (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2) <= radius * radius)
        .collect();
    Mask::from_points(size, size, &pts)
}

fn c4_loss_identities() -> Verdict {
    let w = LossWeights::default();
    let mut r = rng(4);
    let mut notes = Vec::new();
    let mut ok = true;

    // Perfect prediction.
    let gt = disc(32, 15.0, 12.0, 6.0);
    let perfect: Vec<f64> = gt.bits().iter().map(|&b| b as u8 as f64).collect();
    let l0 = weighted_dice_loss(&gt, &perfect, &w).unwrap();
    ok &= l0 == 0.0;
    notes.push(format!("perfect {l0}"));

    // ω₀ = 0 collapses to the unweighted loss, bit for bit.
    let no_w = LossWeights { omega0: 0.0, ..w };
    let mut bitwise = true;
    for _ in 0..20 {
        let m = random_mask(&mut r, 16, 16, 0.3);
        let pred: Vec<f64> = (0..256).map(|_| r.random_range(0.0..1.0)).collect();
        let a = weighted_dice_loss(&m, &pred, &no_w).unwrap();
        let b = region_loss(&m, &pred).unwrap();
        bitwise &= a.to_bits() == b.to_bits();
    }
    ok &= bitwise;
    notes.push(format!("ω₀=0 bitwise {bitwise}"));

    // Boundary weights and far-field decay.
    let gt = disc(64, 20.0, 20.0, 8.0);
    let map = weight_map(&gt, &w).unwrap();
    let boundary = boundary_pixels(&gt);
    let on_boundary = boundary
        .bits()
        .iter()
        .zip(&map)
        .filter(|(b, _)| **b)
        .all(|(_, &v)| v == 1.0 + w.omega0);
    let far = map[63 * 64 + 63];
    ok &= on_boundary && (far - 1.0).abs() < 1e-6 && far >= 1.0;
    notes.push(format!("boundary = 1+ω₀ {on_boundary}, far {far:.9}"));

    // Combined objective gradient = 2·∂seg + 1·∂cls.
    let cfg = NetworkConfig {
        input_size: 16,
        base_channels: [2, 3, 4, 4],
        fc_hidden: 5,
        cascade_level: CascadeLevel::Full,
        ..NetworkConfig::default()
    };
    let net = build_mscmt_net::<f64>(&cfg, 4).unwrap();
    let img = Image::new(16, 16, (0..256).map(|_| r.random::<f32>()).collect()).unwrap();
    let mask = disc(16, 7.5, 7.5, 5.0);
    let map_img = disc(16, 7.5, 7.5, 4.0).to_image();
    let wmap = weight_map(&mask, &w).unwrap();
    let label = 2;
    let total = {
        let mut tape = Tape::new(net.params());
        let out = net.forward(&mut tape, &img, Some(&map_img)).unwrap();
        let target = mscmt::nets::Target {
            mask: &mask,
            label,
            weights: Some(&wmap),
        };
        let terms = mscmt::nets::record_objective(&net, &mut tape, &out, target, &w).unwrap();
        tape.backward(terms.total).unwrap()
    };
    let seg = {
        let mut tape = Tape::new(net.params());
        let out = net.forward(&mut tape, &img, Some(&map_img)).unwrap();
        let pred = tape.value(out.seg).to_vec();
        let (l, g) = weighted_dice_with_map(&mask, &pred, &wmap).unwrap();
        let v = tape.loss(out.seg, l, g).unwrap();
        tape.backward(v).unwrap()
    };
    let cls = {
        let mut tape = Tape::new(net.params());
        let out = net.forward(&mut tape, &img, Some(&map_img)).unwrap();
        let z = out.class_logits.unwrap();
        let logits = tape.value(z).to_vec();
        let (l, g) = classification_loss_from_logits(label, &logits).unwrap();
        let v = tape.loss(z, l, g).unwrap();
        tape.backward(v).unwrap()
    };
    let (t, s, c) = (
        net.params().flatten_gradients(&total),
        net.params().flatten_gradients(&seg),
        net.params().flatten_gradients(&cls),
    );
    let mut worst: f64 = 0.0;
    for i in 0..t.len() {
        let expect = w.alpha_seg * s[i] + w.alpha_cls * c[i];
        let scale = expect.abs().max(t[i].abs()).max(1e-12);
        worst = worst.max((t[i] - expect).abs() / scale);
    }
    ok &= worst <= 1e-6 && w.alpha_seg == 2.0 && w.alpha_cls == 1.0;
    notes.push(format!("2:1 gradient rel {worst:.1e}"));
    verdict(ok, notes.join("; "))
}

// ---------------------------------------------------------------- 5

fn c5_roi_exactness() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();

    // Largest of three 8-connected blobs (sizes 5, 12, 7).
    let mut pts = vec![(1, 1), (2, 2), (3, 3), (4, 4), (5, 5)];
    let big: Vec<(usize, usize)> = (0..3)
        .flat_map(|r| (0..4).map(move |c| (10 + r, 10 + c)))
        .collect();
    pts.extend(&big);
    pts.extend((0..7).map(|c| (18, 2 + c)));
    let m = Mask::from_points(20, 20, &pts);
    let largest = largest_component(&m).unwrap();
    let good = largest == Mask::from_points(20, 20, &big);
    ok &= good;
    notes.push(format!("largest component {good}"));

    // Hull fill: exact on a ring, superset and idempotent on random masks.
    let ring: Vec<(usize, usize)> = (3..9)
        .flat_map(|r| (4..12).map(move |c| (r, c)))
        .filter(|&(r, c)| r == 3 || r == 8 || c == 4 || c == 11)
        .collect();
    let filled = convex_hull_fill(&Mask::from_points(12, 14, &ring)).unwrap();
    let solid: Vec<(usize, usize)> = (3..9).flat_map(|r| (4..12).map(move |c| (r, c))).collect();
    let mut hull_ok = filled == Mask::from_points(12, 14, &solid);
    let mut r = rng(5);
    for _ in 0..50 {
        let m = random_mask(&mut r, 12, 12, 0.15);
        if m.is_empty() {
            continue;
        }
        let f = convex_hull_fill(&m).unwrap();
        hull_ok &= m.is_subset_of(&f) && convex_hull_fill(&f).unwrap() == f;
    }
    ok &= hull_ok;
    notes.push(format!("hull exact/superset/idempotent {hull_ok}"));

    // Centre of gravity of a rectangle rows 10..20, cols 30..41.
    let rect: Vec<(usize, usize)> = (10..20)
        .flat_map(|r| (30..41).map(move |c| (r, c)))
        .collect();
    let cog = center_of_gravity(&Mask::from_points(40, 50, &rect)).unwrap();
    ok &= cog == (14.5, 35.0);
    notes.push(format!("CoG {cog:?}"));

    // The 2h×2h window.
    let b = crop_box((512, 512), (200, 300), 128, BorderMode::Drop).unwrap();
    let want = BoundingBox {
        row_lo: 72,
        row_hi: 328,
        col_lo: 172,
        col_hi: 428,
    };
    ok &= b == Some(want);
    notes.push(format!("crop {b:?}"));

    // Drop rule: the window must fit entirely.
    let kept_edge = crop_box((512, 512), (128, 384), 128, BorderMode::Drop).unwrap();
    let dropped: Vec<bool> = [(127, 300), (200, 385), (10, 10), (511, 256)]
        .iter()
        .map(|&c| {
            crop_box((512, 512), c, 128, BorderMode::Drop)
                .unwrap()
                .is_none()
        })
        .collect();
    let rule = kept_edge
        == Some(BoundingBox {
            row_lo: 0,
            row_hi: 256,
            col_lo: 256,
            col_hi: 512,
        })
        && dropped.iter().all(|&d| d);
    ok &= rule;
    notes.push(format!("drop rule {rule}"));
    verdict(ok, notes.join("; "))
}

// ---------------------------------------------------------------- 6

fn c6_desk_learning() -> Verdict {
    let cfg = RunConfig::desk();
    let t = Instant::now();
    let raw = synth_generate(600, cfg.seed, cfg.image_size).unwrap();
    let samples = prepare(&raw, &cfg).unwrap();
    let plan = fold_plan(&samples, &cfg).unwrap();
    let cv = cross_validate(&cfg, &samples, &plan).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let region = cv.region.aggregate.dice;
    let main = cv.main.aggregate.dice;
    let acc = cv.main.aggregate.accuracy.unwrap_or(0.0);
    let per_fold: Vec<String> = cv
        .folds
        .iter()
        .map(|f| {
            format!(
                "{:.3}/{:.3}/{:.3}",
                f.region.dice,
                f.main.dice,
                f.main.accuracy.unwrap_or(0.0)
            )
        })
        .collect();
    let dropped: usize = cv.folds.iter().map(|f| f.dropped.len()).sum();
    verdict(
        region >= 0.80 && main >= 0.85 && acc >= 0.90 && secs <= 45.0 * 60.0,
        format!(
            "600 phantoms, 5 folds: detector Dice {region:.4}, main Dice {main:.4}, accuracy {acc:.4}, \
             {secs:.0}s; per fold det/main/acc [{}]; {dropped} ROI drops (train+test over folds)",
            per_fold.join(" ")
        ),
    )
}

// ---------------------------------------------------------------- 7

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/ablation.json")
}

fn c7_ablation_golden() -> Verdict {
    let cfg = ablation_config();
    let raw = synth_generate(ABLATION_SAMPLES, cfg.seed, cfg.image_size).unwrap();
    let report = cmd_ablate(&cfg, &raw).unwrap();
    let json = report.to_json_untimed().unwrap();
    let path = golden_path();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &json).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap_or_default();
    let shape = report.tables.len() == 3 && report.tables.iter().all(|t| t.rows.len() == 3);
    let baseline = report.row(1, 0).unwrap().dsc;
    let full = report.row(2, 2).unwrap().dsc;
    println!("{}", report.render_text());
    verdict(
        json == golden && shape && full >= baseline,
        format!(
            "golden match {}; 3 tables × 3 rows {shape}; fully enabled DSC {full:.4} vs no-cascade {baseline:.4}",
            json == golden
        ),
    )
}

// ---------------------------------------------------------------- 8

fn c8_clahe_global() -> Verdict {
    let mut r = rng(8);
    let p = ClaheParams {
        tile_rows: 1,
        tile_cols: 1,
        clip_limit: f64::INFINITY,
        bins: 256,
    };
    let mut worst: i32 = 0;
    for _ in 0..20 {
        let (h, w) = (r.random_range(8..48), r.random_range(8..48));
        let lo = r.random_range(0..128u32);
        let hi = r.random_range(lo + 1..256);
        let levels: Vec<u8> = (0..h * w).map(|_| r.random_range(lo..=hi) as u8).collect();
        let img = Image::from_u8(h, w, &levels).unwrap();
        let out = clahe(&img, &p).unwrap();
        // Textbook equalization: level k ↦ round(255 · #{≤ k} / N).
        let mut hist = [0usize; 256];
        levels.iter().for_each(|&k| hist[k as usize] += 1);
        let mut cdf = [0usize; 256];
        let mut acc = 0;
        for k in 0..256 {
            acc += hist[k];
            cdf[k] = acc;
        }
        for (&k, &v) in levels.iter().zip(out.pixels()) {
            let oracle = (255.0 * cdf[k as usize] as f64 / levels.len() as f64).round() as i32;
            let got = (v as f64 * 255.0).round() as i32;
            worst = worst.max((got - oracle).abs());
        }
    }
    verdict(
        worst <= 1,
        format!("20 images, max difference {worst} level(s)"),
    )
}

// ---------------------------------------------------------------- 9

fn c9_fold_invariants() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    let ids: Vec<String> = (0..3064).map(|i| format!("img{i:04}")).collect();
    let labels: Vec<usize> = (0..3064)
        .map(|i| {
            if i < 1426 {
                0
            } else if i < 2356 {
                1
            } else {
                2
            }
        })
        .collect();
    let check = |labels: &[usize], k: usize, seed: u64| -> (bool, Vec<usize>) {
        let items: Vec<(&str, usize)> = ids
            .iter()
            .map(String::as_str)
            .zip(labels.iter().copied())
            .collect();
        let plan = stratified_kfold_ids(&items, k, seed).unwrap();
        let covering = plan.assignment.len() == items.len()
            && items
                .iter()
                .all(|(id, _)| plan.fold_of(id).is_some_and(|f| f < k));
        let sizes = plan.fold_sizes();
        let balanced = sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1;
        let mut per_class = true;
        for c in 0..3 {
            let n = labels.iter().filter(|&&l| l == c).count() as f64;
            for f in 0..k {
                let m = items
                    .iter()
                    .filter(|(id, l)| *l == c && plan.fold_of(id) == Some(f))
                    .count();
                per_class &= (m as f64 - n / k as f64).abs() <= 1.0;
            }
        }
        (covering && balanced && per_class, sizes)
    };
    let (good, mut sizes) = check(&labels, 5, 42);
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    ok &= good && sizes == vec![613, 613, 613, 613, 612];
    notes.push(format!("3064 ids → {sizes:?}"));
    let mut r = rng(9);
    let mut random_ok = true;
    for _ in 0..20 {
        let n = r.random_range(60..400);
        let k = r.random_range(2..8);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
        if (0..3).any(|c| labels.iter().filter(|&&l| l == c).count() < k) {
            continue;
        }
        random_ok &= check(&labels, k, r.random()).0;
    }
    ok &= random_ok;
    notes.push(format!("random label sets {random_ok}"));
    verdict(ok, notes.join("; "))
}

// ---------------------------------------------------------------- 10

fn c10_determinism_resume() -> Verdict {
    let mut cfg = RunConfig::desk();
    cfg.apply(
        "image_size = 32\nhalf_window = 8\nregion_channels = 2,4,4,4\nbase_channels = 2,4,4,4\n\
         fc_hidden = 8\nfolds = 3\nregion_epochs = 3\nepochs = 3\nparallel = false",
    )
    .unwrap();
    let raw = synth_generate(18, 10, 32).unwrap();
    let samples = prepare(&raw, &cfg).unwrap();
    let plan = fold_plan(&samples, &cfg).unwrap();

    let region_a = cmd_train_region(&cfg, &samples, &plan, None).unwrap();
    let region_b = cmd_train_region(&cfg, &samples, &plan, None).unwrap();
    let crops = cmd_extract_roi(&region_a, &samples).unwrap().kept;
    let main_a = cmd_train_main(&cfg, &crops, &plan, None).unwrap();
    let main_b = cmd_train_main(&cfg, &crops, &plan, None).unwrap();
    let same_ck =
        region_a.to_bytes() == region_b.to_bytes() && main_a.to_bytes() == main_b.to_bytes();

    let cv = || {
        let cv = cross_validate(&cfg, &samples, &plan).unwrap();
        (
            cv.region.to_json_untimed().unwrap(),
            cv.main.to_json_untimed().unwrap(),
        )
    };
    let same_report = cv() == cv();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    let early = RunConfig {
        region_epochs: 1,
        epochs: 1,
        ..cfg.clone()
    };
    cmd_train_region(&early, &samples, &plan, None)
        .unwrap()
        .save(&path)
        .unwrap();
    let mid = Checkpoint::load_for(&path, &cfg).unwrap();
    let resumed_region = cmd_train_region(&cfg, &samples, &plan, Some(&mid)).unwrap();
    cmd_train_main(&early, &crops, &plan, None)
        .unwrap()
        .save(&path)
        .unwrap();
    let mid = Checkpoint::load_for(&path, &cfg).unwrap();
    let resumed_main = cmd_train_main(&cfg, &crops, &plan, Some(&mid)).unwrap();
    let resume = resumed_region.to_bytes() == region_a.to_bytes()
        && resumed_main.to_bytes() == main_a.to_bytes();

    verdict(
        same_ck && same_report && resume,
        format!("checkpoints identical {same_ck}; reports identical {same_report}; 1+2 epochs = 3 epochs {resume}"),
    )
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("gradient correctness", c1_gradients),
        ("metric oracle equivalence", c2_metric_oracle),
        ("published table arithmetic", c3_table_arithmetic),
        ("loss identities", c4_loss_identities),
        ("ROI pipeline exactness", c5_roi_exactness),
        ("desk-scale end-to-end learning", c6_desk_learning),
        ("ablation golden regression", c7_ablation_golden),
        ("CLAHE global reduction", c8_clahe_global),
        ("fold-plan invariants", c9_fold_invariants),
        ("determinism and resume", c10_determinism_resume),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    // `cargo test -- --list` and similar harness flags: nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {n:>2} {} {name} ({:.1}s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
        if !v.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
