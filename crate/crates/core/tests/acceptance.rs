//! Acceptance suite: twelve numbered end-to-end criteria, each printing a
//! single pass/fail line. Criteria 7–9 share one phantom training run.
//!
//! Oracles here are written independently of the library internals: the
//! confusion and HD95 references below enumerate voxels and boundary pairs
//! directly rather than calling the production distance transform.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wmhseg::cli::{infer_slice, model_for, run, Cli, CommonOpts, Command};
use wmhseg::config::RunConfig;
use wmhseg::metrics::{
    confusion, dice, hd95, jaccard, pr_curve, precision, recall, roc_curve, BinaryMask,
    MetricError,
};
use wmhseg::nn::layers::{BatchNorm, Conv2d, ConvTranspose2d, Dropout, LeakyRelu, Param, Tanh01};
use wmhseg::nn::loss::{bce_with_logits, l1_loss};
use wmhseg::nn::ops::{conv2d, conv2d_transpose, conv_out_size};
use wmhseg::nn::train::{train, TrainResult};
use wmhseg::nn::{GanModel, GeneratorConfig, GeneratorNet, Mode, Tensor, TrainSample};
use wmhseg::phantom::{generate_case, PhantomConfig};
use wmhseg::postproc::decode_classes;
use wmhseg::preproc::encode_target;
use wmhseg::types::{ClassMask, NUM_CLASSES};

/// Side length of the training frames in criteria 7–9: small enough that the
/// 30-epoch run finishes on one core, large enough that every phantom class
/// survives the resampling.
const TRAIN_SIZE: usize = 64;

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, criterion: usize, pass: bool, detail: String) {
        println!(
            "criterion {criterion:2}: {} — {detail}",
            if pass { "pass" } else { "FAIL" }
        );
        self.lines.push((criterion, pass, detail));
    }
}

// ------------------------------------------------------ independent oracles

/// Exhaustive voxel-by-voxel confusion counts.
fn oracle_confusion(pred: &BinaryMask, truth: &BinaryMask) -> (u64, u64, u64, u64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in pred.data.iter().zip(truth.data.iter()) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (tp, fp, fn_, tn)
}

/// Boundary voxels re-derived here: foreground with a background
/// face-neighbor, grid edges counting as background.
fn oracle_boundary_points(mask: &BinaryMask) -> Vec<(f64, f64)> {
    let (h, w) = (mask.height, mask.width);
    let at = |y: isize, x: isize| -> bool {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            false
        } else {
            mask.data[y as usize * w + x as usize]
        }
    };
    let mut pts = Vec::new();
    for y in 0..h as isize {
        for x in 0..w as isize {
            if at(y, x) && (!at(y - 1, x) || !at(y + 1, x) || !at(y, x - 1) || !at(y, x + 1)) {
                pts.push((x as f64 * mask.spacing[0], y as f64 * mask.spacing[1]));
            }
        }
    }
    pts
}

/// Directed 95th percentile (nearest-rank) of all-pairs nearest distances.
fn oracle_directed_h95(from: &[(f64, f64)], to: &[(f64, f64)]) -> f64 {
    let mut dists: Vec<f64> = from
        .iter()
        .map(|a| {
            to.iter()
                .map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    dists.sort_by(|a, b| a.total_cmp(b));
    let rank = ((0.95 * dists.len() as f64).ceil() as usize).clamp(1, dists.len());
    dists[rank - 1]
}

fn oracle_hd95(pred: &BinaryMask, truth: &BinaryMask) -> f64 {
    let a = oracle_boundary_points(pred);
    let b = oracle_boundary_points(truth);
    oracle_directed_h95(&a, &b).max(oracle_directed_h95(&b, &a))
}

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, sx: f64, sy: f64) -> BinaryMask {
    let density = rng.gen_range(0.05..0.6);
    let mut data: Vec<bool> = (0..h * w).map(|_| rng.gen_bool(density)).collect();
    // Guarantee a non-empty mask so HD95 is defined.
    let i = rng.gen_range(0..data.len());
    data[i] = true;
    BinaryMask::new_2d(data, h, w, sx, sy)
}

// ------------------------------------------------------------ criteria 1+2

fn criterion_1_and_2(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_hd = 0.0f64;
    let mut worst_ji = 0.0f64;
    let mut count_fail = 0usize;
    const N: usize = 1000;
    for _ in 0..N {
        let sx = rng.gen_range(0.5..2.0);
        let sy = rng.gen_range(0.5..2.0);
        let pred = random_mask(&mut rng, 32, 32, sx, sy);
        let truth = random_mask(&mut rng, 32, 32, sx, sy);

        let c = confusion(&pred, &truth).unwrap();
        let (tp, fp, fn_, tn) = oracle_confusion(&pred, &truth);
        let counts_ok =
            c.tp == tp && c.fp == fp && c.fn_ == fn_ && c.tn == tn;

        // Scalar metrics recomputed from the oracle counts with the same
        // closed-form expressions must match bit for bit.
        let d = dice(&pred, &truth).unwrap();
        let j = jaccard(&pred, &truth).unwrap();
        let scalar_ok = precision(&c) == tp as f64 / (tp + fp) as f64
            && recall(&c) == tp as f64 / (tp + fn_) as f64
            && d == 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            && j == tp as f64 / (tp + fp + fn_) as f64;

        let hd_gap = (hd95(&pred, &truth).unwrap() - oracle_hd95(&pred, &truth)).abs();
        worst_hd = worst_hd.max(hd_gap);

        let ji_gap = (j - d / (2.0 - d)).abs();
        worst_ji = worst_ji.max(ji_gap);

        if !counts_ok || !scalar_ok {
            count_fail += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report.record(
        1,
        count_fail == 0 && worst_hd <= 1e-9 && secs <= 60.0,
        format!(
            "{N} random 32x32 pairs: {count_fail} count mismatches, max HD95 gap {worst_hd:.2e} mm, {secs:.1} s"
        ),
    );
    report.record(
        2,
        worst_ji <= 1e-12,
        format!("max |JI - DSC/(2-DSC)| = {worst_ji:.2e} over {N} pairs"),
    );
}

// -------------------------------------------------------------- criterion 3

/// Relative L2 error between an analytic gradient vector and its central
/// finite-difference estimate.
fn vec_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Check d(sum(c * f(x, params))) / d(x, params) for one differentiable
/// block. `forward` must be deterministic; `backward` receives the cotangent
/// c and must populate `grads` (input gradient first, then parameter grads in
/// the order `params` lists them).
fn fd_check(
    x0: Vec<f64>,
    mut params: Vec<(&str, Vec<f64>)>,
    forward: &mut dyn FnMut(&[f64], &[(&str, Vec<f64>)]) -> Vec<f64>,
    backward: &mut dyn FnMut(&[f64], &[(&str, Vec<f64>)], &[f64]) -> Vec<Vec<f64>>,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let y0 = forward(&x0, &params);
    let c = rand_vec(rng, y0.len());
    let mut loss = |x: &[f64], p: &[(&str, Vec<f64>)]| -> f64 {
        forward(x, p).iter().zip(&c).map(|(y, ci)| y * ci).sum()
    };
    let analytic = backward(&x0, &params, &c);

    let eps = 1e-5;
    let mut worst = 0.0f64;
    // slot 0 = input, slot i+1 = params[i]
    for slot in 0..=params.len() {
        let n = if slot == 0 {
            x0.len()
        } else {
            params[slot - 1].1.len()
        };
        let mut numeric = vec![0.0; n];
        for i in 0..n {
            let mut probe = |delta: f64| -> f64 {
                let mut x = x0.clone();
                if slot == 0 {
                    x[i] += delta;
                } else {
                    params[slot - 1].1[i] += delta;
                }
                let v = loss(&x, &params);
                if slot > 0 {
                    params[slot - 1].1[i] -= delta;
                }
                v
            };
            numeric[i] = (probe(eps) - probe(-eps)) / (2.0 * eps);
        }
        worst = worst.max(vec_rel_err(&analytic[slot], &numeric));
    }
    worst
}

fn set_param(p: &mut Param<f64>, values: &[f64]) {
    p.data.copy_from_slice(values);
}

fn criterion_3(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut results: Vec<(String, f64)> = Vec::new();

    // conv layer: 2ch 6x6 -> 3ch, k4 s2 p1
    {
        let mut rng2 = rng.clone();
        let proto = Conv2d::<f64>::new("c", 2, 3, 4, 2, 1, &mut rng2);
        let x0 = rand_vec(&mut rng, 2 * 6 * 6);
        let params = vec![
            ("w", proto.w.data.clone()),
            ("b", proto.b.data.clone()),
        ];
        let build = |p: &[(&str, Vec<f64>)]| {
            let mut rng3 = ChaCha8Rng::seed_from_u64(0);
            let mut l = Conv2d::<f64>::new("c", 2, 3, 4, 2, 1, &mut rng3);
            set_param(&mut l.w, &p[0].1);
            set_param(&mut l.b, &p[1].1);
            l
        };
        let err = fd_check(
            x0,
            params,
            &mut |x, p| build(p).forward(&Tensor::from_vec([1, 2, 6, 6], x.to_vec())).data,
            &mut |x, p, c| {
                let mut l = build(p);
                let out = l.forward(&Tensor::from_vec([1, 2, 6, 6], x.to_vec()));
                let gx = l
                    .backward(&Tensor::from_vec(out.shape, c.to_vec()))
                    .unwrap();
                vec![gx.data, l.w.grad.clone(), l.b.grad.clone()]
            },
            &mut rng,
        );
        results.push(("conv".into(), err));
    }

    // transposed conv layer: 3ch 4x4 -> 2ch 8x8, k4 s2 p1
    {
        let mut rng2 = rng.clone();
        let proto = ConvTranspose2d::<f64>::new("t", 3, 2, 4, 2, 1, &mut rng2);
        let x0 = rand_vec(&mut rng, 3 * 4 * 4);
        let params = vec![
            ("w", proto.w.data.clone()),
            ("b", proto.b.data.clone()),
        ];
        let build = |p: &[(&str, Vec<f64>)]| {
            let mut rng3 = ChaCha8Rng::seed_from_u64(0);
            let mut l = ConvTranspose2d::<f64>::new("t", 3, 2, 4, 2, 1, &mut rng3);
            set_param(&mut l.w, &p[0].1);
            set_param(&mut l.b, &p[1].1);
            l
        };
        let err = fd_check(
            x0,
            params,
            &mut |x, p| build(p).forward(&Tensor::from_vec([1, 3, 4, 4], x.to_vec())).data,
            &mut |x, p, c| {
                let mut l = build(p);
                let out = l.forward(&Tensor::from_vec([1, 3, 4, 4], x.to_vec()));
                let gx = l
                    .backward(&Tensor::from_vec(out.shape, c.to_vec()))
                    .unwrap();
                vec![gx.data, l.w.grad.clone(), l.b.grad.clone()]
            },
            &mut rng,
        );
        results.push(("conv_transpose".into(), err));
    }

    // batch norm, training statistics, batch of 2
    {
        let x0 = rand_vec(&mut rng, 2 * 3 * 4 * 4);
        let proto = BatchNorm::<f64>::new("bn", 3);
        let params = vec![
            ("gamma", proto.gamma.data.clone()),
            ("beta", proto.beta.data.clone()),
        ];
        let build = |p: &[(&str, Vec<f64>)]| {
            let mut l = BatchNorm::<f64>::new("bn", 3);
            set_param(&mut l.gamma, &p[0].1);
            set_param(&mut l.beta, &p[1].1);
            l
        };
        let err = fd_check(
            x0,
            params,
            &mut |x, p| {
                build(p)
                    .forward(&Tensor::from_vec([2, 3, 4, 4], x.to_vec()), Mode::Train)
                    .data
            },
            &mut |x, p, c| {
                let mut l = build(p);
                let out = l.forward(&Tensor::from_vec([2, 3, 4, 4], x.to_vec()), Mode::Train);
                let gx = l
                    .backward(&Tensor::from_vec(out.shape, c.to_vec()))
                    .unwrap();
                vec![gx.data, l.gamma.grad.clone(), l.beta.grad.clone()]
            },
            &mut rng,
        );
        results.push(("batch_norm".into(), err));
    }

    // leaky relu, inputs kept clear of the kink at 0
    {
        let x0: Vec<f64> = (0..48)
            .map(|_| {
                let m: f64 = rng.gen_range(0.05..1.0);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        let err = fd_check(
            x0,
            vec![],
            &mut |x, _| {
                LeakyRelu::<f64>::new(0.2)
                    .forward(&Tensor::from_vec([1, 3, 4, 4], x.to_vec()))
                    .data
            },
            &mut |x, _, c| {
                let mut l = LeakyRelu::<f64>::new(0.2);
                l.forward(&Tensor::from_vec([1, 3, 4, 4], x.to_vec()));
                vec![l
                    .backward(&Tensor::from_vec([1, 3, 4, 4], c.to_vec()))
                    .unwrap()
                    .data]
            },
            &mut rng,
        );
        results.push(("leaky_relu".into(), err));
    }

    // tanh01 activation
    {
        let x0 = rand_vec(&mut rng, 48);
        let err = fd_check(
            x0,
            vec![],
            &mut |x, _| {
                Tanh01::<f64>::new()
                    .forward(&Tensor::from_vec([1, 3, 4, 4], x.to_vec()))
                    .data
            },
            &mut |x, _, c| {
                let mut l = Tanh01::<f64>::new();
                l.forward(&Tensor::from_vec([1, 3, 4, 4], x.to_vec()));
                vec![l
                    .backward(&Tensor::from_vec([1, 3, 4, 4], c.to_vec()))
                    .unwrap()
                    .data]
            },
            &mut rng,
        );
        results.push(("tanh01".into(), err));
    }

    // dropout in eval mode is the identity and must pass gradients through
    {
        let x0 = rand_vec(&mut rng, 48);
        let err = fd_check(
            x0,
            vec![],
            &mut |x, _| {
                let mut r = ChaCha8Rng::seed_from_u64(1);
                Dropout::<f64>::new(0.5)
                    .forward(&Tensor::from_vec([1, 3, 4, 4], x.to_vec()), Mode::Eval, &mut r)
                    .data
            },
            &mut |x, _, c| {
                let mut r = ChaCha8Rng::seed_from_u64(1);
                let mut l = Dropout::<f64>::new(0.5);
                l.forward(&Tensor::from_vec([1, 3, 4, 4], x.to_vec()), Mode::Eval, &mut r);
                vec![l
                    .backward(&Tensor::from_vec([1, 3, 4, 4], c.to_vec()))
                    .unwrap()
                    .data]
            },
            &mut rng,
        );
        results.push(("dropout_eval".into(), err));
    }

    // BCE-with-logits against a constant target
    {
        let x0 = rand_vec(&mut rng, 36);
        let eps = 1e-5;
        let t = Tensor::from_vec([1, 1, 6, 6], x0.clone());
        let (_, g) = bce_with_logits(&t, 1.0);
        let mut numeric = vec![0.0; x0.len()];
        for i in 0..x0.len() {
            let probe = |d: f64| {
                let mut x = x0.clone();
                x[i] += d;
                bce_with_logits(&Tensor::from_vec([1, 1, 6, 6], x), 1.0).0
            };
            numeric[i] = (probe(eps) - probe(-eps)) / (2.0 * eps);
        }
        results.push(("bce".into(), vec_rel_err(&g.data, &numeric)));
    }

    // L1 loss; inputs kept away from the |.| kink
    {
        let target = Tensor::from_vec([1, 1, 6, 6], rand_vec(&mut rng, 36));
        let x0: Vec<f64> = target
            .data
            .iter()
            .map(|&t| {
                let off: f64 = rng.gen_range(0.05..0.5);
                if rng.gen_bool(0.5) {
                    t + off
                } else {
                    t - off
                }
            })
            .collect();
        let eps = 1e-5;
        let (_, g) = l1_loss(&Tensor::from_vec([1, 1, 6, 6], x0.clone()), &target);
        let mut numeric = vec![0.0; x0.len()];
        for i in 0..x0.len() {
            let probe = |d: f64| {
                let mut x = x0.clone();
                x[i] += d;
                l1_loss(&Tensor::from_vec([1, 1, 6, 6], x), &target).0
            };
            numeric[i] = (probe(eps) - probe(-eps)) / (2.0 * eps);
        }
        results.push(("l1".into(), vec_rel_err(&g.data, &numeric)));
    }

    // composed 4-level mini generator at 16x16, evaluation mode so the
    // forward pass is deterministic (running stats seeded by one training
    // pass first)
    {
        let cfg = GeneratorConfig {
            enc_channels: vec![2, 4, 4, 4],
            ..Default::default()
        };
        let mut init_rng = ChaCha8Rng::seed_from_u64(7);
        let mut proto = GeneratorNet::<f64>::new(cfg.clone(), &mut init_rng);
        let warm = Tensor::from_vec([1, 1, 16, 16], rand_vec(&mut rng, 256));
        let mut warm_rng = ChaCha8Rng::seed_from_u64(8);
        proto.forward(&warm, Mode::Train, &mut warm_rng);
        let state = proto.state_entries();

        let x0 = rand_vec(&mut rng, 256);
        let flat: Vec<f64> = state.iter().flat_map(|(_, _, d)| d.clone()).collect();
        let params = vec![("all", flat)];
        let shapes: Vec<(String, Vec<usize>, usize)> = state
            .iter()
            .map(|(n, s, d)| (n.clone(), s.clone(), d.len()))
            .collect();
        let build = |p: &[(&str, Vec<f64>)]| {
            let mut r = ChaCha8Rng::seed_from_u64(7);
            let mut net = GeneratorNet::<f64>::new(cfg.clone(), &mut r);
            let mut entries = std::collections::BTreeMap::new();
            let mut off = 0usize;
            for (name, shape, len) in &shapes {
                entries.insert(name.clone(), (shape.clone(), p[0].1[off..off + len].to_vec()));
                off += len;
            }
            net.load_state_entries(&entries).unwrap();
            net
        };
        let err = fd_check(
            x0,
            params,
            &mut |x, p| {
                let mut r = ChaCha8Rng::seed_from_u64(9);
                build(p)
                    .forward(&Tensor::from_vec([1, 1, 16, 16], x.to_vec()), Mode::Eval, &mut r)
                    .data
            },
            &mut |x, p, c| {
                let mut net = build(p);
                let mut r = ChaCha8Rng::seed_from_u64(9);
                let out =
                    net.forward(&Tensor::from_vec([1, 1, 16, 16], x.to_vec()), Mode::Eval, &mut r);
                let gx = net
                    .backward(&Tensor::from_vec(out.shape, c.to_vec()))
                    .unwrap();
                // Flatten the parameter gradients in state-entry order;
                // running statistics carry no gradient.
                let mut by_name: std::collections::BTreeMap<String, Vec<f64>> = net
                    .params_mut()
                    .into_iter()
                    .map(|p| (p.name.clone(), p.grad.clone()))
                    .collect();
                let mut flat = Vec::new();
                for (name, _, len) in &shapes {
                    match by_name.remove(name) {
                        Some(g) => flat.extend(g),
                        None => flat.extend(std::iter::repeat(0.0).take(*len)),
                    }
                }
                vec![gx.data, flat]
            },
            &mut rng,
        );
        results.push(("composed_generator".into(), err));
    }

    let secs = start.elapsed().as_secs_f64();
    let worst = results
        .iter()
        .cloned()
        .fold(("".to_string(), 0.0f64), |acc, r| if r.1 > acc.1 { r } else { acc });
    report.record(
        3,
        worst.1 < 1e-6 && secs <= 120.0,
        format!(
            "worst finite-difference relative error {:.2e} ({}), {secs:.1} s",
            worst.1, worst.0
        ),
    );
}

// -------------------------------------------------------------- criterion 4

fn criterion_4(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let ci = rng.gen_range(1..4usize);
        let co = rng.gen_range(1..4usize);
        let k = 4usize;
        let stride = 2usize;
        let pad = 1usize;
        let hin = rng.gen_range(4..12usize);
        let win = rng.gen_range(4..12usize);
        let hout = conv_out_size(hin, k, stride, pad);
        let wout = conv_out_size(win, k, stride, pad);

        let x = Tensor::from_vec([1, ci, hin, win], rand_vec(&mut rng, ci * hin * win));
        let w = Tensor::from_vec([ci, co, k, k], rand_vec(&mut rng, ci * co * k * k));
        let y = Tensor::from_vec([1, co, hout, wout], rand_vec(&mut rng, co * hout * wout));
        let zeros_f = vec![0.0f64; co];
        let zeros_b = vec![0.0f64; ci];

        // conv with weight (co, ci, k, k) read from the shared buffer layout
        let w_conv = {
            let mut d = vec![0.0f64; w.data.len()];
            for a in 0..ci {
                for b in 0..co {
                    for i in 0..k * k {
                        d[(b * ci + a) * k * k + i] = w.data[(a * co + b) * k * k + i];
                    }
                }
            }
            Tensor::from_vec([co, ci, k, k], d)
        };
        let cx = conv2d(&x, &w_conv, &zeros_f, stride, pad);
        let ty = conv2d_transpose(&y, &w, &zeros_b, stride, pad);

        let lhs: f64 = cx.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&ty.data).map(|(a, b)| a * b).sum();
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    report.record(
        4,
        worst <= 1e-6,
        format!("worst <conv(x),y> vs <x,convT(y)> relative gap {worst:.2e} over 100 cases"),
    );
}

// -------------------------------------------------------------- criterion 5

fn criterion_5(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let base = RunConfig::default().postproc();
    let mut exact = 0usize;
    let mut tau_invariant = 0usize;
    const N: usize = 500;
    for i in 0..N {
        let h = rng.gen_range(8..40usize);
        let w = rng.gen_range(8..40usize);
        let labels: Vec<u8> = (0..h * w).map(|_| rng.gen_range(0..NUM_CLASSES as u8)).collect();
        let mask = ClassMask::new(labels.clone(), h, w, format!("rt{i}"), 0).unwrap();
        let encoded = encode_target(&mask);

        let mut decoded = Vec::new();
        for tau in [1e-4, 0.05, 1.0] {
            let mut cfg = base.clone();
            cfg.softmax_temperature = tau;
            decoded.push(
                decode_classes(&encoded, h, w, "rt", 0, &cfg).unwrap().labels,
            );
        }
        if decoded[1] == labels {
            exact += 1;
        }
        if decoded[0] == decoded[1] && decoded[1] == decoded[2] {
            tau_invariant += 1;
        }
    }
    report.record(
        5,
        exact == N && tau_invariant == N,
        format!("{exact}/{N} exact roundtrips, {tau_invariant}/{N} identical across tau in {{1e-4, 0.05, 1}}"),
    );
}

// -------------------------------------------------------------- criterion 6

fn criterion_6(report: &mut Report) {
    let run_cfg = RunConfig::default();
    let phantom_cfg = run_cfg.phantom();
    let post_cfg = run_cfg.postproc();
    let mut worst: f64 = 1.0;
    let mut checked = 0usize;
    for c in 0..4usize {
        let case = generate_case(&phantom_cfg, &format!("round{c}"), 606 + c as u64);
        for (slice, mask) in &case.slices {
            let p = wmhseg::cli::preprocess_slice(slice, &run_cfg).unwrap();
            let warped = wmhseg::preproc::warp_nearest(
                &mask.labels,
                mask.height,
                mask.width,
                &p.transform,
                run_cfg.image_size,
                run_cfg.image_size,
            )
            .unwrap();
            let frame_mask = ClassMask::new(
                warped,
                run_cfg.image_size,
                run_cfg.image_size,
                &mask.case_id,
                mask.slice_index,
            )
            .unwrap();
            let encoded = encode_target(&frame_mask);
            let native = wmhseg::postproc::to_native(
                &encoded,
                run_cfg.image_size,
                &p.transform,
                slice.height,
                slice.width,
            )
            .unwrap();
            let decoded = decode_classes(
                &native,
                slice.height,
                slice.width,
                &mask.case_id,
                mask.slice_index,
                &post_cfg,
            )
            .unwrap();
            for class_id in 1..NUM_CLASSES as u8 {
                let t = mask.class_mask(class_id);
                if t.iter().filter(|&&v| v).count() < 50 {
                    continue;
                }
                let tm = BinaryMask::new_2d(t, mask.height, mask.width, 1.0, 1.0);
                let pm = BinaryMask::new_2d(
                    decoded.class_mask(class_id),
                    mask.height,
                    mask.width,
                    1.0,
                    1.0,
                );
                worst = worst.min(dice(&pm, &tm).unwrap());
                checked += 1;
            }
        }
    }
    report.record(
        6,
        worst >= 0.95 && checked > 0,
        format!("minimum per-class roundtrip Dice {worst:.4} over {checked} class instances"),
    );
}

// --------------------------------------------------------- criteria 7, 8, 9

struct TrainingArtifacts {
    result: TrainResult,
    weights: Vec<u8>,
    csv: String,
    dice_by_class: [f64; 3],
}

fn phantom_cfg_for_training(run_cfg: &RunConfig) -> PhantomConfig {
    let mut cfg = run_cfg.phantom();
    cfg.size = TRAIN_SIZE;
    cfg
}

fn build_samples(run_cfg: &RunConfig, cases: &[wmhseg::phantom::PhantomCase]) -> Vec<TrainSample> {
    let mut samples = Vec::new();
    for case in cases {
        for (slice, mask) in &case.slices {
            let p = wmhseg::cli::preprocess_slice(slice, run_cfg).unwrap();
            let warped = wmhseg::preproc::warp_nearest(
                &mask.labels,
                mask.height,
                mask.width,
                &p.transform,
                run_cfg.image_size,
                run_cfg.image_size,
            )
            .unwrap();
            let frame_mask = ClassMask::new(
                warped,
                run_cfg.image_size,
                run_cfg.image_size,
                &mask.case_id,
                mask.slice_index,
            )
            .unwrap();
            samples.push(TrainSample {
                case_id: slice.case_id.clone(),
                input: p.frame,
                target: encode_target(&frame_mask),
            });
        }
    }
    samples
}

fn run_training(run_cfg: &RunConfig, samples: &[TrainSample]) -> (GanModel, TrainResult) {
    let (gen_cfg, disc_cfg) = model_for(TRAIN_SIZE);
    let mut model = GanModel::new(gen_cfg, disc_cfg, run_cfg.seed);
    let result = train(&mut model, samples, &run_cfg.train(), &mut |_| {}).unwrap();
    (model, result)
}

fn training_artifacts() -> (RunConfig, Vec<TrainSample>, TrainingArtifacts) {
    let mut run_cfg = RunConfig::default();
    run_cfg.set("image_size", &TRAIN_SIZE.to_string()).unwrap();
    run_cfg.set("epochs", "30").unwrap();

    let phantom_cfg = phantom_cfg_for_training(&run_cfg);
    // 100 training cases x 2 slices = 200 training slices; 25 held-out
    // evaluation cases x 2 slices = 50 slices never seen in training.
    let train_cases: Vec<_> = (0..100)
        .map(|i| generate_case(&phantom_cfg, &format!("train{i:03}"), run_cfg.seed))
        .collect();
    let eval_cases: Vec<_> = (0..25)
        .map(|i| generate_case(&phantom_cfg, &format!("eval{i:03}"), run_cfg.seed + 1))
        .collect();

    let samples = build_samples(&run_cfg, &train_cases);
    let (mut model, result) = run_training(&run_cfg, &samples);

    // Pooled per-class Dice over the 50 evaluation slices through the full
    // inference pipeline.
    let mut tp = [0u64; 3];
    let mut fp = [0u64; 3];
    let mut fn_ = [0u64; 3];
    for case in &eval_cases {
        for (slice, truth) in &case.slices {
            let (pred, _) = infer_slice(&mut model, slice, &run_cfg).unwrap();
            for class_id in 1..NUM_CLASSES as u8 {
                let idx = class_id as usize - 1;
                for (p, t) in pred
                    .class_mask(class_id)
                    .into_iter()
                    .zip(truth.class_mask(class_id))
                {
                    match (p, t) {
                        (true, true) => tp[idx] += 1,
                        (true, false) => fp[idx] += 1,
                        (false, true) => fn_[idx] += 1,
                        _ => {}
                    }
                }
            }
        }
    }
    let dice_by_class: [f64; 3] =
        std::array::from_fn(|i| 2.0 * tp[i] as f64 / (2 * tp[i] + fp[i] + fn_[i]) as f64);

    let tmp = tempfile::tempdir().unwrap();
    let wpath = tmp.path().join("weights.bin");
    model.save_weights(&wpath).unwrap();
    let weights = std::fs::read(&wpath).unwrap();
    let csv = wmhseg::nn::train::logs_to_csv(&result.logs);

    (
        run_cfg,
        samples,
        TrainingArtifacts {
            result,
            weights,
            csv,
            dice_by_class,
        },
    )
}

fn criteria_7_8_9(report: &mut Report) {
    let (run_cfg, samples, art) = training_artifacts();
    let [v, n, a] = art.dice_by_class;
    report.record(
        7,
        v >= 0.85 && a >= 0.60 && n >= 0.40 && v > a && a > n,
        format!(
            "held-out Dice ventricle {v:.3} (>=0.85), abnormal {a:.3} (>=0.60), normal {n:.3} (>=0.40), ordering v > a > n"
        ),
    );

    let first = art.result.logs.first().unwrap().loss_l1;
    let last = art.result.logs.last().unwrap().loss_l1;
    report.record(
        8,
        last < 0.25 * first,
        format!("epoch-30 L1 {last:.4} vs epoch-1 {first:.4} (ratio {:.3}, need < 0.25)", last / first),
    );

    // Determinism: a fresh model and a second run over the same samples must
    // reproduce the weights and the log byte for byte.
    let (model2, result2) = run_training(&run_cfg, &samples);
    let tmp = tempfile::tempdir().unwrap();
    let wpath = tmp.path().join("weights.bin");
    model2.save_weights(&wpath).unwrap();
    let weights2 = std::fs::read(&wpath).unwrap();
    let csv2 = wmhseg::nn::train::logs_to_csv(&result2.logs);
    report.record(
        9,
        weights2 == art.weights && csv2 == art.csv,
        format!(
            "rerun weights identical: {}, logs identical: {}",
            weights2 == art.weights,
            csv2 == art.csv
        ),
    );
}

// ------------------------------------------------------------- criterion 10

fn criterion_10(report: &mut Report) {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bench");
    run(Cli {
        cmd: Command::Bench {
            weights: None,
            common: CommonOpts {
                out: out.clone(),
                config: None,
                set: vec![
                    format!("image_size={TRAIN_SIZE}"),
                    "bench_iterations=3".into(),
                    "phantom_slices=2".into(),
                ],
            },
        },
    })
    .unwrap();
    let text = std::fs::read_to_string(out.join("bench.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let pre = v["preprocess_ms"].as_f64().unwrap();
    let inf = v["inference_ms"].as_f64().unwrap();
    let post = v["postprocess_ms"].as_f64().unwrap();
    let total = v["total_ms"].as_f64().unwrap();
    let sums_ok = (pre + inf + post - total).abs() <= 1e-9 * total.max(1.0);
    // Soft bounds: recorded for investigation, not a hard gate.
    let soft_ok = pre <= 200.0 && inf + post <= 500.0;
    report.record(
        10,
        sums_ok,
        format!(
            "stage sums equal totals: {sums_ok}; per-slice preprocess {pre:.1} ms, inference+postprocess {:.1} ms (soft bounds {})",
            inf + post,
            if soft_ok { "met" } else { "exceeded - investigate" }
        ),
    );
}

// ------------------------------------------------------------- criterion 11

fn criterion_11(report: &mut Report) {
    let ap = pr_curve(&[0.9, 0.8, 0.4, 0.1], &[true, false, true, false], 1000)
        .unwrap()
        .auc;
    let ap_ok = ap == 5.0 / 6.0;

    let truth: Vec<bool> = (0..100).map(|i| i % 3 == 0).collect();
    let perfect: Vec<f64> = truth.iter().map(|&t| if t { 0.9 } else { 0.1 }).collect();
    let inverted: Vec<f64> = truth.iter().map(|&t| if t { 0.1 } else { 0.9 }).collect();
    let roc_perfect = roc_curve(&perfect, &truth, 100).unwrap().auc;
    let roc_inverted = roc_curve(&inverted, &truth, 100).unwrap().auc;

    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let n = 10_000;
    let rand_truth: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
    let rand_probs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let roc_random = roc_curve(&rand_probs, &rand_truth, 10_000).unwrap().auc;

    report.record(
        11,
        ap_ok
            && roc_perfect == 1.0
            && roc_inverted == 0.0
            && (0.45..=0.55).contains(&roc_random),
        format!(
            "AP {ap:.6} (= 5/6: {ap_ok}), ROC perfect {roc_perfect}, inverted {roc_inverted}, random {roc_random:.3}"
        ),
    );
}

// ------------------------------------------------------------- criterion 12

fn criterion_12(report: &mut Report) {
    // Direct conventions on the metric layer.
    let empty = BinaryMask::new_2d(vec![false; 16], 4, 4, 1.0, 1.0);
    let mut some = vec![false; 16];
    some[5] = true;
    let nonempty = BinaryMask::new_2d(some, 4, 4, 1.0, 1.0);
    let empty_dice = dice(&empty, &empty).unwrap();
    let hd_missing = matches!(
        hd95(&empty, &nonempty),
        Err(MetricError::UndefinedBoundary(_))
    );

    // Same conventions through the eval subcommand on constructed cases: the
    // truth has a ventricle but no abnormal WMH, the prediction is entirely
    // background, so abnormal-WMH Dice is 1.0 and ventricle HD95 is missing.
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data").join("case000");
    std::fs::create_dir_all(&data).unwrap();
    let h = 32usize;
    let mut labels = vec![0u8; h * h];
    for y in 10..20 {
        for x in 10..20 {
            labels[y * h + x] = 1;
        }
    }
    let truth = ClassMask::new(labels, h, h, "case000", 0).unwrap();
    let pixels: Vec<f32> = truth.labels.iter().map(|&l| 0.2 + 0.2 * l as f32).collect();
    let slice = wmhseg::types::Slice::new(pixels, h, h, "case000", 0).unwrap();
    wmhseg::imgio::save_unit_image(&slice.pixels, h, h, &data.join("slice_000.pgm")).unwrap();
    wmhseg::imgio::save_mask(&truth, &data.join("mask_000.pgm")).unwrap();
    let mut manifest = wmhseg::imgio::CaseManifest::new("case000", &data);
    manifest.slices.push(wmhseg::imgio::SliceEntry {
        slice_index: 0,
        image: "slice_000.pgm".into(),
        mask: Some("mask_000.pgm".into()),
    });
    manifest.save(&data.join("manifest.txt")).unwrap();

    let pred_dir = tmp.path().join("pred").join("case000");
    std::fs::create_dir_all(&pred_dir).unwrap();
    let background = ClassMask::new(vec![0u8; h * h], h, h, "case000", 0).unwrap();
    wmhseg::imgio::save_mask(&background, &pred_dir.join("pred_000.pgm")).unwrap();

    let out = tmp.path().join("eval");
    run(Cli {
        cmd: Command::Eval {
            pred: tmp.path().join("pred"),
            data: tmp.path().join("data"),
            common: CommonOpts {
                out: out.clone(),
                config: None,
                set: vec![],
            },
        },
    })
    .unwrap();
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut abn_dice_one = false;
    let mut vent_hd_missing = false;
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[1] == "abnormal_wmh" {
            abn_dice_one = cols[4].parse::<f64>().unwrap() == 1.0;
        }
        if cols[1] == "ventricle" {
            vent_hd_missing = cols[6].is_empty() && cols[7] == "1";
        }
    }

    report.record(
        12,
        empty_dice == 1.0 && hd_missing && abn_dice_one && vent_hd_missing,
        format!(
            "empty-vs-empty Dice {empty_dice}, empty-vs-nonempty HD95 missing: {hd_missing}; via eval: absent-class Dice 1.0: {abn_dice_one}, HD95 flagged missing: {vent_hd_missing}"
        ),
    );
}

#[test]
fn acceptance() {
    let mut report = Report { lines: Vec::new() };
    criterion_1_and_2(&mut report);
    criterion_3(&mut report);
    criterion_4(&mut report);
    criterion_5(&mut report);
    criterion_6(&mut report);
    criteria_7_8_9(&mut report);
    criterion_10(&mut report);
    criterion_11(&mut report);
    criterion_12(&mut report);

    let failed: Vec<String> = report
        .lines
        .iter()
        .filter(|(_, pass, _)| !pass)
        .map(|(n, _, d)| format!("criterion {n}: {d}"))
        .collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
