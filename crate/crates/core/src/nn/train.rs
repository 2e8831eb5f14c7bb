//! Adversarial training loop: per sample, one discriminator update on a
//! (real, fake) pair followed by one generator update against the refreshed
//! discriminator. Fully sequential and seeded, so a rerun with the same
//! configuration reproduces the weights bit for bit.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::metrics::pr_curve;
use crate::postproc::{decode_probabilities, PostprocConfig};
use crate::types::NUM_CLASSES;

use super::adam::{adam_step, AdamConfig};
use super::loss::{bce_with_logits, l1_loss, LossWeights};
use super::model::GanModel;
use super::scalar::Scalar;
use super::tensor::Tensor;
use super::{Mode, NnError};

/// One paired training example in frame space, row-major `size*size`.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub case_id: String,
    /// Normalized input intensities in [0, 1].
    pub input: Vec<f32>,
    /// Anchor-encoded target map in [0, 1].
    pub target: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub image_size: usize,
    pub seed: u64,
    /// Fraction of cases (not slices) held out for checkpoint selection.
    pub holdout_fraction: f64,
    pub weights: LossWeights,
    pub gen_opt: AdamConfig,
    pub disc_opt: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            image_size: 256,
            seed: 17,
            holdout_fraction: 0.15,
            weights: LossWeights::default(),
            gen_opt: AdamConfig::default(),
            disc_opt: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_g: f64,
    pub loss_d: f64,
    pub loss_l1: f64,
    pub val_loss: f64,
    /// Pixelwise average precision over the held-out set for ventricle,
    /// normal-appearing change, and pathological lesion classes; None when a
    /// class never occurs in the held-out truth.
    pub auc_pr: [Option<f64>; NUM_CLASSES - 1],
}

pub fn logs_to_csv(logs: &[EpochLog]) -> String {
    let mut s = String::from(
        "epoch,loss_g,loss_d,loss_l1,val_loss,auc_pr_ventricle,auc_pr_normal_wmh,auc_pr_abnormal_wmh\n",
    );
    for l in logs {
        let pr: Vec<String> = l
            .auc_pr
            .iter()
            .map(|v| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "nan".into()))
            .collect();
        s.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
            l.epoch, l.loss_g, l.loss_d, l.loss_l1, l.val_loss, pr[0], pr[1], pr[2]
        ));
    }
    s
}

#[derive(Debug)]
pub struct TrainResult {
    pub logs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Split sample indices into (train, held-out) at case granularity: the last
/// `fraction` of distinct case ids in sorted order are held out.
pub fn holdout_split(samples: &[TrainSample], fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut cases: Vec<&str> = samples.iter().map(|s| s.case_id.as_str()).collect();
    cases.sort_unstable();
    cases.dedup();
    let n = cases.len();
    let n_val = if fraction <= 0.0 || n < 2 {
        0
    } else {
        (((n as f64) * fraction).round() as usize).clamp(1, n - 1)
    };
    let val_cases: std::collections::BTreeSet<&str> =
        cases[n - n_val..].iter().copied().collect();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if val_cases.contains(s.case_id.as_str()) {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    (train, val)
}

fn to_tensor(data: &[f32], size: usize) -> Tensor<f32> {
    Tensor::from_vec([1, 1, size, size], data.to_vec())
}

/// Generator objective on one sample with the current discriminator, both in
/// eval mode. Returns (total, l1 part, generated map).
fn gen_eval_loss(
    model: &mut GanModel,
    x: &Tensor<f32>,
    t: &Tensor<f32>,
    w: &LossWeights,
    rng: &mut ChaCha8Rng,
) -> (f64, f64, Tensor<f32>) {
    let fake = model.gen.forward(x, Mode::Eval, rng);
    let d_fake = model.disc.forward(x, &fake, Mode::Eval);
    let (ladv, _) = bce_with_logits(&d_fake, 1.0);
    let (ll1, _) = l1_loss(&fake, t);
    (
        w.lambda_adv * ladv.to_f64() + w.lambda_l1 * ll1.to_f64(),
        ll1.to_f64(),
        fake,
    )
}

/// Train in place; on return the model holds the weights of the epoch with
/// the lowest held-out loss. `on_epoch` is called after every epoch.
pub fn train(
    model: &mut GanModel,
    samples: &[TrainSample],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainResult, NnError> {
    if samples.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let size = cfg.image_size;
    for s in samples {
        assert_eq!(s.input.len(), size * size, "sample {} size mismatch", s.case_id);
        assert_eq!(s.target.len(), size * size);
    }
    let (train_idx, val_idx) = holdout_split(samples, cfg.holdout_fraction);
    if train_idx.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w = cfg.weights;
    let pp = PostprocConfig::default();

    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<(String, Vec<usize>, Vec<f32>)>)> = None;
    let mut t_g: u64 = 0;
    let mut t_d: u64 = 0;

    for epoch in 1..=cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);
        let (mut sum_g, mut sum_d, mut sum_l1) = (0.0f64, 0.0f64, 0.0f64);
        for (step, &si) in order.iter().enumerate() {
            let s = &samples[si];
            let x = to_tensor(&s.input, size);
            let t = to_tensor(&s.target, size);

            // One generator forward per sample; the fake feeds both updates.
            let fake = model.gen.forward(&x, Mode::Train, &mut rng);

            // Discriminator update: real pair toward 1, fake pair toward 0,
            // each half-weighted.
            for p in model.disc.params_mut() {
                p.zero_grad();
            }
            let d_real = model.disc.forward(&x, &t, Mode::Train);
            let (l_real, mut g_real) = bce_with_logits(&d_real, 1.0);
            for g in g_real.data.iter_mut() {
                *g *= 0.5;
            }
            model.disc.backward(&g_real)?;
            let d_fake = model.disc.forward(&x, &fake, Mode::Train);
            let (l_fake, mut g_fake) = bce_with_logits(&d_fake, 0.0);
            for g in g_fake.data.iter_mut() {
                *g *= 0.5;
            }
            model.disc.backward(&g_fake)?;
            t_d += 1;
            adam_step(&mut model.disc.params_mut(), &cfg.disc_opt, t_d);
            let loss_d = 0.5 * (l_real.to_f64() + l_fake.to_f64());

            // Generator update against the refreshed discriminator.
            for p in model.gen.params_mut() {
                p.zero_grad();
            }
            for p in model.disc.params_mut() {
                p.zero_grad();
            }
            let d_fake2 = model.disc.forward(&x, &fake, Mode::Train);
            let (l_adv, g_adv) = bce_with_logits(&d_fake2, 1.0);
            let (_, g_fake_from_d) = model.disc.backward(&g_adv)?;
            let (l_l1, g_l1) = l1_loss(&fake, &t);
            let la = w.lambda_adv as f32;
            let ll = w.lambda_l1 as f32;
            let mut g_total = Tensor::zeros(fake.shape);
            for i in 0..g_total.numel() {
                g_total.data[i] = la * g_fake_from_d.data[i] + ll * g_l1.data[i];
            }
            model.gen.backward(&g_total)?;
            t_g += 1;
            adam_step(&mut model.gen.params_mut(), &cfg.gen_opt, t_g);
            // Discard the discriminator gradients produced while routing the
            // adversarial signal to the generator.
            for p in model.disc.params_mut() {
                p.zero_grad();
            }

            let loss_g = w.lambda_adv * l_adv.to_f64() + w.lambda_l1 * l_l1.to_f64();
            if !loss_g.is_finite() || !loss_d.is_finite() {
                return Err(NnError::NonFinite {
                    epoch,
                    step,
                    which: format!("loss_g={loss_g}, loss_d={loss_d}"),
                });
            }
            sum_g += loss_g;
            sum_d += loss_d;
            sum_l1 += l_l1.to_f64();
        }
        let n_train = order.len() as f64;

        // Held-out evaluation and per-class average precision.
        let eval_idx: &[usize] = if val_idx.is_empty() { &train_idx } else { &val_idx };
        let mut val_loss = 0.0;
        let mut scores: Vec<Vec<f64>> = vec![Vec::new(); NUM_CLASSES - 1];
        let mut truths: Vec<Vec<bool>> = vec![Vec::new(); NUM_CLASSES - 1];
        for &vi in eval_idx {
            let s = &samples[vi];
            let x = to_tensor(&s.input, size);
            let t = to_tensor(&s.target, size);
            let mut eval_rng = ChaCha8Rng::seed_from_u64(0);
            let (l, _, fake) = gen_eval_loss(model, &x, &t, &w, &mut eval_rng);
            val_loss += l;
            let probs = decode_probabilities(&fake.data, size, size, &pp)
                .expect("default decode config is valid");
            let truth_probs = decode_probabilities(&s.target, size, size, &pp)
                .expect("default decode config is valid");
            for c in 1..NUM_CLASSES {
                scores[c - 1].extend_from_slice(&probs.probs[c]);
                // Targets sit exactly on anchors, so the argmax is the label.
                for i in 0..size * size {
                    let mut best_c = 0;
                    let mut best_p = truth_probs.probs[0][i];
                    for k in 1..NUM_CLASSES {
                        if truth_probs.probs[k][i] > best_p {
                            best_p = truth_probs.probs[k][i];
                            best_c = k;
                        }
                    }
                    truths[c - 1].push(best_c == c);
                }
            }
        }
        val_loss /= eval_idx.len() as f64;
        let mut auc_pr = [None; NUM_CLASSES - 1];
        for c in 0..NUM_CLASSES - 1 {
            if truths[c].iter().any(|&b| b) && truths[c].iter().any(|&b| !b) {
                auc_pr[c] = pr_curve(&scores[c], &truths[c], 256).ok().map(|cv| cv.auc);
            }
        }

        let log = EpochLog {
            epoch,
            loss_g: sum_g / n_train,
            loss_d: sum_d / n_train,
            loss_l1: sum_l1 / n_train,
            val_loss,
            auc_pr,
        };
        on_epoch(&log);
        logs.push(log);

        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.state_entries()));
        }
    }

    let (best_val_loss, best_epoch, state) = best.expect("at least one epoch");
    model.load_state_entries(&state)?;
    Ok(TrainResult {
        logs,
        best_epoch,
        best_val_loss,
    })
}
