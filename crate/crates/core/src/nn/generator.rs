//! Encoder-decoder generator with skip connections. Every stage halves or
//! doubles the spatial resolution with kernel 4, stride 2, padding 1; the
//! input side length must equal 2^depth so the bottleneck is 1x1.

use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use super::layers::{BatchNorm, Conv2d, ConvTranspose2d, Dropout, LeakyRelu, Tanh01};
use super::scalar::Scalar;
use super::tensor::Tensor;
use super::{Mode, NnError};

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Feature channels after each encoder stage, shallow to deep.
    pub enc_channels: Vec<usize>,
    pub dropout_rate: f64,
    /// Dropout is applied to this many of the deepest decoder stages.
    pub dropout_blocks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            in_channels: 1,
            out_channels: 1,
            enc_channels: vec![64, 128, 256, 512, 512, 512, 512, 512],
            dropout_rate: 0.5,
            dropout_blocks: 3,
        }
    }
}

struct EncBlock<S: Scalar> {
    conv: Conv2d<S>,
    bn: Option<BatchNorm<S>>,
    act: LeakyRelu<S>,
}

struct DecBlock<S: Scalar> {
    convt: ConvTranspose2d<S>,
    bn: BatchNorm<S>,
    act: LeakyRelu<S>,
    dropout: Option<Dropout<S>>,
}

pub struct GeneratorNet<S: Scalar> {
    pub cfg: GeneratorConfig,
    enc: Vec<EncBlock<S>>,
    dec: Vec<DecBlock<S>>,
    out_conv: ConvTranspose2d<S>,
    out_act: Tanh01<S>,
    /// Channel widths of cached skip tensors, needed to split gradients.
    skip_channels: Vec<usize>,
}

impl<S: Scalar> GeneratorNet<S> {
    pub fn new(cfg: GeneratorConfig, rng: &mut ChaCha8Rng) -> Self {
        let depth = cfg.enc_channels.len();
        assert!(depth >= 2, "generator needs at least two encoder stages");
        let mut enc = Vec::with_capacity(depth);
        for i in 0..depth {
            let in_ch = if i == 0 {
                cfg.in_channels
            } else {
                cfg.enc_channels[i - 1]
            };
            // No normalization on the first stage (raw intensities) or the
            // 1x1 bottleneck (zero variance with batch size 1).
            let use_bn = i != 0 && i != depth - 1;
            enc.push(EncBlock {
                conv: Conv2d::new(&format!("gen.enc{i}.conv"), in_ch, cfg.enc_channels[i], 4, 2, 1, rng),
                bn: use_bn.then(|| BatchNorm::new(&format!("gen.enc{i}.bn"), cfg.enc_channels[i])),
                act: LeakyRelu::new(0.2),
            });
        }
        let mut dec = Vec::with_capacity(depth - 1);
        for j in 0..depth - 1 {
            let in_ch = if j == 0 {
                cfg.enc_channels[depth - 1]
            } else {
                2 * cfg.enc_channels[depth - 1 - j]
            };
            let out_ch = cfg.enc_channels[depth - 2 - j];
            dec.push(DecBlock {
                convt: ConvTranspose2d::new(&format!("gen.dec{j}.convt"), in_ch, out_ch, 4, 2, 1, rng),
                bn: BatchNorm::new(&format!("gen.dec{j}.bn"), out_ch),
                act: LeakyRelu::new(0.0),
                dropout: (j < cfg.dropout_blocks).then(|| Dropout::new(cfg.dropout_rate)),
            });
        }
        let out_conv = ConvTranspose2d::new(
            "gen.out.convt",
            2 * cfg.enc_channels[0],
            cfg.out_channels,
            4,
            2,
            1,
            rng,
        );
        GeneratorNet {
            cfg,
            enc,
            dec,
            out_conv,
            out_act: Tanh01::new(),
            skip_channels: Vec::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.enc.len()
    }

    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode, rng: &mut ChaCha8Rng) -> Tensor<S> {
        let depth = self.depth();
        assert_eq!(
            x.height(),
            1usize << depth,
            "input side must be 2^depth for a 1x1 bottleneck"
        );
        assert_eq!(x.height(), x.width());
        let mut skips: Vec<Tensor<S>> = Vec::with_capacity(depth);
        let mut h = x.clone();
        for blk in self.enc.iter_mut() {
            h = blk.conv.forward(&h);
            if let Some(bn) = blk.bn.as_mut() {
                h = bn.forward(&h, mode);
            }
            h = blk.act.forward(&h);
            skips.push(h.clone());
        }
        self.skip_channels = skips.iter().map(|t| t.channels()).collect();
        // h is the bottleneck (last skip); walk back up, concatenating the
        // mirrored encoder output after each decoder stage.
        for (j, blk) in self.dec.iter_mut().enumerate() {
            h = blk.convt.forward(&h);
            h = blk.bn.forward(&h, mode);
            h = blk.act.forward(&h);
            if let Some(d) = blk.dropout.as_mut() {
                h = d.forward(&h, mode, rng);
            }
            h = Tensor::concat_channels(&h, &skips[depth - 2 - j]);
        }
        h = self.out_conv.forward(&h);
        self.out_act.forward(&h)
    }

    /// Backpropagate a gradient w.r.t. the output; accumulates parameter
    /// gradients and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, gy: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let depth = self.depth();
        if self.skip_channels.len() != depth {
            return Err(NnError::NoForwardCache);
        }
        let mut skip_grads: Vec<Option<Tensor<S>>> = (0..depth).map(|_| None).collect();
        let mut g = self.out_act.backward(gy)?;
        g = self.out_conv.backward(&g)?;
        let (mut gh, gskip) = g.split_channels(self.skip_channels[0]);
        skip_grads[0] = Some(gskip);
        for j in (0..depth - 1).rev() {
            let blk = &mut self.dec[j];
            let mut gb = gh;
            if let Some(d) = blk.dropout.as_mut() {
                gb = d.backward(&gb)?;
            }
            gb = blk.act.backward(&gb)?;
            gb = blk.bn.backward(&gb)?;
            gb = blk.convt.backward(&gb)?;
            if j == 0 {
                gh = gb; // gradient w.r.t. the bottleneck skip
            } else {
                let c = self.skip_channels[depth - 1 - j];
                let (ga, gs) = gb.split_channels(c);
                match &mut skip_grads[depth - 1 - j] {
                    Some(acc) => {
                        for (a, b) in acc.data.iter_mut().zip(&gs.data) {
                            *a += *b;
                        }
                    }
                    slot => *slot = Some(gs),
                }
                gh = ga;
            }
        }
        // gh is the gradient w.r.t. the bottleneck output (deepest skip).
        let mut g = gh;
        for i in (0..depth).rev() {
            if i < depth - 1 {
                if let Some(gs) = skip_grads[i].take() {
                    for (a, b) in g.data.iter_mut().zip(&gs.data) {
                        *a += *b;
                    }
                }
            }
            let blk = &mut self.enc[i];
            g = blk.act.backward(&g)?;
            if let Some(bn) = blk.bn.as_mut() {
                g = bn.backward(&g)?;
            }
            g = blk.conv.backward(&g)?;
        }
        self.skip_channels.clear();
        Ok(g)
    }

    pub fn params_mut(&mut self) -> Vec<&mut super::layers::Param<S>> {
        let mut out = Vec::new();
        for blk in self.enc.iter_mut() {
            out.push(&mut blk.conv.w);
            out.push(&mut blk.conv.b);
            if let Some(bn) = blk.bn.as_mut() {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        for blk in self.dec.iter_mut() {
            out.push(&mut blk.convt.w);
            out.push(&mut blk.convt.b);
            out.push(&mut blk.bn.gamma);
            out.push(&mut blk.bn.beta);
        }
        out.push(&mut self.out_conv.w);
        out.push(&mut self.out_conv.b);
        out
    }

    /// All persistent tensors (parameters plus batch-norm running stats).
    pub fn state_entries(&self) -> Vec<(String, Vec<usize>, Vec<S>)> {
        let mut out = Vec::new();
        let push_bn = |out: &mut Vec<(String, Vec<usize>, Vec<S>)>, bn: &BatchNorm<S>| {
            out.push((bn.gamma.name.clone(), bn.gamma.shape.clone(), bn.gamma.data.clone()));
            out.push((bn.beta.name.clone(), bn.beta.shape.clone(), bn.beta.data.clone()));
            let ch = bn.running_mean.len();
            let base = bn.gamma.name.trim_end_matches(".gamma").to_string();
            out.push((format!("{base}.running_mean"), vec![ch], bn.running_mean.clone()));
            out.push((format!("{base}.running_var"), vec![ch], bn.running_var.clone()));
        };
        for blk in &self.enc {
            out.push((blk.conv.w.name.clone(), blk.conv.w.shape.clone(), blk.conv.w.data.clone()));
            out.push((blk.conv.b.name.clone(), blk.conv.b.shape.clone(), blk.conv.b.data.clone()));
            if let Some(bn) = &blk.bn {
                push_bn(&mut out, bn);
            }
        }
        for blk in &self.dec {
            out.push((blk.convt.w.name.clone(), blk.convt.w.shape.clone(), blk.convt.w.data.clone()));
            out.push((blk.convt.b.name.clone(), blk.convt.b.shape.clone(), blk.convt.b.data.clone()));
            push_bn(&mut out, &blk.bn);
        }
        out.push((self.out_conv.w.name.clone(), self.out_conv.w.shape.clone(), self.out_conv.w.data.clone()));
        out.push((self.out_conv.b.name.clone(), self.out_conv.b.shape.clone(), self.out_conv.b.data.clone()));
        out
    }

    pub fn load_state_entries(
        &mut self,
        map: &BTreeMap<String, (Vec<usize>, Vec<S>)>,
    ) -> Result<(), NnError> {
        let take = |map: &BTreeMap<String, (Vec<usize>, Vec<S>)>,
                    name: &str,
                    shape: &[usize]|
         -> Result<Vec<S>, NnError> {
            let (s, d) = map.get(name).ok_or_else(|| {
                NnError::ArchitectureMismatch(format!("missing tensor {name}"))
            })?;
            if s != shape {
                return Err(NnError::ArchitectureMismatch(format!(
                    "tensor {name} has shape {s:?}, expected {shape:?}"
                )));
            }
            Ok(d.clone())
        };
        let load_bn = |map: &BTreeMap<String, (Vec<usize>, Vec<S>)>,
                           bn: &mut BatchNorm<S>|
         -> Result<(), NnError> {
            bn.gamma.data = take(map, &bn.gamma.name, &bn.gamma.shape)?;
            bn.beta.data = take(map, &bn.beta.name, &bn.beta.shape)?;
            let ch = bn.running_mean.len();
            let base = bn.gamma.name.trim_end_matches(".gamma").to_string();
            bn.running_mean = take(map, &format!("{base}.running_mean"), &[ch])?;
            bn.running_var = take(map, &format!("{base}.running_var"), &[ch])?;
            Ok(())
        };
        for blk in self.enc.iter_mut() {
            blk.conv.w.data = take(map, &blk.conv.w.name, &blk.conv.w.shape)?;
            blk.conv.b.data = take(map, &blk.conv.b.name, &blk.conv.b.shape)?;
            if let Some(bn) = blk.bn.as_mut() {
                load_bn(map, bn)?;
            }
        }
        for blk in self.dec.iter_mut() {
            blk.convt.w.data = take(map, &blk.convt.w.name, &blk.convt.w.shape)?;
            blk.convt.b.data = take(map, &blk.convt.b.name, &blk.convt.b.shape)?;
            load_bn(map, &mut blk.bn)?;
        }
        self.out_conv.w.data = take(map, &self.out_conv.w.name, &self.out_conv.w.shape)?;
        self.out_conv.b.data = take(map, &self.out_conv.b.name, &self.out_conv.b.shape)?;
        Ok(())
    }
}
