//! Patch discriminator: the input image and a candidate segmentation map are
//! concatenated channel-wise and reduced to a grid of per-patch real/fake
//! logits (roughly 30x30 for 256x256 inputs).

use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use super::layers::{BatchNorm, Conv2d, LeakyRelu};
use super::scalar::Scalar;
use super::tensor::Tensor;
use super::{Mode, NnError};

#[derive(Debug, Clone)]
pub struct DiscriminatorConfig {
    /// Channels of the two concatenated inputs (image + map).
    pub in_channels: usize,
    /// Feature widths of the conv stages. The first len-1 stages use stride
    /// 2; the last uses stride 1, as does the final 1-channel head.
    pub channels: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            in_channels: 2,
            channels: vec![64, 128, 256, 512],
        }
    }
}

struct DiscBlock<S: Scalar> {
    conv: Conv2d<S>,
    bn: Option<BatchNorm<S>>,
    act: LeakyRelu<S>,
}

pub struct PatchDiscriminator<S: Scalar> {
    pub cfg: DiscriminatorConfig,
    blocks: Vec<DiscBlock<S>>,
    head: Conv2d<S>,
    image_channels: usize,
    has_forward: bool,
}

impl<S: Scalar> PatchDiscriminator<S> {
    pub fn new(cfg: DiscriminatorConfig, rng: &mut ChaCha8Rng) -> Self {
        let n = cfg.channels.len();
        assert!(n >= 2);
        let mut blocks = Vec::with_capacity(n);
        for (i, &ch) in cfg.channels.iter().enumerate() {
            let in_ch = if i == 0 { cfg.in_channels } else { cfg.channels[i - 1] };
            let stride = if i == n - 1 { 1 } else { 2 };
            blocks.push(DiscBlock {
                conv: Conv2d::new(&format!("disc.c{i}.conv"), in_ch, ch, 4, stride, 1, rng),
                bn: (i != 0).then(|| BatchNorm::new(&format!("disc.c{i}.bn"), ch)),
                act: LeakyRelu::new(0.2),
            });
        }
        let head = Conv2d::new("disc.head.conv", cfg.channels[n - 1], 1, 4, 1, 1, rng);
        PatchDiscriminator {
            cfg,
            blocks,
            head,
            image_channels: 1,
            has_forward: false,
        }
    }

    /// Forward on an (image, map) pair; returns the patch logit grid.
    pub fn forward(
        &mut self,
        image: &Tensor<S>,
        map: &Tensor<S>,
        mode: Mode,
    ) -> Tensor<S> {
        self.image_channels = image.channels();
        let mut h = Tensor::concat_channels(image, map);
        for blk in self.blocks.iter_mut() {
            h = blk.conv.forward(&h);
            if let Some(bn) = blk.bn.as_mut() {
                h = bn.forward(&h, mode);
            }
            h = blk.act.forward(&h);
        }
        self.has_forward = true;
        self.head.forward(&h)
    }

    /// Backward; returns gradients w.r.t. (image, map).
    pub fn backward(&mut self, gy: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>), NnError> {
        if !self.has_forward {
            return Err(NnError::NoForwardCache);
        }
        self.has_forward = false;
        let mut g = self.head.backward(gy)?;
        for blk in self.blocks.iter_mut().rev() {
            g = blk.act.backward(&g)?;
            if let Some(bn) = blk.bn.as_mut() {
                g = bn.backward(&g)?;
            }
            g = blk.conv.backward(&g)?;
        }
        Ok(g.split_channels(self.image_channels))
    }

    pub fn params_mut(&mut self) -> Vec<&mut super::layers::Param<S>> {
        let mut out = Vec::new();
        for blk in self.blocks.iter_mut() {
            out.push(&mut blk.conv.w);
            out.push(&mut blk.conv.b);
            if let Some(bn) = blk.bn.as_mut() {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }

    pub fn state_entries(&self) -> Vec<(String, Vec<usize>, Vec<S>)> {
        let mut out = Vec::new();
        for blk in &self.blocks {
            out.push((blk.conv.w.name.clone(), blk.conv.w.shape.clone(), blk.conv.w.data.clone()));
            out.push((blk.conv.b.name.clone(), blk.conv.b.shape.clone(), blk.conv.b.data.clone()));
            if let Some(bn) = &blk.bn {
                out.push((bn.gamma.name.clone(), bn.gamma.shape.clone(), bn.gamma.data.clone()));
                out.push((bn.beta.name.clone(), bn.beta.shape.clone(), bn.beta.data.clone()));
                let ch = bn.running_mean.len();
                let base = bn.gamma.name.trim_end_matches(".gamma").to_string();
                out.push((format!("{base}.running_mean"), vec![ch], bn.running_mean.clone()));
                out.push((format!("{base}.running_var"), vec![ch], bn.running_var.clone()));
            }
        }
        out.push((self.head.w.name.clone(), self.head.w.shape.clone(), self.head.w.data.clone()));
        out.push((self.head.b.name.clone(), self.head.b.shape.clone(), self.head.b.data.clone()));
        out
    }

    pub fn load_state_entries(
        &mut self,
        map: &BTreeMap<String, (Vec<usize>, Vec<S>)>,
    ) -> Result<(), NnError> {
        let take = |name: &str, shape: &[usize]| -> Result<Vec<S>, NnError> {
            let (s, d) = map
                .get(name)
                .ok_or_else(|| NnError::ArchitectureMismatch(format!("missing tensor {name}")))?;
            if s != shape {
                return Err(NnError::ArchitectureMismatch(format!(
                    "tensor {name} has shape {s:?}, expected {shape:?}"
                )));
            }
            Ok(d.clone())
        };
        for blk in self.blocks.iter_mut() {
            blk.conv.w.data = take(&blk.conv.w.name, &blk.conv.w.shape)?;
            blk.conv.b.data = take(&blk.conv.b.name, &blk.conv.b.shape)?;
            if let Some(bn) = blk.bn.as_mut() {
                bn.gamma.data = take(&bn.gamma.name, &bn.gamma.shape)?;
                bn.beta.data = take(&bn.beta.name, &bn.beta.shape)?;
                let ch = bn.running_mean.len();
                let base = bn.gamma.name.trim_end_matches(".gamma").to_string();
                bn.running_mean = take(&format!("{base}.running_mean"), &[ch])?;
                bn.running_var = take(&format!("{base}.running_var"), &[ch])?;
            }
        }
        self.head.w.data = take(&self.head.w.name, &self.head.w.shape)?;
        self.head.b.data = take(&self.head.b.name, &self.head.b.shape)?;
        Ok(())
    }
}
