//! Generator + discriminator pair with weight-file persistence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;

use crate::imgio::weights::{TensorEntry, TensorFile};

use super::discriminator::{DiscriminatorConfig, PatchDiscriminator};
use super::generator::{GeneratorConfig, GeneratorNet};
use super::NnError;

pub struct GanModel {
    pub gen: GeneratorNet<f32>,
    pub disc: PatchDiscriminator<f32>,
}

impl GanModel {
    /// Seeded initialization: all kernels N(0, 0.02), biases zero.
    pub fn new(gen_cfg: GeneratorConfig, disc_cfg: DiscriminatorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GanModel {
            gen: GeneratorNet::new(gen_cfg, &mut rng),
            disc: PatchDiscriminator::new(disc_cfg, &mut rng),
        }
    }

    /// Every persistent tensor (parameters and batch-norm running stats) of
    /// both networks, in a fixed order.
    pub fn state_entries(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        let mut out = self.gen.state_entries();
        out.extend(self.disc.state_entries());
        out
    }

    pub fn load_state_entries(
        &mut self,
        entries: &[(String, Vec<usize>, Vec<f32>)],
    ) -> Result<(), NnError> {
        let map: BTreeMap<String, (Vec<usize>, Vec<f32>)> = entries
            .iter()
            .map(|(n, s, d)| (n.clone(), (s.clone(), d.clone())))
            .collect();
        let expected: usize = self.state_entries().len();
        if map.len() != entries.len() {
            return Err(NnError::ArchitectureMismatch(
                "duplicate tensor names".into(),
            ));
        }
        if map.len() != expected {
            return Err(NnError::ArchitectureMismatch(format!(
                "weight set has {} tensors, model expects {expected}",
                map.len()
            )));
        }
        self.gen.load_state_entries(&map)?;
        self.disc.load_state_entries(&map)?;
        Ok(())
    }

    pub fn save_weights(&self, path: &Path) -> Result<(), NnError> {
        let entries = self
            .state_entries()
            .into_iter()
            .map(|(name, shape, data)| TensorEntry { name, shape, data })
            .collect();
        TensorFile { entries }.save(path)?;
        Ok(())
    }

    /// Load weights saved by `save_weights`; the file must contain exactly
    /// the tensors (names and shapes) this model's architecture defines.
    pub fn load_weights(&mut self, path: &Path) -> Result<(), NnError> {
        let file = TensorFile::load(path)?;
        let entries: Vec<(String, Vec<usize>, Vec<f32>)> = file
            .entries
            .into_iter()
            .map(|t| (t.name, t.shape, t.data))
            .collect();
        self.load_state_entries(&entries)
    }
}
