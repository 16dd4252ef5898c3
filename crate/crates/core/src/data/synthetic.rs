//! Gaussian hierarchy generator: superclass centers, subclass centers
//! scattered around them, and isotropic samples around each subclass center.

use serde::{Deserialize, Serialize};

use super::{Dataset, HierarchyManifest, Superclass};
use crate::error::{Error, Result};
use crate::prng::{gaussian, Prng};
use crate::tensor::Tensor;

const TRAIN_STREAM: u64 = 0x7472_6169_6e00_0001;
const TEST_STREAM: u64 = 0x7465_7374_0000_0002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_super: usize,
    pub subs_per_super: Vec<usize>,
    pub dim: usize,
    pub super_sep: f32,
    pub sub_sep: f32,
    pub noise_sigma: f32,
    pub n_train_per_sub: usize,
    pub n_test_per_sub: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subs_per_super.len() != self.n_super {
            return Err(Error::parameter(format!(
                "subs_per_super has {} entries for {} superclasses",
                self.subs_per_super.len(),
                self.n_super
            )));
        }
        if self.dim == 0 {
            return Err(Error::parameter("dim must be positive"));
        }
        if !(self.super_sep > self.sub_sep && self.sub_sep > 0.0 && self.noise_sigma > 0.0) {
            return Err(Error::parameter(format!(
                "need super_sep > sub_sep > 0 and noise_sigma > 0, got {} / {} / {}",
                self.super_sep, self.sub_sep, self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn manifest(&self) -> Result<HierarchyManifest> {
        self.validate()?;
        HierarchyManifest::new(
            self.subs_per_super
                .iter()
                .enumerate()
                .map(|(i, &k)| Superclass {
                    name: format!("super_{i}"),
                    subclasses: (0..k).map(|j| format!("sub_{i}_{j}")).collect(),
                })
                .collect(),
        )
        .map_err(|e| Error::parameter(e.to_string()))
    }
}

/// Centers used to generate a synthetic hierarchy, exposed for oracles.
#[derive(Debug, Clone)]
pub struct Centers {
    pub superclass: Vec<Vec<f32>>,
    pub subclass: Vec<Vec<f32>>,
}

pub fn synthetic_centers(spec: &SyntheticSpec) -> Result<Centers> {
    let manifest = spec.manifest()?;
    let mut prng = Prng::new(spec.seed);
    let superclass: Vec<Vec<f32>> = (0..spec.n_super)
        .map(|_| {
            (0..spec.dim)
                .map(|_| gaussian(&mut prng, 0.0, spec.super_sep))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let subclass = (0..manifest.n_sub())
        .map(|sub| {
            let parent = &superclass[manifest.super_of(sub)?];
            parent
                .iter()
                .map(|&c| gaussian(&mut prng, c, spec.sub_sep))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    Ok(Centers { superclass, subclass })
}

/// Generates `(train, test)`; rows are grouped by subclass in global order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    let manifest = spec.manifest()?;
    let centers = synthetic_centers(spec)?;
    let sample = |stream: u64, per_sub: usize| -> Result<Dataset> {
        let mut prng = Prng::derive(spec.seed, stream);
        let n = per_sub * manifest.n_sub();
        let mut data = Vec::with_capacity(n * spec.dim);
        let mut labels = Vec::with_capacity(n);
        for (sub, center) in centers.subclass.iter().enumerate() {
            for _ in 0..per_sub {
                for &c in center {
                    data.push(gaussian(&mut prng, c, spec.noise_sigma)?);
                }
                labels.push(sub);
            }
        }
        Dataset::new(Tensor::new(vec![n, spec.dim], data)?, labels, manifest.clone())
    };
    let train = sample(TRAIN_STREAM, spec.n_train_per_sub)?;
    let test = sample(TEST_STREAM, spec.n_test_per_sub)?;
    Ok((train, test))
}
