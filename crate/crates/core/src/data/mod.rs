//! Label hierarchy, datasets, and the `HSDS` dataset container.
//!
//! Container layout (little-endian):
//!
//! ```text
//! "HSDS" | version u16 = 1 | dim u32 | n_rows u64 | n_sub u32
//! manifest: u32 length + UTF-8 JSON
//! features: n_rows·dim f32, row-major
//! labels:   n_rows u32
//! CRC-32C of every preceding byte
//! ```

mod manifest;
mod synthetic;

use std::path::Path;

pub use manifest::{HierarchyManifest, Superclass};
pub use synthetic::{generate_synthetic, synthetic_centers, Centers, SyntheticSpec};

use crate::codec::{self, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 4] = b"HSDS";
pub const DATASET_VERSION: u16 = 1;

/// Which labels a model is trained or evaluated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelView {
    Superclass,
    /// Rows of one superclass, labelled by local subclass index.
    SubclassOf(usize),
    AllSubclasses,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    sub_labels: Vec<usize>,
    manifest: HierarchyManifest,
}

impl Dataset {
    pub fn new(features: Tensor, sub_labels: Vec<usize>, manifest: HierarchyManifest) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() != sub_labels.len() {
            return Err(Error::Dimension {
                left: features.shape().to_vec(),
                right: vec![sub_labels.len()],
            });
        }
        if let Some(&bad) = sub_labels.iter().find(|&&l| l >= manifest.n_sub()) {
            return Err(Error::Index {
                index: bad,
                limit: manifest.n_sub(),
            });
        }
        Ok(Dataset {
            features,
            sub_labels,
            manifest,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn sub_labels(&self) -> &[usize] {
        &self.sub_labels
    }

    pub fn manifest(&self) -> &HierarchyManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.sub_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn super_labels(&self) -> Vec<usize> {
        self.sub_labels
            .iter()
            .map(|&s| self.manifest.super_of(s).unwrap())
            .collect()
    }

    /// Number of classes in a label view.
    pub fn class_count(&self, view: LabelView) -> Result<usize> {
        match view {
            LabelView::Superclass => Ok(self.manifest.n_super()),
            LabelView::SubclassOf(i) => self.manifest.subclass_count(i),
            LabelView::AllSubclasses => Ok(self.manifest.n_sub()),
        }
    }

    /// Features and labels under `view`; `SubclassOf` filters rows.
    pub fn view(&self, view: LabelView) -> Result<(Tensor, Vec<usize>)> {
        match view {
            LabelView::Superclass => Ok((self.features.clone(), self.super_labels())),
            LabelView::AllSubclasses => Ok((self.features.clone(), self.sub_labels.clone())),
            LabelView::SubclassOf(i) => {
                let range = self.manifest.subclass_range(i)?;
                let dim = self.dim();
                let mut data = Vec::new();
                let mut labels = Vec::new();
                for (row, &sub) in self.sub_labels.iter().enumerate() {
                    if range.contains(&sub) {
                        data.extend_from_slice(self.features.row(row));
                        labels.push(sub - range.start);
                    }
                }
                Ok((Tensor::new(vec![labels.len(), dim], data)?, labels))
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(DATASET_MAGIC);
        w.u16(DATASET_VERSION);
        w.u32(self.dim() as u32);
        w.u64(self.len() as u64);
        w.u32(self.manifest.n_sub() as u32);
        w.str(&self.manifest.to_json());
        w.f32s(self.features.data());
        for &l in &self.sub_labels {
            w.u32(l as u32);
        }
        w.finish_with_crc()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(DATASET_MAGIC)?;
        r.expect_version(DATASET_VERSION)?;
        let body = codec::verify_trailing_crc(bytes, 0)?;
        let mut r = ByteReader::with_base(&body[6..], 6);
        let dim = r.u32()? as usize;
        let n_rows = r.u64()? as usize;
        let n_sub = r.u32()? as usize;
        let manifest_at = r.offset();
        let manifest =
            HierarchyManifest::parse(&r.str()?).map_err(|e| Error::format(manifest_at, format!("manifest: {e}")))?;
        if manifest.n_sub() != n_sub {
            return Err(Error::format(
                manifest_at,
                format!("header n_sub {n_sub} disagrees with manifest"),
            ));
        }
        let feat_at = r.offset();
        let count = n_rows
            .checked_mul(dim)
            .ok_or_else(|| Error::format(feat_at, "row count overflow"))?;
        let features = r.f32s(count)?;
        let labels_at = r.offset();
        let labels = (0..n_rows)
            .map(|_| r.u32().map(|l| l as usize))
            .collect::<Result<Vec<_>>>()?;
        r.expect_end()?;
        let features = Tensor::new(vec![n_rows, dim], features).map_err(|e| Error::format(feat_at, e))?;
        Dataset::new(features, labels, manifest).map_err(|e| Error::format(labels_at, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Dataset::from_bytes(&std::fs::read(path)?)
    }
}
