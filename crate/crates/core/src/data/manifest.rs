use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Superclass {
    pub name: String,
    pub subclasses: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    superclasses: Vec<Superclass>,
}

/// Two-level label hierarchy. A subclass's global index is its position in
/// the concatenation of every superclass's subclass list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ManifestDoc", into = "ManifestDoc")]
pub struct HierarchyManifest {
    superclasses: Vec<Superclass>,
    /// `offsets[i]..offsets[i + 1]` is the global index range of superclass `i`.
    offsets: Vec<usize>,
}

impl TryFrom<ManifestDoc> for HierarchyManifest {
    type Error = Error;

    fn try_from(doc: ManifestDoc) -> Result<Self> {
        HierarchyManifest::new(doc.superclasses)
    }
}

impl From<HierarchyManifest> for ManifestDoc {
    fn from(m: HierarchyManifest) -> Self {
        ManifestDoc {
            superclasses: m.superclasses,
        }
    }
}

impl HierarchyManifest {
    pub fn new(superclasses: Vec<Superclass>) -> Result<Self> {
        if superclasses.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 superclasses, got {}",
                superclasses.len()
            )));
        }
        let mut super_names = HashSet::new();
        let mut sub_names = HashSet::new();
        for sc in &superclasses {
            if !super_names.insert(sc.name.as_str()) {
                return Err(Error::Validation(format!("duplicate superclass name {:?}", sc.name)));
            }
            if sc.subclasses.len() < 2 {
                return Err(Error::Validation(format!(
                    "superclass {:?} has {} subclasses, need at least 2",
                    sc.name,
                    sc.subclasses.len()
                )));
            }
            for sub in &sc.subclasses {
                if !sub_names.insert(sub.as_str()) {
                    return Err(Error::Validation(format!("duplicate subclass name {sub:?}")));
                }
            }
        }
        let mut offsets = Vec::with_capacity(superclasses.len() + 1);
        offsets.push(0);
        for sc in &superclasses {
            offsets.push(offsets.last().unwrap() + sc.subclasses.len());
        }
        Ok(HierarchyManifest { superclasses, offsets })
    }

    /// Parses the JSON manifest document.
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Canonical compact JSON rendering.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serialization cannot fail")
    }

    pub fn superclasses(&self) -> &[Superclass] {
        &self.superclasses
    }

    pub fn n_super(&self) -> usize {
        self.superclasses.len()
    }

    pub fn n_sub(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn subclass_count(&self, superclass: usize) -> Result<usize> {
        self.check_super(superclass)?;
        Ok(self.superclasses[superclass].subclasses.len())
    }

    pub fn max_subclass_count(&self) -> usize {
        self.superclasses.iter().map(|s| s.subclasses.len()).max().unwrap_or(0)
    }

    pub fn subclass_range(&self, superclass: usize) -> Result<Range<usize>> {
        self.check_super(superclass)?;
        Ok(self.offsets[superclass]..self.offsets[superclass + 1])
    }

    /// Superclass containing global subclass `sub`.
    pub fn super_of(&self, sub: usize) -> Result<usize> {
        if sub >= self.n_sub() {
            return Err(Error::Index {
                index: sub,
                limit: self.n_sub(),
            });
        }
        // offsets is sorted; the containing range starts at the last offset <= sub
        Ok(self.offsets.partition_point(|&o| o <= sub) - 1)
    }

    /// (superclass, local index) of a global subclass.
    pub fn split(&self, sub: usize) -> Result<(usize, usize)> {
        let sc = self.super_of(sub)?;
        Ok((sc, sub - self.offsets[sc]))
    }

    pub fn global_index(&self, superclass: usize, local: usize) -> Result<usize> {
        let range = self.subclass_range(superclass)?;
        if local >= range.len() {
            return Err(Error::Index {
                index: local,
                limit: range.len(),
            });
        }
        Ok(range.start + local)
    }

    pub fn superclass_index(&self, name: &str) -> Option<usize> {
        self.superclasses.iter().position(|s| s.name == name)
    }

    fn check_super(&self, superclass: usize) -> Result<()> {
        if superclass >= self.n_super() {
            return Err(Error::Index {
                index: superclass,
                limit: self.n_super(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> HierarchyManifest {
        HierarchyManifest::parse(
            r#"{"superclasses":[{"name":"A","subclasses":["a1","a2"]},{"name":"B","subclasses":["b1","b2"]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn concatenation_order_indexing() {
        let m = ab();
        assert_eq!(m.global_index(0, 0).unwrap(), 0);
        assert_eq!(m.global_index(0, 1).unwrap(), 1);
        assert_eq!(m.global_index(1, 0).unwrap(), 2);
        assert_eq!(m.global_index(1, 1).unwrap(), 3);
        assert_eq!(m.n_sub(), 4);
    }

    #[test]
    fn super_of_cases() {
        let m = ab();
        assert_eq!(m.super_of(0).unwrap(), 0);
        assert_eq!(m.super_of(2).unwrap(), 1);
        assert_eq!(m.super_of(1).unwrap(), m.super_of(0).unwrap());
        assert!(matches!(m.super_of(4), Err(Error::Index { index: 4, limit: 4 })));
    }

    #[test]
    fn duplicate_names_rejected() {
        let dup_sub = r#"{"superclasses":[{"name":"A","subclasses":["x","a2"]},{"name":"B","subclasses":["x","b2"]}]}"#;
        let err = HierarchyManifest::parse(dup_sub).unwrap_err().to_string();
        assert!(err.contains("\"x\""), "{err}");
        let dup_super =
            r#"{"superclasses":[{"name":"A","subclasses":["a1","a2"]},{"name":"A","subclasses":["b1","b2"]}]}"#;
        assert!(HierarchyManifest::parse(dup_super)
            .unwrap_err()
            .to_string()
            .contains("duplicate superclass"));
    }

    #[test]
    fn too_few_subclasses_rejected() {
        let text = r#"{"superclasses":[{"name":"A","subclasses":["a1","a2"]},{"name":"B","subclasses":["b1"]}]}"#;
        assert!(HierarchyManifest::parse(text)
            .unwrap_err()
            .to_string()
            .contains("need at least 2"));
        let single = r#"{"superclasses":[{"name":"A","subclasses":["a1","a2"]}]}"#;
        assert!(HierarchyManifest::parse(single).is_err());
    }

    #[test]
    fn duplicate_json_keys_rejected() {
        let text = r#"{"superclasses":[],"superclasses":[]}"#;
        assert!(HierarchyManifest::parse(text).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = ab();
        assert_eq!(HierarchyManifest::parse(&m.to_json()).unwrap(), m);
    }
}
