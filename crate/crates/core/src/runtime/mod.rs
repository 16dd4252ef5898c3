//! Two-stage inference: a superclass router followed by a specialist.
//!
//! [`infer_vanilla`] keeps every specialist resident. [`EfficientSession`]
//! keeps only the router plus packed deltas, rebuilding a specialist when the
//! route changes and recording what that costs in a [`CostLedger`].

mod eval;
mod report;

use crate::data::HierarchyManifest;
use crate::delta::{reconstruct_counted, unpack, PackedDelta};
use crate::error::{Error, Result};
use crate::nn::{argmax, Network};
use crate::tensor::Tensor;

pub use eval::{confusion_matrix, evaluate, evaluate_session, EvalMode, EvalModels, EvalReport, Evaluation};
pub use report::{
    compression_csv, confusion_csv, confusion_percent_text, gap_report, ledger_csv, predictions_csv, report_csv,
    CompressionRow, GapReport, GapRow,
};

/// Specialists held by a registry.
#[derive(Debug, Clone)]
pub enum Specialists {
    Resident(Vec<Network>),
    Packed(Vec<PackedDelta>),
}

/// Router, one specialist per superclass, and the label hierarchy.
#[derive(Debug, Clone)]
pub struct ModelRegistry {
    super_net: Network,
    specialists: Specialists,
    manifest: HierarchyManifest,
}

impl ModelRegistry {
    /// Registry with every specialist resident.
    pub fn resident(super_net: Network, specialists: Vec<Network>, manifest: HierarchyManifest) -> Result<Self> {
        check_router(&super_net, &manifest, specialists.len())?;
        for (i, s) in specialists.iter().enumerate() {
            check_specialist(&super_net, &manifest, i, s)?;
        }
        Ok(ModelRegistry {
            super_net,
            specialists: Specialists::Resident(specialists),
            manifest,
        })
    }

    /// Registry whose specialists live as packed deltas against `super_net`.
    /// Each delta is decoded once here to validate it; fingerprints are
    /// checked again at reconstruction.
    pub fn packed(super_net: Network, deltas: Vec<PackedDelta>, manifest: HierarchyManifest) -> Result<Self> {
        check_router(&super_net, &manifest, deltas.len())?;
        for (i, p) in deltas.iter().enumerate() {
            let pack = unpack(&p.bytes)?;
            if pack.superclass_id as usize != i {
                return Err(Error::contract(format!(
                    "delta in slot {i} belongs to superclass {}",
                    pack.superclass_id
                )));
            }
            let head = pack.head_entries().next().map(|e| e.shape[0]).unwrap_or(0);
            let want = manifest.subclass_count(i)?;
            if head != want {
                return Err(Error::contract(format!(
                    "specialist {i} has head width {head}, expected {want}"
                )));
            }
        }
        Ok(ModelRegistry {
            super_net,
            specialists: Specialists::Packed(deltas),
            manifest,
        })
    }

    pub fn super_net(&self) -> &Network {
        &self.super_net
    }

    pub fn specialists(&self) -> &Specialists {
        &self.specialists
    }

    pub fn manifest(&self) -> &HierarchyManifest {
        &self.manifest
    }

    pub fn is_resident(&self) -> bool {
        matches!(self.specialists, Specialists::Resident(_))
    }

    /// Bytes of every model the registry holds: router plus specialists
    /// (network files) or router plus packed deltas.
    pub fn total_model_bytes(&self) -> usize {
        let rest: usize = match &self.specialists {
            Specialists::Resident(nets) => nets.iter().map(Network::storage_bytes).sum(),
            Specialists::Packed(packs) => packs.iter().map(PackedDelta::packed_size).sum(),
        };
        self.super_net.storage_bytes() + rest
    }

    fn resident_specialist(&self, i: usize) -> Result<&Network> {
        match &self.specialists {
            Specialists::Resident(nets) => Ok(&nets[i]),
            Specialists::Packed(_) => Err(Error::contract(
                "registry holds packed deltas, not resident specialists",
            )),
        }
    }
}

fn check_router(super_net: &Network, manifest: &HierarchyManifest, n_specialists: usize) -> Result<()> {
    if super_net.head_dim() != manifest.n_super() {
        return Err(Error::contract(format!(
            "superclass network has {} outputs for {} superclasses",
            super_net.head_dim(),
            manifest.n_super()
        )));
    }
    if n_specialists != manifest.n_super() {
        return Err(Error::contract(format!(
            "{n_specialists} specialists for {} superclasses",
            manifest.n_super()
        )));
    }
    Ok(())
}

fn check_specialist(super_net: &Network, manifest: &HierarchyManifest, i: usize, s: &Network) -> Result<()> {
    let want = manifest.subclass_count(i)?;
    if s.head_dim() != want {
        return Err(Error::contract(format!(
            "specialist {i} has head width {}, expected {want}",
            s.head_dim()
        )));
    }
    if s.input_dim() != super_net.input_dim() {
        return Err(Error::Dimension {
            left: vec![s.input_dim()],
            right: vec![super_net.input_dim()],
        });
    }
    Ok(())
}

fn route(super_net: &Network, x: &[f32]) -> Result<usize> {
    if x.len() != super_net.input_dim() {
        return Err(Error::Dimension {
            left: vec![x.len()],
            right: vec![super_net.input_dim()],
        });
    }
    super_net.predict_row(x)
}

fn specialist_step(manifest: &HierarchyManifest, net: &Network, superclass: usize, x: &[f32]) -> Result<usize> {
    let logits = net.logits(&Tensor::from_rows(&[x.to_vec()])?)?;
    manifest.global_index(superclass, argmax(logits.row(0)))
}

/// Routes `x` and classifies it with the resident specialist. Returns
/// (superclass, global subclass).
pub fn infer_vanilla(registry: &ModelRegistry, x: &[f32]) -> Result<(usize, usize)> {
    let superclass = route(&registry.super_net, x)?;
    let net = registry.resident_specialist(superclass)?;
    Ok((superclass, specialist_step(&registry.manifest, net, superclass, x)?))
}

/// Classifies `x` with the specialist of a known superclass (oracle routing).
pub fn infer_with_superclass(registry: &ModelRegistry, superclass: usize, x: &[f32]) -> Result<usize> {
    if superclass >= registry.manifest.n_super() {
        return Err(Error::Index {
            index: superclass,
            limit: registry.manifest.n_super(),
        });
    }
    if x.len() != registry.super_net.input_dim() {
        return Err(Error::Dimension {
            left: vec![x.len()],
            right: vec![registry.super_net.input_dim()],
        });
    }
    let net = registry.resident_specialist(superclass)?;
    specialist_step(&registry.manifest, net, superclass, x)
}

/// I/O and memory accounting for an efficient session. Counters never
/// decrease.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostLedger {
    pub bytes_loaded: u64,
    pub peak_resident_bytes: u64,
    pub reconstruction_adds: u64,
    pub specialist_switches: u64,
}

impl CostLedger {
    /// Change from `earlier` to `self`.
    pub fn since(&self, earlier: &CostLedger) -> CostLedger {
        CostLedger {
            bytes_loaded: self.bytes_loaded - earlier.bytes_loaded,
            peak_resident_bytes: self.peak_resident_bytes - earlier.peak_resident_bytes,
            reconstruction_adds: self.reconstruction_adds - earlier.reconstruction_adds,
            specialist_switches: self.specialist_switches - earlier.specialist_switches,
        }
    }
}

/// Efficient two-stage inference over a packed registry.
///
/// The router stays resident. When a query routes to a superclass other than
/// the cached one, the cached specialist is dropped, the packed delta is
/// loaded and the specialist rebuilt. With the cache disabled every query
/// rebuilds.
#[derive(Debug)]
pub struct EfficientSession<'a> {
    registry: &'a ModelRegistry,
    packs: &'a [PackedDelta],
    base_bytes: u64,
    cache_enabled: bool,
    cached: Option<(usize, Network)>,
    ledger: CostLedger,
}

impl<'a> EfficientSession<'a> {
    pub fn new(registry: &'a ModelRegistry) -> Result<Self> {
        let packs = match &registry.specialists {
            Specialists::Packed(p) => p.as_slice(),
            Specialists::Resident(_) => return Err(Error::contract("efficient session needs a packed registry")),
        };
        let base_bytes = registry.super_net.storage_bytes() as u64;
        Ok(EfficientSession {
            registry,
            packs,
            base_bytes,
            cache_enabled: true,
            cached: None,
            ledger: CostLedger {
                peak_resident_bytes: base_bytes,
                ..CostLedger::default()
            },
        })
    }

    /// Disables the one-entry cache so every query reloads its specialist.
    pub fn without_cache(mut self) -> Self {
        self.cache_enabled = false;
        self.cached = None;
        self
    }

    pub fn ledger(&self) -> CostLedger {
        self.ledger
    }

    pub fn registry(&self) -> &ModelRegistry {
        self.registry
    }

    /// Superclass of the cached specialist, if any.
    pub fn cached_superclass(&self) -> Option<usize> {
        self.cached.as_ref().map(|(i, _)| *i)
    }

    /// Returns (superclass, global subclass, cost of this query).
    pub fn infer(&mut self, x: &[f32]) -> Result<(usize, usize, CostLedger)> {
        let before = self.ledger;
        let superclass = route(&self.registry.super_net, x)?;
        let hit = self.cache_enabled && self.cached_superclass() == Some(superclass);
        if !hit {
            self.load(superclass)?;
        }
        let net = &self.cached.as_ref().expect("specialist loaded").1;
        let sub = specialist_step(&self.registry.manifest, net, superclass, x)?;
        if !self.cache_enabled {
            self.cached = None;
        }
        Ok((superclass, sub, self.ledger.since(&before)))
    }

    fn load(&mut self, superclass: usize) -> Result<()> {
        self.cached = None;
        let packed = &self.packs[superclass];
        let pack = unpack(&packed.bytes)?;
        let (net, adds) = reconstruct_counted(&self.registry.super_net, &pack)?;
        // router + packed bytes + rebuilt specialist are alive together
        let resident = self.base_bytes + packed.packed_size() as u64 + net.storage_bytes() as u64;
        let l = &mut self.ledger;
        l.bytes_loaded += packed.packed_size() as u64;
        l.reconstruction_adds += adds as u64;
        l.specialist_switches += 1;
        l.peak_resident_bytes = l.peak_resident_bytes.max(resident);
        self.cached = Some((superclass, net));
        Ok(())
    }
}
