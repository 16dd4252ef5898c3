//! Two-stage superclass → subclass classification.
//!
//! A superclass network routes each input to a per-superclass specialist.
//! Specialists are finetuned from the router and stored as compressed
//! parameter deltas against it, so the runtime can keep a single base
//! network resident and rebuild specialists on demand.

mod codec;
pub mod data;
pub mod delta;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod prng;
pub mod runtime;
pub mod tensor;

pub use data::{generate_synthetic, Dataset, HierarchyManifest, LabelView, Superclass, SyntheticSpec};
pub use delta::{compute_delta, reconstruct, DeltaMode, DeltaPack, PackedDelta};
pub use error::{Error, Result};
pub use nn::{finetune_from_super, init_network, train, Network, NetworkConfig, TrainConfig};
pub use prng::Prng;
pub use runtime::{CostLedger, EfficientSession, EvalMode, EvalReport, ModelRegistry};
pub use tensor::Tensor;
