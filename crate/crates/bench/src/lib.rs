//! Shared fixtures for the benchmarks.

use supersub_core::delta::{compute_delta, pack, DeltaMode, PackedDelta};
use supersub_core::{
    finetune_from_super, generate_synthetic, init_network, train, Dataset, LabelView, Network, NetworkConfig,
    SyntheticSpec, TrainConfig,
};

/// Golden-sized data with briefly trained QAT models.
pub struct Fixture {
    pub train: Dataset,
    pub test: Dataset,
    pub super_net: Network,
    pub specialists: Vec<Network>,
}

impl Fixture {
    pub fn new() -> Self {
        let spec = SyntheticSpec {
            n_super: 5,
            subs_per_super: vec![4; 5],
            dim: 32,
            super_sep: 6.0,
            sub_sep: 1.5,
            noise_sigma: 1.0,
            n_train_per_sub: 200,
            n_test_per_sub: 50,
            seed: 1,
        };
        let (train_set, test) = generate_synthetic(&spec).expect("valid spec");
        let tc = TrainConfig {
            epochs: 2,
            qat: true,
            ..TrainConfig::default()
        };
        let config = NetworkConfig::new(vec![32, 64, 64, 5], true).expect("valid config");
        let (super_net, _) = train(
            &init_network(&config, 1).expect("init"),
            &train_set,
            LabelView::Superclass,
            &tc,
        )
        .expect("train");
        let specialists = (0..5)
            .map(|i| finetune_from_super(&super_net, i, &train_set, &tc).expect("finetune"))
            .collect();
        Fixture {
            train: train_set,
            test,
            super_net,
            specialists,
        }
    }

    pub fn packs(&self, mode: DeltaMode) -> Vec<PackedDelta> {
        self.specialists
            .iter()
            .enumerate()
            .map(|(i, s)| pack(&compute_delta(&self.super_net, s, i as u32, mode).expect("delta")))
            .collect()
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Fixture::new()
    }
}
