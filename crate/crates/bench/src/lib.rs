//! Shared fixtures for the hot-path benchmarks.

use editgrpo_core::probe::{random_instance, EditInstance};
use editgrpo_core::trainer::{build_group, GroupContext, RolloutGroup};
use editgrpo_core::world::make_corpus;
use editgrpo_core::{
    build_default_ontology, Case, EditConfig, Ontology, PolicyParams, RewardParams, TrainerConfig,
    Variant, WorldConfig,
};

pub struct Fixture {
    pub ontology: Ontology,
    pub cases: Vec<Case>,
    pub params: PolicyParams,
    pub trainer: TrainerConfig,
    pub edit: EditConfig,
    pub rewards: RewardParams,
    pub instances: Vec<EditInstance>,
}

impl Fixture {
    /// Deterministic fixture; `params` are slightly perturbed zeros so
    /// softmaxes are not uniform.
    pub fn new() -> Self {
        let ontology = build_default_ontology(0);
        let world = WorldConfig::default();
        let cases = make_corpus(&world, &ontology, 64).expect("default world is valid");
        let mut params = PolicyParams::for_ontology(&ontology, world.feature_dim());
        for (k, w) in params.weights_mut().iter_mut().enumerate() {
            *w = ((k as f64) * 0.618).sin() * 0.3;
        }
        let instances = (0..64)
            .map(|k| random_instance(&ontology, 0, k, 5, 6))
            .collect();
        Fixture {
            ontology,
            cases,
            params,
            trainer: TrainerConfig {
                variant: Variant::EditGrpo,
                ..TrainerConfig::default()
            },
            edit: EditConfig::default(),
            rewards: RewardParams::default(),
            instances,
        }
    }

    pub fn ctx(&self) -> GroupContext<'_> {
        GroupContext {
            ontology: &self.ontology,
            trainer: &self.trainer,
            edit: &self.edit,
            rewards: &self.rewards,
        }
    }

    pub fn group(&self, k: usize) -> RolloutGroup {
        build_group(
            &self.params,
            &self.cases[k % self.cases.len()],
            self.ctx(),
            &[k as u64],
        )
        .expect("fixture group")
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}
