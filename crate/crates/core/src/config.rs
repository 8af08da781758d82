//! Run configuration: one JSON document for world, trainer, edit and reward
//! settings. Unknown keys are rejected at every level.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::edit::EditConfig;
use crate::error::{Error, Result};
use crate::rewards::{RewardComponent, RewardParams};
use crate::trainer::TrainerConfig;
use crate::world::WorldConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub trainer: TrainerConfig,
    pub edit: EditConfig,
    pub rewards: RewardParams,
    pub ontology_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            world: WorldConfig::default(),
            trainer: TrainerConfig::default(),
            edit: EditConfig::default(),
            rewards: RewardParams::default(),
            ontology_seed: 0,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

const SECTIONS: [&str; 4] = ["world", "trainer", "edit", "rewards"];

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Resolves `key` to a full dot path. Keys that do not start with a top-level
/// field may name a field of exactly one section (`steps` → `trainer.steps`).
fn resolve_path(key: &str) -> Result<Vec<String>> {
    let parts: Vec<String> = key.split('.').map(str::to_string).collect();
    let defaults = serde_json::to_value(RunConfig::default())?;
    let top = defaults
        .as_object()
        .expect("config serializes to an object");
    if top.contains_key(&parts[0]) {
        return Ok(parts);
    }
    let owners: Vec<&str> = SECTIONS
        .iter()
        .copied()
        .filter(|s| {
            top[*s]
                .as_object()
                .is_some_and(|o| o.contains_key(&parts[0]))
        })
        .collect();
    match owners.as_slice() {
        [one] => Ok(std::iter::once(one.to_string()).chain(parts).collect()),
        [] => Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
        many => Err(Error::InvalidConfig(format!(
            "ambiguous key {key:?}: use one of {}",
            many.iter()
                .map(|s| format!("{s}.{key}"))
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

fn set_path(doc: &mut Value, path: &[String], v: Value) -> Result<()> {
    let mut cur = doc;
    for (i, p) in path.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| {
            Error::InvalidConfig(format!("{} is not an object", path[..i].join(".")))
        })?;
        if i + 1 == path.len() {
            obj.insert(p.clone(), v);
            return Ok(());
        }
        cur = obj
            .entry(p.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn has_path(doc: &Value, path: &[&str]) -> bool {
    let mut cur = doc;
    for p in path {
        match cur.get(p) {
            Some(v) => cur = v,
            None => return false,
        }
    }
    true
}

impl RunConfig {
    /// Parses a config document, applies `key=value` overrides, and fills
    /// absent seeds from `fallback_seed`.
    pub fn from_json_with(
        text: &str,
        overrides: &[String],
        fallback_seed: Option<u64>,
    ) -> Result<Self> {
        let mut doc: Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        if !doc.is_object() {
            return Err(Error::InvalidConfig("config must be a JSON object".into()));
        }
        if let Some(seed) = fallback_seed {
            for path in [["trainer", "seed"], ["world", "seed"], ["edit", "rng_seed"]] {
                if !has_path(&doc, &path) {
                    set_path(
                        &mut doc,
                        &[path[0].into(), path[1].into()],
                        Value::from(seed),
                    )?;
                }
            }
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override {o:?} is not key=value")))?;
            set_path(&mut doc, &resolve_path(k.trim())?, parse_value(v.trim()))?;
        }
        let cfg: RunConfig = serde_json::from_value(doc)
            .map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_with(text, &[], None)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reward parameters with the inverse-frequency prevalence filled from the
    /// world when enabled and not given.
    pub fn effective_rewards(&self) -> RewardParams {
        let mut r = self.rewards.clone();
        if r.has(RewardComponent::InverseFrequency) && r.prevalence.is_none() {
            r.prevalence = Some(self.world.label_prevalence());
        }
        r
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.trainer.validate()?;
        self.edit.validate()?;
        self.effective_rewards().validate()?;
        if self.world.n_cases < 2 {
            return Err(Error::InvalidConfig("world.n_cases must be >= 2".into()));
        }
        Ok(())
    }
}
