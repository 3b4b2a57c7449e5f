//! Flat run configuration.
//!
//! Every key is optional in the JSON file and falls back to the default
//! below; unknown keys are rejected. Command-line flags override the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use taskdisc::corpus::WorldConfig;
use taskdisc::model::{ModelConfig, PretrainConfig, VqaTrainConfig};
use taskdisc::task_discovery::Mode;

use crate::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory; every artifact is written below it.
    pub out_dir: PathBuf,
    /// External graph for `build-tables`; the generated world's graph if unset.
    pub graph_path: Option<PathBuf>,
    /// Answer vectors in the text format of `AnswerEmbeddings::read`;
    /// generated from the world if unset.
    pub answer_embeddings: Option<PathBuf>,

    /// Base model seed; runs use `seed, seed + 1, ..`.
    pub seed: u64,
    /// Number of seeds `repro` averages over.
    pub seeds: usize,
    pub mode: Mode,

    pub world_seed: u64,
    pub n_scenes: usize,
    pub regions_per_scene: usize,
    pub d_v: usize,
    pub noise_sigma: f32,
    pub words_per_slot: usize,
    pub taxonomy_depth: usize,
    pub taxonomy_branching: usize,
    pub questions_per_scene: usize,
    pub annotator_agreement: f64,
    pub yes_no: bool,
    pub yes_no_per_scene: usize,

    pub split_seed: u64,
    pub oov_fraction: f64,

    pub task_dim: usize,
    pub joint_dim: usize,
    pub hidden: usize,
    pub word_dim: usize,
    pub attention_dim: usize,

    pub pretrain_epochs: usize,
    pub samples_per_epoch: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_learning_rate: f32,
    pub holdout_every: u32,
    pub description_weight: f64,

    pub vqa_max_epochs: usize,
    pub patience: usize,
    pub vqa_batch_size: usize,
    pub vqa_learning_rate: f32,
    pub clip_norm: f32,

    pub embedding_dim: usize,
    pub top_k: usize,

    pub min_proposed_oov: f64,
    pub min_proposed_in_vocab: f64,
    pub min_retrieval_purity: f64,
    pub complementarity_margin: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let world = WorldConfig::default();
        let model = ModelConfig::default();
        let pre = PretrainConfig::default();
        let vqa = VqaTrainConfig::default();
        Self {
            out_dir: PathBuf::from("runs/default"),
            graph_path: None,
            answer_embeddings: None,
            seed: 0,
            seeds: 3,
            mode: Mode::Both,
            world_seed: world.seed,
            n_scenes: world.n_scenes,
            regions_per_scene: world.regions_per_scene,
            d_v: world.d_v,
            noise_sigma: world.noise_sigma,
            words_per_slot: world.words_per_slot,
            taxonomy_depth: world.taxonomy_depth,
            taxonomy_branching: world.taxonomy_branching,
            questions_per_scene: world.questions_per_scene,
            annotator_agreement: world.annotator_agreement,
            yes_no: world.yes_no,
            yes_no_per_scene: world.yes_no_per_scene,
            split_seed: 0,
            oov_fraction: 0.25,
            task_dim: model.task_dim,
            joint_dim: model.joint_dim,
            hidden: model.hidden,
            word_dim: model.word_dim,
            attention_dim: model.attention_dim,
            pretrain_epochs: pre.epochs,
            samples_per_epoch: pre.samples_per_epoch,
            pretrain_batch_size: pre.batch_size,
            pretrain_learning_rate: pre.learning_rate,
            holdout_every: pre.holdout_every,
            description_weight: pre.description_weight,
            vqa_max_epochs: vqa.max_epochs,
            patience: vqa.patience,
            vqa_batch_size: vqa.batch_size,
            vqa_learning_rate: vqa.learning_rate,
            clip_norm: vqa.clip_norm,
            embedding_dim: 50,
            top_k: 10,
            min_proposed_oov: 0.60,
            min_proposed_in_vocab: 0.85,
            min_retrieval_purity: 0.80,
            complementarity_margin: 0.01,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::MissingInput {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.world(false)
            .validate()
            .map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        let bad = |m: &str| Err(CliError::ConfigInvalid(m.to_string()));
        if !(0.0..=1.0).contains(&self.oov_fraction) {
            return bad("oov_fraction must lie in [0, 1]");
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1");
        }
        if self.pretrain_batch_size == 0 || self.vqa_batch_size == 0 {
            return bad("batch sizes must be positive");
        }
        if self.top_k == 0 || self.embedding_dim == 0 {
            return bad("top_k and embedding_dim must be positive");
        }
        if !(0.0..=1.0).contains(&self.description_weight) {
            return bad("description_weight must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed + i).collect()
    }

    /// World parameters; `yes_no` forces the yes/no questions on or takes
    /// the configured value.
    pub fn world(&self, yes_no: bool) -> WorldConfig {
        WorldConfig {
            seed: self.world_seed,
            n_scenes: self.n_scenes,
            regions_per_scene: self.regions_per_scene,
            d_v: self.d_v,
            noise_sigma: self.noise_sigma,
            words_per_slot: self.words_per_slot,
            taxonomy_depth: self.taxonomy_depth,
            taxonomy_branching: self.taxonomy_branching,
            questions_per_scene: self.questions_per_scene,
            annotator_agreement: self.annotator_agreement,
            yes_no: yes_no || self.yes_no,
            yes_no_per_scene: self.yes_no_per_scene,
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            task_dim: self.task_dim,
            joint_dim: self.joint_dim,
            hidden: self.hidden,
            word_dim: self.word_dim,
            attention_dim: self.attention_dim,
        }
    }

    pub fn pretrain(&self) -> PretrainConfig {
        PretrainConfig {
            epochs: self.pretrain_epochs,
            samples_per_epoch: self.samples_per_epoch,
            batch_size: self.pretrain_batch_size,
            learning_rate: self.pretrain_learning_rate,
            clip_norm: self.clip_norm,
            holdout_every: self.holdout_every,
            description_weight: self.description_weight,
        }
    }

    pub fn vqa(&self) -> VqaTrainConfig {
        VqaTrainConfig {
            max_epochs: self.vqa_max_epochs,
            patience: self.patience,
            batch_size: self.vqa_batch_size,
            learning_rate: self.vqa_learning_rate,
            clip_norm: self.clip_norm,
        }
    }

    /// Hash of the configuration; where the outputs go does not count.
    pub fn config_hash(&self) -> String {
        let keyed = RunConfig {
            out_dir: PathBuf::new(),
            ..self.clone()
        };
        sha256_hex(&serde_json::to_vec(&keyed).expect("config serializes"))
    }

    /// Hash of the keys that determine the world and its split. Artifacts
    /// from runs with equal data hashes can be mixed.
    pub fn data_hash(&self, yes_no: bool) -> String {
        let key = serde_json::json!({
            "world": self.world(yes_no),
            "split_seed": self.split_seed,
            "oov_fraction": self.oov_fraction,
        });
        sha256_hex(key.to_string().as_bytes())
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::MissingInput {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"seed": 1, "sead": 2}"#).unwrap_err();
        assert!(err.to_string().contains("sead"));
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 4, "mode": "wordnet"}"#).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.mode, Mode::Wordnet);
        assert_eq!(cfg.n_scenes, RunConfig::default().n_scenes);
    }

    #[test]
    fn data_hash_ignores_training_keys() {
        let a = RunConfig::default();
        let b = RunConfig {
            pretrain_epochs: 1,
            seed: 9,
            ..RunConfig::default()
        };
        let c = RunConfig {
            split_seed: 1,
            ..RunConfig::default()
        };
        assert_eq!(a.data_hash(false), b.data_hash(false));
        assert_ne!(a.config_hash(), b.config_hash());
        assert_ne!(a.data_hash(false), c.data_hash(false));
        assert_ne!(a.data_hash(false), a.data_hash(true));
    }
}
