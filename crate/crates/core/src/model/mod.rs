//! The task-conditional visual classifier, its encoders and training.
//!
//! Parameter groups:
//!
//! | group            | role                                               |
//! |------------------|----------------------------------------------------|
//! | `theta`          | classifier head `p_θ(a \| v, τ)`                    |
//! | `phi_pre`        | box-keyed attention over scene regions             |
//! | `eta_pre_desc`   | GRU over blanked descriptions                      |
//! | `eta_pre_synset` | synset embedding table                             |
//! | `phi_vqa`        | question-keyed attention over scene regions        |
//! | `eta_vqa`        | GRU question encoder                               |
//! | `theta_ft`       | fine-tuned second classifier of the dual model     |
//!
//! Both attention encoders return a convex combination of raw region
//! features, so `v` lives in the same space in pretraining and in VQA, and
//! both task encoders emit `τ` of the same width `k`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use taskdisc_neural::NeuralError;

use crate::corpus::CorpusError;
use crate::task_discovery::{TaskError, BLANK};

pub mod classifier;
pub mod encoders;
pub mod pretrain;
pub mod vqa;

pub use classifier::{classify, combine_dual, Head};
pub use pretrain::{pretrain, PretrainConfig, PretrainData, Pretrained};
pub use vqa::{
    train_answer_embedding, train_dual, train_standard, transfer, AnswerEmbeddings, DualView, Predictor, VqaData,
    VqaKind, VqaModel, VqaTrainConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("transfer requires the theta group to be frozen")]
    ThetaNotFrozen,
    #[error("vocabulary misaligned: {0}")]
    VocabularyMisaligned(String),
    #[error("no answer embedding for {0:?}")]
    MissingAnswerEmbedding(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no usable training examples")]
    EmptyTrainingSet,
    #[error("malformed answer embedding file, line {line}: {reason}")]
    EmbeddingFormat { line: usize, reason: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Widths shared by every model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Task feature width `k`.
    pub task_dim: usize,
    /// Width of the projected `v` and `τ` whose product feeds the head.
    pub joint_dim: usize,
    pub hidden: usize,
    pub word_dim: usize,
    pub attention_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            task_dim: 64,
            joint_dim: 64,
            hidden: 128,
            word_dim: 32,
            attention_dim: 32,
        }
    }
}

/// One line of a training trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss over the epoch.
    pub loss: f64,
    /// Held-out pretraining accuracy, or validation VQA score.
    pub score: f64,
    pub examples: usize,
}

/// Token ids for descriptions and questions. Id 0 is `<unk>`, id 1 is the
/// blank token; the rest are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

pub const UNK: &str = "<unk>";

impl From<Vec<String>> for TokenVocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<TokenVocab> for Vec<String> {
    fn from(v: TokenVocab) -> Self {
        v.tokens
    }
}

impl TokenVocab {
    pub fn build<'a, I, S>(sequences: I) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut words = std::collections::BTreeSet::new();
        for s in sequences {
            for t in s.as_ref() {
                if t != UNK && t != BLANK {
                    words.insert(t.clone());
                }
            }
        }
        let tokens: Vec<String> = [UNK.to_string(), BLANK.to_string()].into_iter().chain(words).collect();
        tokens.into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn encode(&self, seq: &[String]) -> Vec<usize> {
        seq.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }
}
