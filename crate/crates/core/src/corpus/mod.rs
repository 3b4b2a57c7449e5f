//! Visual quadruples, question triples, answer vocabularies and scene
//! features, plus the synthetic micro-world and the out-of-vocabulary split.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::text::normalize;

pub mod bank;
pub mod io;
pub mod split;
pub mod world;

pub use bank::SceneBank;
pub use split::{build_oov_split, Split, Stratum};
pub use world::{generate_micro_world, MicroWorld, QuestionKind, TripleMeta, WorldConfig};

/// Number of ground-truth answers per question.
pub const GT_COUNT: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: box {bbox:?} is outside the unit scene")]
    RegionOutOfBounds { line: usize, bbox: [f32; 4] },
    #[error("line {line}: expected {GT_COUNT} ground-truth answers, found {count}")]
    GroundTruthCountMismatch { line: usize, count: usize },
    #[error("split {0} would be empty")]
    EmptySplit(&'static str),
    #[error("answer {0:?} is not in the vocabulary")]
    UnknownAnswer(String),
    #[error("duplicate answer {0:?} in vocabulary")]
    DuplicateAnswer(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("scene {0} is not in the scene bank")]
    UnknownScene(u32),
    #[error("scene {scene} has no region with box {bbox:?}")]
    UnknownRegion { scene: u32, bbox: [f32; 4] },
    #[error("scene bank: {0}")]
    Bank(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// `[x, y, w, h]` in scene units; scenes span the unit square.
pub type BoundingBox = [f32; 4];

pub fn box_in_unit_scene(b: &BoundingBox) -> bool {
    let [x, y, w, h] = *b;
    b.iter().all(|v| v.is_finite())
        && x >= 0.0
        && y >= 0.0
        && w > 0.0
        && h > 0.0
        && x + w <= 1.0 + 1e-6
        && y + h <= 1.0 + 1e-6
}

/// `(a, I, b, d)`: an answer word grounded in one region of a scene, with
/// the description it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualQuadruple {
    pub answer: String,
    pub scene: u32,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub description: Vec<String>,
    /// Index of `bbox` among the scene's regions. Optional on disk; resolve
    /// against a [`SceneBank`] when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<usize>,
}

/// `(a_1..a_10, I, q)`: a question about a scene with ten annotator answers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaTriple {
    /// Stable question id; defaults to the line index on ingestion.
    #[serde(default)]
    pub id: u64,
    pub question: Vec<String>,
    pub scene: u32,
    pub gt: Vec<String>,
}

impl VqaTriple {
    /// Most frequent ground truth; ties go to the answer listed first.
    pub fn modal_answer(&self) -> &str {
        let mut best = (0usize, usize::MAX, "");
        for (i, a) in self.gt.iter().enumerate() {
            let n = self.gt.iter().filter(|g| *g == a).count();
            let first = self.gt.iter().position(|g| g == a).unwrap_or(i);
            if n > best.0 || (n == best.0 && first < best.1) {
                best = (n, first, a.as_str());
            }
        }
        best.2
    }

    pub fn count(&self, answer: &str) -> usize {
        self.gt.iter().filter(|g| *g == answer).count()
    }
}

/// The label space. The first `pretrain_len` entries are the pretraining
/// answers 𝒜; any further entries are VQA-only extras (such as yes/no),
/// which are always trained. `trained` marks the VQA training answers ℬ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct AnswerVocabulary {
    answers: Vec<String>,
    index: HashMap<String, usize>,
    pretrain_len: usize,
    trained: Vec<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabFile {
    answers: Vec<String>,
    #[serde(default)]
    extras: Vec<String>,
    #[serde(default)]
    oov: Vec<String>,
}

impl TryFrom<VocabFile> for AnswerVocabulary {
    type Error = CorpusError;
    fn try_from(f: VocabFile) -> Result<Self> {
        let mut v = AnswerVocabulary::new(f.answers)?.with_extras(f.extras)?;
        v.set_oov(&f.oov.into_iter().collect())?;
        Ok(v)
    }
}

impl From<AnswerVocabulary> for VocabFile {
    fn from(v: AnswerVocabulary) -> Self {
        VocabFile {
            oov: v.oov_answers().map(str::to_string).collect(),
            extras: v.answers[v.pretrain_len..].to_vec(),
            answers: v.answers[..v.pretrain_len].to_vec(),
        }
    }
}

impl AnswerVocabulary {
    /// All answers trained; normalizes and rejects duplicates.
    pub fn new(answers: Vec<String>) -> Result<Self> {
        let mut v = AnswerVocabulary {
            answers: Vec::new(),
            index: HashMap::new(),
            pretrain_len: 0,
            trained: Vec::new(),
        };
        v.push_all(answers)?;
        v.pretrain_len = v.answers.len();
        Ok(v)
    }

    /// Appends VQA-only answers after 𝒜.
    pub fn with_extras(mut self, extras: Vec<String>) -> Result<Self> {
        self.push_all(extras)?;
        Ok(self)
    }

    fn push_all(&mut self, answers: Vec<String>) -> Result<()> {
        for a in answers {
            let a = normalize(&a);
            if self.index.contains_key(&a) {
                return Err(CorpusError::DuplicateAnswer(a));
            }
            self.index.insert(a.clone(), self.answers.len());
            self.answers.push(a);
            self.trained.push(true);
        }
        Ok(())
    }

    /// Marks exactly `oov` as out-of-vocabulary. Every entry must be a
    /// pretraining answer.
    pub fn set_oov(&mut self, oov: &BTreeSet<String>) -> Result<()> {
        for a in oov {
            match self.index.get(a) {
                Some(&i) if i < self.pretrain_len => {}
                _ => return Err(CorpusError::UnknownAnswer(a.clone())),
            }
        }
        for (i, a) in self.answers.iter().enumerate() {
            self.trained[i] = !oov.contains(a);
        }
        Ok(())
    }

    /// Size of the full output space, extras included.
    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    /// |𝒜|, the pretraining label count.
    pub fn pretrain_len(&self) -> usize {
        self.pretrain_len
    }

    pub fn answers(&self) -> &[String] {
        &self.answers
    }

    pub fn answer(&self, i: usize) -> &str {
        &self.answers[i]
    }

    pub fn index_of(&self, a: &str) -> Option<usize> {
        self.index.get(a).copied()
    }

    pub fn is_trained(&self, i: usize) -> bool {
        self.trained[i]
    }

    pub fn is_oov_answer(&self, a: &str) -> bool {
        self.index_of(a).is_some_and(|i| !self.trained[i])
    }

    /// Indices of ℬ in vocabulary order.
    pub fn trained_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.trained[i]).collect()
    }

    pub fn oov_answers(&self) -> impl Iterator<Item = &str> {
        self.answers
            .iter()
            .zip(&self.trained)
            .filter(|(_, t)| !**t)
            .map(|(a, _)| a.as_str())
    }

    pub fn oov_count(&self) -> usize {
        self.trained.iter().filter(|t| !**t).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn modal_answer_prefers_count_then_position() {
        let t = VqaTriple {
            id: 0,
            question: vec![],
            scene: 0,
            gt: words(&["b", "a", "a", "b", "c", "c", "c", "a", "b", "d"]),
        };
        assert_eq!(t.modal_answer(), "b");
        assert_eq!(t.count("c"), 3);
    }

    #[test]
    fn vocabulary_round_trip_and_oov() {
        let mut v = AnswerVocabulary::new(words(&["Red", "blue", "cup"]))
            .unwrap()
            .with_extras(words(&["yes", "no"]))
            .unwrap();
        v.set_oov(&["blue".to_string()].into()).unwrap();
        assert_eq!(v.pretrain_len(), 3);
        assert_eq!(v.len(), 5);
        assert_eq!(v.trained_indices(), [0, 2, 3, 4]);
        assert!(v.is_oov_answer("blue"));
        assert!(v.set_oov(&["yes".to_string()].into()).is_err());
        let json = serde_json::to_string(&v).unwrap();
        let back: AnswerVocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert!(AnswerVocabulary::new(words(&["a", "A"])).is_err());
    }

    #[test]
    fn unit_scene_bounds() {
        assert!(box_in_unit_scene(&[0.0, 0.0, 0.5, 0.5]));
        assert!(box_in_unit_scene(&[0.5, 0.5, 0.5, 0.5]));
        assert!(!box_in_unit_scene(&[0.6, 0.5, 0.5, 0.5]));
        assert!(!box_in_unit_scene(&[0.0, 0.0, 0.0, 0.5]));
        assert!(!box_in_unit_scene(&[-0.1, 0.0, 0.5, 0.5]));
    }
}
