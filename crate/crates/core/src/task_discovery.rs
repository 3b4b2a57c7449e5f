//! Task specifications and the pretraining tuple sampler.
//!
//! A pretraining tuple pairs a visual datum `(a, I, b)` with a task
//! specification `t` drawn from one of two linguistic sources:
//!
//! * **description**: the region description with the answer blanked out.
//!   Given the datum this is deterministic, `p(t_d | d, a) = δ(t_d, ρ(d, a))`.
//! * **wordnet**: a synset drawn uniformly from the inverted word group table
//!   entry of the answer, `p(t_w | a) = 1 / |inverted(a)|`.
//!
//! The description itself never leaves the sampler; only the task does.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::VisualQuadruple;
use crate::lexical_graph::{InvertedWordGroupTable, SynsetId};
use crate::text::tokenize;

/// The reserved token that replaces the answer in a description.
pub const BLANK: &str = "<blank>";

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("answer {answer:?} does not occur in description {description:?}")]
    AnswerNotInDescription { answer: String, description: String },
    #[error("answer {0:?} is in no word group of the taxonomy")]
    AnswerUnknownToTaxonomy(String),
    #[error("quadruple for scene {0} has no resolved region index")]
    MissingRegion(u32),
    #[error("unknown task source {0:?}; expected description, wordnet or both")]
    UnknownMode(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskSpec {
    Description { tokens: Vec<String> },
    Synset { id: SynsetId },
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskSpec::Description { tokens } => f.write_str(&tokens.join(" ")),
            TaskSpec::Synset { id } => write!(f, "{id}"),
        }
    }
}

/// Replaces the first occurrence of the (possibly multiword) answer in `d`
/// with [`BLANK`].
pub fn blank(d: &[String], a: &str) -> Result<TaskSpec, TaskError> {
    let needle = tokenize(a);
    let missing = || TaskError::AnswerNotInDescription {
        answer: a.to_string(),
        description: d.join(" "),
    };
    if needle.is_empty() || needle.len() > d.len() {
        return Err(missing());
    }
    let at = d
        .windows(needle.len())
        .position(|w| w == needle.as_slice())
        .ok_or_else(missing)?;
    let mut tokens = Vec::with_capacity(d.len() - needle.len() + 1);
    tokens.extend_from_slice(&d[..at]);
    tokens.push(BLANK.to_string());
    tokens.extend_from_slice(&d[at + needle.len()..]);
    Ok(TaskSpec::Description { tokens })
}

/// `p(t_w | a)`: uniform over every synset whose word group contains `a`.
pub fn task_given_answer(a: &str, inverted: &InvertedWordGroupTable) -> Result<BTreeMap<SynsetId, f64>, TaskError> {
    let support = inverted
        .get(a)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| TaskError::AnswerUnknownToTaxonomy(a.to_string()))?;
    let p = 1.0 / support.len() as f64;
    Ok(support.iter().map(|s| (s.clone(), p)).collect())
}

/// Which linguistic source the sampler draws tasks from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Description,
    Wordnet,
    Both,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Description, Mode::Wordnet, Mode::Both];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Description => "description",
            Mode::Wordnet => "wordnet",
            Mode::Both => "both",
        }
    }

    pub fn uses_descriptions(self) -> bool {
        self != Mode::Wordnet
    }

    pub fn uses_wordnet(self) -> bool {
        self != Mode::Description
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = TaskError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "description" => Ok(Mode::Description),
            "wordnet" => Ok(Mode::Wordnet),
            "both" => Ok(Mode::Both),
            other => Err(TaskError::UnknownMode(other.to_string())),
        }
    }
}

/// `(a, I, b, t)`: answer, scene, region index and task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainTuple {
    pub answer: String,
    pub scene: u32,
    pub region: usize,
    pub task: TaskSpec,
}

/// Seeded stream of pretraining tuples. One sampler per worker.
#[derive(Clone, Debug)]
pub struct TaskSampler<'a> {
    inverted: &'a InvertedWordGroupTable,
    mode: Mode,
    rng: ChaCha8Rng,
    description_weight: f64,
}

impl<'a> TaskSampler<'a> {
    pub fn new(inverted: &'a InvertedWordGroupTable, mode: Mode, seed: u64) -> Self {
        Self {
            inverted,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            description_weight: 0.5,
        }
    }

    /// Probability of drawing from descriptions in [`Mode::Both`].
    pub fn with_description_weight(mut self, w: f64) -> Self {
        self.description_weight = w.clamp(0.0, 1.0);
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Draws one tuple for `datum`. Returns `Ok(None)` when the wordnet
    /// source was chosen but the answer belongs to no word group; such data
    /// are skipped rather than failing the run.
    pub fn sample(&mut self, datum: &VisualQuadruple) -> Result<Option<PretrainTuple>, TaskError> {
        let region = datum.region.ok_or(TaskError::MissingRegion(datum.scene))?;
        let use_description = match self.mode {
            Mode::Description => true,
            Mode::Wordnet => false,
            Mode::Both => self.rng.random_bool(self.description_weight),
        };
        let task = if use_description {
            blank(&datum.description, &datum.answer)?
        } else {
            match self.inverted.get(&datum.answer).filter(|s| !s.is_empty()) {
                Some(support) => {
                    let k = self.rng.random_range(0..support.len());
                    let id = support.iter().nth(k).expect("k < len").clone();
                    TaskSpec::Synset { id }
                }
                None => {
                    log::warn!("answer {:?} is outside the taxonomy; skipped", datum.answer);
                    return Ok(None);
                }
            }
        };
        Ok(Some(PretrainTuple {
            answer: datum.answer.clone(),
            scene: datum.scene,
            region,
            task,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexical_graph::{build_inverted_table, build_word_groups, toy_graph};

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn desc(t: &TaskSpec) -> String {
        t.to_string()
    }

    #[test]
    fn blank_examples() {
        assert_eq!(
            desc(&blank(&toks("a man is holding ball"), "ball").unwrap()),
            "a man is holding <blank>"
        );
        assert_eq!(desc(&blank(&toks("red red car"), "red").unwrap()), "<blank> red car");
        assert_eq!(
            desc(&blank(&toks("a man is holding a tennis racket"), "tennis racket").unwrap()),
            "a man is holding a <blank>"
        );
        assert!(matches!(
            blank(&toks("a red car"), "blue"),
            Err(TaskError::AnswerNotInDescription { .. })
        ));
        // Token-level: "red" must not match inside "redwood".
        assert!(blank(&toks("a redwood tree"), "red").is_err());
    }

    #[test]
    fn toy_task_distribution() {
        let inv = build_inverted_table(&build_word_groups(&toy_graph()));
        let p = task_given_answer("red", &inv).unwrap();
        let got: Vec<(&str, f64)> = p.iter().map(|(s, v)| (s.as_str(), *v)).collect();
        assert_eq!(got, [("color.n.01", 0.5), ("entity.n.01", 0.5)]);
        assert!(matches!(
            task_given_answer("green", &inv),
            Err(TaskError::AnswerUnknownToTaxonomy(_))
        ));
    }

    #[test]
    fn mode_parsing() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("wordnets".parse::<Mode>().is_err());
    }

    #[test]
    fn task_spec_json_shape() {
        let t = TaskSpec::Synset {
            id: SynsetId::new("color.n.01").unwrap(),
        };
        assert_eq!(
            serde_json::to_string(&t).unwrap(),
            r#"{"kind":"synset","id":"color.n.01"}"#
        );
        let t = TaskSpec::Description {
            tokens: toks("a <blank> cup"),
        };
        assert_eq!(
            serde_json::to_string(&t).unwrap(),
            r#"{"kind":"description","tokens":["a","<blank>","cup"]}"#
        );
    }
}
