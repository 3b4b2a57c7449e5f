//! Output directory layout and artifact loading.
//!
//! ```text
//! <out>/world/            generated world (world_yesno/ with yes/no questions)
//! <out>/tables/           word group and inverted tables
//! <out>/splits/           split.json, split_yesno.json
//! <out>/models/           checkpoints, each with a .run.json sidecar
//! <out>/reports/<name>/   report.json, report.csv, answers.csv
//! <out>/retrieval/        retrieval tables
//! <out>/meta/             run metadata per command
//! <out>/events.jsonl      epoch and score events
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use taskdisc::corpus::bank::SceneBank;
use taskdisc::corpus::io::{ingest_quadruples, ingest_triples};
use taskdisc::corpus::world::{QuestionKind, TripleMeta};
use taskdisc::corpus::{AnswerVocabulary, Split, VisualQuadruple, VqaTriple};
use taskdisc::lexical_graph::{parse_graph, LexicalGraph};
use taskdisc::model::{AnswerEmbeddings, EpochLog, TokenVocab};

use crate::config::{file_hash, RunConfig};
use crate::{CliError, Result};

/// Which generated world a command works on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    /// The configured world.
    Main,
    /// The same world with yes/no questions appended.
    YesNo,
}

impl WorldKind {
    fn suffix(self) -> &'static str {
        match self {
            WorldKind::Main => "",
            WorldKind::YesNo => "_yesno",
        }
    }

    fn forces_yes_no(self) -> bool {
        self == WorldKind::YesNo
    }
}

/// Written next to the world files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorldManifest {
    pub config_hash: String,
    pub data_hash: String,
    pub scenes: usize,
    pub quadruples: usize,
    pub triples: usize,
    pub answers: usize,
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitFile {
    pub config_hash: String,
    pub data_hash: String,
    pub split: Split,
    /// Vocabulary with the split's OOV answers marked.
    pub vocab: AnswerVocabulary,
}

/// Sidecar of every model checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub world: WorldKind,
    pub config_hash: String,
    pub data_hash: String,
    pub seed: u64,
    pub trace: Vec<EpochLog>,
    /// θ group hash before and after VQA training, for models that reuse a
    /// pretrained classifier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<(String, String)>,
}

pub struct World {
    pub graph: LexicalGraph,
    pub bank: SceneBank,
    pub quadruples: Vec<VisualQuadruple>,
    pub triples: Vec<VqaTriple>,
    pub meta: Vec<TripleMeta>,
    pub vocab: AnswerVocabulary,
    pub embeddings: AnswerEmbeddings,
    pub tokens: TokenVocab,
}

impl World {
    /// Slot of every question; yes/no questions are labelled `yes_no`.
    pub fn slots(&self) -> BTreeMap<u64, String> {
        self.meta
            .iter()
            .map(|m| {
                let s = match m.kind {
                    QuestionKind::Visual => m.slot.clone(),
                    QuestionKind::YesNo => "yes_no".to_string(),
                };
                (m.id, s)
            })
            .collect()
    }

    pub fn by_id(&self) -> HashMap<u64, &VqaTriple> {
        self.triples.iter().map(|t| (t.id, t)).collect()
    }

    /// Triples of one split part, in split order.
    pub fn pick(&self, ids: &[u64]) -> Result<Vec<&VqaTriple>> {
        let by_id = self.by_id();
        ids.iter()
            .map(|id| {
                by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| CliError::ConfigInvalid(format!("split names question {id}, which the world lacks")))
            })
            .collect()
    }
}

pub fn token_vocab(quadruples: &[VisualQuadruple], triples: &[VqaTriple]) -> TokenVocab {
    TokenVocab::build(
        quadruples
            .iter()
            .map(|q| &q.description)
            .chain(triples.iter().map(|t| &t.question)),
    )
}

pub struct Workspace {
    pub cfg: RunConfig,
    pub root: PathBuf,
    /// Accept artifacts whose data hash differs from the configuration's.
    pub force: bool,
}

pub fn missing(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::MissingInput {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| missing(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

impl Workspace {
    pub fn new(cfg: RunConfig, force: bool) -> Result<Self> {
        cfg.validate()?;
        let root = cfg.out_dir.clone();
        fs::create_dir_all(&root)?;
        Ok(Self { cfg, root, force })
    }

    pub fn dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.root.join(name);
        fs::create_dir_all(&d)?;
        Ok(d)
    }

    pub fn world_dir(&self, kind: WorldKind) -> PathBuf {
        self.root.join(format!("world{}", kind.suffix()))
    }

    pub fn split_path(&self, kind: WorldKind) -> PathBuf {
        self.root.join("splits").join(format!("split{}.json", kind.suffix()))
    }

    pub fn model_stem(&self, name: &str) -> PathBuf {
        self.root.join("models").join(name)
    }

    pub fn events_path(&self) -> PathBuf {
        self.root.join("events.jsonl")
    }

    pub fn data_hash(&self, kind: WorldKind) -> String {
        self.cfg.data_hash(kind.forces_yes_no())
    }

    /// Fails unless `found` matches the configuration's data hash or
    /// `--force` was given.
    pub fn check_hash(&self, artifact: &Path, kind: WorldKind, found: &str) -> Result<()> {
        self.guard(artifact, &self.data_hash(kind), found)
    }

    pub fn guard(&self, artifact: &Path, expected: &str, found: &str) -> Result<()> {
        if found == expected {
            return Ok(());
        }
        if self.force {
            log::warn!(
                "{} has data hash {found}, expected {expected}; continuing",
                artifact.display()
            );
            return Ok(());
        }
        Err(CliError::HashMismatch {
            artifact: artifact.display().to_string(),
            expected: expected.to_string(),
            found: found.to_string(),
        })
    }

    pub fn load_world(&self, kind: WorldKind) -> Result<World> {
        let dir = self.world_dir(kind);
        let manifest_path = dir.join("manifest.json");
        let manifest: WorldManifest = read_json(&manifest_path)?;
        self.check_hash(&manifest_path, kind, &manifest.data_hash)?;
        let need = |name: &str| -> Result<PathBuf> {
            let p = dir.join(name);
            if p.exists() {
                Ok(p)
            } else {
                Err(missing(&p, "not found; run gen-world first"))
            }
        };
        let graph_path = need("graph.jsonl")?;
        let graph = parse_graph(BufReader::new(File::open(&graph_path)?))?;
        let bank = SceneBank::read(&need("scenes.bin")?)?;
        let quadruples = ingest_quadruples(&need("quadruples.jsonl")?)?;
        let triples = ingest_triples(&need("triples.jsonl")?)?;
        let meta = read_jsonl(&need("triple_meta.jsonl")?)?;
        let vocab: AnswerVocabulary = read_json(&need("answers.json")?)?;
        let emb_path = match &self.cfg.answer_embeddings {
            Some(p) => p.clone(),
            None => need("answer_embeddings.txt")?,
        };
        let embeddings = AnswerEmbeddings::read(BufReader::new(
            File::open(&emb_path).map_err(|e| missing(&emb_path, e))?,
        ))?;
        let tokens = token_vocab(&quadruples, &triples);
        Ok(World {
            graph,
            bank,
            quadruples,
            triples,
            meta,
            vocab,
            embeddings,
            tokens,
        })
    }

    pub fn load_split(&self, kind: WorldKind) -> Result<SplitFile> {
        let path = self.split_path(kind);
        let f: SplitFile = read_json(&path).map_err(|e| match e {
            CliError::MissingInput { path, .. } => missing(&path, "not found; run make-splits first"),
            e => e,
        })?;
        self.check_hash(&path, kind, &f.data_hash)?;
        Ok(f)
    }

    pub fn load_record(&self, stem: &Path) -> Result<RunRecord> {
        read_json(&run_path(stem))
    }

    /// Writes `meta/<command>.json`: the full configuration, seeds, hashes
    /// and the content hashes of every input file.
    pub fn write_meta(&self, command: &str, inputs: &[PathBuf], extra: serde_json::Value) -> Result<()> {
        let mut hashes = BTreeMap::new();
        for p in inputs {
            hashes.insert(p.display().to_string(), file_hash(p)?);
        }
        let meta = serde_json::json!({
            "command": command,
            "config": self.cfg,
            "config_hash": self.cfg.config_hash(),
            "data_hash": self.data_hash(WorldKind::Main),
            "seeds": self.cfg.seed_list(),
            "inputs": hashes,
            "notes": "validation questions drive early stopping only; no test part is read during training",
            "details": extra,
        });
        write_json(&self.dir("meta")?.join(format!("{command}.json")), &meta)
    }
}

pub fn run_path(stem: &Path) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| missing(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
