//! Synthetic micro-world: a small visual domain with a known taxonomy.
//!
//! Every region shows one object word with one word from each attribute
//! slot (color, material). Its feature vector is the concatenation of one
//! prototype chunk per slot plus Gaussian noise, so the slot words are
//! recoverable from the features but only when the task says which slot to
//! read. A few words (`gold`, `silver`, `bronze`, `copper`) name both a
//! color and a material, under different synsets and with different
//! prototypes.
//!
//! The generator emits the lexical graph (root, one synset per slot, a tree
//! of group synsets, one leaf synset per word), the scene bank, one
//! description-bearing quadruple per (region, slot) and template questions
//! with ten annotator answers, nine of which are the true answer.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AnswerVocabulary, BoundingBox, CorpusError, Result, SceneBank, VisualQuadruple, VqaTriple, GT_COUNT};
use crate::lexical_graph::{LexicalGraph, SynsetId};
use crate::text::tokenize;

const OBJECTS: [&str; 16] = [
    "cup", "bowl", "chair", "table", "lamp", "vase", "bottle", "box", "book", "clock", "plate", "basket", "bench",
    "kettle", "jar", "shelf",
];
const COLORS: [&str; 16] = [
    "red", "blue", "green", "yellow", "white", "black", "pink", "dark red", "gold", "silver", "bronze", "copper",
    "purple", "orange", "gray", "beige",
];
const MATERIALS: [&str; 16] = [
    "wood", "glass", "plastic", "metal", "stone", "paper", "leather", "ceramic", "gold", "silver", "bronze", "copper",
    "wool", "rubber", "steel", "clay",
];

pub const YES: &str = "yes";
pub const NO: &str = "no";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub n_scenes: usize,
    pub regions_per_scene: usize,
    pub d_v: usize,
    pub noise_sigma: f32,
    pub words_per_slot: usize,
    /// Levels of group synsets between a slot synset and its word synsets.
    pub taxonomy_depth: usize,
    pub taxonomy_branching: usize,
    pub questions_per_scene: usize,
    /// Chance that the tenth annotator also gives the true answer; otherwise
    /// they give another word from the same slot.
    pub annotator_agreement: f64,
    /// Also emit yes/no questions, answered from the extras `yes` and `no`.
    pub yes_no: bool,
    pub yes_no_per_scene: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_scenes: 2000,
            regions_per_scene: 4,
            d_v: 64,
            noise_sigma: 0.3,
            words_per_slot: 12,
            taxonomy_depth: 2,
            taxonomy_branching: 3,
            questions_per_scene: 3,
            annotator_agreement: 0.7,
            yes_no: false,
            yes_no_per_scene: 1,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CorpusError::ConfigInvalid(m));
        if self.n_scenes == 0 || self.regions_per_scene == 0 || self.words_per_slot == 0 {
            return bad("scene, region and word counts must be positive".into());
        }
        if self.taxonomy_branching == 0 {
            return bad("taxonomy_branching must be positive".into());
        }
        if self.d_v < SLOTS.len() {
            return bad(format!("d_v must be at least {}", SLOTS.len()));
        }
        if self.regions_per_scene > self.words_per_slot {
            return bad("regions_per_scene may not exceed words_per_slot (objects are distinct per scene)".into());
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return bad("noise_sigma must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.annotator_agreement) {
            return bad("annotator_agreement must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// The three slots, in feature-chunk order.
pub const SLOTS: [&str; 3] = ["object", "color", "material"];

pub fn slot_synset(slot: &str) -> SynsetId {
    SynsetId::new(format!("{slot}.n.01")).expect("slot names are valid lemmas")
}

fn slot_pos(slot: usize) -> &'static str {
    if SLOTS[slot] == "color" {
        "s"
    } else {
        "n"
    }
}

fn slot_words(slot: usize, n: usize) -> Vec<String> {
    let base: &[&str] = match SLOTS[slot] {
        "object" => &OBJECTS,
        "color" => &COLORS,
        _ => &MATERIALS,
    };
    (0..n)
        .map(|i| match base.get(i) {
            Some(w) => w.to_string(),
            None => format!("{}{}", SLOTS[slot], i),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Visual,
    YesNo,
}

/// Generator-side facts about a question, not part of the triple format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleMeta {
    pub id: u64,
    pub kind: QuestionKind,
    /// Slot asked about; for yes/no questions, the slot being verified.
    pub slot: String,
    pub template: usize,
    pub answer: String,
    pub region: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Word index per slot.
    pub words: [usize; 3],
}

#[derive(Clone, Debug)]
pub struct MicroWorld {
    pub config: WorldConfig,
    /// Words of each slot, indexed like [`SLOTS`].
    pub slot_words: Vec<Vec<String>>,
    pub graph: LexicalGraph,
    pub bank: SceneBank,
    /// Region contents per scene.
    pub scenes: Vec<Vec<Region>>,
    pub quadruples: Vec<VisualQuadruple>,
    pub triples: Vec<VqaTriple>,
    pub meta: Vec<TripleMeta>,
    pub vocab: AnswerVocabulary,
    /// Per slot, one prototype chunk per word.
    pub prototypes: Vec<Vec<Vec<f32>>>,
}

impl MicroWorld {
    pub fn word(&self, slot: usize, idx: usize) -> &str {
        &self.slot_words[slot][idx]
    }

    /// Slots whose word list contains `answer`.
    pub fn slots_of(&self, answer: &str) -> Vec<usize> {
        (0..SLOTS.len())
            .filter(|&s| self.slot_words[s].iter().any(|w| w == answer))
            .collect()
    }

    pub fn meta_by_id(&self) -> BTreeMap<u64, &TripleMeta> {
        self.meta.iter().map(|m| (m.id, m)).collect()
    }
}

/// `[start, end)` of each slot's chunk in a feature row.
pub fn chunk_ranges(d_v: usize) -> Vec<std::ops::Range<usize>> {
    let n = SLOTS.len();
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for s in 0..n {
        let len = d_v / n + usize::from(s < d_v % n);
        out.push(start..start + len);
        start += len;
    }
    out
}

fn grid_boxes(n: usize) -> Vec<BoundingBox> {
    let side = (n as f64).sqrt().ceil() as usize;
    let w = 1.0 / side as f32;
    (0..n)
        .map(|i| [(i % side) as f32 * w, (i / side) as f32 * w, w, w])
        .collect()
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn build_graph(slot_words: &[Vec<String>], depth: usize, branching: usize) -> Result<LexicalGraph> {
    let id = |s: String| SynsetId::new(s).map_err(|e| CorpusError::ConfigInvalid(e.to_string()));
    let root = id("entity.n.01".into())?;
    let mut synsets = vec![(root.clone(), vec![])];
    let mut edges = Vec::new();
    for (s, words) in slot_words.iter().enumerate() {
        let slot = slot_synset(SLOTS[s]);
        synsets.push((slot.clone(), vec![]));
        edges.push((root.clone(), slot.clone()));
        // Breadth-first tree of group synsets; words hang off the last level.
        let mut level = vec![(slot.clone(), String::new())];
        for _ in 0..depth {
            let mut next = Vec::new();
            for (parent, path) in &level {
                for b in 0..branching {
                    let p = format!("{path}{}", b + 1);
                    let g = id(format!("{}_group{p}.n.01", SLOTS[s]))?;
                    synsets.push((g.clone(), vec![]));
                    edges.push((parent.clone(), g.clone()));
                    next.push((g, p));
                }
            }
            level = next;
        }
        for (i, w) in words.iter().enumerate() {
            let leaf = id(format!("{}.{}.01", w.replace(' ', "_"), slot_pos(s)))?;
            synsets.push((leaf.clone(), vec![w.clone()]));
            edges.push((level[i % level.len()].0.clone(), leaf));
        }
    }
    LexicalGraph::from_parts(synsets, edges).map_err(|e| CorpusError::ConfigInvalid(e.to_string()))
}

/// Description templates. `{o}`, `{c}` and `{m}` stand for the object, color
/// and material words.
const DESCRIPTIONS: [&str; 6] = [
    "a {c} {o} made of {m}",
    "the {o} is {c}",
    "a {o} made of {m}",
    "a {c} {o}",
    "the {m} {o} is {c}",
    "there is a {o} on the table",
];

/// Question templates per slot (object, color, material). `{r}` is a
/// referring expression naming a different slot of the same region.
const QUESTIONS: [&[&str]; 3] = [
    &[
        "what is the {c} object ?",
        "what object is made of {m} ?",
        "which thing is {c} ?",
    ],
    &[
        "what color is the {o} ?",
        "what is the color of the {o} ?",
        "which color does the {o} have ?",
    ],
    &[
        "what is the {o} made of ?",
        "what material is the {o} ?",
        "what is the {c} thing made of ?",
    ],
];

const YES_NO: [&str; 2] = ["is the {o} {c} ?", "is the {o} made of {m} ?"];

fn fill(template: &str, words: [&str; 3]) -> String {
    template
        .replace("{o}", words[0])
        .replace("{c}", words[1])
        .replace("{m}", words[2])
}

fn mentions(template: &str, slot: usize) -> bool {
    template.contains(["{o}", "{c}", "{m}"][slot])
}

/// Slot a question template refers by, if any (object questions refer by
/// color or material; attribute questions by object or color).
fn referring_slots(template: &str, asked: usize) -> Vec<usize> {
    (0..3).filter(|&s| s != asked && mentions(template, s)).collect()
}

pub fn generate_micro_world(config: &WorldConfig) -> Result<MicroWorld> {
    config.validate()?;
    let slot_words: Vec<Vec<String>> = (0..SLOTS.len()).map(|s| slot_words(s, config.words_per_slot)).collect();
    let graph = build_graph(&slot_words, config.taxonomy_depth, config.taxonomy_branching)?;

    let mut answers: Vec<String> = Vec::new();
    for w in slot_words.iter().flatten() {
        if !answers.contains(w) {
            answers.push(w.clone());
        }
    }
    let mut vocab = AnswerVocabulary::new(answers)?;
    if config.yes_no {
        vocab = vocab.with_extras(vec![YES.into(), NO.into()])?;
    }

    let chunks = chunk_ranges(config.d_v);
    let mut proto_rng = rng_for(config.seed, 1);
    let std_normal = Normal::new(0.0f32, 1.0).expect("unit normal");
    let prototypes: Vec<Vec<Vec<f32>>> = chunks
        .iter()
        .map(|r| {
            (0..config.words_per_slot)
                .map(|_| (0..r.len()).map(|_| std_normal.sample(&mut proto_rng)).collect())
                .collect()
        })
        .collect();

    let boxes = grid_boxes(config.regions_per_scene);
    let mut scene_rng = rng_for(config.seed, 2);
    let noise = Normal::new(0.0f32, config.noise_sigma.max(f32::MIN_POSITIVE)).expect("valid sigma");
    let mut bank = SceneBank::new(config.d_v);
    let mut scenes = Vec::with_capacity(config.n_scenes);
    let object_ids: Vec<usize> = (0..config.words_per_slot).collect();
    for sid in 0..config.n_scenes {
        let objects: Vec<usize> = object_ids
            .choose_multiple(&mut scene_rng, config.regions_per_scene)
            .copied()
            .collect();
        let mut regions = Vec::with_capacity(config.regions_per_scene);
        let mut feats = Vec::with_capacity(config.regions_per_scene * config.d_v);
        for &o in &objects {
            let words = [
                o,
                scene_rng.random_range(0..config.words_per_slot),
                scene_rng.random_range(0..config.words_per_slot),
            ];
            for s in 0..SLOTS.len() {
                for &p in &prototypes[s][words[s]] {
                    let n = if config.noise_sigma > 0.0 {
                        noise.sample(&mut scene_rng)
                    } else {
                        0.0
                    };
                    feats.push(p + n);
                }
            }
            regions.push(Region { words });
        }
        bank.push_scene(sid as u32, &feats, boxes.clone())?;
        scenes.push(regions);
    }

    let word = |s: usize, i: usize| slot_words[s][i].as_str();
    let region_words = |r: &Region| [word(0, r.words[0]), word(1, r.words[1]), word(2, r.words[2])];

    let mut desc_rng = rng_for(config.seed, 3);
    let mut quadruples = Vec::new();
    for (sid, regions) in scenes.iter().enumerate() {
        for (ri, r) in regions.iter().enumerate() {
            let ws = region_words(r);
            for slot in 0..SLOTS.len() {
                let options: Vec<&str> = DESCRIPTIONS.iter().copied().filter(|t| mentions(t, slot)).collect();
                let t = options.choose(&mut desc_rng).expect("every slot has a template");
                quadruples.push(VisualQuadruple {
                    answer: ws[slot].to_string(),
                    scene: sid as u32,
                    bbox: boxes[ri],
                    description: tokenize(&fill(t, ws)),
                    region: Some(ri),
                });
            }
        }
    }

    // A word refers uniquely to a region if no other region shows it in any slot.
    let unique = |regions: &[Region], ri: usize, slot: usize| -> bool {
        let w = word(slot, regions[ri].words[slot]);
        regions
            .iter()
            .enumerate()
            .all(|(j, other)| j == ri || !region_words(other).contains(&w))
    };

    let mut q_rng = rng_for(config.seed, 4);
    let mut triples = Vec::new();
    let mut meta = Vec::new();
    let mut next_id = 0u64;
    for (sid, regions) in scenes.iter().enumerate() {
        let mut asked = BTreeSet::new();
        let mut attempts = 0;
        while asked.len() < config.questions_per_scene && attempts < 20 * config.questions_per_scene {
            attempts += 1;
            let slot = q_rng.random_range(0..SLOTS.len());
            let ri = q_rng.random_range(0..regions.len());
            let ti = q_rng.random_range(0..QUESTIONS[slot].len());
            let template = QUESTIONS[slot][ti];
            if !referring_slots(template, slot).iter().all(|&s| unique(regions, ri, s)) {
                continue;
            }
            if !asked.insert((slot, ri)) {
                continue;
            }
            let ws = region_words(&regions[ri]);
            let truth = ws[slot].to_string();
            let mut gt = vec![truth.clone(); GT_COUNT];
            if !q_rng.random_bool(config.annotator_agreement) {
                let others: Vec<&String> = slot_words[slot].iter().filter(|w| **w != truth).collect();
                if let Some(w) = others.choose(&mut q_rng) {
                    gt[GT_COUNT - 1] = (*w).clone();
                }
            }
            triples.push(VqaTriple {
                id: next_id,
                question: tokenize(&fill(template, ws)),
                scene: sid as u32,
                gt,
            });
            meta.push(TripleMeta {
                id: next_id,
                kind: QuestionKind::Visual,
                slot: SLOTS[slot].to_string(),
                template: ti,
                answer: truth,
                region: ri,
            });
            next_id += 1;
        }
    }

    if config.yes_no {
        let mut yn_rng = rng_for(config.seed, 5);
        for (sid, regions) in scenes.iter().enumerate() {
            let mut order: Vec<usize> = (0..regions.len()).collect();
            order.shuffle(&mut yn_rng);
            for &ri in order.iter().take(config.yes_no_per_scene) {
                let ti = yn_rng.random_range(0..YES_NO.len());
                let slot = ti + 1;
                let mut ws = region_words(&regions[ri]);
                let truth_word = ws[slot];
                let yes = yn_rng.random_bool(0.5);
                if !yes {
                    let others: Vec<&String> = slot_words[slot].iter().filter(|w| *w != truth_word).collect();
                    ws[slot] = others.choose(&mut yn_rng).expect("at least two words").as_str();
                }
                let truth = if yes { YES } else { NO };
                let mut gt = vec![truth.to_string(); GT_COUNT];
                if !yn_rng.random_bool(config.annotator_agreement) {
                    gt[GT_COUNT - 1] = if yes { NO } else { YES }.to_string();
                }
                triples.push(VqaTriple {
                    id: next_id,
                    question: tokenize(&fill(YES_NO[ti], ws)),
                    scene: sid as u32,
                    gt,
                });
                meta.push(TripleMeta {
                    id: next_id,
                    kind: QuestionKind::YesNo,
                    slot: SLOTS[slot].to_string(),
                    template: ti,
                    answer: truth.to_string(),
                    region: ri,
                });
                next_id += 1;
            }
        }
    }

    Ok(MicroWorld {
        config: config.clone(),
        slot_words,
        graph,
        bank,
        scenes,
        quadruples,
        triples,
        meta,
        vocab,
        prototypes,
    })
}

/// Seeded stand-in for pretrained word vectors: each answer's vector mixes a
/// per-slot direction, a fixed random projection of the word's visual
/// prototype (so visually similar words get similar vectors, as
/// distributional vectors of real color and material words tend to), and
/// word-specific noise. Rows are unit length and follow `vocab` order;
/// extras such as yes/no get pure noise vectors.
pub fn answer_embeddings(world: &MicroWorld, dim: usize, seed: u64) -> Vec<(String, Vec<f32>)> {
    const SLOT_WEIGHT: f32 = 1.0;
    const VISUAL_WEIGHT: f32 = 0.6;
    const NOISE_WEIGHT: f32 = 0.6;
    let mut rng = rng_for(seed, 6);
    let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
    let unit = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f32> {
        let v: Vec<f32> = (0..n).map(|_| normal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
        v.into_iter().map(|x| x / norm).collect()
    };
    let slot_dirs: Vec<Vec<f32>> = (0..SLOTS.len()).map(|_| unit(dim, &mut rng)).collect();
    let chunks = chunk_ranges(world.config.d_v);
    let projections: Vec<Vec<Vec<f32>>> = chunks
        .iter()
        .map(|r| (0..r.len()).map(|_| unit(dim, &mut rng)).collect())
        .collect();
    world
        .vocab
        .answers()
        .iter()
        .map(|a| {
            let mut v = vec![0.0f32; dim];
            for s in world.slots_of(a) {
                let wi = world.slot_words[s]
                    .iter()
                    .position(|w| w == a)
                    .expect("slot contains word");
                let proto = &world.prototypes[s][wi];
                let pnorm = proto.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
                for (k, x) in v.iter_mut().enumerate() {
                    let vis: f32 = proto.iter().zip(&projections[s]).map(|(p, row)| p * row[k]).sum();
                    *x += SLOT_WEIGHT * slot_dirs[s][k] + VISUAL_WEIGHT * vis / pnorm;
                }
            }
            let noise = unit(dim, &mut rng);
            for (x, n) in v.iter_mut().zip(noise) {
                *x += NOISE_WEIGHT * n;
            }
            let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
            (a.clone(), v.into_iter().map(|x| x / norm).collect())
        })
        .collect()
}
