//! Hypernym graphs and the word group tables built over them.
//!
//! A [`LexicalGraph`] is a DAG of synsets, each carrying a (possibly empty)
//! set of lemmas. Selecting a synset `s` as a task specification defines the
//! task of naming one of the words under `s`: its word group is the union of
//! the lemmas of every descendant of `s`. The inverted table maps each word
//! back to every synset whose group contains it, which is the support of
//! `p(t | a)` when sampling pretraining tasks.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::text::normalize;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: reference to undeclared synset {id}")]
    DanglingReference { line: usize, id: String },
    #[error("cycle through edge {hypernym} -> {hyponym}")]
    CycleDetected { hypernym: String, hyponym: String },
    #[error("unknown synset {0}")]
    UnknownSynset(String),
    #[error("invalid synset id {0:?}: expected lemma.pos.nn")]
    InvalidSynsetId(String),
    #[error("duplicate synset {0}")]
    DuplicateSynset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A synset name of the form `lemma.pos.nn`, e.g. `color.n.01`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SynsetId(String);

impl SynsetId {
    pub fn new(name: impl Into<String>) -> Result<Self, GraphError> {
        let name = name.into();
        // The lemma part may itself contain dots, so split from the right.
        let mut parts = name.rsplitn(3, '.');
        let (num, pos, lemma) = (parts.next(), parts.next(), parts.next());
        let ok = match (lemma, pos, num) {
            (Some(l), Some(p), Some(n)) => {
                !l.is_empty()
                    && !p.is_empty()
                    && p.chars().all(|c| c.is_ascii_lowercase())
                    && !n.is_empty()
                    && n.chars().all(|c| c.is_ascii_digit())
                    && !name.chars().any(char::is_whitespace)
            }
            _ => false,
        };
        if ok {
            Ok(SynsetId(name))
        } else {
            Err(GraphError::InvalidSynsetId(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The lemma field, e.g. `color` for `color.n.01`.
    pub fn head(&self) -> &str {
        self.0.rsplitn(3, '.').nth(2).unwrap_or(&self.0)
    }
}

impl TryFrom<String> for SynsetId {
    type Error = GraphError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        SynsetId::new(s)
    }
}

impl From<SynsetId> for String {
    fn from(s: SynsetId) -> String {
        s.0
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One line of the graph file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphRecord {
    Synset {
        id: String,
        #[serde(default)]
        lemmas: Vec<String>,
    },
    Edge {
        hypernym: String,
        hyponym: String,
    },
}

/// Immutable, validated hypernym DAG.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexicalGraph {
    ids: Vec<SynsetId>,
    index: HashMap<SynsetId, usize>,
    lemmas: Vec<BTreeSet<String>>,
    children: Vec<Vec<usize>>,
    edge_count: usize,
}

impl LexicalGraph {
    /// Builds a graph from declared synsets and hypernym -> hyponym edges.
    /// Duplicate edges are collapsed.
    pub fn from_parts(
        synsets: Vec<(SynsetId, Vec<String>)>,
        edges: Vec<(SynsetId, SynsetId)>,
    ) -> Result<Self, GraphError> {
        let mut b = Builder::default();
        for (id, lemmas) in synsets {
            b.add_synset(id, lemmas)?;
        }
        for (h, c) in edges {
            b.add_edge(&h, &c, 0)?;
        }
        b.finish()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn contains(&self, s: &SynsetId) -> bool {
        self.index.contains_key(s)
    }

    /// Synsets in declaration order.
    pub fn synsets(&self) -> &[SynsetId] {
        &self.ids
    }

    pub fn lemmas(&self, s: &SynsetId) -> Result<&BTreeSet<String>, GraphError> {
        Ok(&self.lemmas[self.idx(s)?])
    }

    pub fn children(&self, s: &SynsetId) -> Result<Vec<&SynsetId>, GraphError> {
        Ok(self.children[self.idx(s)?].iter().map(|&c| &self.ids[c]).collect())
    }

    /// All hypernym -> hyponym pairs, grouped by hypernym in declaration order.
    pub fn edges(&self) -> impl Iterator<Item = (&SynsetId, &SynsetId)> {
        self.children
            .iter()
            .enumerate()
            .flat_map(move |(p, cs)| cs.iter().map(move |&c| (&self.ids[p], &self.ids[c])))
    }

    /// Every lemma of every synset.
    pub fn words(&self) -> BTreeSet<&str> {
        self.lemmas.iter().flatten().map(String::as_str).collect()
    }

    fn idx(&self, s: &SynsetId) -> Result<usize, GraphError> {
        self.index
            .get(s)
            .copied()
            .ok_or_else(|| GraphError::UnknownSynset(s.to_string()))
    }

    /// Strict descendants of `s`: everything reachable through one or more
    /// hyponym edges.
    pub fn descendants(&self, s: &SynsetId) -> Result<BTreeSet<SynsetId>, GraphError> {
        let start = self.idx(s)?;
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = self.children[start].clone();
        let mut out = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if !std::mem::replace(&mut seen[n], true) {
                out.insert(self.ids[n].clone());
                stack.extend(&self.children[n]);
            }
        }
        Ok(out)
    }

    /// Writes the graph in the JSONL format read by [`parse_graph`].
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, id) in self.ids.iter().enumerate() {
            let rec = GraphRecord::Synset {
                id: id.to_string(),
                lemmas: self.lemmas[i].iter().cloned().collect(),
            };
            writeln!(w, "{}", serde_json::to_string(&rec)?)?;
        }
        for (h, c) in self.edges() {
            let rec = GraphRecord::Edge {
                hypernym: h.to_string(),
                hyponym: c.to_string(),
            };
            writeln!(w, "{}", serde_json::to_string(&rec)?)?;
        }
        Ok(())
    }

    /// Children-before-parents ordering. Only valid on an acyclic graph,
    /// which construction guarantees.
    fn postorder(&self) -> Vec<usize> {
        let n = self.len();
        let mut indeg = vec![0usize; n];
        for cs in &self.children {
            for &c in cs {
                indeg[c] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(p) = queue.pop() {
            order.push(p);
            for &c in &self.children[p] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push(c);
                }
            }
        }
        order.reverse();
        order
    }
}

#[derive(Default)]
struct Builder {
    ids: Vec<SynsetId>,
    index: HashMap<SynsetId, usize>,
    lemmas: Vec<BTreeSet<String>>,
    children: Vec<BTreeSet<usize>>,
}

impl Builder {
    fn add_synset(&mut self, id: SynsetId, lemmas: Vec<String>) -> Result<(), GraphError> {
        if self.index.contains_key(&id) {
            return Err(GraphError::DuplicateSynset(id.to_string()));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.lemmas
            .push(lemmas.iter().map(|l| normalize(l)).filter(|l| !l.is_empty()).collect());
        self.children.push(BTreeSet::new());
        Ok(())
    }

    fn add_edge(&mut self, h: &SynsetId, c: &SynsetId, line: usize) -> Result<(), GraphError> {
        let lookup = |id: &SynsetId| {
            self.index
                .get(id)
                .copied()
                .ok_or_else(|| GraphError::DanglingReference {
                    line,
                    id: id.to_string(),
                })
        };
        let (hi, ci) = (lookup(h)?, lookup(c)?);
        self.children[hi].insert(ci);
        Ok(())
    }

    fn finish(self) -> Result<LexicalGraph, GraphError> {
        let children: Vec<Vec<usize>> = self.children.into_iter().map(|c| c.into_iter().collect()).collect();
        if let Some((h, c)) = find_cycle_edge(&children) {
            return Err(GraphError::CycleDetected {
                hypernym: self.ids[h].to_string(),
                hyponym: self.ids[c].to_string(),
            });
        }
        let edge_count = children.iter().map(Vec::len).sum();
        Ok(LexicalGraph {
            ids: self.ids,
            index: self.index,
            lemmas: self.lemmas,
            children,
            edge_count,
        })
    }
}

/// Iterative three-colour DFS; returns a back edge if one exists.
fn find_cycle_edge(children: &[Vec<usize>]) -> Option<(usize, usize)> {
    const WHITE: u8 = 0;
    const GREY: u8 = 1;
    const BLACK: u8 = 2;
    let mut colour = vec![WHITE; children.len()];
    for root in 0..children.len() {
        if colour[root] != WHITE {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        colour[root] = GREY;
        while let Some((node, next)) = stack.last_mut() {
            if let Some(&c) = children[*node].get(*next) {
                *next += 1;
                match colour[c] {
                    GREY => return Some((*node, c)),
                    WHITE => {
                        colour[c] = GREY;
                        stack.push((c, 0));
                    }
                    _ => {}
                }
            } else {
                colour[*node] = BLACK;
                stack.pop();
            }
        }
    }
    None
}

/// Reads the JSONL graph format. Blank lines are ignored; synset records must
/// precede the edges that mention them.
pub fn parse_graph<R: BufRead>(source: R) -> Result<LexicalGraph, GraphError> {
    let mut b = Builder::default();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(&line).map_err(|e| GraphError::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        let parse_id = |s: String| {
            SynsetId::new(s).map_err(|e| GraphError::MalformedLine {
                line: line_no,
                reason: e.to_string(),
            })
        };
        match rec {
            GraphRecord::Synset { id, lemmas } => {
                let id = parse_id(id)?;
                b.add_synset(id, lemmas).map_err(|e| GraphError::MalformedLine {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            }
            GraphRecord::Edge { hypernym, hyponym } => {
                let (h, c) = (parse_id(hypernym)?, parse_id(hyponym)?);
                b.add_edge(&h, &c, line_no)?;
            }
        }
    }
    b.finish()
}

/// Synset -> word group.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordGroupTable {
    groups: BTreeMap<SynsetId, BTreeSet<String>>,
}

impl WordGroupTable {
    pub fn get(&self, s: &SynsetId) -> Option<&BTreeSet<String>> {
        self.groups.get(s)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SynsetId, &BTreeSet<String>)> {
        self.groups.iter()
    }
}

/// Word -> every synset whose word group contains it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvertedWordGroupTable {
    tasks: BTreeMap<String, BTreeSet<SynsetId>>,
}

impl InvertedWordGroupTable {
    pub fn get(&self, word: &str) -> Option<&BTreeSet<SynsetId>> {
        self.tasks.get(word)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<SynsetId>)> {
        self.tasks.iter()
    }
}

/// Word group of every synset: the lemmas of all its descendants. Leaves get
/// an empty group. Computed bottom-up, so shared descendants in a DAG are
/// visited once per parent rather than once per path.
pub fn build_word_groups(g: &LexicalGraph) -> WordGroupTable {
    let mut below: Vec<BTreeSet<String>> = vec![BTreeSet::new(); g.len()];
    for n in g.postorder() {
        let mut acc = BTreeSet::new();
        for &c in &g.children[n] {
            acc.extend(g.lemmas[c].iter().cloned());
            acc.extend(below[c].iter().cloned());
        }
        below[n] = acc;
    }
    WordGroupTable {
        groups: g.ids.iter().cloned().zip(below).collect(),
    }
}

/// Inverts a word group table. Words that belong to no group are absent.
pub fn build_inverted_table(t: &WordGroupTable) -> InvertedWordGroupTable {
    let mut tasks: BTreeMap<String, BTreeSet<SynsetId>> = BTreeMap::new();
    for (s, words) in &t.groups {
        for w in words {
            tasks.entry(w.clone()).or_default().insert(s.clone());
        }
    }
    InvertedWordGroupTable { tasks }
}

/// The four-synset example graph: `entity.n.01 -> color.n.01 -> {red, blue}`.
pub const TOY_GRAPH: &str = include_str!("../fixtures/toy_graph.jsonl");

pub fn toy_graph() -> LexicalGraph {
    parse_graph(TOY_GRAPH.as_bytes()).expect("toy fixture is valid")
}

/// Seeded random DAG for tests and benchmarks. Node `i` may only point at
/// nodes `j > i`, so the result is acyclic by construction; every non-root
/// node gets at least one parent. Lemmas are drawn from a pool of `n / 2`
/// words so that words are shared between synsets.
pub fn random_dag(n: usize, extra_edge_prob: f64, seed: u64) -> LexicalGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = (n / 2).max(1);
    let synsets = (0..n)
        .map(|i| {
            let k = rng.random_range(0..3usize);
            let lemmas = (0..k).map(|_| format!("w{}", rng.random_range(0..pool))).collect();
            (SynsetId(format!("s{i}.n.01")), lemmas)
        })
        .collect();
    let mut edges = Vec::new();
    for j in 1..n {
        let p = rng.random_range(0..j);
        edges.push((SynsetId(format!("s{p}.n.01")), SynsetId(format!("s{j}.n.01"))));
        for q in 0..j {
            if q != p && rng.random_bool(extra_edge_prob) {
                edges.push((SynsetId(format!("s{q}.n.01")), SynsetId(format!("s{j}.n.01"))));
            }
        }
    }
    LexicalGraph::from_parts(synsets, edges).expect("forward edges cannot form a cycle")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> SynsetId {
        SynsetId::new(s).unwrap()
    }

    #[test]
    fn synset_id_validation() {
        assert!(SynsetId::new("color.n.01").is_ok());
        assert!(SynsetId::new("st._john.n.02").is_ok());
        assert_eq!(id("st._john.n.02").head(), "st._john");
        for bad in [
            "",
            "color",
            "color.n",
            "color.n.x1",
            ".n.01",
            "col or.n.01",
            "color.N.01",
        ] {
            assert!(SynsetId::new(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn four_synsets_two_edges() {
        let src = r#"{"type":"synset","id":"entity.n.01","lemmas":[]}
{"type":"synset","id":"color.n.01","lemmas":[]}
{"type":"synset","id":"object.n.01","lemmas":["thing"]}
{"type":"synset","id":"shape.n.01","lemmas":[]}
{"type":"edge","hypernym":"entity.n.01","hyponym":"color.n.01"}
{"type":"edge","hypernym":"entity.n.01","hyponym":"object.n.01"}
"#;
        let g = parse_graph(src.as_bytes()).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn two_cycle_is_rejected_naming_an_edge() {
        let src = r#"{"type":"synset","id":"a.n.01"}
{"type":"synset","id":"b.n.01"}
{"type":"edge","hypernym":"a.n.01","hyponym":"b.n.01"}
{"type":"edge","hypernym":"b.n.01","hyponym":"a.n.01"}
"#;
        match parse_graph(src.as_bytes()) {
            Err(GraphError::CycleDetected { hypernym, hyponym }) => {
                let pair = (hypernym.as_str(), hyponym.as_str());
                assert!(pair == ("a.n.01", "b.n.01") || pair == ("b.n.01", "a.n.01"));
            }
            other => panic!("expected a cycle, got {other:?}"),
        }
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let r = LexicalGraph::from_parts(vec![(id("a.n.01"), vec![])], vec![(id("a.n.01"), id("a.n.01"))]);
        assert!(matches!(r, Err(GraphError::CycleDetected { .. })));
    }

    #[test]
    fn dangling_and_malformed_lines_carry_line_numbers() {
        let src = "{\"type\":\"synset\",\"id\":\"a.n.01\"}\n{\"type\":\"edge\",\"hypernym\":\"a.n.01\",\"hyponym\":\"b.n.01\"}\n";
        assert!(matches!(
            parse_graph(src.as_bytes()),
            Err(GraphError::DanglingReference { line: 2, .. })
        ));
        let src = "{\"type\":\"synset\",\"id\":\"a.n.01\"}\n\nnot json\n";
        assert!(matches!(
            parse_graph(src.as_bytes()),
            Err(GraphError::MalformedLine { line: 3, .. })
        ));
        let src = "{\"type\":\"synset\",\"id\":\"bad\"}\n";
        assert!(matches!(
            parse_graph(src.as_bytes()),
            Err(GraphError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn toy_tables() {
        let g = toy_graph();
        let groups = build_word_groups(&g);
        assert_eq!(groups.len(), 4);
        let color: Vec<&str> = groups
            .get(&id("color.n.01"))
            .unwrap()
            .iter()
            .map(String::as_str)
            .collect();
        assert_eq!(color, ["blue", "red"]);
        assert!(groups.get(&id("red.s.01")).unwrap().is_empty());
        let inv = build_inverted_table(&groups);
        let red: Vec<&str> = inv.get("red").unwrap().iter().map(SynsetId::as_str).collect();
        assert_eq!(red, ["color.n.01", "entity.n.01"]);
        assert!(inv.get("green").is_none());
    }

    #[test]
    fn descendants_of_leaf_and_root() {
        let g = toy_graph();
        assert!(g.descendants(&id("red.s.01")).unwrap().is_empty());
        let all: BTreeSet<SynsetId> = g
            .synsets()
            .iter()
            .filter(|s| s.as_str() != "entity.n.01")
            .cloned()
            .collect();
        assert_eq!(g.descendants(&id("entity.n.01")).unwrap(), all);
        assert!(matches!(
            g.descendants(&id("nope.n.01")),
            Err(GraphError::UnknownSynset(_))
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let g = random_dag(60, 0.05, 3);
        let mut buf = Vec::new();
        g.write_jsonl(&mut buf).unwrap();
        let back = parse_graph(buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn lemmas_are_normalized() {
        let g = LexicalGraph::from_parts(
            vec![
                (id("a.n.01"), vec![]),
                (id("b.n.01"), vec!["  Dark   Red ".into(), "dark red".into()]),
            ],
            vec![(id("a.n.01"), id("b.n.01"))],
        )
        .unwrap();
        let groups = build_word_groups(&g);
        assert_eq!(
            groups.get(&id("a.n.01")).unwrap().iter().collect::<Vec<_>>(),
            ["dark red"]
        );
    }
}
