//! JSONL readers and writers for quadruples and triples.
//!
//! ```text
//! quadruple: {"answer": "red", "scene": 4, "box": [x, y, w, h], "description": ["a", "red", "cup"]}
//! triple:    {"id": 17, "question": ["what", "color", ...], "scene": 4, "gt": [ten answers]}
//! ```
//!
//! Quadruples may also carry `"region"`, the index of the box in its scene.
//! Triples without an `"id"` get their record index. Strings are normalized
//! on the way in; an empty file is an empty list.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::{box_in_unit_scene, BoundingBox, CorpusError, Result, VisualQuadruple, VqaTriple, GT_COUNT};
use crate::text::{normalize, tokenize};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadruple {
    answer: String,
    scene: u32,
    #[serde(rename = "box")]
    bbox: BoundingBox,
    description: Vec<String>,
    #[serde(default)]
    region: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTriple {
    #[serde(default)]
    id: Option<u64>,
    question: Vec<String>,
    scene: u32,
    gt: Vec<String>,
}

fn records<R: BufRead, T: for<'de> Deserialize<'de>>(source: R) -> impl Iterator<Item = Result<(usize, T)>> {
    source.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        match line {
            Err(e) => Some(Err(e.into())),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(
                serde_json::from_str(&l)
                    .map(|r| (line_no, r))
                    .map_err(|e| CorpusError::MalformedRecord {
                        line: line_no,
                        reason: e.to_string(),
                    }),
            ),
        }
    })
}

fn tokens(words: &[String]) -> Vec<String> {
    words.iter().flat_map(|w| tokenize(w)).collect()
}

pub fn read_quadruples<R: BufRead>(source: R) -> Result<Vec<VisualQuadruple>> {
    let mut out = Vec::new();
    for rec in records::<_, RawQuadruple>(source) {
        let (line, r) = rec?;
        if !box_in_unit_scene(&r.bbox) {
            return Err(CorpusError::RegionOutOfBounds { line, bbox: r.bbox });
        }
        let answer = normalize(&r.answer);
        if answer.is_empty() {
            return Err(CorpusError::MalformedRecord {
                line,
                reason: "empty answer".into(),
            });
        }
        out.push(VisualQuadruple {
            answer,
            scene: r.scene,
            bbox: r.bbox,
            description: tokens(&r.description),
            region: r.region,
        });
    }
    Ok(out)
}

pub fn read_triples<R: BufRead>(source: R) -> Result<Vec<VqaTriple>> {
    let mut out = Vec::new();
    for (k, rec) in records::<_, RawTriple>(source).enumerate() {
        let (line, r) = rec?;
        if r.gt.len() != GT_COUNT {
            return Err(CorpusError::GroundTruthCountMismatch {
                line,
                count: r.gt.len(),
            });
        }
        if r.question.is_empty() {
            return Err(CorpusError::MalformedRecord {
                line,
                reason: "empty question".into(),
            });
        }
        out.push(VqaTriple {
            id: r.id.unwrap_or(k as u64),
            question: tokens(&r.question),
            scene: r.scene,
            gt: r.gt.iter().map(|g| normalize(g)).collect(),
        });
    }
    Ok(out)
}

pub fn ingest_quadruples(path: &Path) -> Result<Vec<VisualQuadruple>> {
    read_quadruples(BufReader::new(File::open(path)?))
}

pub fn ingest_triples(path: &Path) -> Result<Vec<VqaTriple>> {
    read_triples(BufReader::new(File::open(path)?))
}

pub fn write_jsonl<T: serde::Serialize, W: Write>(items: &[T], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl_file<T: serde::Serialize>(items: &[T], path: &Path) -> Result<()> {
    write_jsonl(items, File::create(path)?)
}
