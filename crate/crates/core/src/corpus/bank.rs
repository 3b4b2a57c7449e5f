//! Region features per scene.
//!
//! On disk a bank is two files. The feature file starts with the magic
//! bytes `TDSB`, a little-endian `u32` header length and a JSON header
//! `{"d_v", "rows", "scenes"}`, followed by `rows * d_v` little-endian `f32`
//! values in row-major order. The sidecar `<file>.index.json` maps each scene
//! id to its row range and region boxes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{box_in_unit_scene, BoundingBox, CorpusError, Result, VisualQuadruple};

const MAGIC: &[u8; 4] = b"TDSB";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    /// `[start, end)` row range in the feature matrix.
    pub rows: [usize; 2],
    pub boxes: Vec<BoundingBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    d_v: usize,
    rows: usize,
    scenes: usize,
}

/// Immutable lookup from scene id to region features, shared by every
/// training phase so pretraining and VQA see identical features.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneBank {
    d_v: usize,
    features: Vec<f32>,
    scenes: BTreeMap<u32, SceneEntry>,
}

impl SceneBank {
    pub fn new(d_v: usize) -> Self {
        Self {
            d_v,
            features: Vec::new(),
            scenes: BTreeMap::new(),
        }
    }

    /// Appends a scene: one feature row of width `d_v` per box.
    pub fn push_scene(&mut self, id: u32, features: &[f32], boxes: Vec<BoundingBox>) -> Result<()> {
        if self.scenes.contains_key(&id) {
            return Err(CorpusError::Bank(format!("duplicate scene {id}")));
        }
        if boxes.is_empty() || features.len() != boxes.len() * self.d_v {
            return Err(CorpusError::Bank(format!(
                "scene {id}: {} values for {} boxes of width {}",
                features.len(),
                boxes.len(),
                self.d_v
            )));
        }
        if let Some(b) = boxes.iter().find(|b| !box_in_unit_scene(b)) {
            return Err(CorpusError::RegionOutOfBounds { line: 0, bbox: *b });
        }
        let start = self.features.len() / self.d_v;
        self.features.extend_from_slice(features);
        self.scenes.insert(
            id,
            SceneEntry {
                rows: [start, start + boxes.len()],
                boxes,
            },
        );
        Ok(())
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn scene_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.scenes.keys().copied()
    }

    pub fn contains(&self, scene: u32) -> bool {
        self.scenes.contains_key(&scene)
    }

    fn entry(&self, scene: u32) -> Result<&SceneEntry> {
        self.scenes.get(&scene).ok_or(CorpusError::UnknownScene(scene))
    }

    /// All region rows of a scene, flattened.
    pub fn regions(&self, scene: u32) -> Result<&[f32]> {
        let [s, e] = self.entry(scene)?.rows;
        Ok(&self.features[s * self.d_v..e * self.d_v])
    }

    pub fn region_count(&self, scene: u32) -> Result<usize> {
        Ok(self.entry(scene)?.boxes.len())
    }

    pub fn region(&self, scene: u32, idx: usize) -> Result<&[f32]> {
        let rows = self.regions(scene)?;
        rows.get(idx * self.d_v..(idx + 1) * self.d_v)
            .ok_or(CorpusError::Bank(format!("scene {scene} has no region {idx}")))
    }

    pub fn boxes(&self, scene: u32) -> Result<&[BoundingBox]> {
        Ok(&self.entry(scene)?.boxes)
    }

    /// Index of the region whose box equals `bbox` (to 1e-5).
    pub fn region_of(&self, scene: u32, bbox: &BoundingBox) -> Result<usize> {
        self.entry(scene)?
            .boxes
            .iter()
            .position(|b| b.iter().zip(bbox).all(|(x, y)| (x - y).abs() <= 1e-5))
            .ok_or(CorpusError::UnknownRegion { scene, bbox: *bbox })
    }

    /// Fills in missing region indices and checks present ones.
    pub fn resolve_regions(&self, quads: &mut [VisualQuadruple]) -> Result<()> {
        for q in quads {
            let found = self.region_of(q.scene, &q.bbox)?;
            if let Some(r) = q.region {
                if r != found {
                    return Err(CorpusError::Bank(format!(
                        "scene {}: region index {r} disagrees with box (region {found})",
                        q.scene
                    )));
                }
            }
            q.region = Some(found);
        }
        Ok(())
    }

    pub fn index_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".index.json");
        PathBuf::from(s)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            d_v: self.d_v,
            rows: self.features.len() / self.d_v.max(1),
            scenes: self.scenes.len(),
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(8 + header.len() + self.features.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        fs::write(Self::index_path(path), serde_json::to_vec(&self.scenes)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let index: BTreeMap<u32, SceneEntry> = serde_json::from_slice(&fs::read(Self::index_path(path))?)?;
        Self::from_parts(&bytes, index)
    }

    fn from_parts(bytes: &[u8], scenes: BTreeMap<u32, SceneEntry>) -> Result<Self> {
        let bad = |m: &str| CorpusError::Bank(m.to_string());
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let header: Header = serde_json::from_slice(bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?)?;
        let body = &bytes[8 + hlen..];
        if header.d_v == 0 || body.len() != header.rows * header.d_v * 4 {
            return Err(bad("payload length disagrees with header"));
        }
        if header.scenes != scenes.len() {
            return Err(bad("index scene count disagrees with header"));
        }
        for (id, e) in &scenes {
            if e.rows[0] > e.rows[1] || e.rows[1] > header.rows || e.rows[1] - e.rows[0] != e.boxes.len() {
                return Err(CorpusError::Bank(format!("scene {id}: bad row range")));
            }
        }
        let features = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            d_v: header.d_v,
            features,
            scenes,
        })
    }
}
