//! Out-of-vocabulary split construction.
//!
//! A seeded fraction of the pretraining answers 𝒜 is held out as OOV. Each
//! question then lands by its ground truths:
//!
//! * no OOV ground truth: hashed into train (70%), val (10%) or the
//!   in-vocabulary half of test_mixed (20%);
//! * every ground truth OOV: test_oov, and also test_mixed;
//! * some but not all OOV: test_mixed only.
//!
//! So train and val never see an OOV string, and a model restricted to ℬ
//! scores exactly zero on test_oov. Both the answer selection and the
//! question assignment are keyed hashes of `(seed, answer)` and
//! `(seed, question id)`, which makes them order-independent and easy to
//! recompute outside this crate.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AnswerVocabulary, CorpusError, Result, VqaTriple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Oov,
    InVocab,
}

impl Stratum {
    pub fn of(t: &VqaTriple, vocab: &AnswerVocabulary) -> Stratum {
        if vocab.is_oov_answer(t.modal_answer()) {
            Stratum::Oov
        } else {
            Stratum::InVocab
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::Oov => "oov",
            Stratum::InVocab => "in_vocab",
        }
    }
}

/// Question ids per split, plus the OOV answers that define it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub oov_fraction: f64,
    pub oov_answers: Vec<String>,
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test_oov: Vec<u64>,
    pub test_mixed: Vec<u64>,
}

impl Split {
    pub fn part(&self, name: &str) -> Option<&[u64]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test_oov" => Some(&self.test_oov),
            "test_mixed" => Some(&self.test_mixed),
            _ => None,
        }
    }

    pub const PARTS: [&'static str; 4] = ["train", "val", "test_oov", "test_mixed"];
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a over UTF-8 bytes.
pub fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// `round(fraction * |answers|)` answers with the smallest keys
/// `mix64(seed ^ fnv1a(answer))`.
pub fn select_oov_answers(answers: &[String], fraction: f64, seed: u64) -> Result<BTreeSet<String>> {
    if !(0.0..=1.0).contains(&fraction) || fraction.is_nan() {
        return Err(CorpusError::ConfigInvalid(format!(
            "oov_fraction {fraction} outside [0, 1]"
        )));
    }
    let count = (fraction * answers.len() as f64).round() as usize;
    let mut keyed: Vec<(u64, &String)> = answers.iter().map(|a| (mix64(seed ^ fnv1a(a)), a)).collect();
    keyed.sort();
    Ok(keyed.into_iter().take(count).map(|(_, a)| a.clone()).collect())
}

/// Builds the split and returns the vocabulary with its OOV answers marked.
pub fn build_oov_split(
    triples: &[VqaTriple],
    vocab: &AnswerVocabulary,
    oov_fraction: f64,
    seed: u64,
) -> Result<(Split, AnswerVocabulary)> {
    for t in triples {
        if let Some(g) = t.gt.iter().find(|g| vocab.index_of(g).is_none()) {
            return Err(CorpusError::UnknownAnswer(g.clone()));
        }
    }
    let pretrain = &vocab.answers()[..vocab.pretrain_len()];
    let oov = select_oov_answers(pretrain, oov_fraction, seed)?;
    let mut vocab = vocab.clone();
    vocab.set_oov(&oov)?;

    let mut split = Split {
        seed,
        oov_fraction,
        oov_answers: oov.into_iter().collect(),
        train: Vec::new(),
        val: Vec::new(),
        test_oov: Vec::new(),
        test_mixed: Vec::new(),
    };
    let bucket_seed = mix64(seed ^ 0x5350_4c49_5400_0000);
    for t in triples {
        let n_oov = t.gt.iter().filter(|g| vocab.is_oov_answer(g)).count();
        if n_oov == 0 {
            let u = (mix64(bucket_seed ^ t.id) >> 11) as f64 / (1u64 << 53) as f64;
            if u < 0.7 {
                split.train.push(t.id);
            } else if u < 0.8 {
                split.val.push(t.id);
            } else {
                split.test_mixed.push(t.id);
            }
        } else {
            if n_oov == t.gt.len() {
                split.test_oov.push(t.id);
            }
            split.test_mixed.push(t.id);
        }
    }
    for name in Split::PARTS {
        if split.part(name).is_some_and(|p| p.is_empty()) {
            return Err(CorpusError::EmptySplit(name));
        }
    }
    Ok((split, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixers_match_reference_values() {
        // Published SplitMix64 outputs for state 0 and the FNV-1a test vector.
        assert_eq!(mix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(fnv1a(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a("a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn selection_count_rounds() {
        let answers: Vec<String> = (0..3813).map(|i| format!("w{i}")).collect();
        let s = select_oov_answers(&answers, 954.0 / 3813.0, 0).unwrap();
        assert_eq!(s.len(), 954);
        assert!(select_oov_answers(&answers, 1.5, 0).is_err());
    }
}
