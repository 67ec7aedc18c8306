use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::normalize::normalize_text;
use super::tokenize::{join_tokens, tokenize};
use crate::error::{Error, Result};

/// Longest utterance kept, in tokens (punctuation included).
pub const MAX_UTTERANCE_TOKENS: usize = 20;

/// One line of a corpus file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// Stable record identity assigned when a corpus is prepared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<usize>,
    pub u1: String,
    pub r1: String,
    pub u2: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_valence_u1: Option<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_valence_u2: Option<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1_family: Option<String>,
}

/// Ground truth emitted by the synthetic generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    pub valence_u1: i8,
    pub valence_u2: i8,
    pub r1_family: String,
}

/// A tokenized `(U1, R1, U2)` record with optional precomputed scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Triplet {
    pub id: Option<usize>,
    pub u1: Vec<String>,
    pub r1: Vec<String>,
    pub u2: Vec<String>,
    pub s1: Option<f64>,
    pub s2: Option<f64>,
    pub truth: Option<GroundTruth>,
}

impl Triplet {
    /// Normalizes and tokenizes the three utterances of a record.
    pub fn from_record(rec: &Record) -> Self {
        let prep = |s: &str| tokenize(&normalize_text(s));
        let truth = match (rec.gt_valence_u1, rec.gt_valence_u2, &rec.r1_family) {
            (Some(v1), Some(v2), Some(fam)) => Some(GroundTruth {
                valence_u1: v1,
                valence_u2: v2,
                r1_family: fam.clone(),
            }),
            _ => None,
        };
        Self {
            id: rec.id,
            u1: prep(&rec.u1),
            r1: prep(&rec.r1),
            u2: prep(&rec.u2),
            s1: rec.s1,
            s2: rec.s2,
            truth,
        }
    }

    pub fn to_record(&self) -> Record {
        Record {
            id: self.id,
            u1: join_tokens(&self.u1),
            r1: join_tokens(&self.r1),
            u2: join_tokens(&self.u2),
            s1: self.s1,
            s2: self.s2,
            delta_norm: None,
            gt_valence_u1: self.truth.as_ref().map(|t| t.valence_u1),
            gt_valence_u2: self.truth.as_ref().map(|t| t.valence_u2),
            r1_family: self.truth.as_ref().map(|t| t.r1_family.clone()),
        }
    }

    pub fn utterances(&self) -> [&[String]; 3] {
        [&self.u1, &self.r1, &self.u2]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.u1
            .iter()
            .chain(&self.r1)
            .chain(&self.u2)
            .map(String::as_str)
    }
}

/// Whether a tokenized triplet survives preprocessing: every utterance must
/// have 1..=20 tokens and only ASCII characters.
pub fn filter_triplet(t: &Triplet) -> bool {
    t.utterances().iter().all(|u| {
        !u.is_empty() && u.len() <= MAX_UTTERANCE_TOKENS && u.iter().all(|tok| tok.is_ascii())
    })
}

/// Train/valid/test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config(format!("split fractions must lie in [0,1]: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Three disjoint parts covering the input.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then cut at `round(n·train)` and `round(n·valid)`; the
/// test part takes the remainder.
pub fn split_corpus<T: Clone>(items: &[T], spec: &SplitSpec, seed: u64) -> Result<Splits<T>> {
    spec.validate()?;
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (((n as f64) * spec.train).round() as usize).min(n);
    let n_valid = (((n as f64) * spec.valid).round() as usize).min(n - n_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Splits {
        train: pick(&order[..n_train]),
        valid: pick(&order[n_train..n_train + n_valid]),
        test: pick(&order[n_train + n_valid..]),
    })
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::read(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a corpus file into tokenized triplets, dropping those that fail
/// [`filter_triplet`]. Returns the kept triplets and the number dropped.
pub fn load_triplets(path: &Path) -> Result<(Vec<Triplet>, usize)> {
    let records: Vec<Record> = read_jsonl(path)?;
    let total = records.len();
    let kept: Vec<Triplet> = records
        .iter()
        .map(Triplet::from_record)
        .filter(filter_triplet)
        .collect();
    let dropped = total - kept.len();
    Ok((kept, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trip(u1: &str, r1: &str, u2: &str) -> Triplet {
        Triplet::from_record(&Record {
            id: None,
            u1: u1.into(),
            r1: r1.into(),
            u2: u2.into(),
            s1: None,
            s2: None,
            delta_norm: None,
            gt_valence_u1: None,
            gt_valence_u2: None,
            r1_family: None,
        })
    }

    #[test]
    fn long_utterance_dropped() {
        let long = vec!["w"; 21].join(" ");
        assert!(!filter_triplet(&trip(&long, "ok", "ok")));
        let twenty = vec!["w"; 20].join(" ");
        assert!(filter_triplet(&trip(&twenty, "ok", "ok")));
    }

    #[test]
    fn non_ascii_dropped() {
        assert!(!filter_triplet(&trip("hi", "a café", "ok")));
    }

    #[test]
    fn empty_dropped_and_normal_kept() {
        assert!(!filter_triplet(&trip("hi", "https://only.a.link", "ok")));
        assert!(filter_triplet(&trip("hi there", "hello !", "bye")));
    }

    #[test]
    fn eight_one_one() {
        let items: Vec<usize> = (0..10).collect();
        let s = split_corpus(&items, &SplitSpec::default(), 3).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (8, 1, 1));
        let again = split_corpus(&items, &SplitSpec::default(), 3).unwrap();
        assert_eq!(s, again);
        let mut all: Vec<usize> = s.train.into_iter().chain(s.valid).chain(s.test).collect();
        all.sort();
        assert_eq!(all, items);
    }

    #[test]
    fn bad_fractions() {
        let spec = SplitSpec {
            train: 0.8,
            valid: 0.1,
            test: 0.2,
        };
        assert!(matches!(split_corpus(&[1, 2], &spec, 0), Err(Error::Config(_))));
    }
}
