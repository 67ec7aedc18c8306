//! Weak emotion labels: lexicon scoring, normalized increments, polarity
//! classes, and corpus statistics.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{Record, Triplet};

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.txt");

/// Scores `(s1, s2)` and the normalized increment `(s2 − s1 + 1) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionAnnotation {
    pub s1: f64,
    pub s2: f64,
    pub delta_norm: f64,
}

impl EmotionAnnotation {
    pub fn new(s1: f64, s2: f64) -> Result<Self> {
        Ok(Self {
            s1,
            s2,
            delta_norm: delta_s_norm(s1, s2)?,
        })
    }

    /// Raw increment `s2 − s1`.
    pub fn delta_raw(&self) -> f64 {
        self.s2 - self.s1
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} is outside [0, 1]")))
    }
}

/// `(s2 − s1 + 1) / 2`.
pub fn delta_s_norm(s1: f64, s2: f64) -> Result<f64> {
    check_unit("s1", s1)?;
    check_unit("s2", s2)?;
    Ok((s2 - s1 + 1.0) / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

/// Half-open classes: `[0, 0.35)`, `[0.35, 0.65)`, `[0.65, 1]`.
pub fn discretize_polarity(s: f64) -> Result<Polarity> {
    check_unit("score", s)?;
    Ok(if s < 0.35 {
        Polarity::Negative
    } else if s < 0.65 {
        Polarity::Neutral
    } else {
        Polarity::Positive
    })
}

/// Counts lexicon hits: `s = 0.5 + 0.5 · (P − N) / max(1, P + N)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexiconScorer {
    positive: HashSet<String>,
    negative: HashSet<String>,
}

impl Default for LexiconScorer {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
    }
}

impl LexiconScorer {
    pub fn new<I, J, S, T>(positive: I, negative: J) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        let positive: HashSet<String> = positive.into_iter().map(Into::into).collect();
        let negative: HashSet<String> = negative.into_iter().map(Into::into).collect();
        if let Some(both) = positive.intersection(&negative).next() {
            return Err(Error::Data(format!("lexicon token `{both}` is both positive and negative")));
        }
        Ok(Self { positive, negative })
    }

    /// Parses the `[positive]` / `[negative]` sectioned format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut section: Option<bool> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[positive]" => section = Some(true),
                "[negative]" => section = Some(false),
                tok => match section {
                    Some(true) => pos.push(tok.to_lowercase()),
                    Some(false) => neg.push(tok.to_lowercase()),
                    None => {
                        return Err(Error::Data(format!(
                            "lexicon line {}: token `{tok}` before any section header",
                            i + 1
                        )))
                    }
                },
            }
        }
        Self::new(pos, neg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        Self::parse(&text)
    }

    pub fn score<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let (mut p, mut n) = (0usize, 0usize);
        for t in tokens {
            let t = t.as_ref();
            if self.positive.contains(t) {
                p += 1;
            } else if self.negative.contains(t) {
                n += 1;
            }
        }
        0.5 + 0.5 * (p as f64 - n as f64) / ((p + n).max(1) as f64)
    }
}

/// A triplet with its weak emotion label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTriplet {
    pub triplet: Triplet,
    pub annotation: EmotionAnnotation,
}

impl LabeledTriplet {
    pub fn to_record(&self) -> Record {
        let mut rec = self.triplet.to_record();
        rec.s1 = Some(self.annotation.s1);
        rec.s2 = Some(self.annotation.s2);
        rec.delta_norm = Some(self.annotation.delta_norm);
        rec
    }
}

/// Labels one triplet; precomputed scores take precedence over the scorer.
pub fn label_triplet(index: usize, t: &Triplet, scorer: &LexiconScorer) -> Result<EmotionAnnotation> {
    let pick = |given: Option<f64>, tokens: &[String], name: &str| match given {
        Some(v) if (0.0..=1.0).contains(&v) => Ok(v),
        Some(v) => Err(Error::Data(format!(
            "record {index}: precomputed {name} = {v} outside [0, 1]"
        ))),
        None => Ok(scorer.score(tokens)),
    };
    let s1 = pick(t.s1, &t.u1, "s1")?;
    let s2 = pick(t.s2, &t.u2, "s2")?;
    EmotionAnnotation::new(s1, s2)
}

/// Streaming, order-preserving labeling.
pub fn label_iter<'a, I>(corpus: I, scorer: &'a LexiconScorer) -> impl Iterator<Item = Result<LabeledTriplet>> + 'a
where
    I: IntoIterator<Item = Triplet> + 'a,
{
    corpus.into_iter().enumerate().map(move |(i, t)| {
        let annotation = label_triplet(i, &t, scorer)?;
        Ok(LabeledTriplet { triplet: t, annotation })
    })
}

pub fn label_corpus(corpus: &[Triplet], scorer: &LexiconScorer) -> Result<Vec<LabeledTriplet>> {
    label_iter(corpus.iter().cloned(), scorer).collect()
}

/// Fractions of negative / neutral / positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarityFractions {
    pub negative: f64,
    pub neutral: f64,
    pub positive: f64,
}

impl PolarityFractions {
    fn from_scores(scores: impl Iterator<Item = f64>) -> Result<Self> {
        let mut counts = [0usize; 3];
        let mut n = 0usize;
        for s in scores {
            let k = match discretize_polarity(s)? {
                Polarity::Negative => 0,
                Polarity::Neutral => 1,
                Polarity::Positive => 2,
            };
            counts[k] += 1;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Data("polarity statistics of an empty corpus".into()));
        }
        let f = |c: usize| c as f64 / n as f64;
        Ok(Self {
            negative: f(counts[0]),
            neutral: f(counts[1]),
            positive: f(counts[2]),
        })
    }

    pub fn sum(&self) -> f64 {
        self.negative + self.neutral + self.positive
    }
}

/// Polarity mix over U2 scores (`s2`) and, separately, over U1 scores (`s1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub s2: PolarityFractions,
    pub s1: PolarityFractions,
    pub count: usize,
}

pub fn distribution_stats(corpus: &[LabeledTriplet]) -> Result<DistributionStats> {
    Ok(DistributionStats {
        s2: PolarityFractions::from_scores(corpus.iter().map(|l| l.annotation.s2))?,
        s1: PolarityFractions::from_scores(corpus.iter().map(|l| l.annotation.s1))?,
        count: corpus.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scorer() -> LexiconScorer {
        LexiconScorer::new(["good", "great"], ["bad", "sad"]).unwrap()
    }

    #[test]
    fn scoring_examples() {
        let s = scorer();
        assert_eq!(s.score(&["good", "good"]), 1.0);
        assert_eq!(s.score(&["good", "bad"]), 0.5);
        assert_eq!(s.score::<&str>(&[]), 0.5);
        assert_eq!(s.score(&["the", "cat"]), 0.5);
    }

    #[test]
    fn delta_examples() {
        assert!((delta_s_norm(0.3, 0.7).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(delta_s_norm(0.42, 0.42).unwrap(), 0.5);
        assert_eq!(delta_s_norm(1.0, 0.0).unwrap(), 0.0);
        assert!(matches!(delta_s_norm(1.2, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn discretization_examples() {
        assert_eq!(discretize_polarity(0.2).unwrap(), Polarity::Negative);
        assert_eq!(discretize_polarity(0.5).unwrap(), Polarity::Neutral);
        assert_eq!(discretize_polarity(0.7).unwrap(), Polarity::Positive);
        assert_eq!(discretize_polarity(0.35).unwrap(), Polarity::Neutral);
        assert_eq!(discretize_polarity(0.65).unwrap(), Polarity::Positive);
        assert!(discretize_polarity(-0.01).is_err());
    }

    #[test]
    fn overlapping_lexicon_rejected() {
        assert!(LexiconScorer::new(["x"], ["x"]).is_err());
        assert!(LexiconScorer::parse("orphan\n[positive]\na").is_err());
    }

    #[test]
    fn default_lexicon_loads() {
        let s = LexiconScorer::default();
        assert_eq!(s.score(&["happy"]), 1.0);
        assert_eq!(s.score(&["lonely"]), 0.0);
    }
}
