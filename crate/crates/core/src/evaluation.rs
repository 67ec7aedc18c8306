//! Simulator-based elicitation evaluation and λ sweeps.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::decoding::{decode, greedy_decode, DecodeConfig};
use crate::emotion::{LabeledTriplet, LexiconScorer};
use crate::error::{Error, Result};
use crate::model::{simulator_input, Arch, Example, Model, ModelConfig};
use crate::text::{Vocab, SEP_TOKEN};
use crate::training::{train, TrainConfig, TrainOutcome};

/// Produces a response `R̂1` to `U1` at a given λ.
pub trait ResponseGenerator {
    fn respond(&self, u1: &[String], lambda: f64) -> Result<Vec<String>>;
}

/// Produces the user's next utterance `Û2` from `U1` and a response.
pub trait UserSimulator {
    fn react(&self, u1: &[String], r1: &[String]) -> Result<Vec<String>>;
}

/// A trained network decoded with beam search.
pub struct NeuralGenerator<'a> {
    pub model: &'a Model,
    pub vocab: &'a Vocab,
    pub decode: DecodeConfig,
}

impl ResponseGenerator for NeuralGenerator<'_> {
    fn respond(&self, u1: &[String], lambda: f64) -> Result<Vec<String>> {
        let out = decode(self.model, &self.vocab.encode(u1), lambda, &self.decode)?;
        Ok(self.vocab.decode(&out.tokens)?)
    }
}

/// Echoes `U1`; ignores λ.
pub struct CopyGenerator;

impl ResponseGenerator for CopyGenerator {
    fn respond(&self, u1: &[String], _lambda: f64) -> Result<Vec<String>> {
        Ok(u1.to_vec())
    }
}

/// Always returns the same response.
pub struct ConstantGenerator(pub Vec<String>);

impl ResponseGenerator for ConstantGenerator {
    fn respond(&self, _u1: &[String], _lambda: f64) -> Result<Vec<String>> {
        Ok(self.0.clone())
    }
}

/// Greedy encoder-decoder over `U1 ⊕ <sep> ⊕ R̂1`.
pub struct NeuralSimulator<'a> {
    pub model: &'a Model,
    /// Must contain the separator token.
    pub vocab: &'a Vocab,
}

impl UserSimulator for NeuralSimulator<'_> {
    fn react(&self, u1: &[String], r1: &[String]) -> Result<Vec<String>> {
        let sep = self.vocab.id(SEP_TOKEN);
        let src = simulator_input(&self.vocab.encode(u1), &self.vocab.encode(r1), sep);
        let cfg = DecodeConfig {
            max_len: self.model.config().max_len,
            ..DecodeConfig::greedy()
        };
        let out = greedy_decode(self.model, &src, 0.0, &cfg)?;
        Ok(self.vocab.decode(&out.tokens)?)
    }
}

/// The generator vocabulary with the separator appended.
pub fn simulator_vocab(vocab: &Vocab) -> Vocab {
    vocab.with_reserved(SEP_TOKEN).0
}

fn identity(l: &LabeledTriplet) -> String {
    match l.triplet.id {
        Some(id) => format!("#{id}"),
        None => format!("{:?}", (&l.triplet.u1, &l.triplet.r1, &l.triplet.u2)),
    }
}

/// Fails when any two named parts share a record (by id, or by content
/// when ids are absent).
pub fn check_disjoint(parts: &[(&str, &[LabeledTriplet])]) -> Result<()> {
    let sets: Vec<HashSet<String>> = parts.iter().map(|(_, p)| p.iter().map(identity).collect()).collect();
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            if let Some(shared) = sets[i].intersection(&sets[j]).min() {
                let n = sets[i].intersection(&sets[j]).count();
                return Err(Error::Contract(format!(
                    "data leakage: `{}` and `{}` share {n} record(s), e.g. {shared}",
                    parts[i].0, parts[j].0
                )));
            }
        }
    }
    Ok(())
}

/// Trains the user simulator on its own slice after checking that it does
/// not overlap the generator's training data.
pub fn train_user_simulator(
    sim_train: &[LabeledTriplet],
    sim_valid: &[LabeledTriplet],
    generator_train: &[LabeledTriplet],
    vocab: &Vocab,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    check_disjoint(&[("simulator", sim_train), ("generator_train", generator_train)])?;
    check_disjoint(&[("simulator_valid", sim_valid), ("generator_train", generator_train)])?;
    if !vocab.contains(SEP_TOKEN) {
        return Err(Error::Contract("simulator vocabulary lacks the separator".into()));
    }
    let mut cfg = model_cfg.clone();
    cfg.arch = Arch::Encdec;
    cfg.vocab_size = vocab.len();
    let model = Model::build(cfg, train_cfg.seed)?;
    let ex = |s: &[LabeledTriplet]| s.iter().map(|l| Example::simulator(l, vocab)).collect::<Vec<_>>();
    train(model, &ex(sim_train), &ex(sim_valid), train_cfg)
}

/// Means over one evaluation pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub lambda: f64,
    pub count: usize,
    pub mean_s2_hat: f64,
    /// Mean of `ŝ2 − s1`.
    pub mean_delta_raw: f64,
    /// `(mean_delta_raw + 1) / 2`.
    pub mean_delta_norm: f64,
    /// Responses that were empty; each is scored 0.5.
    pub empty_responses: usize,
}

/// Per-record outcome, kept for inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub response: Vec<String>,
    pub reaction: Vec<String>,
    pub s1: f64,
    pub s2_hat: f64,
}

pub fn elicitation_samples(
    generator: &dyn ResponseGenerator,
    lambda: f64,
    simulator: &dyn UserSimulator,
    scorer: &LexiconScorer,
    corpus: &[LabeledTriplet],
) -> Result<Vec<EvalSample>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("λ = {lambda} is outside [0, 1]")));
    }
    corpus
        .iter()
        .map(|l| {
            let response = generator.respond(&l.triplet.u1, lambda)?;
            let (reaction, s2_hat) = if response.is_empty() {
                (Vec::new(), 0.5)
            } else {
                let u2 = simulator.react(&l.triplet.u1, &response)?;
                let s = scorer.score(&u2);
                (u2, s)
            };
            Ok(EvalSample {
                response,
                reaction,
                s1: l.annotation.s1,
                s2_hat,
            })
        })
        .collect()
}

/// Generates, simulates and scores every record of `corpus` at one λ.
pub fn elicitation_eval(
    generator: &dyn ResponseGenerator,
    lambda: f64,
    simulator: &dyn UserSimulator,
    scorer: &LexiconScorer,
    corpus: &[LabeledTriplet],
) -> Result<EvalRow> {
    if corpus.is_empty() {
        return Err(Error::Data("evaluation corpus is empty".into()));
    }
    let samples = elicitation_samples(generator, lambda, simulator, scorer, corpus)?;
    let n = samples.len() as f64;
    let mean_s2_hat = samples.iter().map(|s| s.s2_hat).sum::<f64>() / n;
    let mean_delta_raw = samples.iter().map(|s| s.s2_hat - s.s1).sum::<f64>() / n;
    Ok(EvalRow {
        lambda,
        count: samples.len(),
        mean_s2_hat,
        mean_delta_raw,
        mean_delta_norm: (mean_delta_raw + 1.0) / 2.0,
        empty_responses: samples.iter().filter(|s| s.response.is_empty()).count(),
    })
}

/// Rows per λ and the rank correlation between λ and mean `ŝ2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<EvalRow>,
    pub spearman: f64,
    /// Set when the correlation is undefined (constant ŝ2) and reported as 0.
    pub degenerate: bool,
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if let Some(bad) = grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("grid point {bad} is outside [0, 1]")));
    }
    if grid.len() < 3 {
        return Err(Error::Config("a λ grid needs at least 3 points".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("λ grid must be strictly increasing".into()));
    }
    Ok(())
}

pub fn lambda_sweep(
    generator: &dyn ResponseGenerator,
    simulator: &dyn UserSimulator,
    scorer: &LexiconScorer,
    corpus: &[LabeledTriplet],
    grid: &[f64],
) -> Result<Sweep> {
    validate_grid(grid)?;
    let rows = grid
        .iter()
        .map(|&l| elicitation_eval(generator, l, simulator, scorer, corpus))
        .collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_s2_hat).collect();
    let (spearman, degenerate) = match spearman(grid, &ys) {
        Some(r) => (r, false),
        None => (0.0, true),
    };
    Ok(Sweep {
        rows,
        spearman,
        degenerate,
    })
}

/// Ranks from 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's ρ as the Pearson correlation of average ranks; `None` when
/// either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}
