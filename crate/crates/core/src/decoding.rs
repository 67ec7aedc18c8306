//! Greedy and beam-search decoding with optional attention tracing.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LambdaSetting, Model, NeuralMemory, NeuralState};
use crate::text::{Vocab, EOS, SOS};

/// Output of one decoder step for one hypothesis.
#[derive(Clone, Debug)]
pub struct StepResult<S> {
    pub state: S,
    /// Normalized log-probabilities over the vocabulary.
    pub log_probs: Vec<f64>,
    /// Attention weights of each head over the source; one or two rows.
    pub attention: Vec<Vec<f64>>,
}

/// Anything that can be decoded step by step.
pub trait DecodeModel {
    type Memory;
    type State: Clone;

    fn begin(&self, src: &[usize], lambda: f64) -> Result<(Self::Memory, Self::State)>;

    /// Advances several hypotheses; `prev[i]` is the last token fed to `states[i]`.
    fn step(&self, mem: &Self::Memory, states: &[&Self::State], prev: &[usize]) -> Result<Vec<StepResult<Self::State>>>;
}

impl DecodeModel for Model {
    type Memory = NeuralMemory;
    type State = NeuralState;

    fn begin(&self, src: &[usize], lambda: f64) -> Result<(NeuralMemory, NeuralState)> {
        Model::begin(self, src, LambdaSetting::Fixed(lambda))
    }

    fn step(&self, mem: &NeuralMemory, states: &[&NeuralState], prev: &[usize]) -> Result<Vec<StepResult<NeuralState>>> {
        Ok(self
            .advance(mem, states, prev)?
            .into_iter()
            .map(|s| StepResult {
                state: s.state,
                log_probs: s.log_probs,
                attention: s.alphas,
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub width: usize,
    pub max_len: usize,
    /// Rank finished hypotheses by mean log-probability per token (end marker included).
    pub length_norm: bool,
    pub trace: bool,
    pub sos: usize,
    pub eos: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            width: 5,
            max_len: 20,
            length_norm: true,
            trace: false,
            sos: SOS,
            eos: EOS,
        }
    }
}

impl DecodeConfig {
    pub fn greedy() -> Self {
        Self {
            width: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Attention over source positions, one row per generated step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub alpha_pos: Vec<Vec<f64>>,
    pub alpha_neg: Vec<Vec<f64>>,
}

impl AttentionTrace {
    fn push(&mut self, attention: &[Vec<f64>]) {
        self.alpha_pos.push(attention[0].clone());
        self.alpha_neg.push(attention[attention.len() - 1].clone());
    }
}

#[derive(Clone, Debug)]
pub struct BeamHypothesis<S> {
    /// Generated ids, including a final end marker once finished.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
    pub trace: AttentionTrace,
    state: S,
}

impl<S> BeamHypothesis<S> {
    fn score(&self, length_norm: bool) -> f64 {
        if length_norm {
            self.log_prob / self.tokens.len().max(1) as f64
        } else {
            self.log_prob
        }
    }
}

/// A finished decode.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    /// Response ids with the end marker stripped.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// The ranking score (normalized or not, as configured).
    pub score: f64,
    trace: Option<AttentionTrace>,
}

impl Decoded {
    pub fn trace(&self) -> Option<&AttentionTrace> {
        self.trace.as_ref()
    }
}

/// The recorded attention of a traced decode.
pub fn attention_trace(decoded: &Decoded) -> Result<&AttentionTrace> {
    decoded
        .trace
        .as_ref()
        .ok_or_else(|| Error::Contract("decode ran without attention tracing".into()))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Domain(format!("λ = {lambda} is outside [0, 1]")))
    }
}

/// Higher log-probability first, then lexicographically smaller ids.
fn rank(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

fn finish<S>(h: BeamHypothesis<S>, cfg: &DecodeConfig) -> Decoded {
    let score = h.score(cfg.length_norm);
    let mut tokens = h.tokens;
    if tokens.last() == Some(&cfg.eos) {
        tokens.pop();
    }
    Decoded {
        tokens,
        log_prob: h.log_prob,
        score,
        trace: cfg.trace.then_some(h.trace),
    }
}

/// Argmax decoding; ties go to the lowest id.
pub fn greedy_decode<M: DecodeModel>(model: &M, src: &[usize], lambda: f64, cfg: &DecodeConfig) -> Result<Decoded> {
    cfg.validate()?;
    check_lambda(lambda)?;
    let (mem, mut state) = model.begin(src, lambda)?;
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    let mut trace = AttentionTrace::default();
    let mut prev = cfg.sos;
    while tokens.len() < cfg.max_len {
        let out = model.step(&mem, &[&state], &[prev])?.pop().expect("one result");
        let (best, lp) = out
            .log_probs
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        log_prob += lp;
        tokens.push(best);
        if cfg.trace {
            trace.push(&out.attention);
        }
        state = out.state;
        if best == cfg.eos {
            break;
        }
        prev = best;
    }
    let h = BeamHypothesis {
        tokens,
        log_prob,
        finished: true,
        trace,
        state: (),
    };
    Ok(finish(h, cfg))
}

/// Beam search. Each step keeps the `width` best extensions by cumulative
/// log-probability; extensions ending in the end marker are frozen and
/// compete in the final ranking, as do hypotheses still open at `max_len`.
pub fn beam_search<M: DecodeModel>(model: &M, src: &[usize], lambda: f64, cfg: &DecodeConfig) -> Result<Decoded> {
    cfg.validate()?;
    check_lambda(lambda)?;
    let (mem, start) = model.begin(src, lambda)?;
    let mut live = vec![BeamHypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
        trace: AttentionTrace::default(),
        state: start,
    }];
    let mut done: Vec<BeamHypothesis<M::State>> = Vec::new();
    for _ in 0..cfg.max_len {
        if live.is_empty() {
            break;
        }
        let prev: Vec<usize> = live.iter().map(|h| h.tokens.last().copied().unwrap_or(cfg.sos)).collect();
        let states: Vec<&M::State> = live.iter().map(|h| &h.state).collect();
        let results = model.step(&mem, &states, &prev)?;

        let mut cands: Vec<(f64, Vec<usize>, usize)> = Vec::new();
        for (i, (h, r)) in live.iter().zip(&results).enumerate() {
            for (v, &lp) in r.log_probs.iter().enumerate() {
                let mut toks = h.tokens.clone();
                toks.push(v);
                cands.push((h.log_prob + lp, toks, i));
            }
        }
        cands.sort_by(|a, b| rank((a.0, &a.1), (b.0, &b.1)));
        cands.truncate(cfg.width);

        let mut next = Vec::with_capacity(cands.len());
        for (log_prob, tokens, i) in cands {
            let r = &results[i];
            let mut trace = if cfg.trace { live[i].trace.clone() } else { AttentionTrace::default() };
            if cfg.trace {
                trace.push(&r.attention);
            }
            let finished = tokens.last() == Some(&cfg.eos);
            let h = BeamHypothesis {
                tokens,
                log_prob,
                finished,
                trace,
                state: r.state.clone(),
            };
            if finished {
                done.push(h);
            } else {
                next.push(h);
            }
        }
        live = next;
    }
    done.extend(live);
    let best = done
        .into_iter()
        .min_by(|a, b| rank((a.score(cfg.length_norm), &a.tokens), (b.score(cfg.length_norm), &b.tokens)))
        .expect("at least one hypothesis");
    Ok(finish(best, cfg))
}

/// Beam search, or greedy decoding when the width is 1.
pub fn decode<M: DecodeModel>(model: &M, src: &[usize], lambda: f64, cfg: &DecodeConfig) -> Result<Decoded> {
    if cfg.width == 1 {
        greedy_decode(model, src, lambda, cfg)
    } else {
        beam_search(model, src, lambda, cfg)
    }
}

/// Attention dump of one decode: tokens plus the two step × source matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionDump {
    pub source_tokens: Vec<String>,
    pub generated_tokens: Vec<String>,
    pub lambda: f64,
    pub alpha_pos: Vec<Vec<f64>>,
    pub alpha_neg: Vec<Vec<f64>>,
}

impl AttentionDump {
    pub fn new(vocab: &Vocab, src: &[usize], decoded: &Decoded, lambda: f64) -> Result<Self> {
        let trace = attention_trace(decoded)?;
        let mut generated = decoded.tokens.clone();
        if trace.alpha_pos.len() > generated.len() {
            generated.push(EOS);
        }
        Ok(Self {
            source_tokens: vocab.decode(src)?,
            generated_tokens: vocab.decode(&generated)?,
            lambda,
            alpha_pos: trace.alpha_pos.clone(),
            alpha_neg: trace.alpha_neg.clone(),
        })
    }
}
