//! Teacher-forced training with Adam, perplexity, and loss curves.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{clip_global_norm, AdamState, Graph};
use crate::emotion::LabeledTriplet;
use crate::error::{Error, Result};
use crate::model::{Example, Model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Epochs without a validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Global gradient-norm cap; 0 disables clipping.
    pub clip_norm: f64,
    /// Stop after this many updates.
    pub max_steps: Option<usize>,
    /// Invoke the checkpoint hook every this many updates.
    pub checkpoint_every: Option<usize>,
    /// Train only on triplets with `s2 − s1 > 0` and `s2 > 0.5`.
    pub positive_subset: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Desk-scale defaults: batch 32, lr 1e-3, early stop with patience 3.
    pub fn desk() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            patience: 3,
            clip_norm: 5.0,
            max_steps: None,
            checkpoint_every: None,
            positive_subset: false,
        }
    }

    /// Reference values: five epochs, batch 512, lr 1e-4.
    pub fn reference_scale() -> Self {
        Self {
            epochs: 5,
            batch_size: 512,
            lr: 1e-4,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::Config("clip_norm must be non-negative".into()));
        }
        if self.max_steps == Some(0) || self.checkpoint_every == Some(0) {
            return Err(Error::Config("max_steps and checkpoint_every must be positive".into()));
        }
        Ok(())
    }
}

/// Whether a labeled triplet belongs to the positive training subset.
pub fn is_positive(l: &LabeledTriplet) -> bool {
    l.annotation.delta_raw() > 0.0 && l.annotation.s2 > 0.5
}

/// One row of the loss curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub epoch: usize,
    /// Mean per-token NLL of the batch.
    pub train_nll: f64,
    /// Set on the last step of each epoch when a validation set is given.
    pub valid_ppl: Option<f64>,
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("step,train_nll,valid_ppl\n");
    for p in curve {
        let v = p.valid_ppl.map(|v| v.to_string()).unwrap_or_default();
        writeln!(s, "{},{},{}", p.step, p.train_nll, v).expect("string write");
    }
    s
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    std::fs::write(path, curve_csv(curve)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StopReason {
    EpochsDone,
    EarlyStop,
    MaxSteps,
    /// A non-finite loss or gradient; the model holds the last good parameters.
    NonFinite { step: usize, detail: String },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub optimizer: AdamState,
    pub curve: Vec<CurvePoint>,
    pub steps: usize,
    pub epochs: usize,
    pub best_valid_ppl: Option<f64>,
    pub stop: StopReason,
}

/// `exp(total NLL / total target tokens)`, targets including the end marker.
pub fn perplexity(model: &Model, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Data("perplexity of an empty corpus".into()));
    }
    let mut total = 0.0;
    let mut tokens = 0;
    for chunk in examples.chunks(64) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let (nll, n) = model.nll(&refs)?;
        total += nll;
        tokens += n;
    }
    Ok((total / tokens as f64).exp())
}

/// Called with the current model, optimizer and step count.
pub type CheckpointHook<'a> = dyn FnMut(&Model, &AdamState, usize) -> Result<()> + 'a;

/// Mini-batch training. Each epoch reshuffles with a generator seeded from
/// `(seed, epoch)`, so runs are reproducible bit for bit.
pub fn train(model: Model, train_set: &[Example], valid_set: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_hook(model, train_set, valid_set, cfg, &mut |_, _, _| Ok(()))
}

pub fn train_with_hook(
    mut model: Model,
    train_set: &[Example],
    valid_set: &[Example],
    cfg: &TrainConfig,
    hook: &mut CheckpointHook<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut adam = AdamState::new(model.params(), cfg.lr)?;
    let mut curve = Vec::new();
    let mut steps = 0;
    let mut best: Option<(f64, Model)> = None;
    let mut stale = 0;
    let mut stop = StopReason::EpochsDone;
    let mut epochs = 0;

    'epochs: for epoch in 0..cfg.epochs {
        epochs = epoch + 1;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        for batch in order.chunks(cfg.batch_size) {
            let examples: Vec<&Example> = batch.iter().map(|&i| &train_set[i]).collect();
            let (mean, mut grads) = {
                let mut g = Graph::new();
                let (loss, tokens) = model.batch_loss(&mut g, &examples)?;
                let mean = g.affine(loss, 1.0 / tokens as f64, 0.0);
                let value = g.value(mean).item();
                if !value.is_finite() {
                    stop = StopReason::NonFinite {
                        step: steps,
                        detail: format!("loss {value}"),
                    };
                    break 'epochs;
                }
                (value, g.backward(mean)?.into_param_map())
            };
            if cfg.clip_norm > 0.0 {
                clip_global_norm(&mut grads, cfg.clip_norm);
            }
            match adam.step(model.params_mut(), &grads) {
                Ok(()) => {}
                Err(Error::Optimizer { param, reason }) => {
                    stop = StopReason::NonFinite {
                        step: steps,
                        detail: format!("{reason} in `{param}`"),
                    };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            steps += 1;
            curve.push(CurvePoint {
                step: steps,
                epoch,
                train_nll: mean,
                valid_ppl: None,
            });
            if cfg.checkpoint_every.is_some_and(|k| steps % k == 0) {
                hook(&model, &adam, steps)?;
            }
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                stop = StopReason::MaxSteps;
                break 'epochs;
            }
        }
        if !valid_set.is_empty() {
            let ppl = perplexity(&model, valid_set)?;
            if let Some(last) = curve.last_mut() {
                last.valid_ppl = Some(ppl);
            }
            if best.as_ref().is_none_or(|(b, _)| ppl < *b) {
                best = Some((ppl, model.clone()));
                stale = 0;
            } else {
                stale += 1;
                if cfg.patience > 0 && stale >= cfg.patience {
                    stop = StopReason::EarlyStop;
                    break;
                }
            }
        }
    }

    let best_valid_ppl = best.as_ref().map(|(p, _)| *p);
    if let (false, Some((_, m))) = (matches!(stop, StopReason::NonFinite { .. }), best) {
        model = m;
    }
    Ok(TrainOutcome {
        model,
        optimizer: adam,
        curve,
        steps,
        epochs,
        best_valid_ppl,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotion::EmotionAnnotation;
    use crate::model::{Arch, LambdaSource, ModelConfig};

    fn toy() -> ModelConfig {
        ModelConfig {
            arch: Arch::Eem,
            lambda_source: LambdaSource::Learned,
            d_emb: 4,
            d_h: 6,
            d_z: 6,
            layers: 1,
            vocab_size: 10,
            max_len: 5,
        }
    }

    fn data() -> Vec<Example> {
        (0..6)
            .map(|i| Example {
                src: vec![4 + i % 3, 5 + i % 4],
                tgt: vec![6 + i % 2],
                annotation: Some(EmotionAnnotation::new(0.5, (i as f64) / 6.0).unwrap()),
            })
            .collect()
    }

    #[test]
    fn zero_output_ppl_is_vocab_size() {
        let mut m = Model::build(toy(), 1).unwrap();
        m.params_mut().by_name_mut("output.w_o").unwrap().data_mut().fill(0.0);
        let ppl = perplexity(&m, &data()).unwrap();
        assert!((ppl - 10.0).abs() < 1e-12, "{ppl}");
        assert!(perplexity(&m, &[]).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::desk()
        };
        let run = || {
            let out = train(Model::build(toy(), 3).unwrap(), &data(), &data()[..2], &cfg).unwrap();
            serde_json::to_string(out.model.params()).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_goes_down() {
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 6,
            lr: 1e-2,
            patience: 0,
            ..TrainConfig::desk()
        };
        let out = train(Model::build(toy(), 3).unwrap(), &data(), &[], &cfg).unwrap();
        let first = out.curve.first().unwrap().train_nll;
        let last = out.curve.last().unwrap().train_nll;
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn non_finite_keeps_last_good() {
        let mut m = Model::build(toy(), 3).unwrap();
        m.params_mut().by_name_mut("lambda.b").unwrap().data_mut()[0] = f64::NAN;
        let out = train(m.clone(), &data(), &[], &TrainConfig::desk()).unwrap();
        assert!(matches!(out.stop, StopReason::NonFinite { step: 0, .. }));
        assert_eq!(out.steps, 0);
        assert_eq!(
            serde_json::to_string(out.model.params()).unwrap(),
            serde_json::to_string(m.params()).unwrap()
        );
    }

    #[test]
    fn csv_layout() {
        let c = vec![
            CurvePoint { step: 1, epoch: 0, train_nll: 2.5, valid_ppl: None },
            CurvePoint { step: 2, epoch: 0, train_nll: 2.0, valid_ppl: Some(7.0) },
        ];
        assert_eq!(curve_csv(&c), "step,train_nll,valid_ppl\n1,2.5,\n2,2,7\n");
    }
}
