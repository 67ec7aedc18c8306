//! The end-to-end pipeline: prepare a corpus, train the simulator and the
//! generators, then sweep λ on a held-out slice.

use serde::{Deserialize, Serialize};

use crate::decoding::DecodeConfig;
use crate::emotion::{label_corpus, LabeledTriplet, LexiconScorer};
use crate::error::{Error, Result};
use crate::evaluation::{
    check_disjoint, elicitation_eval, lambda_sweep, simulator_vocab, train_user_simulator, NeuralGenerator,
    NeuralSimulator, Sweep,
};
use crate::model::{Arch, Example, Model, ModelConfig};
use crate::text::{build_vocab, filter_triplet, split_corpus, synth_corpus, Record, SplitSpec, Triplet, Vocab};
use crate::training::{is_positive, perplexity, train, StopReason, TrainConfig, TrainOutcome};

/// Labeled, split data with its vocabularies.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub vocab: Vocab,
    /// `vocab` plus the separator.
    pub sim_vocab: Vocab,
    pub train: Vec<LabeledTriplet>,
    pub valid: Vec<LabeledTriplet>,
    /// Held-out slice for the user simulator.
    pub simulator: Vec<LabeledTriplet>,
    /// Held-out slice for elicitation evaluation.
    pub eval: Vec<LabeledTriplet>,
    /// Records dropped by preprocessing.
    pub dropped: usize,
}

impl PreparedData {
    /// Asserts that the four parts share no record.
    pub fn check_disjoint(&self) -> Result<()> {
        check_disjoint(&[
            ("train", &self.train),
            ("valid", &self.valid),
            ("simulator", &self.simulator),
            ("eval", &self.eval),
        ])
    }

    pub fn examples(&self, part: &[LabeledTriplet]) -> Vec<Example> {
        part.iter().map(|l| Example::from_labeled(l, &self.vocab)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareConfig {
    pub split: SplitSpec,
    /// Share of the test part given to the simulator; the rest is for evaluation.
    pub sim_fraction: f64,
    pub vocab_cap: usize,
    pub seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            sim_fraction: 0.9,
            vocab_cap: 2000,
            seed: 0,
        }
    }
}

/// Unlabeled parts of a prepared corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSplits {
    pub train: Vec<Triplet>,
    pub valid: Vec<Triplet>,
    pub simulator: Vec<Triplet>,
    pub eval: Vec<Triplet>,
    pub dropped: usize,
}

/// Normalizes, filters, numbers and splits raw records. Ids are positions
/// in the filtered corpus.
pub fn split_records(records: &[Record], cfg: &PrepareConfig) -> Result<CorpusSplits> {
    if !(0.0..=1.0).contains(&cfg.sim_fraction) {
        return Err(Error::Config(format!("sim_fraction {} outside [0, 1]", cfg.sim_fraction)));
    }
    let mut kept: Vec<Triplet> = records.iter().map(Triplet::from_record).filter(filter_triplet).collect();
    let dropped = records.len() - kept.len();
    for (i, t) in kept.iter_mut().enumerate() {
        t.id = Some(i);
    }
    let parts = split_corpus(&kept, &cfg.split, cfg.seed)?;
    let n_sim = (((parts.test.len() as f64) * cfg.sim_fraction).round() as usize).min(parts.test.len());
    let (simulator, eval) = parts.test.split_at(n_sim);
    Ok(CorpusSplits {
        simulator: simulator.to_vec(),
        eval: eval.to_vec(),
        train: parts.train,
        valid: parts.valid,
        dropped,
    })
}

/// [`split_records`], then labels every part and builds the vocabulary
/// from the training part.
pub fn prepare(records: &[Record], cfg: &PrepareConfig, scorer: &LexiconScorer) -> Result<PreparedData> {
    let parts = split_records(records, cfg)?;
    let vocab = build_vocab(&parts.train, cfg.vocab_cap)?;
    let data = PreparedData {
        sim_vocab: simulator_vocab(&vocab),
        vocab,
        train: label_corpus(&parts.train, scorer)?,
        valid: label_corpus(&parts.valid, scorer)?,
        simulator: label_corpus(&parts.simulator, scorer)?,
        eval: label_corpus(&parts.eval, scorer)?,
        dropped: parts.dropped,
    };
    data.check_disjoint()?;
    Ok(data)
}

/// Network sizes shared by every trained model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub d_emb: usize,
    pub d_h: usize,
    pub d_z: usize,
    pub layers: usize,
    pub max_len: usize,
}

impl Default for Dims {
    fn default() -> Self {
        let d = ModelConfig::desk(Arch::Eem, 4);
        Self {
            d_emb: d.d_emb,
            d_h: d.d_h,
            d_z: d.d_z,
            layers: d.layers,
            max_len: d.max_len,
        }
    }
}

impl Dims {
    pub fn config(&self, arch: Arch, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            arch,
            lambda_source: Default::default(),
            d_emb: self.d_emb,
            d_h: self.d_h,
            d_z: self.d_z,
            layers: self.layers,
            vocab_size,
            max_len: self.max_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Synthetic corpus size.
    pub n: usize,
    pub seed: u64,
    pub prepare: PrepareConfig,
    pub dims: Dims,
    pub generator_train: TrainConfig,
    pub simulator_train: TrainConfig,
    pub decode: DecodeConfig,
    pub grid: Vec<f64>,
    pub archs: Vec<Arch>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 30_000,
            seed: 7,
            prepare: PrepareConfig::default(),
            dims: Dims::default(),
            generator_train: TrainConfig {
                epochs: 6,
                patience: 2,
                ..TrainConfig::desk()
            },
            simulator_train: TrainConfig {
                epochs: 12,
                patience: 2,
                ..TrainConfig::desk()
            },
            decode: DecodeConfig::default(),
            grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            archs: vec![Arch::Eem, Arch::Encdec, Arch::EemNoDualDec],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub epochs: usize,
    pub best_valid_ppl: Option<f64>,
    pub stop: StopReason,
}

impl From<&TrainOutcome> for TrainSummary {
    fn from(o: &TrainOutcome) -> Self {
        Self {
            steps: o.steps,
            epochs: o.epochs,
            best_valid_ppl: o.best_valid_ppl,
            stop: o.stop.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchResult {
    pub arch: Arch,
    pub training: TrainSummary,
    /// Perplexity on the evaluation slice.
    pub ppl: f64,
    pub sweep: Sweep,
}

impl ArchResult {
    pub fn s2_at(&self, lambda: f64) -> Option<f64> {
        self.sweep.rows.iter().find(|r| r.lambda == lambda).map(|r| r.mean_s2_hat)
    }

    /// Mean `ŝ2` at the largest grid point minus that at the smallest.
    pub fn gap(&self) -> f64 {
        let rows = &self.sweep.rows;
        rows[rows.len() - 1].mean_s2_hat - rows[0].mean_s2_hat
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub sizes: [usize; 4],
    pub vocab_size: usize,
    pub simulator: TrainSummary,
    pub simulator_ppl: f64,
    pub results: Vec<ArchResult>,
}

impl ExperimentReport {
    pub fn result(&self, arch: Arch) -> Option<&ArchResult> {
        self.results.iter().find(|r| r.arch == arch)
    }
}

/// Trains and evaluates one generator architecture on prepared data.
pub fn run_arch(
    data: &PreparedData,
    arch: Arch,
    cfg: &ExperimentConfig,
    simulator: &NeuralSimulator<'_>,
    scorer: &LexiconScorer,
) -> Result<(Model, ArchResult)> {
    let mut train_set = data.train.clone();
    if cfg.generator_train.positive_subset {
        train_set.retain(is_positive);
    }
    let model = Model::build(cfg.dims.config(arch, data.vocab.len()), cfg.generator_train.seed)?;
    let out = train(model, &data.examples(&train_set), &data.examples(&data.valid), &cfg.generator_train)?;
    let model = out.model.clone();
    let ppl = perplexity(&model, &data.examples(&data.eval))?;
    let generator = NeuralGenerator {
        model: &model,
        vocab: &data.vocab,
        decode: DecodeConfig {
            max_len: cfg.dims.max_len,
            ..cfg.decode
        },
    };
    let sweep = if arch.needs_annotation() {
        lambda_sweep(&generator, simulator, scorer, &data.eval, &cfg.grid)?
    } else {
        // λ has no effect; one pass stands for every grid point.
        let row = elicitation_eval(&generator, 1.0, simulator, scorer, &data.eval)?;
        Sweep {
            rows: cfg.grid.iter().map(|&l| crate::evaluation::EvalRow { lambda: l, ..row.clone() }).collect(),
            spearman: 0.0,
            degenerate: true,
        }
    };
    Ok((
        model,
        ArchResult {
            arch,
            training: TrainSummary::from(&out),
            ppl,
            sweep,
        },
    ))
}

/// Synthesizes, prepares, trains the simulator and every configured architecture.
/// `log` receives progress lines.
pub fn run_experiment(cfg: &ExperimentConfig, log: &mut dyn FnMut(&str)) -> Result<ExperimentReport> {
    let scorer = LexiconScorer::default();
    let records = synth_corpus(cfg.n, cfg.seed)?;
    let data = prepare(&records, &PrepareConfig { seed: cfg.seed, ..cfg.prepare.clone() }, &scorer)?;
    log(&format!(
        "data: train {} valid {} simulator {} eval {} (vocab {})",
        data.train.len(),
        data.valid.len(),
        data.simulator.len(),
        data.eval.len(),
        data.vocab.len()
    ));
    let sim_cfg = cfg.dims.config(Arch::Encdec, data.sim_vocab.len());
    let sim_out = train_user_simulator(
        &data.simulator,
        &data.valid,
        &data.train,
        &data.sim_vocab,
        &sim_cfg,
        &cfg.simulator_train,
    )?;
    let sim_ex: Vec<Example> = data.eval.iter().map(|l| Example::simulator(l, &data.sim_vocab)).collect();
    let simulator_ppl = perplexity(&sim_out.model, &sim_ex)?;
    log(&format!("simulator: {} steps, eval ppl {simulator_ppl:.3}", sim_out.steps));
    let simulator = NeuralSimulator {
        model: &sim_out.model,
        vocab: &data.sim_vocab,
    };
    let mut results = Vec::new();
    for &arch in &cfg.archs {
        let (_, r) = run_arch(&data, arch, cfg, &simulator, &scorer)?;
        log(&format!(
            "{arch}: {} steps, ppl {:.3}, s2_hat by λ {:?}, rho {:.3}",
            r.training.steps,
            r.ppl,
            r.sweep.rows.iter().map(|x| (x.lambda, (x.mean_s2_hat * 1000.0).round() / 1000.0)).collect::<Vec<_>>(),
            r.sweep.spearman
        ));
        results.push(r);
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        sizes: [data.train.len(), data.valid.len(), data.simulator.len(), data.eval.len()],
        vocab_size: data.vocab.len(),
        simulator: TrainSummary::from(&sim_out),
        simulator_ppl,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prepare_splits_are_disjoint_and_sized() {
        let recs = synth_corpus(1000, 3).unwrap();
        let d = prepare(&recs, &PrepareConfig::default(), &LexiconScorer::default()).unwrap();
        assert_eq!(d.train.len(), 800);
        assert_eq!(d.valid.len(), 100);
        assert_eq!(d.simulator.len(), 90);
        assert_eq!(d.eval.len(), 10);
        assert!(d.sim_vocab.len() == d.vocab.len() + 1);
        let mut leaked = d.clone();
        leaked.simulator.push(leaked.train[0].clone());
        assert!(matches!(leaked.check_disjoint(), Err(Error::Contract(_))));
    }
}
