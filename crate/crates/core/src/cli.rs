//! The `eem` command line: one subcommand per pipeline stage plus a chat REPL.
//!
//! Configuration resolves as built-in defaults, then a JSON file given with
//! `--config` (deep-merged), then flags. The resolved [`RunConfig`] and the
//! hashes of every input file are embedded in each artifact. File paths are
//! kept out of the embedded config, so the same inputs give the same bytes
//! wherever they live.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::checkpoint::{Checkpoint, RngState};
use crate::decoding::{decode, AttentionDump, DecodeConfig};
use crate::emotion::{label_corpus, LabeledTriplet, LexiconScorer};
use crate::error::{Error, Result};
use crate::evaluation::{
    check_disjoint, elicitation_eval, lambda_sweep, simulator_vocab, EvalRow, NeuralGenerator, NeuralSimulator,
};
use crate::experiment::{split_records, PrepareConfig};
use crate::model::{Arch, Example, LambdaSource, Model, ModelConfig};
use crate::provenance::{read_json, sha256_file, write_json, write_manifest, Provenance};
use crate::text::{
    build_vocab, normalize_text, read_jsonl, tokenize, write_jsonl, Record, SynthManifest, Triplet, Vocab, SEP_TOKEN,
};
use crate::training::{is_positive, perplexity, train, write_curve_csv, TrainConfig};

/// Network shape and variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub arch: Arch,
    pub lambda_source: LambdaSource,
    pub d_emb: usize,
    pub d_h: usize,
    pub d_z: usize,
    pub layers: usize,
    pub max_len: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::desk(Arch::Eem, 4);
        Self {
            arch: d.arch,
            lambda_source: d.lambda_source,
            d_emb: d.d_emb,
            d_h: d.d_h,
            d_z: d.d_z,
            layers: d.layers,
            max_len: d.max_len,
        }
    }
}

impl ModelSection {
    pub fn config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            arch: self.arch,
            lambda_source: self.lambda_source,
            d_emb: self.d_emb,
            d_h: self.d_h,
            d_z: self.d_z,
            layers: self.layers,
            vocab_size,
            max_len: self.max_len,
        }
    }
}

/// Which model `train` produces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Generator,
    /// Encoder-decoder mapping `U1 ⊕ <sep> ⊕ R1` to `U2`.
    Simulator,
}

/// Fully resolved settings of one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds synthesis, splitting, initialization and shuffling.
    pub seed: u64,
    /// Synthetic corpus size.
    pub n: usize,
    pub prepare: PrepareConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub role: Role,
    pub decode: DecodeConfig,
    pub lambda: f64,
    pub grid: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n: 1000,
            prepare: PrepareConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::desk(),
            role: Role::Generator,
            decode: DecodeConfig::default(),
            lambda: 1.0,
            grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

/// Recursively overlays `patch` onto `base`; objects merge, anything else replaces.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

impl RunConfig {
    /// Defaults overlaid with a JSON file.
    pub fn from_file(path: Option<&Path>) -> Result<Self> {
        let mut value = serde_json::to_value(Self::default())?;
        if let Some(p) = path {
            let patch: Value = read_json(p)?;
            if !patch.is_object() {
                return Err(Error::Config(format!("{}: config must be a JSON object", p.display())));
            }
            merge_json(&mut value, patch);
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Copies the top-level seed into the sections and checks every section.
    fn finish(mut self) -> Result<Self> {
        self.prepare.seed = self.seed;
        self.train.seed = self.seed;
        self.train.validate()?;
        self.decode.validate()?;
        self.prepare.split.validate()?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Domain(format!("λ = {} is outside [0, 1]", self.lambda)));
        }
        Ok(self)
    }
}

#[derive(Parser, Debug)]
#[command(name = "eem", version, about = "Emotion-eliciting response generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON file overlaid on the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Generator tables; the bundled ones by default.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Normalize, tokenize, filter and split a corpus; build the vocabulary.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        vocab_cap: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Attach emotion annotations.
    Label {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a generator or the user simulator.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        arch: Option<String>,
        #[arg(long, value_enum)]
        role: Option<Role>,
        /// Corpus files that must not share records with the training data.
        #[arg(long)]
        exclude: Vec<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        positive_subset: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Decode a response for every record of a corpus.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        width: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Perplexity and elicitation scores at one λ.
    Eval {
        #[arg(long, default_value = "checkpoint.json")]
        checkpoint: PathBuf,
        #[arg(long, default_value = "simulator.json")]
        simulator: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Elicitation scores over a λ grid with their rank correlation.
    Sweep {
        #[arg(long, default_value = "checkpoint.json")]
        checkpoint: PathBuf,
        #[arg(long, default_value = "simulator.json")]
        simulator: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated λ values.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Attention weights of both heads for one input.
    DumpAttn {
        #[arg(long, default_value = "checkpoint.json")]
        checkpoint: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Interactive single-turn chat.
    Chat {
        #[arg(long, default_value = "checkpoint.json")]
        checkpoint: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        width: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

/// Standard streams of one invocation.
pub struct Io<'a> {
    pub input: &'a mut dyn BufRead,
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code: 0 success, 1 usage error, 2 data or contract error.
pub fn dispatch<I, T>(argv: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(io.err, "{text}");
                1
            } else {
                let _ = write!(io.out, "{text}");
                0
            };
        }
    };
    match run(cli.command, io) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            match e {
                Error::Config(_) => 1,
                _ => 2,
            }
        }
    }
}

fn resolve(common: &Common, apply: impl FnOnce(&mut RunConfig) -> Result<()>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    apply(&mut cfg)?;
    cfg.finish()
}

fn provenance(command: &str, cfg: &RunConfig, common: &Common) -> Result<Provenance> {
    let p = Provenance::new(command, cfg)?;
    match &common.config {
        Some(path) => p.input("config", path),
        None => Ok(p),
    }
}

fn scorer(lexicon: Option<&Path>) -> Result<LexiconScorer> {
    match lexicon {
        Some(p) => LexiconScorer::load(p),
        None => Ok(LexiconScorer::default()),
    }
}

/// Reads a corpus and labels it; stored scores win over the lexicon.
fn load_labeled(path: &Path, scorer: &LexiconScorer) -> Result<Vec<LabeledTriplet>> {
    let records: Vec<Record> = read_jsonl(path)?;
    let triplets: Vec<Triplet> = records.iter().map(Triplet::from_record).collect();
    label_corpus(&triplets, scorer)
}

fn load_annotated(path: &Path, required: bool) -> Result<Vec<LabeledTriplet>> {
    let records: Vec<Record> = read_jsonl(path)?;
    if required {
        if let Some(i) = records.iter().position(|r| r.s1.is_none() || r.s2.is_none()) {
            return Err(Error::Contract(format!(
                "{}: record {i} has no emotion annotation; run `eem label` first",
                path.display()
            )));
        }
    }
    let triplets: Vec<Triplet> = records.iter().map(Triplet::from_record).collect();
    label_corpus(&triplets, &LexiconScorer::default())
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, Model)> {
    let c = Checkpoint::load(path)?;
    let m = c.model()?;
    Ok((c, m))
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T, io: &mut Io<'_>) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let s = serde_json::to_string_pretty(value)?;
            writeln!(io.out, "{s}").map_err(|e| Error::io("<stdout>", e))
        }
    }
}

#[derive(Serialize)]
struct Generated {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<usize>,
    u1: String,
    response: String,
    lambda: f64,
    log_prob: f64,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    ppl: f64,
    row: EvalRow,
    config_hash: String,
    checkpoint_sha256: String,
    simulator_sha256: String,
    provenance: &'a Provenance,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    rows: Vec<EvalRow>,
    spearman: f64,
    degenerate: bool,
    config_hash: String,
    provenance: &'a Provenance,
}

#[derive(Serialize)]
struct AttnReport<'a> {
    #[serde(flatten)]
    dump: AttentionDump,
    provenance: &'a Provenance,
}

fn lambda_flag(cfg: &mut RunConfig, lambda: Option<f64>) {
    if let Some(l) = lambda {
        cfg.lambda = l;
    }
}

fn run(command: Command, io: &mut Io<'_>) -> Result<()> {
    match command {
        Command::Synth {
            n,
            out,
            manifest,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                if let Some(n) = n {
                    c.n = n;
                }
                Ok(())
            })?;
            let tables = match &manifest {
                Some(p) => SynthManifest::load(p)?,
                None => SynthManifest::builtin(),
            };
            let records = tables.generate(cfg.n, cfg.seed)?;
            write_jsonl(&out, &records)?;
            let mut prov = provenance("synth", &cfg, &common)?;
            if let Some(p) = &manifest {
                prov = prov.input("manifest", p)?;
            }
            write_manifest(&out, &prov)?;
            let _ = writeln!(io.err, "wrote {} records to {}", records.len(), out.display());
        }
        Command::Prepare {
            input,
            out_dir,
            vocab_cap,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                if let Some(v) = vocab_cap {
                    c.prepare.vocab_cap = v;
                }
                Ok(())
            })?;
            let records: Vec<Record> = read_jsonl(&input)?;
            let parts = split_records(&records, &cfg.prepare)?;
            let vocab = build_vocab(&parts.train, cfg.prepare.vocab_cap)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            let prov = provenance("prepare", &cfg, &common)?.input("input", &input)?;
            for (name, part) in [
                ("train", &parts.train),
                ("valid", &parts.valid),
                ("simulator", &parts.simulator),
                ("eval", &parts.eval),
            ] {
                let path = out_dir.join(format!("{name}.jsonl"));
                let recs: Vec<Record> = part.iter().map(Triplet::to_record).collect();
                write_jsonl(&path, &recs)?;
                write_manifest(&path, &prov)?;
            }
            let vpath = out_dir.join("vocab.json");
            write_json(&vpath, &vocab)?;
            write_manifest(&vpath, &prov)?;
            let _ = writeln!(
                io.err,
                "train {} valid {} simulator {} eval {} dropped {} vocab {}",
                parts.train.len(),
                parts.valid.len(),
                parts.simulator.len(),
                parts.eval.len(),
                parts.dropped,
                vocab.len()
            );
        }
        Command::Label {
            input,
            out,
            lexicon,
            common,
        } => {
            let cfg = resolve(&common, |_| Ok(()))?;
            let labeled = load_labeled(&input, &scorer(lexicon.as_deref())?)?;
            let recs: Vec<Record> = labeled.iter().map(LabeledTriplet::to_record).collect();
            write_jsonl(&out, &recs)?;
            let mut prov = provenance("label", &cfg, &common)?.input("input", &input)?;
            if let Some(p) = &lexicon {
                prov = prov.input("lexicon", p)?;
            }
            write_manifest(&out, &prov)?;
        }
        Command::Train {
            train: train_path,
            valid,
            vocab,
            out,
            curve,
            arch,
            role,
            exclude,
            epochs,
            batch_size,
            lr,
            max_steps,
            positive_subset,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                if let Some(a) = &arch {
                    c.model.arch = a.parse()?;
                }
                if let Some(r) = role {
                    c.role = r;
                }
                if let Some(e) = epochs {
                    c.train.epochs = e;
                }
                if let Some(b) = batch_size {
                    c.train.batch_size = b;
                }
                if let Some(l) = lr {
                    c.train.lr = l;
                }
                if max_steps.is_some() {
                    c.train.max_steps = max_steps;
                }
                c.train.positive_subset |= positive_subset;
                if c.role == Role::Simulator {
                    c.model.arch = Arch::Encdec;
                }
                Ok(())
            })?;
            let needs = cfg.role == Role::Generator && cfg.model.arch.needs_annotation();
            let mut train_set = load_annotated(&train_path, needs)?;
            let valid_set = match &valid {
                Some(p) => load_annotated(p, needs)?,
                None => Vec::new(),
            };
            let mut parts: Vec<(String, Vec<LabeledTriplet>)> = vec![("train".into(), train_set.clone())];
            if valid.is_some() {
                parts.push(("valid".into(), valid_set.clone()));
            }
            for p in &exclude {
                parts.push((format!("excluded {}", p.display()), load_annotated(p, false)?));
            }
            let named: Vec<(&str, &[LabeledTriplet])> = parts.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
            check_disjoint(&named)?;

            let base_vocab: Vocab = read_json(&vocab)?;
            let (vocab_used, examples): (Vocab, Box<dyn Fn(&[LabeledTriplet], &Vocab) -> Vec<Example>>) = match cfg.role {
                Role::Generator => {
                    if cfg.train.positive_subset {
                        train_set.retain(is_positive);
                    }
                    (base_vocab, Box::new(|s, v| s.iter().map(|l| Example::from_labeled(l, v)).collect()))
                }
                Role::Simulator => (
                    simulator_vocab(&base_vocab),
                    Box::new(|s, v| s.iter().map(|l| Example::simulator(l, v)).collect()),
                ),
            };
            let model = Model::build(cfg.model.config(vocab_used.len()), cfg.seed)?;
            let outcome = train(
                model,
                &examples(&train_set, &vocab_used),
                &examples(&valid_set, &vocab_used),
                &cfg.train,
            )?;
            let mut prov = provenance("train", &cfg, &common)?
                .input("train", &train_path)?
                .input("vocab", &vocab)?;
            if let Some(p) = &valid {
                prov = prov.input("valid", p)?;
            }
            for (i, p) in exclude.iter().enumerate() {
                prov = prov.input(&format!("exclude.{i}"), p)?;
            }
            let ckpt = Checkpoint::new(
                &outcome.model,
                &vocab_used,
                Some(outcome.optimizer.clone()),
                RngState {
                    seed: cfg.seed,
                    steps: outcome.steps as u64,
                },
                prov.clone(),
            )?;
            ckpt.save(&out)?;
            if let Some(c) = &curve {
                write_curve_csv(c, &outcome.curve)?;
                write_manifest(c, &prov)?;
            }
            let _ = writeln!(
                io.err,
                "{} steps over {} epochs ({:?}); best valid ppl {:?}",
                outcome.steps, outcome.epochs, outcome.stop, outcome.best_valid_ppl
            );
        }
        Command::Generate {
            checkpoint,
            input,
            out,
            lambda,
            width,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                lambda_flag(c, lambda);
                if let Some(w) = width {
                    c.decode.width = w;
                }
                Ok(())
            })?;
            let (ckpt, model) = load_checkpoint(&checkpoint)?;
            let records: Vec<Record> = read_jsonl(&input)?;
            let mut rows = Vec::with_capacity(records.len());
            for r in &records {
                let t = Triplet::from_record(r);
                let d = decode(&model, &ckpt.vocab.encode(&t.u1), cfg.lambda, &cfg.decode)?;
                rows.push(Generated {
                    id: r.id,
                    u1: crate::text::join_tokens(&t.u1),
                    response: crate::text::join_tokens(&ckpt.vocab.decode(&d.tokens)?),
                    lambda: cfg.lambda,
                    log_prob: d.log_prob,
                });
            }
            write_jsonl(&out, &rows)?;
            let prov = provenance("generate", &cfg, &common)?
                .input("checkpoint", &checkpoint)?
                .input("input", &input)?;
            write_manifest(&out, &prov)?;
        }
        Command::Eval {
            checkpoint,
            simulator,
            input,
            out,
            lambda,
            lexicon,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                lambda_flag(c, lambda);
                Ok(())
            })?;
            let (ckpt, model) = load_checkpoint(&checkpoint)?;
            let (sim_ckpt, sim_model) = load_simulator(&simulator)?;
            let sc = scorer(lexicon.as_deref())?;
            let corpus = load_labeled(&input, &sc)?;
            let examples: Vec<Example> = corpus.iter().map(|l| Example::from_labeled(l, &ckpt.vocab)).collect();
            let ppl = perplexity(&model, &examples)?;
            let generator = NeuralGenerator {
                model: &model,
                vocab: &ckpt.vocab,
                decode: cfg.decode,
            };
            let sim = NeuralSimulator {
                model: &sim_model,
                vocab: &sim_ckpt.vocab,
            };
            let row = elicitation_eval(&generator, cfg.lambda, &sim, &sc, &corpus)?;
            let mut prov = provenance("eval", &cfg, &common)?
                .input("checkpoint", &checkpoint)?
                .input("simulator", &simulator)?
                .input("input", &input)?;
            if let Some(p) = &lexicon {
                prov = prov.input("lexicon", p)?;
            }
            let report = EvalReport {
                ppl,
                row,
                config_hash: prov.config_hash(),
                checkpoint_sha256: sha256_file(&checkpoint)?,
                simulator_sha256: sha256_file(&simulator)?,
                provenance: &prov,
            };
            emit_json(out.as_deref(), &report, io)?;
        }
        Command::Sweep {
            checkpoint,
            simulator,
            input,
            out,
            grid,
            lexicon,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                if let Some(g) = grid {
                    c.grid = g;
                }
                Ok(())
            })?;
            crate::evaluation::validate_grid(&cfg.grid)?;
            let (ckpt, model) = load_checkpoint(&checkpoint)?;
            let (sim_ckpt, sim_model) = load_simulator(&simulator)?;
            let sc = scorer(lexicon.as_deref())?;
            let corpus = load_labeled(&input, &sc)?;
            let generator = NeuralGenerator {
                model: &model,
                vocab: &ckpt.vocab,
                decode: cfg.decode,
            };
            let sim = NeuralSimulator {
                model: &sim_model,
                vocab: &sim_ckpt.vocab,
            };
            let sweep = lambda_sweep(&generator, &sim, &sc, &corpus, &cfg.grid)?;
            let mut prov = provenance("sweep", &cfg, &common)?
                .input("checkpoint", &checkpoint)?
                .input("simulator", &simulator)?
                .input("input", &input)?;
            if let Some(p) = &lexicon {
                prov = prov.input("lexicon", p)?;
            }
            let report = SweepReport {
                rows: sweep.rows,
                spearman: sweep.spearman,
                degenerate: sweep.degenerate,
                config_hash: prov.config_hash(),
                provenance: &prov,
            };
            emit_json(out.as_deref(), &report, io)?;
        }
        Command::DumpAttn {
            checkpoint,
            text,
            lambda,
            out,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                lambda_flag(c, lambda);
                Ok(())
            })?;
            let (ckpt, model) = load_checkpoint(&checkpoint)?;
            let src = ckpt.vocab.encode(&tokenize(&normalize_text(&text)));
            if src.is_empty() {
                return Err(Error::Data("input text has no tokens".into()));
            }
            let dc = DecodeConfig {
                trace: true,
                ..cfg.decode
            };
            let d = decode(&model, &src, cfg.lambda, &dc)?;
            let prov = provenance("dump-attn", &cfg, &common)?.input("checkpoint", &checkpoint)?;
            let report = AttnReport {
                dump: AttentionDump::new(&ckpt.vocab, &src, &d, cfg.lambda)?,
                provenance: &prov,
            };
            emit_json(out.as_deref(), &report, io)?;
        }
        Command::Chat {
            checkpoint,
            lambda,
            width,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                lambda_flag(c, lambda);
                if let Some(w) = width {
                    c.decode.width = w;
                }
                Ok(())
            })?;
            let (ckpt, model) = load_checkpoint(&checkpoint)?;
            chat_session(&model, &ckpt.vocab, cfg.lambda, &cfg.decode, io.input, io.out)?;
        }
    }
    Ok(())
}

fn load_simulator(path: &Path) -> Result<(Checkpoint, Model)> {
    let (c, m) = load_checkpoint(path)?;
    if !c.vocab.contains(SEP_TOKEN) {
        return Err(Error::Contract(format!(
            "{} is not a user simulator (vocabulary lacks {SEP_TOKEN})",
            path.display()
        )));
    }
    Ok((c, m))
}

fn format_trace(rows: &[Vec<f64>]) -> String {
    rows.iter()
        .map(|r| r.iter().map(|a| format!("{a:.2}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(" | ")
}

/// Line-oriented REPL. Each input line gets a fresh beam-search response at
/// the current λ. `/lambda v` changes λ, `/trace` toggles attention output,
/// `/quit` or end of input ends the session.
pub fn chat_session(
    model: &Model,
    vocab: &Vocab,
    lambda: f64,
    decode_cfg: &DecodeConfig,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("λ = {lambda} is outside [0, 1]")));
    }
    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(|e| Error::io("<stdout>", e));
    let mut lambda = lambda;
    let mut trace = false;
    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line).map_err(|e| Error::io("<stdin>", e))? == 0 {
            break;
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == "/quit" {
            break;
        }
        if text == "/trace" {
            trace = !trace;
            w(out, format!("trace {}", if trace { "on" } else { "off" }))?;
            continue;
        }
        if let Some(arg) = text.strip_prefix("/lambda") {
            match arg.trim().parse::<f64>() {
                Ok(v) if (0.0..=1.0).contains(&v) => {
                    lambda = v;
                    w(out, format!("lambda = {v}"))?;
                }
                Ok(v) => w(out, format!("error: λ must lie in [0, 1], got {v}; keeping {lambda}"))?,
                Err(_) => w(out, format!("error: `/lambda` needs a number; keeping {lambda}"))?,
            }
            continue;
        }
        if text.starts_with('/') {
            w(out, format!("error: unknown command `{text}`"))?;
            continue;
        }
        let src = vocab.encode(&tokenize(&normalize_text(text)));
        if src.is_empty() {
            continue;
        }
        let cfg = DecodeConfig { trace, ..*decode_cfg };
        let d = decode(model, &src, lambda, &cfg)?;
        w(out, crate::text::join_tokens(&vocab.decode(&d.tokens)?))?;
        if let Some(t) = d.trace() {
            w(out, format!("  alpha+ {}", format_trace(&t.alpha_pos)))?;
            w(out, format!("  alpha- {}", format_trace(&t.alpha_neg)))?;
        }
    }
    Ok(())
}
