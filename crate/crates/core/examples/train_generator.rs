//! Trains a small EEM with early stopping, writes the loss curve, and saves a
//! checkpoint that the `eem` binary can load.
//!
//! `cargo run --release --example train_generator -- [out_dir]`

use std::path::PathBuf;

use eem::checkpoint::{Checkpoint, RngState};
use eem::emotion::LexiconScorer;
use eem::experiment::{prepare, PrepareConfig};
use eem::model::{Arch, Model, ModelConfig};
use eem::provenance::Provenance;
use eem::text::synth_corpus;
use eem::training::{curve_csv, perplexity, train, TrainConfig};

fn main() -> eem::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().to_string_lossy().into()));
    let data = prepare(&synth_corpus(3000, 5)?, &PrepareConfig::default(), &LexiconScorer::default())?;
    let cfg = ModelConfig {
        d_emb: 16,
        d_h: 32,
        d_z: 32,
        layers: 1,
        ..ModelConfig::desk(Arch::Eem, data.vocab.len())
    };
    let tc = TrainConfig {
        epochs: 4,
        lr: 5e-3,
        patience: 2,
        ..TrainConfig::desk()
    };
    let valid = data.examples(&data.valid);
    let outcome = train(Model::build(cfg, 0)?, &data.examples(&data.train), &valid, &tc)?;
    print!("{}", curve_csv(&outcome.curve).lines().filter(|l| !l.ends_with(',')).collect::<Vec<_>>().join("\n"));
    println!();
    println!(
        "{} steps, stop {:?}, eval PPL {:.3}",
        outcome.steps,
        outcome.stop,
        perplexity(&outcome.model, &data.examples(&data.eval))?
    );
    let path = out.join("example_checkpoint.json");
    Checkpoint::new(
        &outcome.model,
        &data.vocab,
        Some(outcome.optimizer.clone()),
        RngState { seed: tc.seed, steps: outcome.steps as u64 },
        Provenance::new("example train_generator", &tc)?,
    )?
    .save(&path)?;
    println!("checkpoint written to {}", path.display());
    Ok(())
}
