//! A scripted chat session: the same REPL the `eem chat` subcommand runs.
//!
//! `cargo run --release --example chat`

use eem::cli::chat_session;
use eem::decoding::DecodeConfig;
use eem::emotion::LexiconScorer;
use eem::experiment::{prepare, PrepareConfig};
use eem::model::{Arch, Model, ModelConfig};
use eem::text::synth_corpus;
use eem::training::{train, TrainConfig};

fn main() -> eem::Result<()> {
    let data = prepare(&synth_corpus(1500, 6)?, &PrepareConfig::default(), &LexiconScorer::default())?;
    let cfg = ModelConfig {
        d_emb: 16,
        d_h: 32,
        d_z: 32,
        layers: 1,
        ..ModelConfig::desk(Arch::Eem, data.vocab.len())
    };
    let tc = TrainConfig { epochs: 3, lr: 5e-3, ..TrainConfig::desk() };
    let model = train(Model::build(cfg, 0)?, &data.examples(&data.train), &[], &tc)?.model;
    let script = "i am sad because of the exam\n/lambda 0\ni am sad because of the exam\n/lambda 1.5\n/trace\nmy dog is at the park now\n/quit\n";
    for line in script.lines() {
        println!("> {line}");
    }
    println!("---");
    let mut out = Vec::new();
    chat_session(&model, &data.vocab, 1.0, &DecodeConfig::default(), &mut script.as_bytes(), &mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}
