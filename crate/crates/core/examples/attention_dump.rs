//! Traced decoding: the attention of both heads over the source at every step.
//!
//! `cargo run --release --example attention_dump`

use eem::decoding::{decode, AttentionDump, DecodeConfig};
use eem::emotion::LexiconScorer;
use eem::experiment::{prepare, PrepareConfig};
use eem::model::{Arch, Model, ModelConfig};
use eem::text::{normalize_text, synth_corpus, tokenize};
use eem::training::{train, TrainConfig};

fn main() -> eem::Result<()> {
    let data = prepare(&synth_corpus(1500, 4)?, &PrepareConfig::default(), &LexiconScorer::default())?;
    let cfg = ModelConfig {
        d_emb: 16,
        d_h: 32,
        d_z: 32,
        layers: 1,
        ..ModelConfig::desk(Arch::Eem, data.vocab.len())
    };
    let tc = TrainConfig { epochs: 3, lr: 5e-3, ..TrainConfig::desk() };
    let model = train(Model::build(cfg, 0)?, &data.examples(&data.train), &[], &tc)?.model;
    let src = data.vocab.encode(&tokenize(&normalize_text("I feel so sad about my exam")));
    let lambda = 0.75;
    let d = decode(&model, &src, lambda, &DecodeConfig { trace: true, ..DecodeConfig::default() })?;
    let dump = AttentionDump::new(&data.vocab, &src, &d, lambda)?;
    println!("source: {:?}", dump.source_tokens);
    for (t, tok) in dump.generated_tokens.iter().enumerate() {
        let row = |a: &[Vec<f64>]| a[t].iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ");
        println!("{tok:>10}  α+ [{}]  α− [{}]", row(&dump.alpha_pos), row(&dump.alpha_neg));
    }
    Ok(())
}
