//! Greedy and beam decoding of a briefly trained model at several widths and λ.
//!
//! `cargo run --release --example beam_search`

use eem::decoding::{decode, DecodeConfig};
use eem::emotion::LexiconScorer;
use eem::experiment::{prepare, PrepareConfig};
use eem::model::{Arch, Model, ModelConfig};
use eem::text::{join_tokens, synth_corpus};
use eem::training::{train, TrainConfig};

fn main() -> eem::Result<()> {
    let data = prepare(&synth_corpus(1500, 3)?, &PrepareConfig::default(), &LexiconScorer::default())?;
    let cfg = ModelConfig {
        d_emb: 16,
        d_h: 32,
        d_z: 32,
        layers: 1,
        ..ModelConfig::desk(Arch::Eem, data.vocab.len())
    };
    let tc = TrainConfig {
        epochs: 3,
        lr: 5e-3,
        ..TrainConfig::desk()
    };
    let model = train(Model::build(cfg, 0)?, &data.examples(&data.train), &[], &tc)?.model;
    let u1 = &data.eval[0].triplet.u1;
    let src = data.vocab.encode(u1);
    println!("U1: {}", join_tokens(u1));
    for lambda in [0.0, 1.0] {
        for width in [1, 2, 5] {
            let d = decode(&model, &src, lambda, &DecodeConfig { width, ..DecodeConfig::default() })?;
            println!(
                "λ={lambda} width={width}: {:<45} score {:.3}",
                join_tokens(&data.vocab.decode(&d.tokens)?),
                d.score
            );
        }
    }
    Ok(())
}
