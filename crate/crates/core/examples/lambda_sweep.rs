//! Trains a user simulator on its own slice, then sweeps λ for a small EEM
//! and compares it with the copy and constant reference generators.
//!
//! `cargo run --release --example lambda_sweep`

use eem::decoding::DecodeConfig;
use eem::emotion::LexiconScorer;
use eem::evaluation::{elicitation_eval, lambda_sweep, train_user_simulator, ConstantGenerator, CopyGenerator, NeuralGenerator, NeuralSimulator};
use eem::experiment::{prepare, PrepareConfig};
use eem::model::{Arch, Model, ModelConfig};
use eem::text::synth_corpus;
use eem::training::{train, TrainConfig};

fn main() -> eem::Result<()> {
    let scorer = LexiconScorer::default();
    let prep = PrepareConfig {
        sim_fraction: 0.8,
        ..PrepareConfig::default()
    };
    let data = prepare(&synth_corpus(6000, 2)?, &prep, &scorer)?;
    let small = |arch, v| ModelConfig {
        d_emb: 16,
        d_h: 32,
        d_z: 32,
        layers: 1,
        max_len: 12,
        ..ModelConfig::desk(arch, v)
    };
    let tc = TrainConfig {
        epochs: 4,
        lr: 5e-3,
        ..TrainConfig::desk()
    };
    let sim_model = train_user_simulator(
        &data.simulator,
        &data.valid,
        &data.train,
        &data.sim_vocab,
        &small(Arch::Encdec, data.sim_vocab.len()),
        &TrainConfig { epochs: 10, ..tc.clone() },
    )?
    .model;
    let simulator = NeuralSimulator { model: &sim_model, vocab: &data.sim_vocab };

    let model = train(Model::build(small(Arch::Eem, data.vocab.len()), 0)?, &data.examples(&data.train), &[], &tc)?.model;
    let generator = NeuralGenerator { model: &model, vocab: &data.vocab, decode: DecodeConfig { max_len: 12, ..DecodeConfig::default() } };
    let sweep = lambda_sweep(&generator, &simulator, &scorer, &data.eval, &[0.0, 0.25, 0.5, 0.75, 1.0])?;
    for r in &sweep.rows {
        println!("λ={:<4} mean ŝ2 {:.3}  mean Δŝ {:+.3}  empty {}", r.lambda, r.mean_s2_hat, r.mean_delta_raw, r.empty_responses);
    }
    println!("Spearman ρ = {:.3}", sweep.spearman);

    let copy = elicitation_eval(&CopyGenerator, 1.0, &simulator, &scorer, &data.eval)?;
    let kind: Vec<String> = "thanks , you are great".split(' ').map(String::from).collect();
    let constant = elicitation_eval(&ConstantGenerator(kind), 1.0, &simulator, &scorer, &data.eval)?;
    println!("copy generator ŝ2 {:.3}, constant kind reply ŝ2 {:.3}", copy.mean_s2_hat, constant.mean_s2_hat);
    Ok(())
}
