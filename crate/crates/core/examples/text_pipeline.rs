//! Normalization, tokenization, filtering, splitting and vocabulary building.
//!
//! `cargo run --release --example text_pipeline`

use eem::experiment::{split_records, PrepareConfig};
use eem::text::{build_vocab, filter_triplet, normalize_text, synth_corpus, tokenize, Record, Triplet};

fn main() -> eem::Result<()> {
    for raw in ["I'm SO Sad!!", "see https://x.y now", "\u{201c}ok\u{201d}"] {
        let norm = normalize_text(raw);
        println!("{raw:?} -> {norm:?} -> {:?}", tokenize(&norm));
    }

    let rec = Record {
        id: None,
        u1: "I had a café latte".into(),
        r1: "nice".into(),
        u2: "yes".into(),
        s1: None,
        s2: None,
        delta_norm: None,
        gt_valence_u1: None,
        gt_valence_u2: None,
        r1_family: None,
    };
    println!("non-ASCII record kept: {}", filter_triplet(&Triplet::from_record(&rec)));

    let records = synth_corpus(2000, 7)?;
    println!("first synthetic record: {}", serde_json::to_string(&records[0])?);
    let parts = split_records(&records, &PrepareConfig::default())?;
    println!(
        "split: train {} valid {} simulator {} eval {} (dropped {})",
        parts.train.len(),
        parts.valid.len(),
        parts.simulator.len(),
        parts.eval.len(),
        parts.dropped
    );
    let vocab = build_vocab(&parts.train, 2000)?;
    let ids = vocab.encode(&parts.eval[0].u1);
    println!("vocab size {}; eval U1 {:?} -> {ids:?}", vocab.len(), parts.eval[0].u1);
    Ok(())
}
