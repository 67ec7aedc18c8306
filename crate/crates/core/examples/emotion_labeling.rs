//! Lexicon scoring, Δs′, polarity buckets and corpus statistics.
//!
//! `cargo run --release --example emotion_labeling`

use eem::emotion::{delta_s_norm, discretize_polarity, distribution_stats, label_corpus, LexiconScorer};
use eem::text::{normalize_text, synth_corpus, tokenize, Triplet};

fn main() -> eem::Result<()> {
    let scorer = LexiconScorer::default();
    for text in ["thanks , i feel great now", "ugh , that makes me sad", "ok , maybe"] {
        let s = scorer.score(&tokenize(&normalize_text(text)));
        println!("{text:?}: s = {s:.2} ({:?})", discretize_polarity(s)?);
    }
    println!("Δs′(0.3, 0.7) = {}", delta_s_norm(0.3, 0.7)?);

    let triplets: Vec<Triplet> = synth_corpus(5000, 1)?.iter().map(Triplet::from_record).collect();
    let labeled = label_corpus(&triplets, &scorer)?;
    let stats = distribution_stats(&labeled)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}
