//! Corpus ingestion, preprocessing, vocabulary, and the synthetic generator.

mod corpus;
mod normalize;
mod synth;
mod tokenize;
mod vocab;

pub use corpus::{
    filter_triplet, load_triplets, read_jsonl, split_corpus, write_jsonl, GroundTruth, Record,
    SplitSpec, Splits, Triplet, MAX_UTTERANCE_TOKENS,
};
pub use normalize::normalize_text;
pub use synth::{synth_corpus, ByFamily, ByValence, ExpectedStats, Family, SynthManifest, Valence};
pub use tokenize::{join_tokens, tokenize};
pub use vocab::{Vocab, EOS, EOS_TOKEN, PAD, PAD_TOKEN, SEP_TOKEN, SOS, SOS_TOKEN, UNK, UNK_TOKEN};

/// Builds a vocabulary over every token of every utterance.
pub fn build_vocab(corpus: &[Triplet], cap: usize) -> crate::Result<Vocab> {
    Vocab::build(corpus.iter().flat_map(Triplet::tokens), cap)
}
