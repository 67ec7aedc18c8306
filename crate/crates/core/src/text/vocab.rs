use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOS: usize = 2;
pub const EOS: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const SOS_TOKEN: &str = "<sos>";
pub const EOS_TOKEN: &str = "<eos>";
/// Separator between the user message and the response in simulator inputs.
pub const SEP_TOKEN: &str = "<sep>";

const SPECIALS: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, SOS_TOKEN, EOS_TOKEN];

/// Token/id bijection with the four specials at ids 0..=3.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..4] != SPECIALS {
            return Err(Error::Data("vocabulary must start with the four special tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary entry `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Ranks tokens by frequency (ties lexicographic) and keeps the top
    /// `cap - 4` after the specials.
    pub fn build<'a, I>(tokens: I, cap: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if cap < SPECIALS.len() {
            return Err(Error::Config(format!("vocabulary cap {cap} is below the 4 specials")));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        if counts.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !SPECIALS.contains(t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut list: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        list.extend(ranked.into_iter().take(cap - SPECIALS.len()).map(|(t, _)| t.to_string()));
        Self::try_from(list)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens.get(id).map(String::as_str).ok_or(Error::Index {
            what: "vocabulary id",
            index: id,
            len: self.tokens.len(),
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter().map(|&i| self.token(i).map(str::to_string)).collect()
    }

    /// A copy with `token` appended (if absent) and its id.
    pub fn with_reserved(&self, token: &str) -> (Vocab, usize) {
        let mut v = self.clone();
        if let Some(&id) = v.index.get(token) {
            return (v, id);
        }
        v.tokens.push(token.to_string());
        let id = v.tokens.len() - 1;
        v.index.insert(token.to_string(), id);
        (v, id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn frequency_order() {
        let v = Vocab::build(words("a a b"), 6).unwrap();
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);
    }

    #[test]
    fn lexicographic_tie_break() {
        let v = Vocab::build(words("y x"), 10).unwrap();
        assert_eq!(v.id("x"), 4);
        assert_eq!(v.id("y"), 5);
    }

    #[test]
    fn cap_truncates_to_unk() {
        let v = Vocab::build(words("a a a b b c"), 5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("c"), UNK);
        assert_eq!(v.encode(&["c"]), vec![UNK]);
    }

    #[test]
    fn round_trip_and_specials() {
        let v = Vocab::build(words("hello there friend"), 100).unwrap();
        let sent = ["hello", "friend"];
        assert_eq!(v.decode(&v.encode(&sent)).unwrap(), sent);
        assert_eq!(v.decode(&[EOS]).unwrap(), [EOS_TOKEN]);
        assert!(matches!(v.decode(&[99]), Err(Error::Index { .. })));
    }

    #[test]
    fn empty_corpus_is_data_error() {
        assert!(matches!(Vocab::build(Vec::<&str>::new(), 10), Err(Error::Data(_))));
    }

    #[test]
    fn reserved_token_appends() {
        let v = Vocab::build(words("a b"), 10).unwrap();
        let (w, sep) = v.with_reserved(SEP_TOKEN);
        assert_eq!(sep, v.len());
        assert_eq!(w.token(sep).unwrap(), SEP_TOKEN);
        assert_eq!(w.with_reserved(SEP_TOKEN).1, sep);
    }
}
