use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network variant. All variants share the encoder, the output projection and
/// the attention form; they differ in which parts are doubled and in how the
/// emotion signal enters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// Dual attention and dual decoder steered by λ.
    Eem,
    /// Plain attentional encoder-decoder.
    Encdec,
    /// Encoder-decoder with an embedded `s2` appended to every decoder input.
    EmbS2,
    /// Encoder-decoder with an embedded `Δs′` appended to every decoder input.
    EmbDelta,
    /// One shared attention head, dual decoder.
    EemNoDualAttn,
    /// Dual attention, one decoder.
    EemNoDualDec,
}

impl Arch {
    pub const ALL: [Arch; 6] = [
        Arch::Eem,
        Arch::Encdec,
        Arch::EmbS2,
        Arch::EmbDelta,
        Arch::EemNoDualAttn,
        Arch::EemNoDualDec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Eem => "eem",
            Arch::Encdec => "encdec",
            Arch::EmbS2 => "emb_s2",
            Arch::EmbDelta => "emb_delta",
            Arch::EemNoDualAttn => "eem_no_dual_attn",
            Arch::EemNoDualDec => "eem_no_dual_dec",
        }
    }

    pub fn dual_attention(self) -> bool {
        matches!(self, Arch::Eem | Arch::EemNoDualDec)
    }

    pub fn dual_decoder(self) -> bool {
        matches!(self, Arch::Eem | Arch::EemNoDualAttn)
    }

    /// Whether λ mixes two branches somewhere in the network.
    pub fn is_dual(self) -> bool {
        self.dual_attention() || self.dual_decoder()
    }

    /// Whether a scalar emotion feature is embedded into decoder inputs.
    pub fn has_scalar_feature(self) -> bool {
        matches!(self, Arch::EmbS2 | Arch::EmbDelta)
    }

    /// Whether training needs emotion annotations.
    pub fn needs_annotation(self) -> bool {
        self.is_dual() || self.has_scalar_feature()
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture `{s}`")))
    }
}

/// Where the training-time λ comes from in the dual variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSource {
    /// `μ·s2 + (1−μ)·Δs′` with `μ` from the trainable λ-network.
    #[default]
    Learned,
    /// λ = s2, no λ-network.
    S2,
    /// λ = Δs′, no λ-network.
    Delta,
}

impl FromStr for LambdaSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(Self::Learned),
            "s2" => Ok(Self::S2),
            "delta" => Ok(Self::Delta),
            _ => Err(Error::Config(format!("unknown lambda source `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    #[serde(default)]
    pub lambda_source: LambdaSource,
    pub d_emb: usize,
    /// Encoder hidden size.
    pub d_h: usize,
    /// Decoder hidden size.
    pub d_z: usize,
    pub layers: usize,
    pub vocab_size: usize,
    pub max_len: usize,
}

impl ModelConfig {
    /// Desk-scale defaults: 64-dim embeddings, 128-dim 2-layer GRUs.
    pub fn desk(arch: Arch, vocab_size: usize) -> Self {
        Self {
            arch,
            lambda_source: LambdaSource::Learned,
            d_emb: 64,
            d_h: 128,
            d_z: 128,
            layers: 2,
            vocab_size,
            max_len: 20,
        }
    }

    /// Reference sizes: 300-dim embeddings, 600-dim 2-layer GRUs, 30k vocabulary.
    pub fn reference_scale(arch: Arch) -> Self {
        Self {
            d_emb: 300,
            d_h: 600,
            d_z: 600,
            ..Self::desk(arch, 30_000)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_emb", self.d_emb),
            ("d_h", self.d_h),
            ("d_z", self.d_z),
            ("layers", self.layers),
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.vocab_size < 4 {
            return Err(Error::Config("vocabulary must hold the four special tokens".into()));
        }
        Ok(())
    }

    /// Whether the λ-network exists for this configuration.
    pub fn has_lambda_net(&self) -> bool {
        self.arch.is_dual() && self.lambda_source == LambdaSource::Learned
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arch_names_round_trip() {
        for a in Arch::ALL {
            assert_eq!(a.name().parse::<Arch>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(json, format!("\"{}\"", a.name()));
        }
        assert!(matches!("hred".parse::<Arch>(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_dimension_rejected() {
        let mut c = ModelConfig::desk(Arch::Eem, 100);
        c.d_h = 0;
        assert!(c.validate().is_err());
    }
}
