//! The dual-branch emotion-eliciting encoder-decoder and its baselines.

mod config;
mod forward;
mod inference;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{Arch, LambdaSource, ModelConfig};
pub use forward::{compute_lambda, AttentionOutput, DecoderStepOutput, EncoderOutput, LambdaSetting};
pub use inference::{NeuralMemory, NeuralState, NeuralStep};

use crate::autodiff::{GruCell, ParamId, ParamStore, Tensor};
use crate::emotion::{EmotionAnnotation, LabeledTriplet};
use crate::error::{Error, Result};
use crate::text::{Vocab, SEP_TOKEN};

/// Which branch of a dual component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Pos,
    Neg,
}

impl Branch {
    fn tag(self) -> &'static str {
        match self {
            Branch::Pos => "pos",
            Branch::Neg => "neg",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionHead {
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_q: ParamId,
}

/// `μ = σ(w1·s2 + w2·Δs′ + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LambdaNet {
    pub w1: ParamId,
    pub w2: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    embedding: ParamId,
    encoder: Vec<GruCell>,
    bridge: Vec<(ParamId, ParamId)>,
    heads: Vec<AttentionHead>,
    lambda: Option<LambdaNet>,
    decoders: Vec<Vec<GruCell>>,
    scalar: Option<(ParamId, ParamId)>,
    w_o: ParamId,
}

fn head_prefix(dual: bool, b: Branch) -> String {
    if dual {
        format!("attn.{}", b.tag())
    } else {
        "attn".to_string()
    }
}

fn decoder_prefix(dual: bool, b: Branch, layer: usize) -> String {
    if dual {
        format!("decoder.{}.{layer}", b.tag())
    } else {
        format!("decoder.{layer}")
    }
}

fn branches(dual: bool) -> &'static [Branch] {
    if dual {
        &[Branch::Pos, Branch::Neg]
    } else {
        &[Branch::Pos]
    }
}

/// Registers fresh tensors when it has a generator, otherwise looks them up.
struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl Builder<'_> {
    fn param(&mut self, name: String, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        match self.rng.as_deref_mut() {
            Some(r) => self
                .store
                .insert(name, Tensor::uniform(shape, 1.0 / (fan_in as f64).sqrt(), r)),
            None => {
                let id = self
                    .store
                    .id(&name)
                    .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))?;
                if self.store.get(id).shape() != shape {
                    return Err(Error::dim("checkpoint parameter", self.store.get(id).shape(), shape));
                }
                Ok(id)
            }
        }
    }

    fn cell(&mut self, prefix: String, d_in: usize, d_h: usize) -> Result<GruCell> {
        let cell = match self.rng.as_deref_mut() {
            Some(r) => GruCell::register(self.store, &prefix, d_in, d_h, r)?,
            None => GruCell::lookup(self.store, &prefix)?,
        };
        if cell.input_dim != d_in || cell.hidden_dim != d_h {
            return Err(Error::dim("gru cell", &[cell.input_dim, cell.hidden_dim], &[d_in, d_h]));
        }
        Ok(cell)
    }
}

impl Layout {
    /// Registers every tensor in a fixed order, or looks them up when `rng` is `None`.
    fn create(c: &ModelConfig, store: &mut ParamStore, rng: Option<&mut ChaCha8Rng>) -> Result<Self> {
        let mut b = Builder { store, rng };
        let embedding = b.param("embedding".into(), &[c.vocab_size, c.d_emb], c.d_emb)?;
        let mut encoder = Vec::with_capacity(c.layers);
        for l in 0..c.layers {
            let d_in = if l == 0 { c.d_emb } else { c.d_h };
            encoder.push(b.cell(format!("encoder.{l}"), d_in, c.d_h)?);
        }

        let mut bridge = Vec::new();
        if c.d_h != c.d_z {
            for l in 0..c.layers {
                let w = b.param(format!("bridge.{l}.w"), &[c.d_z, c.d_h], c.d_h)?;
                let bias = b.param(format!("bridge.{l}.b"), &[c.d_z], c.d_h)?;
                bridge.push((w, bias));
            }
        }

        let dual_attn = c.arch.dual_attention();
        let mut heads = Vec::new();
        for &br in branches(dual_attn) {
            let p = head_prefix(dual_attn, br);
            heads.push(AttentionHead {
                w_k: b.param(format!("{p}.w_k"), &[c.d_h, c.d_h], c.d_h)?,
                w_v: b.param(format!("{p}.w_v"), &[c.d_h, c.d_h], c.d_h)?,
                w_q: b.param(format!("{p}.w_q"), &[c.d_h, c.d_z], c.d_z)?,
            });
        }

        let lambda = if c.has_lambda_net() {
            Some(LambdaNet {
                w1: b.param("lambda.w1".into(), &[1, 1], 2)?,
                w2: b.param("lambda.w2".into(), &[1, 1], 2)?,
                b: b.param("lambda.b".into(), &[1, 1], 2)?,
            })
        } else {
            None
        };

        let scalar = if c.arch.has_scalar_feature() {
            Some((
                b.param("scalar.w".into(), &[1, c.d_emb], 1)?,
                b.param("scalar.b".into(), &[c.d_emb], 1)?,
            ))
        } else {
            None
        };

        let dec_in = c.d_emb + c.d_h + if scalar.is_some() { c.d_emb } else { 0 };
        let dual_dec = c.arch.dual_decoder();
        let mut decoders = Vec::new();
        for &br in branches(dual_dec) {
            let mut stack = Vec::with_capacity(c.layers);
            for l in 0..c.layers {
                let d_in = if l == 0 { dec_in } else { c.d_z };
                stack.push(b.cell(decoder_prefix(dual_dec, br, l), d_in, c.d_z)?);
            }
            decoders.push(stack);
        }

        let w_o = b.param("output.w_o".into(), &[c.vocab_size, c.d_z], c.d_z)?;
        Ok(Self {
            embedding,
            encoder,
            bridge,
            heads,
            lambda,
            decoders,
            scalar,
            w_o,
        })
    }
}

/// A network: configuration, parameters, and resolved parameter handles.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl Model {
    /// Fresh parameters, uniform in `±1/√fan_in`, deterministic in `seed`.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let layout = Layout::create(&config, &mut params, Some(&mut rng))?;
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    /// Reassembles a model from stored parameters, checking names and shapes.
    pub fn from_parts(config: ModelConfig, mut params: ParamStore) -> Result<Self> {
        config.validate()?;
        let layout = Layout::create(&config, &mut params, None)?;
        let expected = Model::build(config.clone(), 0)?.params.len();
        if params.len() != expected {
            return Err(Error::Contract(format!(
                "checkpoint holds {} tensors, architecture {} expects {expected}",
                params.len(),
                config.arch
            )));
        }
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn arch(&self) -> Arch {
        self.config.arch
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_elements()
    }

    pub fn lambda_net(&self) -> Option<LambdaNet> {
        self.layout.lambda
    }

    /// Redraws every parameter uniformly in `±bound`.
    pub fn reinit_uniform(&mut self, bound: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<ParamId> = self.params.ids().collect();
        for id in ids {
            let shape = self.params.get(id).shape().to_vec();
            *self.params.get_mut(id) = Tensor::uniform(&shape, bound, &mut rng);
        }
    }

    /// Copies the positive attention head and decoder onto the negative ones.
    pub fn tie_branches(&mut self) -> Result<()> {
        let names: Vec<String> = self
            .params
            .iter()
            .filter(|(_, n, _)| n.starts_with("attn.pos.") || n.starts_with("decoder.pos."))
            .map(|(_, n, _)| n.to_string())
            .collect();
        for name in names {
            let src = self.params.by_name(&name).cloned().expect("listed above");
            self.params.assign(&name.replacen(".pos.", ".neg.", 1), &src)?;
        }
        Ok(())
    }

    /// A plain encoder-decoder holding one branch's attention head and decoder
    /// together with the shared embedding, encoder and output projection.
    pub fn single_branch(&self, branch: Branch) -> Result<Model> {
        let mut config = self.config.clone();
        config.arch = Arch::Encdec;
        config.lambda_source = LambdaSource::Learned;
        if self.config.arch.has_scalar_feature() {
            return Err(Error::Contract("branch extraction needs a model without scalar features".into()));
        }
        let mut out = Model::build(config, 0)?;
        let dual_attn = self.config.arch.dual_attention();
        let dual_dec = self.config.arch.dual_decoder();
        let names: Vec<String> = out.params.iter().map(|(_, n, _)| n.to_string()).collect();
        for name in names {
            let src_name = if let Some(rest) = name.strip_prefix("attn.") {
                if dual_attn {
                    format!("attn.{}.{rest}", branch.tag())
                } else {
                    name.clone()
                }
            } else if let Some(rest) = name.strip_prefix("decoder.") {
                if dual_dec {
                    format!("decoder.{}.{rest}", branch.tag())
                } else {
                    name.clone()
                }
            } else {
                name.clone()
            };
            let src = self
                .params
                .by_name(&src_name)
                .ok_or_else(|| Error::Contract(format!("missing parameter `{src_name}`")))?
                .clone();
            out.params.assign(&name, &src)?;
        }
        Ok(out)
    }
}

/// One teacher-forcing example in id space.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub src: Vec<usize>,
    /// Target ids without the end marker; it is appended during the forward pass.
    pub tgt: Vec<usize>,
    pub annotation: Option<EmotionAnnotation>,
}

impl Example {
    /// `u1 → r1` with the triplet's emotion label.
    pub fn from_labeled(l: &LabeledTriplet, vocab: &Vocab) -> Self {
        Self {
            src: vocab.encode(&l.triplet.u1),
            tgt: vocab.encode(&l.triplet.r1),
            annotation: Some(l.annotation),
        }
    }

    /// `u1 ⊕ <sep> ⊕ r1 → u2`, the user-simulator task. `vocab` must contain the separator.
    pub fn simulator(l: &LabeledTriplet, vocab: &Vocab) -> Self {
        Self {
            src: simulator_input(&vocab.encode(&l.triplet.u1), &vocab.encode(&l.triplet.r1), vocab.id(SEP_TOKEN)),
            tgt: vocab.encode(&l.triplet.u2),
            annotation: None,
        }
    }
}

pub fn simulator_input(u1: &[usize], r1: &[usize], sep: usize) -> Vec<usize> {
    let mut src = Vec::with_capacity(u1.len() + r1.len() + 1);
    src.extend_from_slice(u1);
    src.push(sep);
    src.extend_from_slice(r1);
    src
}
