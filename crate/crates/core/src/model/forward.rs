//! Batched forward computation on the tape, plus single-example tensor views.

use crate::autodiff::{Graph, Tensor, Var};
use crate::emotion::EmotionAnnotation;
use crate::error::{Error, Result};
use crate::text::{EOS, PAD, SOS};

use super::{Arch, Example, LambdaSource, Model};

/// How λ (or the scalar feature of the embedded baselines) is chosen for one row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaSetting {
    /// A user-supplied value in `[0, 1]`.
    Fixed(f64),
    /// The training-time rule applied to an emotion label.
    Annotated(EmotionAnnotation),
}

/// `μ = σ(w1·s2 + w2·Δs′ + b)`, `λ = μ·s2 + (1−μ)·Δs′`.
pub fn compute_lambda(s2: f64, delta_norm: f64, w1: f64, w2: f64, b: f64) -> Result<f64> {
    for (name, v) in [("s2", s2), ("delta_norm", delta_norm)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("{name} = {v} is outside [0, 1]")));
        }
    }
    let mu = 1.0 / (1.0 + (-(w1 * s2 + w2 * delta_norm + b)).exp());
    Ok(mu * s2 + (1.0 - mu) * delta_norm)
}

/// Encoder output for one source sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    /// Top-layer state at each position, each `1 x d_h`.
    pub states: Vec<Tensor>,
    /// Final state of each layer, each `1 x d_h`.
    pub finals: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    pub context: Tensor,
    pub alpha_pos: Vec<f64>,
    /// Equal to `alpha_pos` when the model has a single head.
    pub alpha_neg: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderStepOutput {
    /// Combined per-layer states.
    pub z: Vec<Tensor>,
    pub logits: Tensor,
}

/// Per-head projected keys and values of the source states.
pub(crate) struct HeadMem {
    pub keys: Vec<Var>,
    pub values: Vec<Var>,
}

/// Emotion conditioning inside one graph.
#[derive(Clone, Copy)]
pub(crate) enum Cond {
    None,
    Blend { lam: Var, rest: Var },
    Scalar(Var),
}

pub(crate) struct StepOut {
    pub z: Vec<Var>,
    pub logits: Var,
    pub alphas: Vec<Var>,
}

fn blend(g: &mut Graph<'_>, cond: Cond, a: Var, b: Var) -> Result<Var> {
    match cond {
        Cond::Blend { lam, rest } => {
            let x = g.mul(lam, a)?;
            let y = g.mul(rest, b)?;
            g.add(x, y)
        }
        _ => Err(Error::Contract("blending without λ".into())),
    }
}

impl Model {
    fn param<'p>(&'p self, g: &mut Graph<'p>, id: crate::autodiff::ParamId) -> Var {
        g.param(id, self.params.get(id))
    }

    /// Runs the encoder over a batch. Rows shorter than the longest keep their
    /// last valid state, so `finals` holds each row's true final state.
    pub(crate) fn encode_graph<'p>(&'p self, g: &mut Graph<'p>, srcs: &[&[usize]]) -> Result<(Vec<Var>, Vec<Var>)> {
        if srcs.is_empty() || srcs.iter().any(|s| s.is_empty()) {
            return Err(Error::Contract("encoder input must hold at least one token".into()));
        }
        let v = self.config.vocab_size;
        if let Some(&bad) = srcs.iter().flat_map(|s| s.iter()).find(|&&id| id >= v) {
            return Err(Error::Index {
                what: "source token",
                index: bad,
                len: v,
            });
        }
        let b = srcs.len();
        let n = srcs.iter().map(|s| s.len()).max().unwrap_or(0);
        let d_h = self.config.d_h;
        let emb = self.param(g, self.layout.embedding);
        let mut h: Vec<Var> = (0..self.config.layers)
            .map(|_| g.constant(Tensor::zeros(&[b, d_h])))
            .collect();
        let mut tops = Vec::with_capacity(n);
        for t in 0..n {
            let ids: Vec<usize> = srcs.iter().map(|s| s.get(t).copied().unwrap_or(PAD)).collect();
            let mask: Option<(Var, Var)> = if srcs.iter().all(|s| t < s.len()) {
                None
            } else {
                let m: Vec<f64> = srcs.iter().map(|s| if t < s.len() { 1.0 } else { 0.0 }).collect();
                let keep: Vec<f64> = m.iter().map(|x| 1.0 - x).collect();
                Some((g.constant(Tensor::column(m)), g.constant(Tensor::column(keep))))
            };
            let mut x = g.gather_rows(emb, &ids)?;
            for (l, cell) in self.layout.encoder.iter().enumerate() {
                let fresh = cell.step(g, &self.params, x, h[l])?;
                h[l] = match mask {
                    None => fresh,
                    Some((m, keep)) => {
                        let a = g.mul(m, fresh)?;
                        let c = g.mul(keep, h[l])?;
                        g.add(a, c)?
                    }
                };
                x = h[l];
            }
            tops.push(x);
        }
        Ok((tops, h))
    }

    pub(crate) fn memory_graph<'p>(&'p self, g: &mut Graph<'p>, tops: &[Var]) -> Result<Vec<HeadMem>> {
        let mut out = Vec::with_capacity(self.layout.heads.len());
        for head in &self.layout.heads {
            let (wk, wv) = (self.param(g, head.w_k), self.param(g, head.w_v));
            let mut keys = Vec::with_capacity(tops.len());
            let mut values = Vec::with_capacity(tops.len());
            for &h in tops {
                keys.push(g.matmul_t(h, wk)?);
                values.push(g.matmul_t(h, wv)?);
            }
            out.push(HeadMem { keys, values });
        }
        Ok(out)
    }

    /// Decoder start state from the encoder's final per-layer states.
    pub(crate) fn init_graph<'p>(&'p self, g: &mut Graph<'p>, finals: &[Var]) -> Result<Vec<Var>> {
        if self.layout.bridge.is_empty() {
            return Ok(finals.to_vec());
        }
        let mut z = Vec::with_capacity(finals.len());
        for (&h, &(w, b)) in finals.iter().zip(&self.layout.bridge) {
            let (w, b) = (self.param(g, w), self.param(g, b));
            let a = g.matmul_t(h, w)?;
            let a = g.add(a, b)?;
            z.push(g.tanh(a));
        }
        Ok(z)
    }

    /// Builds the conditioning for a batch whose rows share one kind of setting.
    pub(crate) fn cond_graph<'p>(&'p self, g: &mut Graph<'p>, settings: &[LambdaSetting]) -> Result<Cond> {
        let arch = self.config.arch;
        if !arch.needs_annotation() {
            return Ok(Cond::None);
        }
        let fixed: Option<Vec<f64>> = settings
            .iter()
            .map(|s| match s {
                LambdaSetting::Fixed(v) => Some(*v),
                LambdaSetting::Annotated(_) => None,
            })
            .collect();
        let col: Var = if let Some(values) = fixed {
            if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Domain(format!("λ = {bad} is outside [0, 1]")));
            }
            g.constant(Tensor::column(values))
        } else {
            let anns: Vec<EmotionAnnotation> = settings
                .iter()
                .map(|s| match s {
                    LambdaSetting::Annotated(a) => Ok(*a),
                    LambdaSetting::Fixed(_) => Err(Error::Contract("mixed λ settings in one batch".into())),
                })
                .collect::<Result<_>>()?;
            let s2 = || Tensor::column(anns.iter().map(|a| a.s2).collect());
            let dn = || Tensor::column(anns.iter().map(|a| a.delta_norm).collect());
            match (arch, self.config.lambda_source) {
                (Arch::EmbS2, _) => g.constant(s2()),
                (Arch::EmbDelta, _) => g.constant(dn()),
                (_, LambdaSource::S2) => g.constant(s2()),
                (_, LambdaSource::Delta) => g.constant(dn()),
                (_, LambdaSource::Learned) => {
                    let net = self.layout.lambda.expect("learned λ has a network");
                    let (s, d) = (g.constant(s2()), g.constant(dn()));
                    let (w1, w2, b) = (self.param(g, net.w1), self.param(g, net.w2), self.param(g, net.b));
                    let a = g.mul(s, w1)?;
                    let c = g.mul(d, w2)?;
                    let pre = g.add(a, c)?;
                    let pre = g.add(pre, b)?;
                    let mu = g.sigmoid(pre);
                    let rest = g.one_minus(mu);
                    let x = g.mul(mu, s)?;
                    let y = g.mul(rest, d)?;
                    g.add(x, y)?
                }
            }
        };
        if let Some((w, b)) = self.layout.scalar {
            let (w, b) = (self.param(g, w), self.param(g, b));
            let f = g.mul(col, w)?;
            Ok(Cond::Scalar(g.add(f, b)?))
        } else {
            let rest = g.one_minus(col);
            Ok(Cond::Blend { lam: col, rest })
        }
    }

    /// Attention of every head, combined by λ when there are two.
    pub(crate) fn attend_graph<'p>(
        &'p self,
        g: &mut Graph<'p>,
        heads: &[HeadMem],
        lens: Option<&[usize]>,
        z_top: Var,
        cond: Cond,
    ) -> Result<(Var, Vec<Var>)> {
        let scale = 1.0 / (self.config.d_h as f64).sqrt();
        let mut contexts = Vec::with_capacity(heads.len());
        let mut alphas = Vec::with_capacity(heads.len());
        for (head, mem) in self.layout.heads.iter().zip(heads) {
            let wq = self.param(g, head.w_q);
            let q = g.matmul_t(z_top, wq)?;
            let e = g.scores(q, &mem.keys, scale)?;
            let a = g.softmax_rows(e, lens)?;
            contexts.push(g.weighted_sum(a, &mem.values)?);
            alphas.push(a);
        }
        let c = if contexts.len() == 2 {
            blend(g, cond, contexts[0], contexts[1])?
        } else {
            contexts[0]
        };
        Ok((c, alphas))
    }

    /// One decoder step for a batch.
    pub(crate) fn step_graph<'p>(
        &'p self,
        g: &mut Graph<'p>,
        heads: &[HeadMem],
        lens: Option<&[usize]>,
        prev: &[usize],
        z: &[Var],
        cond: Cond,
    ) -> Result<StepOut> {
        if z.len() != self.config.layers {
            return Err(Error::dim("decoder state", &[z.len()], &[self.config.layers]));
        }
        let z_top = *z.last().expect("at least one layer");
        let (c, alphas) = self.attend_graph(g, heads, lens, z_top, cond)?;
        let (z, logits) = self.decode_graph(g, prev, c, z, cond)?;
        Ok(StepOut { z, logits, alphas })
    }

    /// Decoder stacks from the shared state `z`; each branch's layers feed
    /// their own next layer and the per-layer outputs are combined by λ.
    fn decode_graph<'p>(&'p self, g: &mut Graph<'p>, prev: &[usize], c: Var, z: &[Var], cond: Cond) -> Result<(Vec<Var>, Var)> {
        let emb = self.param(g, self.layout.embedding);
        let e = g.gather_rows(emb, prev)?;
        let x = match cond {
            Cond::Scalar(f) => g.concat_cols(&[e, c, f])?,
            _ => g.concat_cols(&[e, c])?,
        };
        let mut inputs: Vec<Var> = vec![x; self.layout.decoders.len()];
        let mut out = Vec::with_capacity(z.len());
        for (l, &z_prev) in z.iter().enumerate() {
            let mut states = Vec::with_capacity(inputs.len());
            for (stack, input) in self.layout.decoders.iter().zip(&mut inputs) {
                let s = stack[l].step(g, &self.params, *input, z_prev)?;
                *input = s;
                states.push(s);
            }
            out.push(if states.len() == 2 {
                blend(g, cond, states[0], states[1])?
            } else {
                states[0]
            });
        }
        let w_o = self.param(g, self.layout.w_o);
        let logits = g.matmul_t(*out.last().expect("at least one layer"), w_o)?;
        Ok((out, logits))
    }

    fn settings_for(&self, examples: &[&Example]) -> Result<Vec<LambdaSetting>> {
        if !self.config.arch.needs_annotation() {
            return Ok(vec![LambdaSetting::Fixed(0.0); examples.len()]);
        }
        examples
            .iter()
            .map(|e| {
                e.annotation.map(LambdaSetting::Annotated).ok_or_else(|| {
                    Error::Contract(format!("architecture {} needs emotion-annotated triplets", self.config.arch))
                })
            })
            .collect()
    }

    /// Teacher-forced summed NLL of a batch and its target token count (end marker included).
    pub fn batch_loss<'p>(&'p self, g: &mut Graph<'p>, examples: &[&Example]) -> Result<(Var, usize)> {
        let settings = self.settings_for(examples)?;
        self.batch_loss_with(g, examples, &settings, &mut |_, _| {})
    }

    /// As [`Model::batch_loss`] with explicit settings; `visit` sees every step's logits.
    pub(crate) fn batch_loss_with<'p>(
        &'p self,
        g: &mut Graph<'p>,
        examples: &[&Example],
        settings: &[LambdaSetting],
        visit: &mut dyn FnMut(&Graph<'p>, Var),
    ) -> Result<(Var, usize)> {
        let v = self.config.vocab_size;
        if let Some(&bad) = examples.iter().flat_map(|e| e.tgt.iter()).find(|&&id| id >= v) {
            return Err(Error::Index {
                what: "target token",
                index: bad,
                len: v,
            });
        }
        let srcs: Vec<&[usize]> = examples.iter().map(|e| e.src.as_slice()).collect();
        let lens: Vec<usize> = srcs.iter().map(|s| s.len()).collect();
        let (tops, finals) = self.encode_graph(g, &srcs)?;
        let heads = self.memory_graph(g, &tops)?;
        let mut z = self.init_graph(g, &finals)?;
        let cond = self.cond_graph(g, settings)?;
        let uniform = lens.iter().all(|&l| l == lens[0]);
        let lens_arg = if uniform { None } else { Some(lens.as_slice()) };

        let steps = examples.iter().map(|e| e.tgt.len() + 1).max().unwrap_or(1);
        let target_at = |e: &Example, t: usize| -> Option<usize> {
            match t.cmp(&e.tgt.len()) {
                std::cmp::Ordering::Less => Some(e.tgt[t]),
                std::cmp::Ordering::Equal => Some(EOS),
                std::cmp::Ordering::Greater => None,
            }
        };
        let mut total: Option<Var> = None;
        let mut tokens = 0;
        for t in 0..steps {
            let prev: Vec<usize> = examples
                .iter()
                .map(|e| if t == 0 { SOS } else { target_at(e, t - 1).unwrap_or(PAD) })
                .collect();
            let step = self.step_graph(g, &heads, lens_arg, &prev, &z, cond)?;
            visit(g, step.logits);
            let (targets, weights): (Vec<usize>, Vec<f64>) = examples
                .iter()
                .map(|e| match target_at(e, t) {
                    Some(id) => (id, 1.0),
                    None => (PAD, 0.0),
                })
                .unzip();
            tokens += weights.iter().filter(|&&w| w > 0.0).count();
            let ce = g.cross_entropy(step.logits, &targets, &weights)?;
            total = Some(match total {
                None => ce,
                Some(acc) => g.add(acc, ce)?,
            });
            z = step.z;
        }
        Ok((total.expect("at least one step"), tokens))
    }

    /// Summed NLL and token count without building gradients.
    pub fn nll(&self, examples: &[&Example]) -> Result<(f64, usize)> {
        let mut g = Graph::new();
        let (loss, tokens) = self.batch_loss(&mut g, examples)?;
        Ok((g.value(loss).item(), tokens))
    }

    /// NLL of one example.
    pub fn forward_nll(&self, example: &Example) -> Result<(f64, usize)> {
        self.nll(&[example])
    }

    /// Teacher-forced logits at every step under a given setting.
    pub fn teacher_forced_logits(&self, example: &Example, setting: LambdaSetting) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let mut out = Vec::new();
        self.batch_loss_with(&mut g, &[example], &[setting], &mut |g, v| out.push(g.value(v).clone()))?;
        Ok(out)
    }

    /// λ this model uses for an annotation during training, if it has one.
    pub fn training_lambda(&self, a: &EmotionAnnotation) -> Result<Option<f64>> {
        if !self.config.arch.is_dual() {
            return Ok(None);
        }
        Ok(Some(match self.config.lambda_source {
            LambdaSource::S2 => a.s2,
            LambdaSource::Delta => a.delta_norm,
            LambdaSource::Learned => {
                let net = self.layout.lambda.expect("learned λ has a network");
                let p = |id| self.params.get(id).item();
                compute_lambda(a.s2, a.delta_norm, p(net.w1), p(net.w2), p(net.b))?
            }
        }))
    }

    pub fn encode(&self, src: &[usize]) -> Result<EncoderOutput> {
        let mut g = Graph::new();
        let (tops, finals) = self.encode_graph(&mut g, &[src])?;
        Ok(EncoderOutput {
            states: tops.iter().map(|&v| g.value(v).clone()).collect(),
            finals: finals.iter().map(|&v| g.value(v).clone()).collect(),
        })
    }

    /// Decoder start state for an encoded source.
    pub fn initial_state(&self, enc: &EncoderOutput) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let finals: Vec<Var> = enc.finals.iter().map(|t| g.constant_ref(t)).collect();
        let z = self.init_graph(&mut g, &finals)?;
        Ok(z.iter().map(|&v| g.value(v).clone()).collect())
    }

    fn fixed_cond<'p>(&'p self, g: &mut Graph<'p>, lambda: f64) -> Result<Cond> {
        self.cond_graph(g, &[LambdaSetting::Fixed(lambda)])
    }

    fn check_state(&self, z_top: &Tensor) -> Result<()> {
        if z_top.rows() != 1 || z_top.cols() != self.config.d_z {
            return Err(Error::dim("decoder state", z_top.shape(), &[1, self.config.d_z]));
        }
        Ok(())
    }

    pub fn dual_attention(&self, z_top: &Tensor, enc: &EncoderOutput, lambda: f64) -> Result<AttentionOutput> {
        self.check_state(z_top)?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Domain(format!("λ = {lambda} is outside [0, 1]")));
        }
        let mut g = Graph::new();
        let tops: Vec<Var> = enc.states.iter().map(|t| g.constant_ref(t)).collect();
        if let Some(t) = enc.states.iter().find(|t| t.cols() != self.config.d_h) {
            return Err(Error::dim("source state", t.shape(), &[1, self.config.d_h]));
        }
        let heads = self.memory_graph(&mut g, &tops)?;
        let cond = self.fixed_cond(&mut g, lambda)?;
        let z = g.constant_ref(z_top);
        let (c, alphas) = self.attend_graph(&mut g, &heads, None, z, cond)?;
        let row = |v: Var| g.value(v).data().to_vec();
        Ok(AttentionOutput {
            context: g.value(c).clone(),
            alpha_pos: row(alphas[0]),
            alpha_neg: row(*alphas.last().expect("one head")),
        })
    }

    /// One decoder step given an already combined context vector.
    pub fn dual_decoder_step(&self, z: &[Tensor], prev: usize, context: &Tensor, lambda: f64) -> Result<DecoderStepOutput> {
        if z.len() != self.config.layers {
            return Err(Error::dim("decoder state", &[z.len()], &[self.config.layers]));
        }
        for t in z {
            self.check_state(t)?;
        }
        if context.rows() != 1 || context.cols() != self.config.d_h {
            return Err(Error::dim("context", context.shape(), &[1, self.config.d_h]));
        }
        if prev >= self.config.vocab_size {
            return Err(Error::Index {
                what: "previous token",
                index: prev,
                len: self.config.vocab_size,
            });
        }
        let mut g = Graph::new();
        let cond = self.fixed_cond(&mut g, lambda)?;
        let zs: Vec<Var> = z.iter().map(|t| g.constant_ref(t)).collect();
        let c = g.constant_ref(context);
        let (out, logits) = self.decode_graph(&mut g, &[prev], c, &zs, cond)?;
        Ok(DecoderStepOutput {
            z: out.iter().map(|&v| g.value(v).clone()).collect(),
            logits: g.value(logits).clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn toy(arch: Arch) -> ModelConfig {
        ModelConfig {
            arch,
            lambda_source: LambdaSource::Learned,
            d_emb: 3,
            d_h: 4,
            d_z: 4,
            layers: 2,
            vocab_size: 9,
            max_len: 5,
        }
    }

    fn ex(src: &[usize], tgt: &[usize]) -> Example {
        Example {
            src: src.to_vec(),
            tgt: tgt.to_vec(),
            annotation: Some(EmotionAnnotation::new(0.3, 0.8).unwrap()),
        }
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(compute_lambda(0.4, 0.8, 0.0, 0.0, 0.0).unwrap(), 0.6000000000000001);
        assert_eq!(compute_lambda(0.7, 0.7, 3.0, -2.0, 1.0).unwrap(), 0.7);
        let l = compute_lambda(0.8, 0.6, 1.0, -1.0, 0.0).unwrap();
        assert!((l - 0.709967).abs() < 1e-6);
        assert!(matches!(compute_lambda(1.1, 0.5, 0.0, 0.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn single_token_source() {
        let m = Model::build(toy(Arch::Eem), 1).unwrap();
        let enc = m.encode(&[5]).unwrap();
        assert_eq!(enc.states.len(), 1);
        assert_eq!(enc.finals.len(), 2);
        assert!(m.encode(&[]).is_err());
        let z = m.initial_state(&enc).unwrap();
        let att = m.dual_attention(&z[1], &enc, 0.3).unwrap();
        assert_eq!(att.alpha_pos, vec![1.0]);
        assert_eq!(att.alpha_neg, vec![1.0]);
    }

    #[test]
    fn lambda_one_context_is_positive_head() {
        let m = Model::build(toy(Arch::Eem), 2).unwrap();
        let enc = m.encode(&[4, 5, 6]).unwrap();
        let z = m.initial_state(&enc).unwrap();
        let pos = m.single_branch(super::super::Branch::Pos).unwrap();
        let a = m.dual_attention(&z[1], &enc, 1.0).unwrap();
        let b = pos.dual_attention(&z[1], &enc, 1.0).unwrap();
        assert_eq!(a.context, b.context);
    }

    #[test]
    fn half_lambda_is_branch_mean() {
        let m = Model::build(toy(Arch::EemNoDualAttn), 4).unwrap();
        let enc = m.encode(&[4, 5]).unwrap();
        let z = m.initial_state(&enc).unwrap();
        let c = m.dual_attention(&z[1], &enc, 0.5).unwrap().context;
        let mid = m.dual_decoder_step(&z, SOS, &c, 0.5).unwrap();
        let one = m.dual_decoder_step(&z, SOS, &c, 1.0).unwrap();
        let zero = m.dual_decoder_step(&z, SOS, &c, 0.0).unwrap();
        for l in 0..2 {
            for i in 0..4 {
                let want = 0.5 * (one.z[l].data()[i] + zero.z[l].data()[i]);
                assert!((mid.z[l].data()[i] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_output_gives_log_vocab() {
        let mut m = Model::build(toy(Arch::Eem), 3).unwrap();
        m.params_mut().by_name_mut("output.w_o").unwrap().data_mut().fill(0.0);
        let (nll, tokens) = m.forward_nll(&ex(&[4, 5], &[6, 7, 8])).unwrap();
        assert_eq!(tokens, 4);
        assert!((nll / tokens as f64 - 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn batch_equals_sum_of_singles() {
        let m = Model::build(toy(Arch::Eem), 5).unwrap();
        let a = ex(&[4, 5, 6], &[7]);
        let mut b = ex(&[8], &[4, 5]);
        b.annotation = Some(EmotionAnnotation::new(0.9, 0.1).unwrap());
        let (joint, n) = m.nll(&[&a, &b]).unwrap();
        let (x, nx) = m.forward_nll(&a).unwrap();
        let (y, ny) = m.forward_nll(&b).unwrap();
        assert_eq!(n, nx + ny);
        assert!((joint - x - y).abs() < 1e-12);
    }

    #[test]
    fn unannotated_rejected_for_dual() {
        let m = Model::build(toy(Arch::Eem), 5).unwrap();
        let mut e = ex(&[4], &[5]);
        e.annotation = None;
        assert!(matches!(m.forward_nll(&e), Err(Error::Contract(_))));
        let plain = Model::build(toy(Arch::Encdec), 5).unwrap();
        assert!(plain.forward_nll(&e).is_ok());
    }

    #[test]
    fn gradients_match_finite_differences() {
        use crate::autodiff::finite_diff_check;
        for (arch, d_z) in [(Arch::Eem, 5), (Arch::EmbDelta, 4)] {
            let mut c = toy(arch);
            c.d_z = d_z;
            let mut m = Model::build(c.clone(), 11).unwrap();
            m.reinit_uniform(0.5, 7);
            let a = ex(&[4, 5, 6], &[7, 8]);
            let mut b = ex(&[8, 4], &[5]);
            b.annotation = Some(EmotionAnnotation::new(0.6, 0.2).unwrap());
            let batch = [&a, &b];
            let mut g = Graph::new();
            let (loss, _) = m.batch_loss(&mut g, &batch).unwrap();
            let grads = g.backward(loss).unwrap().into_param_map();
            let mut params = m.params().clone();
            let report = finite_diff_check(
                |p| Model::from_parts(c.clone(), p.clone())?.nll(&batch).map(|r| r.0),
                &mut params,
                &grads,
                0.05,
            )
            .unwrap();
            assert!(report.max_rel_err < 1e-4, "{arch}: {report:?}");
        }
    }
}
