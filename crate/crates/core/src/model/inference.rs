//! Step-wise inference over a batch of hypotheses sharing one source.

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::Result;

use super::forward::HeadMem;
use super::{LambdaSetting, Model};

/// Projected source states, fixed for a whole decode.
#[derive(Clone, Debug)]
pub struct NeuralMemory {
    heads: Vec<(Vec<Tensor>, Vec<Tensor>)>,
    setting: LambdaSetting,
}

impl NeuralMemory {
    pub fn source_len(&self) -> usize {
        self.heads[0].0.len()
    }
}

/// Combined per-layer decoder states, each `1 x d_z`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralState {
    pub z: Vec<Tensor>,
}

/// Result of advancing one hypothesis by a step.
#[derive(Clone, Debug)]
pub struct NeuralStep {
    pub state: NeuralState,
    pub log_probs: Vec<f64>,
    /// Attention weights per head (one or two).
    pub alphas: Vec<Vec<f64>>,
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    row.iter().map(|&z| z - log_z).collect()
}

fn stack_rows(rows: &[&Tensor]) -> Tensor {
    let cols = rows[0].cols();
    let data = rows.iter().flat_map(|t| t.data().iter().copied()).collect();
    Tensor::new(vec![rows.len(), cols], data).expect("rows share a width")
}

impl Model {
    /// Encodes `src` and returns the memory with the start state.
    pub fn begin(&self, src: &[usize], setting: LambdaSetting) -> Result<(NeuralMemory, NeuralState)> {
        let mut g = Graph::new();
        self.cond_graph(&mut g, &[setting])?;
        let (tops, finals) = self.encode_graph(&mut g, &[src])?;
        let heads = self.memory_graph(&mut g, &tops)?;
        let z = self.init_graph(&mut g, &finals)?;
        let own = |g: &Graph, vs: &[Var]| vs.iter().map(|&v| g.value(v).clone()).collect::<Vec<_>>();
        Ok((
            NeuralMemory {
                heads: heads.iter().map(|h| (own(&g, &h.keys), own(&g, &h.values))).collect(),
                setting,
            },
            NeuralState { z: own(&g, &z) },
        ))
    }

    /// Advances several hypotheses at once; `prev[i]` is the last token of `states[i]`.
    pub fn advance(&self, mem: &NeuralMemory, states: &[&NeuralState], prev: &[usize]) -> Result<Vec<NeuralStep>> {
        let b = states.len();
        let mut g = Graph::new();
        let heads: Vec<HeadMem> = mem
            .heads
            .iter()
            .map(|(k, v)| HeadMem {
                keys: k.iter().map(|t| g.constant_ref(t)).collect(),
                values: v.iter().map(|t| g.constant_ref(t)).collect(),
            })
            .collect();
        let z: Vec<Var> = (0..self.config.layers)
            .map(|l| {
                let rows: Vec<&Tensor> = states.iter().map(|s| &s.z[l]).collect();
                g.constant(stack_rows(&rows))
            })
            .collect();
        let cond = self.cond_graph(&mut g, &vec![mem.setting; b])?;
        let out = self.step_graph(&mut g, &heads, None, prev, &z, cond)?;
        let logits = g.value(out.logits);
        let mut steps = Vec::with_capacity(b);
        for i in 0..b {
            steps.push(NeuralStep {
                state: NeuralState {
                    z: out
                        .z
                        .iter()
                        .map(|&v| Tensor::new(vec![1, self.config.d_z], g.value(v).row(i).to_vec()).expect("row"))
                        .collect(),
                },
                log_probs: log_softmax(logits.row(i)),
                alphas: out.alphas.iter().map(|&a| g.value(a).row(i).to_vec()).collect(),
            });
        }
        Ok(steps)
    }
}
