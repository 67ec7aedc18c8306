//! Dense tensors, a reverse-mode tape, Adam, and a finite-difference oracle.
//!
//! The free functions in this module are eager conveniences over single
//! operations; models build on [`Graph`] directly.

mod adam;
mod gradcheck;
mod graph;
mod gru;
mod params;
mod tensor;

pub use adam::{clip_global_norm, AdamState};
pub use gradcheck::{finite_diff_check, numeric_gradient, GradCheck};
pub use graph::{Gradients, Graph, ParamId, Var};
pub use gru::GruCell;
pub use params::ParamStore;
pub use tensor::Tensor;

use crate::error::{Error, Result};

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let (a, b) = (g.constant_ref(a), g.constant_ref(b));
    let c = g.matmul(a, b)?;
    Ok(g.value(c).clone())
}

/// Numerically stable softmax of a non-empty vector.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.is_empty() {
        return Err(Error::Domain("softmax of an empty vector".into()));
    }
    let mut g = Graph::new();
    let v = g.constant(Tensor::matrix(1, x.len(), x.data().to_vec()));
    let y = g.softmax_rows(v, None)?;
    g.value(y).clone().reshape(x.shape().to_vec())
}

/// Row `id` of an embedding table.
pub fn embedding_lookup(table: &Tensor, id: usize) -> Result<Tensor> {
    let mut g = Graph::new();
    let t = g.constant_ref(table);
    let row = g.gather_rows(t, &[id])?;
    g.value(row).clone().reshape(vec![table.cols()])
}

/// `−log softmax(logits)[target]`.
pub fn cross_entropy(logits: &Tensor, target: usize) -> Result<f64> {
    let mut g = Graph::new();
    let v = g.constant(Tensor::matrix(1, logits.len(), logits.data().to_vec()));
    let loss = g.cross_entropy(v, &[target], &[1.0])?;
    Ok(g.value(loss).item())
}

/// One GRU step on single vectors `x: [in]`, `h: [hidden]`.
pub fn gru_cell(x: &Tensor, h: &Tensor, cell: &GruCell, store: &ParamStore) -> Result<Tensor> {
    let mut g = Graph::new();
    let xv = g.constant(Tensor::matrix(1, x.len(), x.data().to_vec()));
    let hv = g.constant(Tensor::matrix(1, h.len(), h.data().to_vec()));
    let out = cell.step(&mut g, store, xv, hv)?;
    g.value(out).clone().reshape(vec![h.len()])
}
