//! Reverse-mode gradients on a small graph, then the finite-difference oracle
//! on a toy EEM.
//!
//! `cargo run --release --example autodiff_gradcheck`

use eem::autodiff::{finite_diff_check, Graph, ParamStore, Tensor};
use eem::emotion::EmotionAnnotation;
use eem::model::{Arch, Example, Model, ModelConfig};

fn main() -> eem::Result<()> {
    // f(x) = sum(sigmoid(W x)) with W 2×3.
    let mut store = ParamStore::new();
    let w = store.insert("w", Tensor::new(vec![2, 3], vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6])?)?;
    let mut g = Graph::new();
    let wv = g.param(w, store.get(w));
    let x = g.input(Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0])?);
    let y = g.matmul(wv, x)?;
    let s = g.sigmoid(y);
    let loss = g.sum(s);
    let grads = g.backward(loss)?.into_param_map();
    println!("f = {:.6}", g.value(loss).item());
    println!("df/dW = {:?}", grads[&w].data());

    let cfg = ModelConfig {
        d_emb: 4,
        d_h: 6,
        d_z: 5,
        layers: 2,
        max_len: 4,
        ..ModelConfig::desk(Arch::Eem, 12)
    };
    let mut model = Model::build(cfg.clone(), 1)?;
    model.reinit_uniform(0.5, 1);
    let batch = [Example {
        src: vec![4, 5, 6],
        tgt: vec![7, 8],
        annotation: Some(EmotionAnnotation::new(0.2, 0.9)?),
    }];
    let refs: Vec<&Example> = batch.iter().collect();
    let mut g = Graph::new();
    let (loss, tokens) = model.batch_loss(&mut g, &refs)?;
    let analytic = g.backward(loss)?.into_param_map();
    let mut params = model.params().clone();
    let report = finite_diff_check(
        |p| Model::from_parts(cfg.clone(), p.clone())?.nll(&refs).map(|r| r.0),
        &mut params,
        &analytic,
        0.05,
    )?;
    println!(
        "toy EEM: {} parameters, NLL {:.4} over {tokens} tokens, max relative error {:.2e} (worst {:?})",
        model.num_parameters(),
        g.value(loss).item(),
        report.max_rel_err,
        report.worst
    );
    Ok(())
}
