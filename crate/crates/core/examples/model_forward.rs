//! Builds every architecture, computes λ, and shows how λ steers the
//! teacher-forced output distribution of the dual model.
//!
//! `cargo run --release --example model_forward`

use eem::emotion::EmotionAnnotation;
use eem::model::{compute_lambda, Arch, Branch, Example, LambdaSetting, Model, ModelConfig};

fn main() -> eem::Result<()> {
    let small = |arch| ModelConfig {
        d_emb: 16,
        d_h: 24,
        d_z: 24,
        ..ModelConfig::desk(arch, 50)
    };
    for arch in Arch::ALL {
        println!("{arch:>17}: {} parameters", Model::build(small(arch), 0)?.num_parameters());
    }
    println!("λ(s2=0.8, Δs′=0.6, w1=1, w2=−1, b=0) = {:.6}", compute_lambda(0.8, 0.6, 1.0, -1.0, 0.0)?);

    let model = Model::build(small(Arch::Eem), 0)?;
    let ann = EmotionAnnotation::new(0.2, 0.9)?;
    println!("training-time λ for s1=0.2, s2=0.9: {:?}", model.training_lambda(&ann)?);
    let ex = Example {
        src: vec![5, 6, 7],
        tgt: vec![8, 9],
        annotation: Some(ann),
    };
    let pos = model.single_branch(Branch::Pos)?.teacher_forced_logits(&ex, LambdaSetting::Fixed(1.0))?;
    for lambda in [0.0, 0.5, 1.0] {
        let logits = model.teacher_forced_logits(&ex, LambdaSetting::Fixed(lambda))?;
        let gap = logits[0]
            .data()
            .iter()
            .zip(pos[0].data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("λ = {lambda}: first-step logits differ from the positive branch by at most {gap:.3e}");
    }
    Ok(())
}
