//! Full pipeline on the synthetic corpus: simulator, EEM and baselines, λ sweep.
//!
//! `cargo run --release --example elicitation_experiment -- [n] [epochs]`

use eem::experiment::{run_experiment, ExperimentConfig};

fn main() -> eem::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = ExperimentConfig::default();
    if let Some(n) = args.next() {
        cfg.n = n.parse().expect("corpus size");
    }
    if let Some(e) = args.next() {
        cfg.generator_train.epochs = e.parse().expect("epochs");
    }
    let t = std::time::Instant::now();
    let report = run_experiment(&cfg, &mut |line| eprintln!("[{:>6.1}s] {line}", t.elapsed().as_secs_f64()))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
