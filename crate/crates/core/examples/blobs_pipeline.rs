//! The whole `full` pipeline on separable blobs through the experiment
//! driver, leaving every artifact in a temporary directory.
//!
//! cargo run --release --example blobs_pipeline

use evonet::evolution::EvolutionConfig;
use evonet::experiment::{run_pipeline, Command, DatasetSpec, ExperimentConfig};
use evonet::network::TrainConfig;

fn main() -> evonet::Result<()> {
    let mut cfg = ExperimentConfig::new(DatasetSpec::Blobs {
        n_train: 600,
        n_test: 300,
        dim: 4,
        n_classes: 3,
        separation: 12.0,
    });
    cfg.evolution = EvolutionConfig {
        pop_size: 20,
        max_generations: 20,
        max_depth: 2,
        ..Default::default()
    };
    cfg.training = TrainConfig {
        learning_rate: 0.1,
        batch_size: 10,
        ..Default::default()
    };
    cfg.set_seed(11);
    cfg.visualize.iterations = 200;
    cfg.visualize.units_per_layer = 2;
    cfg.output_dir = std::env::temp_dir().join("evonet-blobs-example");

    let summary = run_pipeline(&cfg, Command::Full, None)?;
    if let Some(m) = &summary.metrics {
        println!("test CCR {:.4} on {} samples", m.test_ccr, m.n_test);
    }
    for layer in summary.layers.iter().flatten() {
        println!("evolved layer: {} -> {} ({})", layer.input_dim(), layer.units(), layer.activation.name());
    }
    for p in &summary.outputs {
        println!("  {}", p.display());
    }
    Ok(())
}
