//! One layer of genetic search on Gaussian blobs, printing the per-generation
//! fitness and the winning chromosome.
//!
//! cargo run --release --example evolve_layer

use evonet::data::gen_blobs;
use evonet::evolution::{evolve_layer, EvolutionConfig};
use evonet::rng::{stream, tag};
use evonet::subspace::generate_orthogonal_basis;

fn main() -> evonet::Result<()> {
    let ds = gen_blobs(600, 8, 4, 3.0, &mut stream(3, &[tag::DATA]))?;
    let cfg = EvolutionConfig {
        pop_size: 20,
        max_generations: 15,
        eval_fraction: 0.25,
        seed: 3,
        ..Default::default()
    };
    let basis = generate_orthogonal_basis(ds.dim(), &mut stream(cfg.seed, &[tag::BASIS, 0]))?;
    let run = evolve_layer(&ds, &basis, &cfg, &[], 0)?;
    for r in &run.history {
        println!("gen {:>2}  best {:.3}  mean {:.3}", r.generation, r.best_fitness, r.mean_fitness);
    }
    println!("winner {}", serde_json::to_string(&run.chromosome)?);
    println!("layer: {} units, {}", run.layer.units(), run.layer.activation.name());
    Ok(())
}
