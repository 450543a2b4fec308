//! Desk-scale MNIST: the evolved network against the same layers with only
//! the head trained, and against a randomly initialised network of identical
//! shape fine-tuned with the same budget.
//!
//! cargo run --release --example mnist_desk -- [seed]

use std::path::Path;

use evonet::data::load_idx;
use evonet::evolution::{evolve_stack, EvolutionConfig};
use evonet::fitness::ccr;
use evonet::network::{assemble, finetune, predict, random_like, NetworkStack, TrainConfig};
use evonet::rng::{stream, tag};
use evonet::Dataset;

fn test_ccr(net: &NetworkStack, test: &Dataset) -> f64 {
    ccr(&predict(net, test.x.view()).unwrap(), &test.y).unwrap()
}

fn main() -> evonet::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed must be an integer"));
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-desk");
    let train = load_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
    let test = load_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;
    println!("train {} rows, test {} rows, {} features", train.len(), test.len(), train.dim());

    let evo = EvolutionConfig {
        pop_size: 20,
        max_generations: 30,
        max_depth: 2,
        seed,
        ..Default::default()
    };
    let stage1 = evolve_stack(&train, &evo)?;
    for (i, l) in stage1.layers.iter().enumerate() {
        println!("layer {i}: {} units, {}", l.units(), l.activation.name());
    }

    let tc = TrainConfig {
        learning_rate: 0.1,
        seed,
        ..Default::default()
    };
    let head = assemble(&stage1.layers, train.n_classes, &mut stream(seed, &[tag::HEAD_INIT]))?;
    let (tuned, hist) = finetune(&head, &train, &tc, &mut stream(seed, &[tag::FINETUNE]))?;
    let frozen_cfg = TrainConfig {
        freeze_hidden: true,
        ..tc.clone()
    };
    let (frozen, _) = finetune(&head, &train, &frozen_cfg, &mut stream(seed, &[tag::FINETUNE]))?;
    let random = random_like(&stage1.layers, train.n_classes, &mut stream(seed, &[tag::BASELINE]))?;
    let (random, _) = finetune(&random, &train, &tc, &mut stream(seed, &[tag::FINETUNE]))?;

    println!("evolved + fine-tuned  {:.4} (best epoch {})", test_ccr(&tuned, &test), hist.best_epoch);
    println!("evolved, head only    {:.4}", test_ccr(&frozen, &test));
    println!("random + fine-tuned   {:.4}", test_ccr(&random, &test));
    Ok(())
}
