//! Tall-versus-wide rectangles: evolve two layers, fine-tune, and report the
//! learning curve and test CCR.
//!
//! cargo run --release --example rectangles

use evonet::data::gen_rectangles;
use evonet::evolution::{evolve_stack, EvolutionConfig};
use evonet::fitness::ccr;
use evonet::network::{assemble, finetune, predict, TrainConfig};
use evonet::rng::{stream, tag};

fn main() -> evonet::Result<()> {
    let seed = 1;
    let train = gen_rectangles(6000, 28, &mut stream(seed, &[tag::DATA, 0]))?;
    let test = gen_rectangles(2000, 28, &mut stream(seed, &[tag::DATA, 1]))?;

    let evo = EvolutionConfig {
        pop_size: 20,
        max_generations: 30,
        max_depth: 2,
        seed,
        ..Default::default()
    };
    let stage1 = evolve_stack(&train, &evo)?;
    let widths: Vec<usize> = stage1.layers.iter().map(|l| l.units()).collect();
    println!("widths 784 -> {widths:?}");

    let tc = TrainConfig {
        learning_rate: 0.1,
        seed,
        ..Default::default()
    };
    let net = assemble(&stage1.layers, 2, &mut stream(seed, &[tag::HEAD_INIT]))?;
    let (net, hist) = finetune(&net, &train, &tc, &mut stream(seed, &[tag::FINETUNE]))?;
    for e in &hist.epochs {
        println!("epoch {:>2}  train {:.3}  valid {:.3}  loss {:.4}", e.epoch, e.train_ccr, e.valid_ccr, e.loss);
    }
    println!("restored epoch {}", hist.best_epoch);
    println!("test CCR {:.4}", ccr(&predict(&net, test.x.view())?, &test.y)?);
    Ok(())
}
