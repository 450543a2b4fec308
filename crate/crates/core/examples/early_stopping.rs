//! Fine-tuning a wide random network on noise with random labels so that
//! it overfits, showing where early stopping halts and which epoch is restored.
//!
//! cargo run --release --example early_stopping

use evonet::genome::LayerPhenotype;
use evonet::network::{finetune, random_like, TrainConfig};
use evonet::rng::stream;
use evonet::{Activation, Dataset};
use ndarray::Array2;
use rand::Rng;

fn main() -> evonet::Result<()> {
    let mut rng = stream(9, &[]);
    let x = Array2::from_shape_simple_fn((200, 20), || rng.random::<f64>());
    let y = (0..200).map(|_| rng.random_range(0..2)).collect();
    let ds = Dataset::new("noise", x, y, 2)?;
    let shape = [LayerPhenotype::new(Array2::zeros((200, 20)), Activation::Tanh)];
    let net = random_like(&shape, 2, &mut stream(9, &[1]))?;
    let cfg = TrainConfig {
        learning_rate: 0.1,
        batch_size: 10,
        max_epochs: 200,
        patience: 5,
        validation_fraction: 0.3,
        ..Default::default()
    };
    let (_, hist) = finetune(&net, &ds, &cfg, &mut stream(9, &[2]))?;
    for e in &hist.epochs {
        let mark = if e.epoch == hist.best_epoch { " <- restored" } else { "" };
        println!("epoch {:>3}  train {:.3}  valid {:.3}{mark}", e.epoch, e.train_ccr, e.valid_ccr);
    }
    println!("stopped after {} epochs, best validation CCR {:.3}", hist.epochs.len() - 1, hist.max_valid_ccr());
    Ok(())
}
