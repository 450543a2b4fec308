//! Activation maximization on a network evolved for rectangles; writes one
//! PGM per unit.
//!
//! cargo run --release --example visualize -- [out_dir]

use std::fs;
use std::path::PathBuf;

use evonet::data::gen_rectangles;
use evonet::evolution::{evolve_stack, EvolutionConfig};
use evonet::io::pgm_bytes;
use evonet::network::{activation_maximization, assemble};
use evonet::rng::{stream, tag};

fn main() -> evonet::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("evonet-visualize"), PathBuf::from);
    fs::create_dir_all(&out).expect("output dir");
    let train = gen_rectangles(1000, 28, &mut stream(2, &[tag::DATA]))?;
    let evo = EvolutionConfig {
        pop_size: 10,
        max_generations: 5,
        max_depth: 2,
        seed: 2,
        ..Default::default()
    };
    let layers = evolve_stack(&train, &evo)?.layers;
    let net = assemble(&layers, 2, &mut stream(2, &[tag::HEAD_INIT]))?;

    for depth in 1..=net.depth() {
        for unit in 0..3.min(net.layers[depth - 1].units()) {
            let am = activation_maximization(&net, depth, unit, 1000, 0.1, &mut stream(2, &[tag::VISUALIZE, depth as u64, unit as u64]))?;
            let first = am.trace.first().copied().unwrap_or(f64::NAN);
            let last = am.trace.last().copied().unwrap_or(f64::NAN);
            let path = out.join(format!("depth{depth}_unit{unit}.pgm"));
            fs::write(&path, pgm_bytes(28, 28, am.input.as_slice().expect("contiguous"))?).expect("write pgm");
            println!("depth {depth} unit {unit}: activation {first:.4} -> {last:.4}  {}", path.display());
        }
    }
    Ok(())
}
