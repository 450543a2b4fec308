//! Crossover, polynomial mutation and tournament selection on a small
//! population, with a tally of how the operators behave.
//!
//! cargo run --example genetic_operators

use evonet::evolution::{binary_tournament, EvolutionConfig};
use evonet::genome::{mutate, one_point_crossover, polynomial_mutation, random_chromosome, repair_activation};
use evonet::rng::stream;

fn main() -> evonet::Result<()> {
    let mut rng = stream(7, &[]);
    let p1 = random_chromosome(4, &mut rng)?;
    let p2 = random_chromosome(4, &mut rng)?;
    println!("parent 1 {}", serde_json::to_string(&p1)?);
    println!("parent 2 {}", serde_json::to_string(&p2)?);
    let (c1, c2) = one_point_crossover(&p1, &p2, &mut rng)?;
    println!("child 1  {}", serde_json::to_string(&c1)?);
    println!("child 2  {}", serde_json::to_string(&c2)?);

    let cfg = EvolutionConfig {
        mutation_prob: 1.0,
        ..Default::default()
    };
    let m = repair_activation(mutate(&c1, &mut rng, &cfg), &mut rng);
    println!("mutant   {}", serde_json::to_string(&m)?);

    let trials = 100_000;
    let mean: f64 = (0..trials).map(|_| polynomial_mutation(0.0, -1.0, 1.0, 20.0, &mut rng)).sum::<f64>() / trials as f64;
    println!("mean polynomial step from 0 with eta 20: {mean:+.5}");

    let fitness = [0.1, 0.4, 0.7, 0.9];
    let mut wins = [0usize; 4];
    for _ in 0..trials {
        wins[binary_tournament(&fitness, &mut rng)?] += 1;
    }
    println!("tournament wins by fitness {fitness:?}: {wins:?}");
    Ok(())
}
