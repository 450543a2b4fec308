//! Per-layer genetic search and the layer-wise stacking loop.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fitness::{fitness_or_zero, forward_stack, score_candidate, LabeledSubset, SvmConfig};
use crate::genome::{decode, mutate, one_point_crossover, random_chromosome, repair_activation, Chromosome, LayerPhenotype};
use crate::rng::{self, tag};
use crate::subspace::{generate_orthogonal_basis, BasisSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    pub pop_size: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    /// Per-gene probability of being touched once a chromosome mutates.
    pub gene_mutation_prob: f64,
    /// Polynomial mutation distribution index.
    pub eta: f64,
    pub max_generations: usize,
    pub max_depth: usize,
    /// Share of the training set drawn for each generation's fitness calls.
    pub eval_fraction: f64,
    pub seed: u64,
    /// Worker threads for fitness evaluation; 0 uses the global pool.
    pub threads: usize,
    pub svm: SvmConfig,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            pop_size: 50,
            crossover_prob: 0.9,
            mutation_prob: 0.1,
            gene_mutation_prob: 0.5,
            eta: 20.0,
            max_generations: 50,
            max_depth: 5,
            eval_fraction: 0.10,
            seed: 0,
            threads: 0,
            svm: SvmConfig::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| {
            Err(Error::Config {
                line: None,
                message: format!("evolution.{field}: {msg}"),
            })
        };
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
            ("gene_mutation_prob", self.gene_mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(name, format!("{p} is not a probability in [0, 1]"));
            }
        }
        if self.pop_size < 2 {
            return bad("pop_size", format!("{} < 2", self.pop_size));
        }
        if self.max_depth < 1 {
            return bad("max_depth", "must be at least 1".into());
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction <= 1.0) {
            return bad("eval_fraction", format!("{} not in (0, 1]", self.eval_fraction));
        }
        if !(self.eta >= 0.0) {
            return bad("eta", format!("{} must be non-negative", self.eta));
        }
        if !(self.svm.lambda > 0.0) || self.svm.epochs == 0 {
            return bad("svm", "lambda must be positive and epochs non-zero".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub chromosome: Chromosome,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_chromosome: Chromosome,
    /// Offspring that failed to decode or train and were scored 0.
    pub degenerate: usize,
}

/// Picks the fitter of two distinct uniformly drawn entries.
pub fn binary_tournament<R: Rng + ?Sized>(fitnesses: &[f64], rng: &mut R) -> Result<usize> {
    let n = fitnesses.len();
    if n < 2 {
        return Err(Error::InvalidDimension {
            got: n,
            reason: "binary tournament needs at least two entrants",
        });
    }
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    Ok(tournament_between(fitnesses, i, j, rng))
}

/// The tournament between `i` and `j`; equal fitness is a fair coin.
pub fn tournament_between<R: Rng + ?Sized>(fitnesses: &[f64], i: usize, j: usize, rng: &mut R) -> usize {
    let (fi, fj) = (fitnesses[i], fitnesses[j]);
    if fi > fj {
        i
    } else if fj > fi {
        j
    } else if rng.random_bool(0.5) {
        i
    } else {
        j
    }
}

fn best_index(pool: &[Individual]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, ind) in pool.iter().enumerate() {
        if best.is_none_or(|b| ind.fitness > pool[b].fitness) {
            best = Some(i);
        }
    }
    best
}

/// Elitist selection over `population ∪ offspring`: the best individual
/// survives, the other `m - 1` slots are filled by binary tournaments over
/// the remaining pool, with winners returned to the pool.
pub fn environmental_selection<R: Rng + ?Sized>(
    population: &[Individual],
    offspring: &[Individual],
    m: usize,
    rng: &mut R,
) -> Result<Vec<Individual>> {
    let mut pool: Vec<Individual> = population.iter().chain(offspring).cloned().collect();
    let Some(best) = best_index(&pool) else {
        return Err(Error::DegenerateInput("environmental selection over an empty pool".into()));
    };
    let elite = pool.remove(best);
    let fits: Vec<f64> = pool.iter().map(|i| i.fitness).collect();
    let mut next = Vec::with_capacity(m);
    next.push(elite);
    while next.len() < m {
        let pick = match pool.len() {
            0 => {
                next.push(next[0].clone());
                continue;
            }
            1 => 0,
            _ => binary_tournament(&fits, rng)?,
        };
        next.push(pool[pick].clone());
    }
    Ok(next)
}

/// Outcome of evolving one layer.
#[derive(Debug, Clone)]
pub struct LayerEvolution {
    pub layer: LayerPhenotype,
    pub chromosome: Chromosome,
    pub basis: BasisSet,
    pub history: Vec<GenerationRecord>,
    pub final_population: Vec<Individual>,
}

/// Rows and their upstream representation for one generation's fitness calls.
struct EvalBatch {
    features: ndarray::Array2<f64>,
    labels: Vec<usize>,
}

impl EvalBatch {
    fn draw(train: &Dataset, upstream: &[LayerPhenotype], fraction: f64, stream: &mut rng::Stream) -> Result<Self> {
        let subset = LabeledSubset::sample(train, fraction, stream)?;
        Ok(Self {
            features: forward_stack(upstream, subset.x.view())?,
            labels: subset.y,
        })
    }
}

struct LayerRun<'a> {
    basis: &'a BasisSet,
    cfg: &'a EvolutionConfig,
    layer_index: u64,
}

impl LayerRun<'_> {
    /// Scores chromosomes concurrently. Each individual owns a stream keyed
    /// by (layer, round, index), so the result is independent of scheduling.
    fn evaluate(&self, chroms: Vec<Chromosome>, batch: &EvalBatch, round: u64) -> Result<(Vec<Individual>, usize)> {
        let scored: Vec<Result<(Individual, bool)>> = chroms
            .into_par_iter()
            .enumerate()
            .map(|(i, chromosome)| {
                let mut s = rng::stream(self.cfg.seed, &[tag::FITNESS, self.layer_index, round, i as u64]);
                let raw = score_candidate(&chromosome, self.basis, batch.features.view(), &batch.labels, &self.cfg.svm, &mut s);
                let (fitness, diag) = fitness_or_zero(raw).map_err(|e| Error::Fitness {
                    generation: round as usize,
                    individual: i,
                    source: Box::new(e),
                })?;
                Ok((Individual { chromosome, fitness }, diag.is_some()))
            })
            .collect();
        let mut out = Vec::with_capacity(scored.len());
        let mut degenerate = 0;
        for r in scored {
            let (ind, bad) = r?;
            degenerate += usize::from(bad);
            out.push(ind);
        }
        Ok((out, degenerate))
    }

    fn record(generation: usize, pop: &[Individual], degenerate: usize) -> GenerationRecord {
        let best = best_index(pop).expect("population is never empty");
        GenerationRecord {
            generation,
            best_fitness: pop[best].fitness,
            mean_fitness: pop.iter().map(|i| i.fitness).sum::<f64>() / pop.len() as f64,
            best_chromosome: pop[best].chromosome.clone(),
            degenerate,
        }
    }

    fn offspring(&self, pop: &[Individual], generation: u64) -> Result<Vec<Chromosome>> {
        let m = self.cfg.pop_size;
        let mut v = rng::stream(self.cfg.seed, &[tag::VARIATION, self.layer_index, generation]);
        let fits: Vec<f64> = pop.iter().map(|i| i.fitness).collect();
        let mut q = Vec::with_capacity(m + 1);
        while q.len() < m {
            let a = &pop[binary_tournament(&fits, &mut v)?].chromosome;
            let b = &pop[binary_tournament(&fits, &mut v)?].chromosome;
            let (c1, c2) = if v.random::<f64>() < self.cfg.crossover_prob {
                one_point_crossover(a, b, &mut v)?
            } else {
                (a.clone(), b.clone())
            };
            q.push(c1);
            q.push(c2);
        }
        q.truncate(m);
        Ok(q.into_iter()
            .map(|c| {
                let c = repair_activation(c, &mut v);
                mutate(&c, &mut v, self.cfg)
            })
            .collect())
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs the genetic search for one layer on top of the `upstream` layers.
///
/// Fitness is computed once per individual, on the evaluation rows of the
/// generation in which it was created, so the elite's score is carried over
/// and the best fitness never decreases. After the last generation the
/// survivors are re-scored on fresh rows and the winner is decoded.
pub fn evolve_layer(
    train: &Dataset,
    basis: &BasisSet,
    cfg: &EvolutionConfig,
    upstream: &[LayerPhenotype],
    layer_index: usize,
) -> Result<LayerEvolution> {
    cfg.validate()?;
    if train.len() < 10 {
        return Err(Error::InvalidDimension {
            got: train.len(),
            reason: "layer evolution needs at least 10 training rows",
        });
    }
    let input_dim = upstream.last().map_or(train.dim(), |l| l.units());
    if basis.dim() != input_dim || basis.rows() != input_dim {
        return Err(Error::mismatch(format!("layer {layer_index} basis"), input_dim, basis.dim()));
    }
    with_pool(cfg.threads, || run_layer(train, basis, cfg, upstream, layer_index as u64))?
}

fn run_layer(
    train: &Dataset,
    basis: &BasisSet,
    cfg: &EvolutionConfig,
    upstream: &[LayerPhenotype],
    layer_index: u64,
) -> Result<LayerEvolution> {
    let run = LayerRun {
        basis,
        cfg,
        layer_index,
    };
    let n = basis.dim();
    let subset_stream = |g: u64| rng::stream(cfg.seed, &[tag::EVAL_SUBSET, layer_index, g]);

    let init: Vec<Chromosome> = (0..cfg.pop_size)
        .map(|i| random_chromosome(n, &mut rng::stream(cfg.seed, &[tag::INIT, layer_index, i as u64])))
        .collect::<Result<_>>()?;
    let batch = EvalBatch::draw(train, upstream, cfg.eval_fraction, &mut subset_stream(0))?;
    let (mut pop, degenerate) = run.evaluate(init, &batch, 0)?;
    let mut history = vec![LayerRun::record(0, &pop, degenerate)];

    for g in 1..=cfg.max_generations as u64 {
        let batch = EvalBatch::draw(train, upstream, cfg.eval_fraction, &mut subset_stream(g))?;
        let q = run.offspring(&pop, g)?;
        let (q, degenerate) = run.evaluate(q, &batch, g)?;
        let mut sel = rng::stream(cfg.seed, &[tag::SELECTION, layer_index, g]);
        pop = environmental_selection(&pop, &q, cfg.pop_size, &mut sel)?;
        history.push(LayerRun::record(g as usize, &pop, degenerate));
    }

    let mut fresh = rng::stream(cfg.seed, &[tag::FINAL_EVAL, layer_index]);
    let batch = EvalBatch::draw(train, upstream, cfg.eval_fraction, &mut fresh)?;
    let chroms: Vec<Chromosome> = pop.iter().map(|i| i.chromosome.clone()).collect();
    let (rescored, _) = run.evaluate(chroms, &batch, cfg.max_generations as u64 + 1)?;
    let winner = best_index(&rescored).expect("population is never empty");
    let chromosome = rescored[winner].chromosome.clone();
    let layer = decode(&chromosome, basis)?;
    Ok(LayerEvolution {
        layer,
        chromosome,
        basis: basis.clone(),
        history,
        final_population: pop,
    })
}

/// Result of the layer-wise stage.
#[derive(Debug, Clone)]
pub struct StackEvolution {
    pub layers: Vec<LayerPhenotype>,
    pub runs: Vec<LayerEvolution>,
    /// Set when stacking ended before `max_depth` because the input width fell below 2.
    pub stopped_early: Option<String>,
}

/// Evolves up to `max_depth` layers, each on the representation produced
/// by the layers before it.
pub fn evolve_stack(train: &Dataset, cfg: &EvolutionConfig) -> Result<StackEvolution> {
    cfg.validate()?;
    let mut layers: Vec<LayerPhenotype> = Vec::new();
    let mut runs = Vec::new();
    let mut stopped_early = None;
    for i in 0..cfg.max_depth {
        let n = layers.last().map_or(train.dim(), |l| l.units());
        if n < 2 {
            stopped_early = Some(format!("layer {i} would have input width {n}; stopped after {i} layers"));
            break;
        }
        let basis = generate_orthogonal_basis(n, &mut rng::stream(cfg.seed, &[tag::BASIS, i as u64]))?;
        let run = evolve_layer(train, &basis, cfg, &layers, i)?;
        layers.push(run.layer.clone());
        runs.push(run);
    }
    Ok(StackEvolution {
        layers,
        runs,
        stopped_early,
    })
}

/// `generation,best_fitness,mean_fitness` rows.
pub fn write_history_csv<W: Write>(history: &[GenerationRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "generation,best_fitness,mean_fitness")?;
    for r in history {
        writeln!(out, "{},{},{}", r.generation, r.best_fitness, r.mean_fitness)?;
    }
    Ok(())
}

/// Snapshot of one layer's population. Every random stream is derived from
/// `(seed, layer, generation)`, so those three values are the whole RNG state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub layer: usize,
    pub generation: usize,
    pub population: Vec<Individual>,
}

impl Checkpoint {
    pub fn of(run: &LayerEvolution, seed: u64, layer: usize) -> Self {
        Self {
            version: 1,
            seed,
            layer,
            generation: run.history.last().map_or(0, |r| r.generation),
            population: run.final_population.clone(),
        }
    }
}
