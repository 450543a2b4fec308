//! Hybrid chromosome encoding one layer, its decoder, and variation operators.
//!
//! Gene layout for an `n`-dimensional layer input:
//!
//! | part | genes | meaning |
//! |------|-------|---------|
//! | 1 | `n` reals in `[-1, 1]` | coefficients of the main direction `a1` in the layer basis |
//! | 2 | `n - 1` bits | which null-space vectors `a2..an` join `a1` as weight rows |
//! | 3 | 2 bits | activation (0 sigmoid, 1 tanh, 2 rectifier; 3 is repaired) |

use std::hash::{DefaultHasher, Hash, Hasher};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::evolution::EvolutionConfig;
use crate::rng;
use crate::subspace::{combine, BasisSet, NullSpace, ZERO_VECTOR_TOL};

pub const COEFF_MIN: f64 = -1.0;
pub const COEFF_MAX: f64 = 1.0;

/// Re-draws allowed when the coefficients combine to the zero vector.
const DECODE_RETRIES: u32 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub coeffs: Vec<f64>,
    #[serde(with = "bits_as_ints")]
    pub mask: Vec<bool>,
    pub act: u8,
}

mod bits_as_ints {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(bits.iter().map(|&b| b as u8))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        Vec::<u8>::deserialize(d)?
            .into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(D::Error::custom(format!("mask entry {other} is not 0 or 1"))),
            })
            .collect()
    }
}

impl Chromosome {
    /// Input dimension `n` of the layer this chromosome encodes.
    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// Number of weight rows the decoded layer will have.
    pub fn hidden_units(&self) -> usize {
        1 + self.mask.iter().filter(|&&b| b).count()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.coeffs.len();
        if n < 2 {
            return Err(Error::InvalidChromosome(format!("dimension {n} < 2")));
        }
        if self.mask.len() != n - 1 {
            return Err(Error::InvalidChromosome(format!(
                "mask length {} for dimension {n}",
                self.mask.len()
            )));
        }
        if let Some(c) = self.coeffs.iter().find(|c| !(COEFF_MIN..=COEFF_MAX).contains(*c)) {
            return Err(Error::InvalidChromosome(format!("coefficient {c} outside [-1, 1]")));
        }
        if self.act > 3 {
            return Err(Error::InvalidChromosome(format!("activation gene {} exceeds 2 bits", self.act)));
        }
        Ok(())
    }
}

/// One decoded layer: `k x n` weights (no bias) and its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPhenotype {
    pub weights: Array2<f64>,
    pub activation: Activation,
}

impl LayerPhenotype {
    pub fn new(weights: Array2<f64>, activation: Activation) -> Self {
        Self { weights, activation }
    }

    /// Output width `k`.
    pub fn units(&self) -> usize {
        self.weights.nrows()
    }

    /// Input width `n`.
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }
}

pub fn random_chromosome<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Chromosome> {
    if n < 2 {
        return Err(Error::InvalidDimension {
            got: n,
            reason: "chromosome needs n >= 2",
        });
    }
    let coeffs = (0..n).map(|_| rng.random_range(COEFF_MIN..=COEFF_MAX)).collect();
    let mask = (0..n - 1).map(|_| rng.random_bool(0.5)).collect();
    let act = rng.random_range(0..3u8);
    Ok(Chromosome { coeffs, mask, act })
}

/// Builds the layer: `a1` from the coefficients, then every null-space
/// vector whose mask bit is set, in index order.
///
/// Coefficients that combine to the zero vector are re-drawn from a stream
/// seeded by the chromosome itself, so decoding stays a pure function.
pub fn decode(chrom: &Chromosome, basis: &BasisSet) -> Result<LayerPhenotype> {
    chrom.validate()?;
    let n = chrom.dim();
    if basis.rows() != n || basis.dim() != n {
        return Err(Error::mismatch("decode basis", n, basis.rows()));
    }
    let activation = Activation::from_gene(chrom.act)?;

    let mut coeffs = Array1::from(chrom.coeffs.clone());
    let mut a1 = combine(basis, coeffs.view())?;
    let mut retries = 0;
    let mut resample = None;
    while a1.dot(&a1).sqrt() <= ZERO_VECTOR_TOL {
        if retries == DECODE_RETRIES {
            return Err(Error::DegenerateInput(format!(
                "main direction stayed below {ZERO_VECTOR_TOL:e} after {DECODE_RETRIES} re-draws"
            )));
        }
        let r = resample.get_or_insert_with(|| rng::stream(chromosome_hash(chrom), &[]));
        coeffs.mapv_inplace(|_| r.random_range(COEFF_MIN..=COEFF_MAX));
        a1 = combine(basis, coeffs.view())?;
        retries += 1;
    }

    let ns = NullSpace::of(a1.view())?;
    let mut weights = Array2::zeros((chrom.hidden_units(), n));
    weights.row_mut(0).assign(&a1);
    let kept = chrom.mask.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j);
    for (row, j) in (1..).zip(kept) {
        weights.row_mut(row).assign(&ns.vector(j));
    }
    Ok(LayerPhenotype { weights, activation })
}

fn chromosome_hash(chrom: &Chromosome) -> u64 {
    let mut h = DefaultHasher::new();
    for c in &chrom.coeffs {
        c.to_bits().hash(&mut h);
    }
    chrom.mask.hash(&mut h);
    h.finish()
}

/// One-point crossover of two parents with a random cut in the joined
/// Parts 1+2 string; Part 3 is exchanged separately at its only interior cut.
pub fn one_point_crossover<R: Rng + ?Sized>(
    p1: &Chromosome,
    p2: &Chromosome,
    rng: &mut R,
) -> Result<(Chromosome, Chromosome)> {
    let n = p1.dim();
    let cut = rng.random_range(1..2 * n - 1);
    one_point_crossover_at(p1, p2, cut)
}

/// Crossover with the Parts 1+2 cut fixed at `cut` (genes `cut..` are swapped).
pub fn one_point_crossover_at(
    p1: &Chromosome,
    p2: &Chromosome,
    cut: usize,
) -> Result<(Chromosome, Chromosome)> {
    let n = p1.dim();
    if p2.dim() != n || p1.mask.len() != n - 1 || p2.mask.len() != n - 1 {
        return Err(Error::mismatch("crossover parents", n, p2.dim()));
    }
    if cut == 0 || cut >= 2 * n - 1 {
        return Err(Error::IndexOutOfRange(format!("crossover cut {cut} not in [1, {})", 2 * n - 1)));
    }
    let (mut c1, mut c2) = (p1.clone(), p2.clone());
    for g in cut..2 * n - 1 {
        if g < n {
            std::mem::swap(&mut c1.coeffs[g], &mut c2.coeffs[g]);
        } else {
            std::mem::swap(&mut c1.mask[g - n], &mut c2.mask[g - n]);
        }
    }
    // Part 3 has two bits; the single interior cut swaps the low bit.
    let (lo1, lo2) = (p1.act & 1, p2.act & 1);
    c1.act = (p1.act & 2) | lo2;
    c2.act = (p2.act & 2) | lo1;
    Ok((c1, c2))
}

/// Bounded polynomial mutation of one real gene.
pub fn polynomial_mutation<R: Rng + ?Sized>(y: f64, lo: f64, hi: f64, eta: f64, rng: &mut R) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return y;
    }
    let d1 = (y - lo) / span;
    let d2 = (hi - y) / span;
    let r: f64 = rng.random();
    let pow = 1.0 / (eta + 1.0);
    let dq = if r < 0.5 {
        let v = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1).powf(eta + 1.0);
        v.powf(pow) - 1.0
    } else {
        let v = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2).powf(eta + 1.0);
        1.0 - v.powf(pow)
    };
    (y + dq * span).clamp(lo, hi)
}

/// With probability `mutation_prob` touches each gene with probability
/// `gene_mutation_prob`: polynomial mutation for coefficients, bit flips for
/// the mask and activation bits. The result is always activation-repaired.
pub fn mutate<R: Rng + ?Sized>(chrom: &Chromosome, rng: &mut R, cfg: &EvolutionConfig) -> Chromosome {
    let mut out = chrom.clone();
    if rng.random::<f64>() >= cfg.mutation_prob {
        return out;
    }
    let p = cfg.gene_mutation_prob;
    for c in out.coeffs.iter_mut() {
        if rng.random::<f64>() < p {
            *c = polynomial_mutation(*c, COEFF_MIN, COEFF_MAX, cfg.eta, rng);
        }
    }
    for b in out.mask.iter_mut() {
        if rng.random::<f64>() < p {
            *b = !*b;
        }
    }
    for bit in [2u8, 1u8] {
        if rng.random::<f64>() < p {
            out.act ^= bit;
        }
    }
    repair_activation(out, rng)
}

/// Replaces the invalid activation code 3 with a uniform draw from {0, 1, 2}.
pub fn repair_activation<R: Rng + ?Sized>(mut chrom: Chromosome, rng: &mut R) -> Chromosome {
    if chrom.act > 2 {
        chrom.act = rng.random_range(0..3u8);
    }
    chrom
}
