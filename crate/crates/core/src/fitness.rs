//! Layer representations, the linear SVM probe, and the CCR fitness.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evolution::EvolutionConfig;
use crate::genome::{decode, Chromosome, LayerPhenotype};
use crate::subspace::BasisSet;

/// `f(X W^T)`: one layer applied to a batch of row vectors.
pub fn forward_layer(layer: &LayerPhenotype, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != layer.input_dim() {
        return Err(Error::mismatch("layer input", layer.input_dim(), x.ncols()));
    }
    let act = layer.activation;
    let mut z = x.dot(&layer.weights.t());
    z.mapv_inplace(|v| act.apply(v));
    Ok(z)
}

/// Folds [`forward_layer`] over `layers` in order.
pub fn forward_stack(layers: &[LayerPhenotype], x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut cur = x.to_owned();
    for (i, layer) in layers.iter().enumerate() {
        cur = forward_layer(layer, cur.view()).map_err(|e| match e {
            Error::DimensionMismatch { expected, got, .. } => {
                Error::mismatch(format!("layer {i} input"), expected, got)
            }
            other => other,
        })?;
    }
    Ok(cur)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub epochs: usize,
    pub lambda: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lambda: 1e-4,
        }
    }
}

/// One-vs-rest linear SVM: row `c` of `weights` scores `classes[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub classes: Vec<usize>,
}

impl LinearSvmModel {
    pub fn decision(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }

    /// Highest-scoring class per row; ties go to the lowest class index.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        self.decision(x)
            .axis_iter(Axis(0))
            .map(|row| self.classes[argmax(row.iter().copied())])
            .collect()
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Primal sub-gradient descent on the L2-regularized hinge loss, one binary
/// problem per class, step `1 / (lambda t)`, shuffled each epoch. The bias
/// acts as the weight of a constant feature and is regularized with the rest.
pub fn train_linear_svm<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    cfg: &SvmConfig,
    rng: &mut R,
) -> Result<LinearSvmModel> {
    if x.nrows() != y.len() {
        return Err(Error::mismatch("svm labels", x.nrows(), y.len()));
    }
    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels);
    }
    let class_of: Vec<usize> = y
        .iter()
        .map(|l| classes.binary_search(l).expect("label listed"))
        .collect();

    let (n, d) = x.dim();
    let c = classes.len();
    let mut w = Array2::<f64>::zeros((c, d));
    let mut b = Array1::<f64>::zeros(c);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let decay = 1.0 - eta * cfg.lambda;
            let xi = x.row(i);
            for k in 0..c {
                let sign = if class_of[i] == k { 1.0 } else { -1.0 };
                let mut wk = w.row_mut(k);
                let margin = sign * (wk.dot(&xi) + b[k]);
                wk *= decay;
                b[k] *= decay;
                if margin < 1.0 {
                    wk.scaled_add(eta * sign, &xi);
                    b[k] += eta * sign;
                }
            }
        }
    }
    if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("svm parameters diverged".into()));
    }
    Ok(LinearSvmModel {
        weights: w,
        bias: b,
        classes,
    })
}

/// Correct classification rate: exact matches over total.
pub fn ccr(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::mismatch("ccr", truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(Error::DegenerateInput("ccr of an empty label set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Rows drawn from a training set for one round of fitness evaluation.
#[derive(Debug, Clone)]
pub struct LabeledSubset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub indices: Vec<usize>,
}

impl LabeledSubset {
    /// Draws `fraction` of `ds`, stratified by class when every class can
    /// contribute at least one row, uniformly otherwise. Indices are returned
    /// in ascending order; `fraction = 1` yields the whole set unchanged.
    pub fn sample<R: Rng + ?Sized>(ds: &Dataset, fraction: f64, rng: &mut R) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config {
                line: None,
                message: format!("eval fraction {fraction} not in (0, 1]"),
            });
        }
        let n = ds.len();
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes];
        for (i, &l) in ds.y.iter().enumerate() {
            by_class[l].push(i);
        }
        let present: Vec<&Vec<usize>> = by_class.iter().filter(|v| !v.is_empty()).collect();
        let stratify = present.iter().all(|v| fraction * v.len() as f64 >= 1.0);

        let mut indices = Vec::new();
        if stratify {
            for members in present {
                let take = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len());
                let mut m = members.clone();
                m.shuffle(rng);
                indices.extend_from_slice(&m[..take]);
            }
        } else {
            let take = ((fraction * n as f64).round() as usize).clamp(1, n);
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(rng);
            indices.extend_from_slice(&all[..take]);
        }
        indices.sort_unstable();
        Ok(Self {
            x: ds.x.select(Axis(0), &indices),
            y: indices.iter().map(|&i| ds.y[i]).collect(),
            indices,
        })
    }
}

/// Scores one candidate layer on already-propagated features: decode, apply
/// the layer, fit the SVM, return its CCR on the same rows.
pub fn score_candidate<R: Rng + ?Sized>(
    chrom: &Chromosome,
    basis: &BasisSet,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    svm: &SvmConfig,
    rng: &mut R,
) -> Result<f64> {
    let layer = decode(chrom, basis)?;
    let rep = forward_layer(&layer, features)?;
    let model = train_linear_svm(rep.view(), labels, svm, rng)?;
    let value = ccr(&model.predict(rep.view()), labels)?;
    Ok(value)
}

/// Maps degenerate evaluations to the worst fitness, passing other errors on.
pub(crate) fn fitness_or_zero(result: Result<f64>) -> Result<(f64, Option<String>)> {
    match result {
        Ok(v) => Ok((v, None)),
        Err(e @ (Error::DegenerateInput(_) | Error::DegenerateLabels | Error::Numeric(_))) => {
            Ok((0.0, Some(e.to_string())))
        }
        Err(e) => Err(e),
    }
}

/// Full fitness of one chromosome: sample the evaluation rows, push them
/// through the already-evolved `upstream` layers and the candidate, then
/// report the linear SVM's CCR on those rows. Degenerate cases score 0.
pub fn fitness_of<R: Rng + ?Sized>(
    chrom: &Chromosome,
    basis: &BasisSet,
    train: &Dataset,
    upstream: &[LayerPhenotype],
    cfg: &EvolutionConfig,
    rng: &mut R,
) -> Result<f64> {
    let subset = LabeledSubset::sample(train, cfg.eval_fraction, rng)?;
    let features = forward_stack(upstream, subset.x.view())?;
    let scored = score_candidate(chrom, basis, features.view(), &subset.y, &cfg.svm, rng);
    fitness_or_zero(scored).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::rng;
    use ndarray::{arr2, Array};

    #[test]
    fn rectifier_identity_layer() {
        let l = LayerPhenotype::new(Array::eye(2), Activation::Rectifier);
        let out = forward_layer(&l, arr2(&[[-1.0, 2.0]]).view()).unwrap();
        assert_eq!(out, arr2(&[[0.0, 2.0]]));
    }

    #[test]
    fn sigmoid_of_zero_input() {
        let l = LayerPhenotype::new(arr2(&[[0.3, -0.2], [1.0, 4.0], [0.0, 1.0]]), Activation::Sigmoid);
        let out = forward_layer(&l, Array2::zeros((4, 2)).view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
        assert_eq!(out.dim(), (4, 3));
    }

    #[test]
    fn stack_mismatch_names_layer() {
        let a = LayerPhenotype::new(Array::eye(3), Activation::Tanh);
        let b = LayerPhenotype::new(Array2::zeros((2, 4)), Activation::Tanh);
        let err = forward_stack(&[a, b], Array2::zeros((1, 3)).view()).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
        let x = arr2(&[[1.0, 2.0]]);
        assert_eq!(forward_stack(&[], x.view()).unwrap(), x);
    }

    #[test]
    fn ccr_counts() {
        assert_eq!(ccr(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(ccr(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(ccr(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(ccr(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn svm_single_class_is_degenerate() {
        let x = Array2::zeros((3, 2));
        let r = train_linear_svm(x.view(), &[1, 1, 1], &SvmConfig::default(), &mut rng::stream(0, &[]));
        assert!(matches!(r, Err(Error::DegenerateLabels)));
    }

    #[test]
    fn svm_separates_two_blobs() {
        let x = arr2(&[[0.0, 0.0], [0.1, 0.2], [0.2, 0.1], [3.0, 3.0], [3.1, 2.9], [2.9, 3.2]]);
        let y = [0, 0, 0, 1, 1, 1];
        let m = train_linear_svm(x.view(), &y, &SvmConfig::default(), &mut rng::stream(1, &[])).unwrap();
        assert_eq!(ccr(&m.predict(x.view()), &y).unwrap(), 1.0);
    }

    #[test]
    fn svm_cannot_solve_xor() {
        // Any linear rule gets at most 3 of the 4 XOR points right.
        let x = arr2(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]);
        let y = [0, 0, 1, 1];
        for seed in 0..20 {
            let m = train_linear_svm(x.view(), &y, &SvmConfig::default(), &mut rng::stream(seed, &[])).unwrap();
            assert!(ccr(&m.predict(x.view()), &y).unwrap() <= 0.75);
        }
    }
}
