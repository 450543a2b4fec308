//! Back-propagation, softmax numerics, early stopping and activation
//! maximization checked against independent oracles.

use evonet::data::gen_blobs;
use evonet::fitness::{ccr, forward_layer, forward_stack};
use evonet::genome::LayerPhenotype;
use evonet::network::{
    activation_maximization, assemble, backprop_gradients, cross_entropy_loss, finetune, head_init_bound, predict,
    random_like, softmax_forward, NetworkStack, TrainConfig,
};
use evonet::rng::stream;
use evonet::{Activation, Dataset};
use ndarray::{arr1, arr2, Array1, Array2};
use rand::Rng;

fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

fn toy_net(seed: u64) -> (NetworkStack, Array2<f64>, Vec<usize>) {
    let mut rng = stream(seed, &[]);
    let stack = NetworkStack {
        layers: vec![
            LayerPhenotype::new(uniform(5, 6, 0.8, &mut rng), Activation::Tanh),
            LayerPhenotype::new(uniform(4, 5, 0.8, &mut rng), Activation::Sigmoid),
            LayerPhenotype::new(uniform(4, 4, 0.8, &mut rng), Activation::Rectifier),
        ],
        head_weights: uniform(3, 4, 0.8, &mut rng),
        head_bias: Array1::from_shape_simple_fn(3, || rng.random_range(-0.3..0.3)),
    };
    let x = uniform(7, 6, 1.0, &mut rng);
    let y = (0..7).map(|i| i % 3).collect();
    (stack, x, y)
}

fn loss(stack: &NetworkStack, x: &Array2<f64>, y: &[usize]) -> f64 {
    cross_entropy_loss(softmax_forward(stack, x.view()).unwrap().view(), y).unwrap()
}

fn check(analytic: f64, plus: f64, minus: f64, h: f64, what: &str) {
    let numeric = (plus - minus) / (2.0 * h);
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    let rel = (analytic - numeric).abs() / denom;
    assert!(rel < 1e-5, "{what}: analytic {analytic:e} numeric {numeric:e} rel {rel:e}");
}

#[test]
fn gradients_match_central_differences() {
    let h = 1e-5;
    let mut checked = 0;
    for seed in 0..6 {
        let (stack, x, y) = toy_net(seed);
        // Keep rectifier inputs away from the kink so the finite difference is valid.
        let pre = forward_stack(&stack.layers[..2], x.view()).unwrap().dot(&stack.layers[2].weights.t());
        if pre.iter().any(|v| v.abs() < 1e-3) {
            continue;
        }
        let g = backprop_gradients(&stack, x.view(), &y).unwrap();
        for l in 0..stack.depth() {
            for idx in ndarray::indices_of(&stack.layers[l].weights) {
                let mut p = stack.clone();
                p.layers[l].weights[idx] += h;
                let mut m = stack.clone();
                m.layers[l].weights[idx] -= h;
                check(g.layers[l][idx], loss(&p, &x, &y), loss(&m, &x, &y), h, &format!("layer {l} {idx:?}"));
            }
        }
        for idx in ndarray::indices_of(&stack.head_weights) {
            let mut p = stack.clone();
            p.head_weights[idx] += h;
            let mut m = stack.clone();
            m.head_weights[idx] -= h;
            check(g.head_weights[idx], loss(&p, &x, &y), loss(&m, &x, &y), h, "head weight");
        }
        for k in 0..3 {
            let mut p = stack.clone();
            p.head_bias[k] += h;
            let mut m = stack.clone();
            m.head_bias[k] -= h;
            check(g.head_bias[k], loss(&p, &x, &y), loss(&m, &x, &y), h, "head bias");
        }
        checked += 1;
    }
    assert!(checked >= 3, "only {checked} networks were away from the rectifier kink");
}

#[test]
fn confident_predictions_have_flat_head_gradient() {
    let stack = NetworkStack {
        layers: vec![LayerPhenotype::new(Array2::eye(2), Activation::Identity)],
        head_weights: arr2(&[[60.0, 0.0], [0.0, 60.0]]),
        head_bias: arr1(&[0.0, 0.0]),
    };
    let x = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
    let g = backprop_gradients(&stack, x.view(), &[0, 1]).unwrap();
    assert!(g.head_weights.iter().chain(g.head_bias.iter()).all(|v| v.abs() < 1e-8));
}

/// Softmax by a scalar loop with compensated summation.
fn softmax_oracle(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in &e {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    let total = sum + comp;
    e.iter().map(|v| v / total).collect()
}

#[test]
fn softmax_and_loss_match_scalar_oracles() {
    let mut rng = stream(31, &[]);
    let stack = NetworkStack {
        layers: vec![LayerPhenotype::new(Array2::eye(6), Activation::Identity)],
        head_weights: uniform(4, 6, 1.5, &mut rng),
        head_bias: arr1(&[0.1, -0.2, 0.3, 0.0]),
    };
    let x = uniform(20, 6, 2.0, &mut rng);
    let y: Vec<usize> = (0..20).map(|i| (i * 7) % 4).collect();
    let p = softmax_forward(&stack, x.view()).unwrap();
    let mut nll = 0.0;
    for (r, row) in x.rows().into_iter().enumerate() {
        let z: Vec<f64> = (0..4).map(|k| stack.head_weights.row(k).dot(&row) + stack.head_bias[k]).collect();
        let want = softmax_oracle(&z);
        for k in 0..4 {
            assert!((p[[r, k]] - want[k]).abs() < 1e-12);
        }
        nll -= want[y[r]].ln();
    }
    assert!((cross_entropy_loss(p.view(), &y).unwrap() - nll / 20.0).abs() < 1e-12);
    let uniform_p = Array2::from_elem((3, 5), 0.2);
    assert!((cross_entropy_loss(uniform_p.view(), &[0, 1, 4]).unwrap() - 5f64.ln()).abs() < 1e-9);
}

#[test]
fn forward_layer_matches_scalar_loop() {
    let mut rng = stream(32, &[]);
    let w = uniform(3, 4, 1.0, &mut rng);
    let x = uniform(5, 4, 2.0, &mut rng);
    let out = forward_layer(&LayerPhenotype::new(w.clone(), Activation::Tanh), x.view()).unwrap();
    for i in 0..5 {
        for j in 0..3 {
            let z: f64 = (0..4).map(|k| x[[i, k]] * w[[j, k]]).sum();
            assert!((out[[i, j]] - z.tanh()).abs() < 1e-12);
            assert!(out[[i, j]].abs() < 1.0);
        }
    }
    let relu = LayerPhenotype::new(Array2::eye(2), Activation::Rectifier);
    assert_eq!(forward_layer(&relu, arr2(&[[-1.0, 2.0]]).view()).unwrap(), arr2(&[[0.0, 2.0]]));
    let sig = LayerPhenotype::new(w.clone(), Activation::Sigmoid);
    assert!(forward_layer(&sig, Array2::zeros((2, 4)).view()).unwrap().iter().all(|&v| v == 0.5));
}

#[test]
fn stacked_forward_is_composition() {
    let mut rng = stream(33, &[]);
    let l1 = LayerPhenotype::new(uniform(4, 6, 1.0, &mut rng), Activation::Sigmoid);
    let l2 = LayerPhenotype::new(uniform(3, 4, 1.0, &mut rng), Activation::Rectifier);
    let x = uniform(8, 6, 1.0, &mut rng);
    let manual = forward_layer(&l2, forward_layer(&l1, x.view()).unwrap().view()).unwrap();
    let stacked = forward_stack(&[l1.clone(), l2], x.view()).unwrap();
    assert!((&manual - &stacked).iter().all(|d| d.abs() < 1e-12));
    assert_eq!(forward_stack(&[], x.view()).unwrap(), x);
    let bad = LayerPhenotype::new(Array2::zeros((2, 5)), Activation::Tanh);
    let err = forward_stack(&[l1, bad], x.view()).unwrap_err().to_string();
    assert!(err.contains("layer 1"), "{err}");
}

#[test]
fn head_is_initialized_in_range_with_zero_bias() {
    let layers = [LayerPhenotype::new(Array2::eye(30), Activation::Tanh)];
    let net = assemble(&layers, 10, &mut stream(34, &[])).unwrap();
    let bound = head_init_bound(30, 10);
    assert!((bound - 4.0 * 6f64.sqrt() / 40f64.sqrt()).abs() < 1e-15);
    assert!(net.head_weights.iter().all(|v| v.abs() <= bound));
    assert!(net.head_bias.iter().all(|&b| b == 0.0));
}

#[test]
fn predict_breaks_ties_low() {
    let stack = NetworkStack {
        layers: vec![LayerPhenotype::new(Array2::eye(2), Activation::Identity)],
        head_weights: arr2(&[[1.0, 0.0], [0.0, 1.0]]),
        head_bias: arr1(&[0.0, 0.0]),
    };
    assert_eq!(predict(&stack, arr2(&[[0.1, 0.9], [0.5, 0.5]]).view()).unwrap(), vec![1, 0]);
}

#[test]
fn zero_epochs_return_the_input() {
    let ds = gen_blobs(100, 3, 2, 8.0, &mut stream(35, &[])).unwrap();
    let shape = [LayerPhenotype::new(Array2::zeros((4, 3)), Activation::Tanh)];
    let net = random_like(&shape, 2, &mut stream(35, &[1])).unwrap();
    let cfg = TrainConfig { max_epochs: 0, batch_size: 10, ..Default::default() };
    let (out, hist) = finetune(&net, &ds, &cfg, &mut stream(35, &[2])).unwrap();
    assert_eq!(out, net);
    assert_eq!(hist.epochs.len(), 1);
}

#[test]
fn separable_blobs_are_fit_exactly() {
    let ds = gen_blobs(200, 4, 2, 10.0, &mut stream(36, &[])).unwrap();
    let shape = [LayerPhenotype::new(Array2::zeros((4, 4)), Activation::Tanh)];
    let net = random_like(&shape, 2, &mut stream(36, &[1])).unwrap();
    let cfg = TrainConfig { max_epochs: 200, patience: 200, batch_size: 10, learning_rate: 0.01, ..Default::default() };
    let (out, hist) = finetune(&net, &ds, &cfg, &mut stream(36, &[2])).unwrap();
    assert!(hist.epochs.iter().any(|e| e.train_ccr == 1.0));
    assert_eq!(ccr(&predict(&out, ds.x.view()).unwrap(), &ds.y).unwrap(), 1.0);
}

#[test]
fn training_is_deterministic() {
    let ds = gen_blobs(120, 5, 3, 3.0, &mut stream(37, &[])).unwrap();
    let shape = [LayerPhenotype::new(Array2::zeros((6, 5)), Activation::Sigmoid)];
    let net = random_like(&shape, 3, &mut stream(37, &[1])).unwrap();
    let cfg = TrainConfig { batch_size: 10, ..Default::default() };
    let a = finetune(&net, &ds, &cfg, &mut stream(37, &[2])).unwrap();
    let b = finetune(&net, &ds, &cfg, &mut stream(37, &[2])).unwrap();
    assert_eq!(a, b);
}

/// Random inputs with random labels: any fit to the training rows is noise.
pub fn noise_set(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = stream(seed, &[]);
    let x = Array2::from_shape_simple_fn((n, dim), || rng.random::<f64>());
    let y = (0..n).map(|_| rng.random_range(0..2)).collect();
    Dataset::new("noise", x, y, 2).unwrap()
}

#[test]
fn early_stopping_follows_patience() {
    for seed in 0..5 {
        let ds = noise_set(300, 20, 40 + seed);
        let shape = [LayerPhenotype::new(Array2::zeros((100, 20)), Activation::Tanh)];
        let net = random_like(&shape, 2, &mut stream(seed, &[1])).unwrap();
        let cfg = TrainConfig { learning_rate: 0.1, batch_size: 10, max_epochs: 300, patience: 4, validation_fraction: 0.3, ..Default::default() };
        let (best, hist) = finetune(&net, &ds, &cfg, &mut stream(seed, &[2])).unwrap();
        let last = hist.epochs.last().unwrap().epoch;
        assert!(last < cfg.max_epochs, "overfitting run should stop early");
        assert_eq!(last, hist.best_epoch + cfg.patience);
        let best_ccr = hist.epochs[hist.best_epoch].valid_ccr;
        assert!(hist.epochs[hist.best_epoch + 1..].iter().all(|e| e.valid_ccr <= best_ccr));
        assert!(hist.epochs[..hist.best_epoch].iter().all(|e| e.valid_ccr < best_ccr));
        let valid = ds.select(&hist.validation_indices);
        assert_eq!(ccr(&predict(&best, valid.x.view()).unwrap(), &valid.y).unwrap(), hist.max_valid_ccr());
    }
}

fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.dot(b) / (a.dot(a).sqrt() * b.dot(b).sqrt())
}

#[test]
fn linear_unit_is_maximized_by_its_weight_row() {
    let mut rng = stream(38, &[]);
    let w = uniform(4, 9, 1.0, &mut rng);
    let net = assemble(&[LayerPhenotype::new(w.clone(), Activation::Identity)], 2, &mut rng).unwrap();
    for unit in 0..4 {
        let am = activation_maximization(&net, 1, unit, 200, 0.1, &mut stream(38, &[unit as u64])).unwrap();
        assert!(cosine(&am.input, &w.row(unit).to_owned()) > 0.999);
        assert!((am.input.dot(&am.input) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn activation_trace_rises_for_monotone_units() {
    let mut rng = stream(39, &[]);
    let layers = vec![
        LayerPhenotype::new(uniform(6, 10, 1.0, &mut rng), Activation::Tanh),
        LayerPhenotype::new(uniform(3, 6, 1.0, &mut rng), Activation::Sigmoid),
    ];
    let net = assemble(&layers, 2, &mut rng).unwrap();
    let am = activation_maximization(&net, 2, 1, 500, 0.05, &mut stream(39, &[1])).unwrap();
    let first = am.trace[0];
    let last = *am.trace.last().unwrap();
    assert!(last >= first);
    let drops = am.trace.windows(2).filter(|w| w[1] < w[0] - 1e-9).count();
    assert!(drops * 10 < am.trace.len(), "{drops} decreases in {} steps", am.trace.len());
    assert!(activation_maximization(&net, 3, 0, 1, 0.1, &mut rng).is_err());
    assert!(activation_maximization(&net, 1, 6, 1, 0.1, &mut rng).is_err());
}
