//! Layer-wise neuroevolution of deep feedforward networks.
//!
//! Each hidden layer is found by a genetic search over a compact encoding:
//! a main weight direction expressed in a random orthonormal basis, a mask
//! choosing which vectors of its null space join it as further weight rows,
//! and an activation gene. Candidates are scored by how well a linear SVM
//! separates the classes on the layer's output. The evolved stack is then
//! topped with a softmax classifier and fine-tuned by back-propagation with
//! early stopping.
//!
//! ```no_run
//! use evonet::{data, evolution, network, rng};
//!
//! let ds = data::gen_blobs(400, 4, 3, 10.0, &mut rng::stream(1, &[])).unwrap();
//! let cfg = evolution::EvolutionConfig { pop_size: 20, max_generations: 20, max_depth: 2, ..Default::default() };
//! let stage1 = evolution::evolve_stack(&ds, &cfg).unwrap();
//! let net = network::assemble(&stage1.layers, ds.n_classes, &mut rng::stream(1, &[2])).unwrap();
//! let (tuned, history) = network::finetune(&net, &ds, &Default::default(), &mut rng::stream(1, &[3])).unwrap();
//! ```

pub mod activation;
pub mod data;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod fitness;
pub mod genome;
pub mod io;
pub mod network;
pub mod rng;
pub mod subspace;

pub use activation::Activation;
pub use data::Dataset;
pub use error::{Error, ErrorKind, IdxError, Result};
pub use evolution::{EvolutionConfig, GenerationRecord};
pub use genome::{Chromosome, LayerPhenotype};
pub use network::{NetworkStack, TrainConfig, TrainHistory};
pub use subspace::BasisSet;
