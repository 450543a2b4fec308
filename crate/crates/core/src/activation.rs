use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element-wise nonlinearity of one layer.
///
/// The first three are the gene-encodable choices (activation gene values
/// 0, 1 and 2). `Identity` is never produced by evolution; it exists for
/// linear probes and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Rectifier,
    Identity,
}

impl Activation {
    pub const ENCODABLE: [Activation; 3] = [Activation::Sigmoid, Activation::Tanh, Activation::Rectifier];

    /// Decodes a repaired 2-bit activation gene.
    pub fn from_gene(bits: u8) -> Result<Self> {
        Self::ENCODABLE
            .get(bits as usize)
            .copied()
            .ok_or_else(|| Error::InvalidChromosome(format!("activation gene {bits} is not in 0..=2")))
    }

    pub fn gene(self) -> Option<u8> {
        Self::ENCODABLE.iter().position(|&a| a == self).map(|p| p as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Rectifier => "rectifier",
            Activation::Identity => "identity",
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Rectifier => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`. The rectifier
    /// derivative at exactly 0 is 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Rectifier => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    /// Same derivative, expressed through the activation output `y = f(z)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Rectifier => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = crate::rng::stream(5, &[]);
        let h = 1e-5;
        for act in Activation::ENCODABLE {
            for _ in 0..100 {
                let z: f64 = rng.random_range(-5.0..5.0);
                if act == Activation::Rectifier && z.abs() < 2.0 * h {
                    continue;
                }
                let fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                let an = act.derivative(z);
                let rel = (fd - an).abs() / an.abs().max(1e-8);
                assert!(rel < 1e-6 || (fd - an).abs() < 1e-10, "{act:?} at {z}: {fd} vs {an}");
                assert!((act.derivative_from_output(act.apply(z)) - an).abs() < 1e-12);
            }
        }
        assert_eq!(Activation::Rectifier.derivative(0.0), 0.0);
    }

    #[test]
    fn gene_mapping() {
        assert_eq!(Activation::from_gene(0).unwrap(), Activation::Sigmoid);
        assert_eq!(Activation::from_gene(2).unwrap(), Activation::Rectifier);
        assert!(Activation::from_gene(3).is_err());
        assert_eq!(Activation::Identity.gene(), None);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert!(Activation::Sigmoid.apply(-1000.0).is_finite());
        assert!(Activation::Sigmoid.apply(1000.0) <= 1.0);
    }
}
