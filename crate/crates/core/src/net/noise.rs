//! Factorized Gaussian noise for the noisy layers.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{LayerKind, LayerSpec};

/// Transformed factors `f(eps) = sign(eps) sqrt(|eps|)` for one layer.
/// Both vectors are empty for dense layers and in zero-noise mode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FactorNoise {
    pub in_: Vec<f64>,
    pub out_: Vec<f64>,
}

impl FactorNoise {
    pub fn is_zero(&self) -> bool {
        self.in_.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseState {
    pub layers: Vec<FactorNoise>,
}

fn scaled<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            e.signum() * e.abs().sqrt()
        })
        .collect()
}

impl NoiseState {
    pub fn zeros(layers: &[LayerSpec]) -> Self {
        Self {
            layers: vec![FactorNoise::default(); layers.len()],
        }
    }

    pub fn sample<R: Rng + ?Sized>(layers: &[LayerSpec], rng: &mut R) -> Self {
        Self {
            layers: layers
                .iter()
                .map(|l| match l.kind {
                    LayerKind::Dense => FactorNoise::default(),
                    LayerKind::Noisy => FactorNoise {
                        in_: scaled(rng, l.fan_in),
                        out_: scaled(rng, l.fan_out),
                    },
                })
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(FactorNoise::is_zero)
    }
}
