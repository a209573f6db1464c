//! Measurement-noise injection.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::path::{Dataset, SamplePath};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `y + N(0, (level * rms)^2)` with `rms` taken over the whole dataset.
    AdditiveGaussian,
    /// `y * exp(N(0, level^2))`.
    MultiplicativeLognormal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, level: f64, seed: u64) -> Result<Self> {
        if !(level >= 0.0 && level.is_finite()) {
            return Err(contract("noise level must be finite and non-negative"));
        }
        Ok(Self { kind, level, seed })
    }
}

/// Corrupt every entry of every path. Path `i` draws from its own
/// sub-stream of `spec.seed`, so output is independent of evaluation order.
pub fn add_noise(dataset: &Dataset, spec: &NoiseSpec) -> Result<Dataset> {
    if !(spec.level >= 0.0 && spec.level.is_finite()) {
        return Err(contract("noise level must be finite and non-negative"));
    }
    if spec.level == 0.0 {
        return Ok(dataset.clone());
    }
    let sd = match spec.kind {
        NoiseKind::AdditiveGaussian => spec.level * dataset.rms(),
        NoiseKind::MultiplicativeLognormal => spec.level,
    };
    let normal = Normal::new(0.0, sd).map_err(|e| contract(e.to_string()))?;
    let paths: Vec<SamplePath> = dataset
        .paths()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = seed::sub_rng(spec.seed, 0x006e_6f69_7365, i as u64);
            match spec.kind {
                NoiseKind::AdditiveGaussian => p.map_values(|v| v + normal.sample(&mut rng)),
                NoiseKind::MultiplicativeLognormal => {
                    p.map_values(|v| v * normal.sample(&mut rng).exp())
                }
            }
        })
        .collect();
    Dataset::new(paths)
}
