//! Matched block bootstrap: synthesize replicate trajectories from a single
//! observed path by chaining non-overlapping blocks whose boundary values
//! line up.
//!
//! Successor probabilities from the current block `c` to candidate block `j`:
//!
//! * `j > 0`: `prod_v k((end_v(c) - end_v(j - 1)) / h_v)`, i.e. the current
//!   block end is matched against the end of the block that precedes `j` in
//!   the original series;
//! * `j = 0`: `prod_v k((end_v(c) - start_v(0)) / h_v)`, the first block has
//!   no predecessor so its own first value is the matching target.
//!
//! `k` is the standard normal density. The first block of every replicate is
//! drawn uniformly.

use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{contract, Result};
use crate::path::{Dataset, SamplePath};
use crate::seed;
use crate::stats;

const MBB_STREAM: u64 = 0x004d_4242;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    block_length: usize,
    blocks: Vec<Range<usize>>,
}

impl BlockPartition {
    pub fn block_length(&self) -> usize {
        self.block_length
    }

    /// Zero-based, half-open index ranges in series order.
    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Split `0..n` into `n / l` consecutive blocks of length `l`; a trailing
/// remainder shorter than `l` is dropped.
pub fn partition_blocks(path: &SamplePath, block_length: usize) -> Result<BlockPartition> {
    let n = path.len();
    if block_length == 0 || block_length > n {
        return Err(contract(format!("block length {block_length} must lie in 1..={n}")));
    }
    let blocks = (0..n / block_length)
        .map(|b| b * block_length..(b + 1) * block_length)
        .collect();
    Ok(BlockPartition { block_length, blocks })
}

/// Cube-root rule `ceil(n^(1/3))`.
pub fn default_block_length(n: usize) -> usize {
    ((n as f64).cbrt().ceil() as usize).clamp(1, n.max(1))
}

/// Per-variable matching bandwidth: sample SD of block end values times
/// `blocks^(-1/5)`; falls back to 1 for a variable whose block ends all agree.
pub fn default_bandwidths(partition: &BlockPartition, path: &SamplePath) -> Vec<f64> {
    let b = partition.len() as f64;
    (0..path.dim())
        .map(|v| {
            let ends: Vec<f64> = partition.blocks().iter().map(|r| path.get(v, r.end - 1)).collect();
            let h = stats::std_dev(&ends) * b.powf(-0.2);
            if h > 0.0 && h.is_finite() {
                h
            } else {
                1.0
            }
        })
        .collect()
}

fn log_kernel(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Probability of each block following block `current`. `bandwidths` holds
/// one positive value per state variable.
pub fn transition_probs(
    partition: &BlockPartition,
    path: &SamplePath,
    current: usize,
    bandwidths: &[f64],
) -> Result<Vec<f64>> {
    if current >= partition.len() {
        return Err(contract(format!("block index {current} out of range")));
    }
    if bandwidths.len() != path.dim() || bandwidths.iter().any(|h| !(*h > 0.0)) {
        return Err(contract("one positive bandwidth per state variable is required"));
    }
    let blocks = partition.blocks();
    let end = |b: usize, v: usize| path.get(v, blocks[b].end - 1);
    let cur_end = |v: usize| end(current, v);
    let log_w: Vec<f64> = (0..blocks.len())
        .map(|j| {
            (0..path.dim())
                .map(|v| {
                    let target = if j == 0 { path.get(v, blocks[0].start) } else { end(j - 1, v) };
                    log_kernel((cur_end(v) - target) / bandwidths[v])
                })
                .sum()
        })
        .collect();
    let norm = stats::log_sum_exp(log_w.iter().copied());
    if !norm.is_finite() {
        log::warn!("degenerate block transition weights from block {current}; using uniform");
        return Ok(vec![1.0 / blocks.len() as f64; blocks.len()]);
    }
    Ok(log_w.iter().map(|w| (w - norm).exp()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MbbConfig {
    /// Block length `l`; `None` selects [`default_block_length`].
    pub block_length: Option<usize>,
    /// Matching bandwidth applied to every state variable; `None` selects
    /// [`default_bandwidths`].
    pub bandwidth: Option<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for MbbConfig {
    fn default() -> Self {
        Self {
            block_length: None,
            bandwidth: None,
            replicates: 100,
            seed: 0,
        }
    }
}

fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Generate `cfg.replicates` bootstrap paths on the input time grid.
pub fn mbb_resample(path: &SamplePath, cfg: &MbbConfig) -> Result<Dataset> {
    if cfg.replicates == 0 {
        return Err(contract("at least one bootstrap replicate is required"));
    }
    let n = path.len();
    let l = cfg.block_length.unwrap_or_else(|| default_block_length(n));
    let partition = partition_blocks(path, l)?;
    let bandwidths = match cfg.bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => vec![h; path.dim()],
        Some(_) => return Err(contract("bootstrap bandwidth must be positive")),
        None => default_bandwidths(&partition, path),
    };
    let transitions = (0..partition.len())
        .map(|c| transition_probs(&partition, path, c, &bandwidths))
        .collect::<Result<Vec<_>>>()?;

    let p = path.dim();
    let replicates: Vec<SamplePath> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::sub_rng(cfg.seed, MBB_STREAM, i as u64);
            let mut order = Vec::with_capacity(n / l + 1);
            let mut block = rng.random_range(0..partition.len());
            order.push(block);
            while order.len() * l < n {
                block = sample_index(&mut rng, &transitions[block]);
                order.push(block);
            }
            let mut values = Vec::with_capacity(p * n);
            for v in 0..p {
                let row = path.row(v);
                values.extend(order.iter().flat_map(|&b| row[partition.blocks()[b].clone()].iter()).take(n));
            }
            SamplePath::from_flat(path.times().to_vec(), values, p).expect("verbatim blocks are valid")
        })
        .collect();
    Dataset::new(replicates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(values: Vec<f64>) -> SamplePath {
        let times = (0..values.len()).map(|i| i as f64).collect();
        SamplePath::new(times, vec![values]).unwrap()
    }

    #[test]
    fn partition_examples() {
        let p = series((0..10).map(f64::from).collect());
        assert_eq!(partition_blocks(&p, 5).unwrap().blocks(), &[0..5, 5..10]);
        let three = partition_blocks(&p, 3).unwrap();
        assert_eq!(three.blocks(), &[0..3, 3..6, 6..9]);
        assert_eq!(partition_blocks(&p, 10).unwrap().len(), 1);
        assert!(partition_blocks(&p, 0).is_err());
        assert!(partition_blocks(&p, 11).is_err());
    }

    #[test]
    fn identical_endpoints_give_uniform_probabilities() {
        let p = series(vec![2.0; 12]);
        let part = partition_blocks(&p, 3).unwrap();
        let probs = transition_probs(&part, &p, 1, &[0.5]).unwrap();
        assert!(probs.iter().all(|q| (q - 0.25).abs() < 1e-15));
    }

    #[test]
    fn two_block_ratio_matches_kernel_ratio() {
        // Blocks [1, 3] and [5, 4]; from block 0 the natural successor is
        // matched at distance 0, block 0 itself at gap g = 3 - 1.
        let p = series(vec![1.0, 3.0, 5.0, 4.0]);
        let part = partition_blocks(&p, 2).unwrap();
        let h = 1.7;
        let probs = transition_probs(&part, &p, 0, &[h]).unwrap();
        let kappa = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let g = 2.0;
        let expected = kappa(0.0) / kappa(g / h);
        assert!((probs[1] / probs[0] - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn far_endpoints_fall_back_to_uniform() {
        // The last block ends at 7, far from every matching target.
        let p = series(vec![0.0, 1e200, 5.0, 7.0]);
        let part = partition_blocks(&p, 2).unwrap();
        let probs = transition_probs(&part, &p, 1, &[1e-300]).unwrap();
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn transition_probs_form_a_distribution(
            values in proptest::collection::vec(-10.0f64..10.0, 6..40),
            l in 1usize..5,
            h in 0.01f64..5.0,
        ) {
            let p = series(values);
            let part = partition_blocks(&p, l.min(p.len())).unwrap();
            for c in 0..part.len() {
                let probs = transition_probs(&part, &p, c, &[h]).unwrap();
                prop_assert!(probs.iter().all(|q| *q >= 0.0));
                prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_length_block_reproduces_series() {
        let p = series(vec![1.0, 4.0, 2.0, 8.0, 5.0]);
        let cfg = MbbConfig { block_length: Some(5), replicates: 7, seed: 3, ..Default::default() };
        let out = mbb_resample(&p, &cfg).unwrap();
        assert!(out.paths().iter().all(|r| r == &p));
    }

    #[test]
    fn replicate_values_come_from_the_source() {
        let values: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = series(values.clone());
        let cfg = MbbConfig { replicates: 20, seed: 9, ..Default::default() };
        let out = mbb_resample(&p, &cfg).unwrap();
        assert_eq!(out.count(), 20);
        for r in out.paths() {
            assert_eq!(r.times(), p.times());
            assert!(r.values().iter().all(|v| values.contains(v)));
        }
        assert_eq!(out, mbb_resample(&p, &cfg).unwrap());
    }

    #[test]
    fn multivariate_blocks_stay_aligned() {
        let t: Vec<f64> = (0..30).map(f64::from).collect();
        let a: Vec<f64> = t.iter().map(|x| x.sin()).collect();
        let b: Vec<f64> = t.iter().map(|x| 10.0 + x).collect();
        let p = SamplePath::new(t, vec![a.clone(), b.clone()]).unwrap();
        let out = mbb_resample(&p, &MbbConfig { replicates: 5, seed: 1, ..Default::default() }).unwrap();
        for r in out.paths() {
            for i in 0..r.len() {
                // Row b encodes the source index, so row a must match it.
                let src = (r.get(1, i) - 10.0) as usize;
                assert_eq!(r.get(0, i), a[src]);
            }
        }
    }
}
