//! Observed and simulated trajectories.

use crate::error::{contract, Result};

/// One trajectory: a strictly increasing time grid plus a `p × n` matrix of
/// state values, stored row-major (row `j` is state variable `j`).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

impl SamplePath {
    /// Build a path from a time grid and per-variable rows.
    pub fn new(times: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        let n = times.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(contract("every state row must have one value per time point"));
        }
        Self::from_flat(times, rows.into_iter().flatten().collect(), dim)
    }

    /// Build a path from row-major values of shape `dim × times.len()`.
    pub fn from_flat(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(contract("sample path needs at least one state variable"));
        }
        if times.is_empty() {
            return Err(contract("sample path needs at least one time point"));
        }
        if values.len() != dim * times.len() {
            return Err(contract(format!(
                "expected {} values for a {}x{} path, got {}",
                dim * times.len(),
                dim,
                times.len(),
                values.len()
            )));
        }
        check_grid(&times)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(contract("sample path values must be finite"));
        }
        Ok(Self { times, values, dim })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of state variables `p`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of time points `n`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Row-major `p × n` values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Trajectory of state variable `j`.
    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.len();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn get(&self, j: usize, t: usize) -> f64 {
        self.values[j * self.len() + t]
    }

    /// State vector at time index `t`.
    pub fn state(&self, t: usize) -> Vec<f64> {
        (0..self.dim).map(|j| self.get(j, t)).collect()
    }

    pub(crate) fn map_values(&self, f: impl FnMut(f64) -> f64) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().copied().map(f).collect(),
            dim: self.dim,
        }
    }
}

pub(crate) fn check_grid(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(contract("time grid must be finite"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(contract("time grid must be strictly increasing"));
    }
    Ok(())
}

/// A set of `r ≥ 1` sample paths sharing one time grid and state dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    paths: Vec<SamplePath>,
}

impl Dataset {
    pub fn new(paths: Vec<SamplePath>) -> Result<Self> {
        let first = paths
            .first()
            .ok_or_else(|| contract("dataset needs at least one sample path"))?;
        for (i, p) in paths.iter().enumerate().skip(1) {
            if p.dim() != first.dim() {
                return Err(contract(format!(
                    "path {i} has {} state variables, path 0 has {}",
                    p.dim(),
                    first.dim()
                )));
            }
            if p.times() != first.times() {
                return Err(contract(format!("path {i} does not share the time grid of path 0")));
            }
        }
        Ok(Self { paths })
    }

    pub fn paths(&self) -> &[SamplePath] {
        &self.paths
    }

    pub fn into_paths(self) -> Vec<SamplePath> {
        self.paths
    }

    pub fn times(&self) -> &[f64] {
        self.paths[0].times()
    }

    /// Number of sample paths `r`.
    pub fn count(&self) -> usize {
        self.paths.len()
    }

    pub fn dim(&self) -> usize {
        self.paths[0].dim()
    }

    /// Number of time points `n`.
    pub fn len(&self) -> usize {
        self.paths[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Root-mean-square amplitude over every entry of every path.
    pub fn rms(&self) -> f64 {
        let (sum, count) = self.paths.iter().fold((0.0, 0usize), |(s, c), p| {
            (s + p.values().iter().map(|v| v * v).sum::<f64>(), c + p.values().len())
        });
        (sum / count as f64).sqrt()
    }
}

/// Root-mean-square amplitude over all `p × n` entries of a path.
pub fn rms(path: &SamplePath) -> f64 {
    let v = path.values();
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}
