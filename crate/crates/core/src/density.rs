//! Trajectory-space kernel density estimation.
//!
//! Each state variable gets its own Gaussian KDE whose points are whole
//! reference trajectories of length `n`. For a query trajectory `y` the
//! per-variable kernel sum is
//!
//! ```text
//! (1/r) * sum_i exp(-||ref_i - y||^2 / (2 h^2))
//! ```
//!
//! with `||.||^2` summed over time points, and the joint value is the
//! product over variables. [`kde_log_likelihood`] returns the log kernel sum
//! as written above; [`kde_log_density`] adds the Gaussian normalizer
//! `-n ln h - (n/2) ln(2 pi)` per variable so densities with different
//! bandwidths are comparable.

use std::f64::consts::PI;

use crate::error::{contract, Error, Result};
use crate::path::{Dataset, SamplePath};
use crate::stats;

/// A log-scale density value; `-inf` is allowed, NaN is not.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogDensity(f64);

impl LogDensity {
    pub const ZERO: LogDensity = LogDensity(f64::NEG_INFINITY);

    /// NaN inputs are mapped to `-inf`.
    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            LogDensity(f64::NEG_INFINITY)
        } else {
            LogDensity(value)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero_density(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    dim: usize,
    len: usize,
    count: usize,
    /// Per variable: `count × len` reference values, row-major.
    refs: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
}

impl KdeModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Trajectory length `n`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Number of reference trajectories `r`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    fn reference(&self, j: usize, i: usize) -> &[f64] {
        &self.refs[j][i * self.len..(i + 1) * self.len]
    }

    fn check_query(&self, traj: &SamplePath) -> Result<()> {
        if traj.dim() != self.dim || traj.len() != self.len {
            return Err(contract(format!(
                "query trajectory is {}x{}, KDE expects {}x{}",
                traj.dim(),
                traj.len(),
                self.dim,
                self.len
            )));
        }
        Ok(())
    }

    fn log_kernel_sum(&self, traj: &SamplePath) -> f64 {
        let inv_r = -(self.count as f64).ln();
        (0..self.dim)
            .map(|j| {
                let q = traj.row(j);
                let two_h2 = 2.0 * self.bandwidths[j] * self.bandwidths[j];
                let exps: Vec<f64> = (0..self.count)
                    .map(|i| {
                        let d2: f64 = self.reference(j, i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                        -d2 / two_h2
                    })
                    .collect();
                stats::log_sum_exp(exps.iter().copied()) + inv_r
            })
            .sum()
    }

    /// Sum over variables of the Gaussian log-normalizer.
    pub fn log_normalizer(&self) -> f64 {
        let n = self.len as f64;
        self.bandwidths
            .iter()
            .map(|h| -n * h.ln() - 0.5 * n * (2.0 * PI).ln())
            .sum()
    }
}

/// Scott-style factor `r^(-1/(n+4))` with the trajectory length as dimension.
pub fn scott_factor(count: usize, len: usize) -> f64 {
    (count as f64).powf(-1.0 / (len as f64 + 4.0))
}

/// Fit one KDE per state variable over the dataset's trajectories.
///
/// Default bandwidth is `sd_j * r^(-1/(n+4))`, where `sd_j` is the pooled
/// standard deviation of all values of variable `j`. `bandwidth_override`
/// replaces it for every variable.
pub fn fit_kde(dataset: &Dataset, bandwidth_override: Option<f64>) -> Result<KdeModel> {
    let (p, n, r) = (dataset.dim(), dataset.len(), dataset.count());
    let refs: Vec<Vec<f64>> = (0..p)
        .map(|j| dataset.paths().iter().flat_map(|path| path.row(j).iter().copied()).collect())
        .collect();
    let bandwidths = match bandwidth_override {
        Some(h) if h > 0.0 && h.is_finite() => vec![h; p],
        Some(h) => return Err(contract(format!("KDE bandwidth must be positive, got {h}"))),
        None => {
            let factor = scott_factor(r, n);
            refs.iter()
                .enumerate()
                .map(|(j, v)| {
                    let sd = stats::std_dev(v);
                    if sd > 0.0 && sd.is_finite() {
                        Ok(sd * factor)
                    } else {
                        Err(Error::ZeroVariance { variable: j })
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(KdeModel { dim: p, len: n, count: r, refs, bandwidths })
}

/// Log of the product over variables of the unnormalized kernel sums.
pub fn kde_log_likelihood(model: &KdeModel, traj: &SamplePath) -> Result<LogDensity> {
    model.check_query(traj)?;
    Ok(LogDensity::new(model.log_kernel_sum(traj)))
}

/// [`kde_log_likelihood`] plus the Gaussian normalizer of every variable.
pub fn kde_log_density(model: &KdeModel, traj: &SamplePath) -> Result<LogDensity> {
    model.check_query(traj)?;
    Ok(LogDensity::new(model.log_kernel_sum(traj) + model.log_normalizer()))
}

struct Kde1d {
    sorted: Vec<f64>,
    h: f64,
    log_norm: f64,
}

impl Kde1d {
    fn new(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let sd = stats::std_dev(&sorted);
        // Rounding noise in a constant coordinate must not yield a
        // vanishing bandwidth, so the rule is floored relative to scale.
        let floor = 1e-6 * sorted[0].abs().max(sorted[sorted.len() - 1].abs()).max(1.0);
        let h = (sd * (sorted.len() as f64).powf(-0.2)).max(floor);
        let log_norm = -(sorted.len() as f64).ln() - h.ln() - 0.5 * (2.0 * PI).ln();
        Self { sorted, h, log_norm }
    }

    fn log_pdf(&self, x: f64) -> f64 {
        let s = &self.sorted;
        let pos = s.partition_point(|v| *v < x);
        let nearest = [pos.checked_sub(1), (pos < s.len()).then_some(pos)]
            .into_iter()
            .flatten()
            .map(|i| (s[i] - x).abs())
            .fold(f64::INFINITY, f64::min);
        // Points beyond this radius contribute < e^-40 relative to the nearest one.
        let zmin = nearest / self.h;
        let radius = self.h * (zmin * zmin + 80.0).sqrt();
        let lo = s.partition_point(|v| *v < x - radius);
        let hi = s.partition_point(|v| *v <= x + radius);
        let terms = s[lo..hi].iter().map(|v| {
            let z = (v - x) / self.h;
            -0.5 * z * z
        });
        stats::log_sum_exp(terms) + self.log_norm
    }
}

/// Plug-in estimate of `KL(P || Q)` from samples: per coordinate, Gaussian
/// KDEs (bandwidth `sd * n^(-1/5)`) of both sample sets are evaluated at the
/// P samples and `mean(log p - log q)` is floored at zero; the result is the
/// average over coordinates.
pub fn estimate_kl(samples_p: &[Vec<f64>], samples_q: &[Vec<f64>]) -> Result<f64> {
    let first = samples_p
        .first()
        .ok_or_else(|| contract("KL estimate needs at least one P sample"))?;
    if samples_q.is_empty() {
        return Err(contract("KL estimate needs at least one Q sample"));
    }
    let d = first.len();
    if d == 0 || samples_p.iter().chain(samples_q).any(|s| s.len() != d) {
        return Err(contract("all KL samples must share one non-zero dimension"));
    }
    let total: f64 = (0..d)
        .map(|c| {
            let p: Vec<f64> = samples_p.iter().map(|s| s[c]).collect();
            let q: Vec<f64> = samples_q.iter().map(|s| s[c]).collect();
            let (kp, kq) = (Kde1d::new(&p), Kde1d::new(&q));
            let kl = p.iter().map(|&x| kp.log_pdf(x) - kq.log_pdf(x)).sum::<f64>() / p.len() as f64;
            if kl.is_nan() {
                f64::INFINITY
            } else {
                kl.max(0.0)
            }
        })
        .sum();
    Ok(total / d as f64)
}
