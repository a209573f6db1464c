//! Push-forward rejection sampling over coefficient matrices.
//!
//! Every prior sample is simulated; the simulations that stay bounded define
//! the prior push-forward KDE, the observed paths define the data KDE, and
//! each sample is scored by `log phi = log pi_data(y) - log pi_push(y)`.
//! Sample `i` is accepted when `log phi_i - max log phi >= log xi_i` with
//! `xi_i ~ U(0, 1)` drawn from a counter-keyed stream, so decisions do not
//! depend on how the scoring was scheduled.

use rand::Rng;
use rand_distr::Open01;
use rayon::prelude::*;

use crate::coeffs::CoefficientMatrix;
use crate::density::{fit_kde, kde_log_density, KdeModel};
use crate::error::{contract, Error, Result};
use crate::library::TermLibrary;
use crate::path::{Dataset, SamplePath};
use crate::seed;
use crate::simulate::{integrate, push_forward, IntegratorConfig, SimOutcome};
use crate::stats;

const XI_STREAM: u64 = 0x5849;

/// Natural log of the ratio between the data density and the prior
/// push-forward density at `candidate`.
pub fn compute_phi(candidate: &SamplePath, data_kde: &KdeModel, pushforward_kde: &KdeModel) -> Result<f64> {
    if data_kde.len() != pushforward_kde.len() || data_kde.dim() != pushforward_kde.dim() {
        return Err(contract("data and push-forward KDEs were fitted on different grids"));
    }
    let data = kde_log_density(data_kde, candidate)?.value();
    let push = kde_log_density(pushforward_kde, candidate)?.value();
    Ok(log_ratio(data, push))
}

/// As [`compute_phi`], mapping diverged simulations to `-inf`.
pub fn compute_phi_outcome(candidate: &SimOutcome, data_kde: &KdeModel, pushforward_kde: &KdeModel) -> Result<f64> {
    match candidate {
        SimOutcome::Path(p) => compute_phi(p, data_kde, pushforward_kde),
        SimOutcome::Diverged { .. } => Ok(f64::NEG_INFINITY),
    }
}

fn log_ratio(data: f64, push: f64) -> f64 {
    if data == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if push == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        data - push
    }
}

/// Uniform draw for position `index` of the acceptance stream.
pub fn acceptance_draw(seed: u64, index: usize) -> f64 {
    seed::sub_rng(seed, XI_STREAM, index as u64).sample(Open01)
}

/// Accept/reject every score against its normalized ratio `phi / M`.
/// Scores of `-inf` (or NaN) are always rejected; a maximal finite score is
/// always accepted.
pub fn accept_decisions(log_phi: &[f64], seed: u64) -> Vec<bool> {
    let max = log_phi
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    log_phi
        .iter()
        .enumerate()
        .map(|(i, &lp)| {
            if lp.is_nan() || lp == f64::NEG_INFINITY {
                return false;
            }
            let log_eta = if max == f64::INFINITY {
                if lp == f64::INFINITY {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                lp - max
            };
            log_eta >= acceptance_draw(seed, i).ln()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionConfig {
    pub integrator: IntegratorConfig,
    /// Seed of the uniform acceptance stream.
    pub seed: u64,
    /// Manual bandwidth for the data KDE; Scott's rule when `None`.
    pub data_bandwidth: Option<f64>,
    /// Manual bandwidth for the push-forward KDE; Scott's rule when `None`.
    pub pushforward_bandwidth: Option<f64>,
    /// [`rejection_sample`] fails below this acceptance rate.
    pub min_acceptance_rate: f64,
}

impl Default for RejectionConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            seed: 0,
            data_bandwidth: None,
            pushforward_bandwidth: None,
            min_acceptance_rate: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEnsemble {
    /// Accepted prior samples, in prior order.
    pub accepted: Vec<CoefficientMatrix>,
    /// Indices of the accepted samples in the prior list.
    pub accepted_indices: Vec<usize>,
    /// `log phi` of every prior sample (`-inf` for diverged simulations).
    pub log_phi: Vec<f64>,
    pub acceptance_rate: f64,
    pub diverged: usize,
    pub seed: u64,
    pub data_bandwidths: Vec<f64>,
    pub pushforward_bandwidths: Vec<f64>,
}

impl PosteriorEnsemble {
    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn total(&self) -> usize {
        self.log_phi.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.accepted[0].shape()
    }

    /// Build an ensemble directly from coefficient samples, all accepted.
    pub fn from_samples(samples: Vec<CoefficientMatrix>) -> Result<Self> {
        if samples.is_empty() {
            return Err(contract("ensemble needs at least one sample"));
        }
        let shape = samples[0].shape();
        if samples.iter().any(|s| s.shape() != shape) {
            return Err(contract("ensemble samples must share one shape"));
        }
        let n = samples.len();
        Ok(Self {
            accepted: samples,
            accepted_indices: (0..n).collect(),
            log_phi: vec![0.0; n],
            acceptance_rate: 1.0,
            diverged: 0,
            seed: 0,
            data_bandwidths: Vec::new(),
            pushforward_bandwidths: Vec::new(),
        })
    }
}

/// Score and accept every prior sample without enforcing a minimum
/// acceptance rate.
pub fn sample_posterior(
    library: &TermLibrary,
    prior_samples: &[CoefficientMatrix],
    dataset: &Dataset,
    x0: &[f64],
    cfg: &RejectionConfig,
) -> Result<PosteriorEnsemble> {
    if prior_samples.is_empty() {
        return Err(contract("at least one prior sample is required"));
    }
    if dataset.dim() != library.dim() {
        return Err(contract("dataset and library disagree on the state dimension"));
    }
    let outcomes = push_forward(library, prior_samples, x0, dataset.times(), &cfg.integrator)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let bounded: Vec<SamplePath> = outcomes.iter().filter_map(|o| o.path().cloned()).collect();
    let diverged = outcomes.len() - bounded.len();
    if bounded.is_empty() {
        return Err(Error::AllDiverged { total: outcomes.len() });
    }
    log::info!("{} of {} prior simulations diverged", diverged, outcomes.len());

    let data_kde = fit_kde(dataset, cfg.data_bandwidth)?;
    let push_kde = fit_kde(&Dataset::new(bounded)?, cfg.pushforward_bandwidth)?;
    let log_phi = outcomes
        .par_iter()
        .map(|o| compute_phi_outcome(o, &data_kde, &push_kde))
        .collect::<Result<Vec<_>>>()?;

    let decisions = accept_decisions(&log_phi, cfg.seed);
    let accepted_indices: Vec<usize> = decisions
        .iter()
        .enumerate()
        .filter_map(|(i, &a)| a.then_some(i))
        .collect();
    Ok(PosteriorEnsemble {
        accepted: accepted_indices.iter().map(|&i| prior_samples[i].clone()).collect(),
        acceptance_rate: accepted_indices.len() as f64 / prior_samples.len() as f64,
        accepted_indices,
        log_phi,
        diverged,
        seed: cfg.seed,
        data_bandwidths: data_kde.bandwidths().to_vec(),
        pushforward_bandwidths: push_kde.bandwidths().to_vec(),
    })
}

/// [`sample_posterior`], failing when the acceptance rate drops below
/// `cfg.min_acceptance_rate`.
pub fn rejection_sample(
    library: &TermLibrary,
    prior_samples: &[CoefficientMatrix],
    dataset: &Dataset,
    x0: &[f64],
    cfg: &RejectionConfig,
) -> Result<PosteriorEnsemble> {
    let ensemble = sample_posterior(library, prior_samples, dataset, x0, cfg)?;
    if ensemble.acceptance_rate < cfg.min_acceptance_rate {
        return Err(Error::LowAcceptance {
            accepted: ensemble.len(),
            total: ensemble.total(),
            rate: ensemble.acceptance_rate,
            min_rate: cfg.min_acceptance_rate,
        });
    }
    Ok(ensemble)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientStats {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    /// Fraction of samples in which the coefficient is exactly non-zero.
    pub inclusion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub rows: usize,
    pub cols: usize,
    pub level: f64,
    /// Row-major statistics, one per coefficient.
    pub stats: Vec<CoefficientStats>,
}

impl PosteriorSummary {
    pub fn get(&self, j: usize, k: usize) -> &CoefficientStats {
        &self.stats[j * self.cols + k]
    }

    pub fn means(&self) -> CoefficientMatrix {
        CoefficientMatrix::from_row_major(self.rows, self.cols, self.stats.iter().map(|s| s.mean).collect())
            .expect("means of finite samples are finite")
    }
}

fn coefficient_column(ensemble: &PosteriorEnsemble, idx: usize) -> Vec<f64> {
    ensemble.accepted.iter().map(|c| c.entries()[idx]).collect()
}

/// Per-coefficient mean, SD, central interval at `level` and inclusion rate.
pub fn summarize(ensemble: &PosteriorEnsemble, level: f64) -> Result<PosteriorSummary> {
    if ensemble.is_empty() {
        return Err(contract("cannot summarize an empty ensemble"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(contract("credible level must lie in (0, 1)"));
    }
    let (rows, cols) = ensemble.shape();
    let stats = (0..rows * cols)
        .map(|idx| {
            let mut v = coefficient_column(ensemble, idx);
            let mean = stats::mean(&v);
            let sd = stats::std_dev(&v);
            let inclusion = v.iter().filter(|x| **x != 0.0).count() as f64 / v.len() as f64;
            v.sort_by(f64::total_cmp);
            CoefficientStats {
                mean,
                sd,
                lower: stats::quantile_sorted(&v, (1.0 - level) / 2.0),
                upper: stats::quantile_sorted(&v, (1.0 + level) / 2.0),
                inclusion,
            }
        })
        .collect();
    Ok(PosteriorSummary { rows, cols, level, stats })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    /// Active `(equation, term)` pairs in row-major order.
    pub active: Vec<(usize, usize)>,
    /// Posterior means on active terms, exactly zero elsewhere.
    pub coefficients: CoefficientMatrix,
    /// 95% summary of the full ensemble.
    pub summary: PosteriorSummary,
}

/// Keep a term when its inclusion rate is at least `inclusion_threshold`
/// and its central 95% interval excludes zero.
pub fn select_terms(ensemble: &PosteriorEnsemble, inclusion_threshold: f64) -> Result<SparseModel> {
    if !(inclusion_threshold > 0.0 && inclusion_threshold < 1.0) {
        return Err(contract("inclusion threshold must lie in (0, 1)"));
    }
    let summary = summarize(ensemble, 0.95)?;
    let mut coefficients = CoefficientMatrix::zeros(summary.rows, summary.cols);
    let mut active = Vec::new();
    for j in 0..summary.rows {
        for k in 0..summary.cols {
            let s = summary.get(j, k);
            if s.inclusion >= inclusion_threshold && (s.lower > 0.0 || s.upper < 0.0) {
                active.push((j, k));
                coefficients.set(j, k, s.mean);
            }
        }
    }
    Ok(SparseModel { active, coefficients, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveBand {
    pub dim: usize,
    pub times: Vec<f64>,
    pub level: f64,
    /// Row-major `p × n` pointwise quantiles and mean.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mean: Vec<f64>,
    pub members: usize,
    pub diverged: usize,
}

impl PredictiveBand {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn contains(&self, j: usize, t: usize, value: f64) -> bool {
        let i = j * self.len() + t;
        value >= self.lower[i] && value <= self.upper[i]
    }

    /// Fraction of `dataset` entries inside the band.
    pub fn coverage(&self, dataset: &Dataset) -> f64 {
        let mut inside = 0usize;
        let mut total = 0usize;
        for p in dataset.paths() {
            for j in 0..self.dim {
                for t in 0..self.len() {
                    inside += self.contains(j, t, p.get(j, t)) as usize;
                    total += 1;
                }
            }
        }
        inside as f64 / total as f64
    }
}

/// Pointwise predictive band from simulating every ensemble member.
pub fn predictive_band(
    ensemble: &PosteriorEnsemble,
    library: &TermLibrary,
    x0: &[f64],
    times: &[f64],
    cfg: &IntegratorConfig,
    level: f64,
) -> Result<PredictiveBand> {
    if ensemble.is_empty() {
        return Err(contract("cannot build a band from an empty ensemble"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(contract("band level must lie in (0, 1)"));
    }
    let outcomes = ensemble
        .accepted
        .par_iter()
        .map(|c| integrate(library, c, x0, times, cfg))
        .collect::<Result<Vec<_>>>()?;
    let paths: Vec<&SamplePath> = outcomes.iter().filter_map(SimOutcome::path).collect();
    let diverged = outcomes.len() - paths.len();
    if paths.is_empty() {
        return Err(Error::AllDiverged { total: outcomes.len() });
    }
    let (p, n) = (library.dim(), times.len());
    let mut lower = Vec::with_capacity(p * n);
    let mut upper = Vec::with_capacity(p * n);
    let mut mean = Vec::with_capacity(p * n);
    let mut column = Vec::with_capacity(paths.len());
    for j in 0..p {
        for t in 0..n {
            column.clear();
            column.extend(paths.iter().map(|path| path.get(j, t)));
            mean.push(stats::mean(&column));
            column.sort_by(f64::total_cmp);
            lower.push(stats::quantile_sorted(&column, (1.0 - level) / 2.0));
            upper.push(stats::quantile_sorted(&column, (1.0 + level) / 2.0));
        }
    }
    Ok(PredictiveBand {
        dim: p,
        times: times.to_vec(),
        level,
        lower,
        upper,
        mean,
        members: paths.len(),
        diverged,
    })
}

/// Root-mean-square error over all entries of two equally shaped matrices.
pub fn coefficient_rmse(estimate: &CoefficientMatrix, truth: &CoefficientMatrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(contract(format!(
            "estimate is {:?} but truth is {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let sse: f64 = estimate
        .entries()
        .iter()
        .zip(truth.entries())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sse / truth.entries().len() as f64).sqrt())
}
