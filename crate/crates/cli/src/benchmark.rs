//! Synthetic benchmark datasets with known governing equations.

use std::fmt;
use std::str::FromStr;

use pfdisc::seed::sub_rng;
use pfdisc::{
    add_noise, build_library, integrate, CoefficientMatrix, Dataset, IntegratorConfig, NoiseKind, NoiseSpec,
    TermLibrary,
};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkName {
    LvMulti,
    LvSingle,
    Lorenz,
}

impl BenchmarkName {
    pub const ALL: [BenchmarkName; 3] = [BenchmarkName::LvMulti, BenchmarkName::LvSingle, BenchmarkName::Lorenz];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkName::LvMulti => "lv_multi",
            BenchmarkName::LvSingle => "lv_single",
            BenchmarkName::Lorenz => "lorenz",
        }
    }
}

impl fmt::Display for BenchmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkName {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| CliError::Config(format!("unknown benchmark `{s}` (expected lv_multi, lv_single or lorenz)")))
    }
}

/// Lotka–Volterra rates `(alpha, beta, gamma, delta)` in
/// `du/dt = alpha u - beta uv`, `dv/dt = -gamma v + delta uv`.
pub const LV_MEAN_RATES: [f64; 4] = [1.0, 0.1, 1.5, 0.075];
/// Per-path rate standard deviation relative to the mean.
pub const LV_RATE_REL_SD: f64 = 0.1;
pub const LV_INITIAL_STATE: [f64; 2] = [10.0, 5.0];
/// Four oscillation periods at the mean rates.
pub const LV_T_END: f64 = 22.0;
pub const LV_POINTS: usize = 111;
pub const LV_MULTI_PATHS: usize = 100;
pub const LV_ADDITIVE_NOISE: f64 = 0.1;
pub const LV_LOGNORMAL_SIGMA: f64 = 0.1;

pub const LORENZ_SIGMA: f64 = 10.0;
pub const LORENZ_RHO: f64 = 28.0;
pub const LORENZ_BETA: f64 = 8.0 / 3.0;
pub const LORENZ_INITIAL_STATE: [f64; 3] = [-8.0, 7.0, 27.0];
pub const LORENZ_T_END: f64 = 10.0;
pub const LORENZ_POINTS: usize = 1001;
pub const LORENZ_ADDITIVE_NOISE: f64 = 0.1;

/// Overridable protocol parameters; [`Protocol::standard`] gives the defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub paths: usize,
    pub initial_state: Vec<f64>,
    pub t_end: f64,
    pub points: usize,
    pub noise: NoiseKind,
    pub noise_level: f64,
    /// Relative SD of per-path rate draws; zero keeps the mean rates.
    pub rate_rel_sd: f64,
}

impl Protocol {
    pub fn standard(name: BenchmarkName) -> Self {
        match name {
            BenchmarkName::LvMulti => Self {
                paths: LV_MULTI_PATHS,
                initial_state: LV_INITIAL_STATE.to_vec(),
                t_end: LV_T_END,
                points: LV_POINTS,
                noise: NoiseKind::AdditiveGaussian,
                noise_level: LV_ADDITIVE_NOISE,
                rate_rel_sd: LV_RATE_REL_SD,
            },
            BenchmarkName::LvSingle => Self {
                paths: 1,
                initial_state: LV_INITIAL_STATE.to_vec(),
                t_end: LV_T_END,
                points: LV_POINTS,
                noise: NoiseKind::MultiplicativeLognormal,
                noise_level: LV_LOGNORMAL_SIGMA,
                rate_rel_sd: 0.0,
            },
            BenchmarkName::Lorenz => Self {
                paths: 1,
                initial_state: LORENZ_INITIAL_STATE.to_vec(),
                t_end: LORENZ_T_END,
                points: LORENZ_POINTS,
                noise: NoiseKind::AdditiveGaussian,
                noise_level: LORENZ_ADDITIVE_NOISE,
                rate_rel_sd: 0.0,
            },
        }
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.t_end / (self.points - 1) as f64;
        (0..self.points).map(|i| i as f64 * dt).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub name: BenchmarkName,
    pub library: TermLibrary,
    /// Noisy observations.
    pub dataset: Dataset,
    /// Noise-free trajectories behind `dataset`.
    pub clean: Dataset,
    /// Mean-rate coefficient matrix.
    pub truth: CoefficientMatrix,
    /// Coefficients used for each path, in path order.
    pub path_coefficients: Vec<CoefficientMatrix>,
}

/// Library terms `1, u, v, u^2, uv, v^2`.
pub fn lv_coefficients(rates: [f64; 4]) -> CoefficientMatrix {
    let [a, b, g, d] = rates;
    CoefficientMatrix::from_row_major(2, 6, vec![0.0, a, 0.0, 0.0, -b, 0.0, 0.0, 0.0, -g, 0.0, d, 0.0])
        .expect("finite rates")
}

/// Library terms `1, x, y, z, x^2, xy, xz, y^2, yz, z^2`.
pub fn lorenz_coefficients(sigma: f64, rho: f64, beta: f64) -> CoefficientMatrix {
    let mut c = CoefficientMatrix::zeros(3, 10);
    c.set(0, 1, -sigma);
    c.set(0, 2, sigma);
    c.set(1, 1, rho);
    c.set(1, 2, -1.0);
    c.set(1, 6, -1.0);
    c.set(2, 5, 1.0);
    c.set(2, 3, -beta);
    c
}

const RATE_STREAM: u64 = 0x7261_7465;
const NOISE_STREAM: u64 = 0x6e6f_6973;

pub fn generate_benchmark(name: BenchmarkName, seed: u64) -> Result<Benchmark> {
    generate_with(name, &Protocol::standard(name), seed)
}

pub fn generate_with(name: BenchmarkName, protocol: &Protocol, seed: u64) -> Result<Benchmark> {
    if protocol.paths == 0 || protocol.points < 3 || !(protocol.t_end > 0.0) {
        return Err(CliError::Config("benchmark needs at least one path, three points and t_end > 0".into()));
    }
    let dim = if name == BenchmarkName::Lorenz { 3 } else { 2 };
    if protocol.initial_state.len() != dim {
        return Err(CliError::Config(format!("{name} needs a {dim}-dimensional initial state")));
    }
    let stage = CliError::stage;
    let library = build_library(dim, 2, false).map_err(stage("library"))?;
    let truth = match name {
        BenchmarkName::Lorenz => lorenz_coefficients(LORENZ_SIGMA, LORENZ_RHO, LORENZ_BETA),
        _ => lv_coefficients(LV_MEAN_RATES),
    };
    let path_coefficients: Vec<CoefficientMatrix> = (0..protocol.paths)
        .map(|i| {
            if protocol.rate_rel_sd == 0.0 {
                return truth.clone();
            }
            let mut rng = sub_rng(seed, RATE_STREAM, i as u64);
            let rates = LV_MEAN_RATES.map(|m| {
                Normal::new(m, protocol.rate_rel_sd * m).expect("positive sd").sample(&mut rng)
            });
            lv_coefficients(rates)
        })
        .collect();

    let times = protocol.times();
    let integrator = IntegratorConfig::default();
    let paths = path_coefficients
        .iter()
        .map(|c| {
            let out = integrate(&library, c, &protocol.initial_state, &times, &integrator).map_err(stage("simulate"))?;
            out.path().cloned().ok_or(CliError::Stage {
                stage: "simulate",
                source: pfdisc::Error::AllDiverged { total: 1 },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let clean = Dataset::new(paths).map_err(stage("simulate"))?;
    let noise = NoiseSpec::new(protocol.noise, protocol.noise_level, pfdisc::seed::derive_seed(seed, NOISE_STREAM, 0))
        .map_err(stage("noise"))?;
    let dataset = add_noise(&clean, &noise).map_err(stage("noise"))?;
    Ok(Benchmark { name, library, dataset, clean, truth, path_coefficients })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lv_multi_shape_and_truth() {
        let b = generate_benchmark(BenchmarkName::LvMulti, 1).unwrap();
        assert_eq!((b.dataset.count(), b.dataset.dim(), b.dataset.len()), (100, 2, 111));
        assert_eq!(b.truth.nonzero_count(), 4);
        assert_eq!(b.library.term_labels(), ["1", "u", "v", "u^2", "u*v", "v^2"]);
        let alphas: Vec<f64> = b.path_coefficients.iter().map(|c| c.get(0, 1)).collect();
        let m = pfdisc::stats::mean(&alphas);
        let sd = pfdisc::stats::std_dev(&alphas);
        assert!((m - 1.0).abs() < 0.04 && (sd - 0.1).abs() < 0.03, "{m} {sd}");
    }

    #[test]
    fn lv_single_and_lorenz() {
        let s = generate_benchmark(BenchmarkName::LvSingle, 2).unwrap();
        assert_eq!(s.dataset.count(), 1);
        assert!(s.dataset.paths()[0].values().iter().all(|v| *v > 0.0));

        let l = generate_benchmark(BenchmarkName::Lorenz, 3).unwrap();
        assert_eq!(l.truth.nonzero_count(), 7);
        let labels = l.library.term_labels();
        let eq = l.truth.equations(&l.library);
        assert_eq!(labels[6], "x*z");
        assert!(eq[1].contains("28*x"), "{eq:?}");
    }

    #[test]
    fn lv_period_gives_about_four_oscillations() {
        let b = generate_benchmark(BenchmarkName::LvSingle, 0).unwrap();
        let u = b.clean.paths()[0].row(0);
        let peaks = (1..u.len() - 1).filter(|&i| u[i] > u[i - 1] && u[i] >= u[i + 1]).count();
        assert!((3..=5).contains(&peaks), "{peaks} peaks");
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate_benchmark(BenchmarkName::LvMulti, 9).unwrap();
        assert_eq!(a, generate_benchmark(BenchmarkName::LvMulti, 9).unwrap());
        assert_ne!(a.dataset, generate_benchmark(BenchmarkName::LvMulti, 10).unwrap().dataset);
    }

    #[test]
    fn names_parse() {
        assert_eq!("lorenz".parse::<BenchmarkName>().unwrap(), BenchmarkName::Lorenz);
        assert!("pendulum".parse::<BenchmarkName>().is_err());
    }
}
