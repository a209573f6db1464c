//! Flat TOML experiment configuration.
//!
//! Every key is optional except the dataset source: exactly one of
//! `benchmark` or `data_file` must be given. See `README.md` for the full
//! key list.

use std::path::{Path, PathBuf};

use pfdisc::baseline::{DerivativeMethod, StlsqConfig};
use pfdisc::bootstrap::MbbConfig;
use pfdisc::infer::RejectionConfig;
use pfdisc::priors::{HorseshoeSpec, PriorSpec, SpikeSlabSpec};
use pfdisc::seed::derive_seed;
use pfdisc::IntegratorConfig;
use serde::{Deserialize, Serialize};

use crate::benchmark::BenchmarkName;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    SpikeSlab,
    Horseshoe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: Option<BenchmarkName>,
    pub data_file: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub seed: u64,

    pub degree: u32,
    pub include_trig: bool,

    pub prior: PriorKind,
    pub inclusion_prob: f64,
    pub slab_sd: f64,
    pub tau0: f64,
    pub nu: f64,
    pub s: f64,
    pub samples: usize,

    pub bootstrap: bool,
    pub block_length: Option<usize>,
    pub bootstrap_bandwidth: Option<f64>,
    pub replicates: usize,

    pub substeps: usize,
    pub blowup_threshold: f64,
    /// Initial state for simulation; mean of the first observations if unset.
    pub initial_state: Option<Vec<f64>>,

    pub data_bandwidth: Option<f64>,
    pub pushforward_bandwidth: Option<f64>,
    pub min_acceptance_rate: f64,
    pub inclusion_threshold: f64,
    pub band_level: f64,

    pub stlsq_threshold: f64,
    pub stlsq_max_iters: usize,
    pub stlsq_ridge: f64,
    /// Odd moving-average window applied before differencing.
    pub derivative_window: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ss = SpikeSlabSpec::default();
        let hs = HorseshoeSpec::default();
        let stlsq = StlsqConfig::default();
        let integ = IntegratorConfig::default();
        Self {
            benchmark: None,
            data_file: None,
            output_dir: PathBuf::from("results"),
            seed: 0,
            degree: 2,
            include_trig: false,
            prior: PriorKind::SpikeSlab,
            inclusion_prob: ss.inclusion_prob,
            slab_sd: ss.slab_sd,
            tau0: hs.tau0,
            nu: hs.nu,
            s: hs.s,
            samples: 2000,
            bootstrap: true,
            block_length: None,
            bootstrap_bandwidth: None,
            replicates: 100,
            substeps: integ.substeps_per_interval,
            blowup_threshold: integ.blowup_threshold,
            initial_state: None,
            data_bandwidth: None,
            pushforward_bandwidth: None,
            min_acceptance_rate: RejectionConfig::default().min_acceptance_rate,
            inclusion_threshold: 0.5,
            band_level: 0.95,
            stlsq_threshold: stlsq.threshold,
            stlsq_max_iters: stlsq.max_iters,
            stlsq_ridge: stlsq.ridge,
            derivative_window: None,
        }
    }
}

/// Sub-seed streams derived from the master seed.
pub mod streams {
    pub const BENCHMARK: u64 = 1;
    pub const PRIOR: u64 = 2;
    pub const BOOTSTRAP: u64 = 3;
    pub const ACCEPT: u64 = 4;
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    check(v > 0.0 && v.is_finite(), || format!("{name} must be positive and finite, got {v}"))
}

fn unit_open(name: &str, v: f64) -> Result<()> {
    check(v > 0.0 && v < 1.0, || format!("{name} must lie in (0, 1), got {v}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(f) = &cfg.data_file {
            if f.is_relative() {
                cfg.data_file = Some(path.parent().unwrap_or(Path::new(".")).join(f));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        check(self.benchmark.is_some() != self.data_file.is_some(), || {
            "exactly one of `benchmark` or `data_file` must be set".into()
        })?;
        check(self.degree <= 8, || format!("degree {} is above the supported maximum of 8", self.degree))?;
        check((0.0..=1.0).contains(&self.inclusion_prob), || {
            format!("inclusion_prob must lie in [0, 1], got {}", self.inclusion_prob)
        })?;
        positive("slab_sd", self.slab_sd)?;
        positive("tau0", self.tau0)?;
        positive("nu", self.nu)?;
        positive("s", self.s)?;
        check(self.samples >= 1, || "samples must be at least 1".into())?;
        if let Some(l) = self.block_length {
            check(l >= 1, || "block_length must be at least 1".into())?;
        }
        if let Some(h) = self.bootstrap_bandwidth {
            positive("bootstrap_bandwidth", h)?;
        }
        check(self.replicates >= 1, || "replicates must be at least 1".into())?;
        check(self.substeps >= 1, || "substeps must be at least 1".into())?;
        positive("blowup_threshold", self.blowup_threshold)?;
        if let Some(x0) = &self.initial_state {
            check(!x0.is_empty() && x0.iter().all(|v| v.is_finite()), || {
                "initial_state must be a non-empty list of finite numbers".into()
            })?;
        }
        if let Some(h) = self.data_bandwidth {
            positive("data_bandwidth", h)?;
        }
        if let Some(h) = self.pushforward_bandwidth {
            positive("pushforward_bandwidth", h)?;
        }
        check((0.0..1.0).contains(&self.min_acceptance_rate), || {
            format!("min_acceptance_rate must lie in [0, 1), got {}", self.min_acceptance_rate)
        })?;
        unit_open("inclusion_threshold", self.inclusion_threshold)?;
        unit_open("band_level", self.band_level)?;
        check(self.stlsq_threshold >= 0.0 && self.stlsq_threshold.is_finite(), || {
            "stlsq_threshold must be non-negative".into()
        })?;
        check(self.stlsq_max_iters >= 1, || "stlsq_max_iters must be at least 1".into())?;
        check(self.stlsq_ridge >= 0.0 && self.stlsq_ridge.is_finite(), || {
            "stlsq_ridge must be non-negative".into()
        })?;
        if let Some(w) = self.derivative_window {
            check(w % 2 == 1, || format!("derivative_window must be odd, got {w}"))?;
        }
        Ok(())
    }

    pub fn sub_seed(&self, stream: u64) -> u64 {
        derive_seed(self.seed, stream, 0)
    }

    pub fn prior_spec(&self) -> PriorSpec {
        match self.prior {
            PriorKind::SpikeSlab => PriorSpec::SpikeSlab(SpikeSlabSpec {
                inclusion_prob: self.inclusion_prob,
                slab_sd: self.slab_sd,
            }),
            PriorKind::Horseshoe => PriorSpec::Horseshoe(HorseshoeSpec { tau0: self.tau0, nu: self.nu, s: self.s }),
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            substeps_per_interval: self.substeps,
            blowup_threshold: self.blowup_threshold,
        }
    }

    pub fn mbb(&self) -> MbbConfig {
        MbbConfig {
            block_length: self.block_length,
            bandwidth: self.bootstrap_bandwidth,
            replicates: self.replicates,
            seed: self.sub_seed(streams::BOOTSTRAP),
        }
    }

    pub fn rejection(&self) -> RejectionConfig {
        RejectionConfig {
            integrator: self.integrator(),
            seed: self.sub_seed(streams::ACCEPT),
            data_bandwidth: self.data_bandwidth,
            pushforward_bandwidth: self.pushforward_bandwidth,
            min_acceptance_rate: self.min_acceptance_rate,
        }
    }

    pub fn stlsq(&self) -> StlsqConfig {
        StlsqConfig {
            threshold: self.stlsq_threshold,
            max_iters: self.stlsq_max_iters,
            ridge: self.stlsq_ridge,
        }
    }

    pub fn derivative_method(&self) -> DerivativeMethod {
        match self.derivative_window {
            Some(w) if w > 1 => DerivativeMethod::SmoothedDifference(w),
            _ => DerivativeMethod::CentralDifference,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str("benchmark = \"lv_multi\"\nseed = 7\n").unwrap();
        assert_eq!(cfg.benchmark, Some(BenchmarkName::LvMulti));
        assert_eq!(cfg.samples, 2000);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn rejects_bad_fields() {
        for bad in [
            "benchmark = \"lv_multi\"\nsamples = 0",
            "seed = 1",
            "benchmark = \"lv_multi\"\ndata_file = \"x.csv\"",
            "benchmark = \"lv_multi\"\nband_level = 1.5",
            "benchmark = \"lv_multi\"\nderivative_window = 4",
            "benchmark = \"lv_multi\"\nunknown_key = 3",
            "benchmark = \"pendulum\"",
            "benchmark = \"lv_multi\"\nslab_sd = -1.0",
        ] {
            let err = ExperimentConfig::from_toml_str(bad).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig { benchmark: Some(BenchmarkName::Lorenz), ..Default::default() };
        cfg.initial_state = Some(vec![1.0, 2.0, 3.0]);
        cfg.block_length = Some(7);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sub_seeds_differ_by_stream() {
        let cfg = ExperimentConfig::default();
        assert_ne!(cfg.sub_seed(streams::PRIOR), cfg.sub_seed(streams::ACCEPT));
    }
}
