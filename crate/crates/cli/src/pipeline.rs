//! End-to-end discovery run: data, bootstrap, prior, rejection sampling,
//! summaries, predictive band and the regression baseline.

use pfdisc::baseline::fit_baseline;
use pfdisc::bootstrap::mbb_resample;
use pfdisc::density::estimate_kl;
use pfdisc::infer::{
    coefficient_rmse, predictive_band, rejection_sample, select_terms, PosteriorEnsemble, PredictiveBand,
};
use pfdisc::{build_library, push_forward, CoefficientMatrix, Dataset, SamplePath, TermLibrary};
use serde::{Deserialize, Serialize};

use crate::benchmark::generate_benchmark;
use crate::config::{streams, ExperimentConfig};
use crate::csvio::load_csv;
use crate::error::{CliError, Result};

/// Inputs shared by every downstream stage.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub library: TermLibrary,
    /// Data as observed.
    pub observed: Dataset,
    /// Data the KDE is fitted on: bootstrap replicates for a single path.
    pub kde_data: Dataset,
    pub bootstrapped: bool,
    pub initial_state: Vec<f64>,
    pub truth: Option<CoefficientMatrix>,
    /// Per-path coefficients of a benchmark whose rates vary across paths.
    pub truth_samples: Option<Vec<CoefficientMatrix>>,
    pub source: String,
}

pub fn to_rows(c: &CoefficientMatrix) -> Vec<Vec<f64>> {
    (0..c.rows()).map(|j| c.row(j).to_vec()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<CoefficientMatrix> {
    let cols = rows.first()?.len();
    CoefficientMatrix::from_row_major(rows.len(), cols, rows.concat()).ok()
}

/// Load or generate the data and apply the bootstrap when configured.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let (observed, truth, truth_samples, source, library) = match (&cfg.benchmark, &cfg.data_file) {
        (Some(name), None) => {
            let b = generate_benchmark(*name, cfg.sub_seed(streams::BENCHMARK))?;
            let varying = b.path_coefficients.windows(2).any(|w| w[0] != w[1]);
            let lib = build_library(b.dataset.dim(), cfg.degree, cfg.include_trig).map_err(CliError::stage("library"))?;
            let same_lib = lib.terms() == b.library.terms();
            (
                b.dataset,
                same_lib.then_some(b.truth),
                (same_lib && varying).then_some(b.path_coefficients),
                format!("benchmark:{name}"),
                lib,
            )
        }
        (None, Some(file)) => {
            let d = load_csv(file)?;
            let lib = build_library(d.dim(), cfg.degree, cfg.include_trig).map_err(CliError::stage("library"))?;
            (d, None, None, format!("file:{}", file.display()), lib)
        }
        _ => return Err(CliError::Config("exactly one of `benchmark` or `data_file` must be set".into())),
    };

    let initial_state = match &cfg.initial_state {
        Some(x0) if x0.len() != observed.dim() => {
            return Err(CliError::Config(format!(
                "initial_state has {} entries but the data has {} variables",
                x0.len(),
                observed.dim()
            )))
        }
        Some(x0) => x0.clone(),
        None => (0..observed.dim())
            .map(|j| observed.paths().iter().map(|p| p.get(j, 0)).sum::<f64>() / observed.count() as f64)
            .collect(),
    };

    let bootstrapped = observed.count() == 1 && cfg.bootstrap;
    let kde_data = if bootstrapped {
        mbb_resample(&observed.paths()[0], &cfg.mbb()).map_err(CliError::stage("bootstrap"))?
    } else {
        observed.clone()
    };
    Ok(Prepared { library, observed, kde_data, bootstrapped, initial_state, truth, truth_samples, source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub benchmark: u64,
    pub prior: u64,
    pub bootstrap: u64,
    pub accept: u64,
}

impl SeedRecord {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            master: cfg.seed,
            benchmark: cfg.sub_seed(streams::BENCHMARK),
            prior: cfg.sub_seed(streams::PRIOR),
            bootstrap: cfg.sub_seed(streams::BOOTSTRAP),
            accept: cfg.sub_seed(streams::ACCEPT),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub source: String,
    pub paths: usize,
    pub variables: usize,
    pub points: usize,
    pub bootstrap_replicates: Option<usize>,
    pub initial_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub variable: String,
    pub term: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub inclusion: f64,
    pub active: bool,
    pub baseline: f64,
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub posterior_mean: f64,
    pub selected_model: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientKl {
    pub variable: String,
    pub term: String,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    /// KL from the (replicated) data distribution to the prior push-forward.
    pub pushforward_prior: f64,
    /// KL from the data distribution to the posterior push-forward.
    pub pushforward_posterior: f64,
    /// Marginal KL from the true coefficient distribution to the posterior,
    /// for every truly non-zero coefficient.
    pub coefficients: Option<Vec<CoefficientKl>>,
    pub coefficient_average: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub coefficients: Vec<Vec<f64>>,
    pub equations: Vec<String>,
    pub derivative: String,
    pub threshold: f64,
    pub rmse: Option<f64>,
}

/// Everything `summary.json` records about a discovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub config: ExperimentConfig,
    pub seeds: SeedRecord,
    pub dataset: DatasetInfo,
    pub variables: Vec<String>,
    pub terms: Vec<String>,
    pub prior_samples: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub diverged: usize,
    pub data_bandwidths: Vec<f64>,
    pub pushforward_bandwidths: Vec<f64>,
    pub selected_equations: Vec<String>,
    pub active_terms: Vec<String>,
    /// Posterior means (`p` rows of `m` coefficients).
    pub estimate: Vec<Vec<f64>>,
    pub truth: Option<Vec<Vec<f64>>>,
    pub coefficients: Vec<CoefficientRow>,
    pub rmse: Option<RmseReport>,
    pub kl: KlReport,
    pub band_level: f64,
    pub band_members: usize,
    pub band_diverged: usize,
    pub baseline: BaselineReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub report: Report,
    pub ensemble: PosteriorEnsemble,
    pub band: PredictiveBand,
}

/// Trajectory samples for KL estimation. Simulations share the initial
/// state exactly, so the first time point carries no information and is left out.
fn flatten_paths(paths: &[SamplePath]) -> Vec<Vec<f64>> {
    paths
        .iter()
        .map(|p| (0..p.dim()).flat_map(|j| p.row(j)[1..].iter().copied()).collect())
        .collect()
}

fn simulate_bounded(prep: &Prepared, coeffs: &[CoefficientMatrix], cfg: &ExperimentConfig) -> Result<Vec<SamplePath>> {
    let out = push_forward(&prep.library, coeffs, &prep.initial_state, prep.observed.times(), &cfg.integrator());
    let mut paths = Vec::new();
    for o in out {
        if let Some(p) = o.map_err(CliError::stage("push_forward"))?.path() {
            paths.push(p.clone());
        }
    }
    Ok(paths)
}

/// Marginal KL between the benchmark's per-path coefficients and the
/// posterior, over the truly non-zero coefficients.
pub fn coefficient_kl(
    truth: &CoefficientMatrix,
    truth_samples: &[CoefficientMatrix],
    ensemble: &PosteriorEnsemble,
    library: &TermLibrary,
) -> Result<Vec<CoefficientKl>> {
    let labels = library.term_labels();
    let mut out = Vec::new();
    for j in 0..truth.rows() {
        for (k, label) in labels.iter().enumerate() {
            if truth.get(j, k) == 0.0 {
                continue;
            }
            let p: Vec<Vec<f64>> = truth_samples.iter().map(|c| vec![c.get(j, k)]).collect();
            let q: Vec<Vec<f64>> = ensemble.accepted.iter().map(|c| vec![c.get(j, k)]).collect();
            out.push(CoefficientKl {
                variable: library.variable_names()[j].clone(),
                term: label.clone(),
                kl: estimate_kl(&p, &q).map_err(CliError::stage("kl"))?,
            });
        }
    }
    Ok(out)
}

/// Run the full discovery pipeline.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultBundle> {
    let prep = prepare(cfg)?;
    let shape = (prep.library.dim(), prep.library.len());
    let prior = cfg
        .prior_spec()
        .sample(shape, cfg.samples, cfg.sub_seed(streams::PRIOR))
        .map_err(CliError::stage("prior"))?;
    let ensemble = rejection_sample(&prep.library, &prior, &prep.kde_data, &prep.initial_state, &cfg.rejection())
        .map_err(CliError::stage("rejection_sample"))?;
    log::info!("accepted {} of {} prior samples", ensemble.len(), ensemble.total());
    finish(cfg, &prep, &prior, ensemble)
}

/// Summaries, band, diagnostics and baseline for an already sampled ensemble.
pub fn finish(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    prior: &[CoefficientMatrix],
    ensemble: PosteriorEnsemble,
) -> Result<ResultBundle> {
    let lib = &prep.library;
    let labels = lib.term_labels();
    let names = lib.variable_names().to_vec();
    let model = select_terms(&ensemble, cfg.inclusion_threshold).map_err(CliError::stage("select_terms"))?;
    let means = model.summary.means();
    let band = predictive_band(
        &ensemble,
        lib,
        &prep.initial_state,
        prep.observed.times(),
        &cfg.integrator(),
        cfg.band_level,
    )
    .map_err(CliError::stage("predictive_band"))?;

    let baseline = fit_baseline(&prep.observed, lib, cfg.derivative_method(), &cfg.stlsq())
        .map_err(CliError::stage("baseline"))?;

    let data_samples = flatten_paths(prep.kde_data.paths());
    let prior_paths = simulate_bounded(prep, prior, cfg)?;
    let post_paths = simulate_bounded(prep, &ensemble.accepted, cfg)?;
    let kl_coeffs = match (&prep.truth, &prep.truth_samples) {
        (Some(t), Some(s)) => Some(coefficient_kl(t, s, &ensemble, lib)?),
        _ => None,
    };
    let kl = KlReport {
        pushforward_prior: estimate_kl(&data_samples, &flatten_paths(&prior_paths)).map_err(CliError::stage("kl"))?,
        pushforward_posterior: estimate_kl(&data_samples, &flatten_paths(&post_paths))
            .map_err(CliError::stage("kl"))?,
        coefficient_average: kl_coeffs
            .as_ref()
            .map(|v| v.iter().map(|c| c.kl).sum::<f64>() / v.len() as f64),
        coefficients: kl_coeffs,
    };

    let rmse = match &prep.truth {
        Some(t) => Some(RmseReport {
            posterior_mean: coefficient_rmse(&means, t).map_err(CliError::stage("rmse"))?,
            selected_model: coefficient_rmse(&model.coefficients, t).map_err(CliError::stage("rmse"))?,
            baseline: coefficient_rmse(&baseline, t).map_err(CliError::stage("rmse"))?,
        }),
        None => None,
    };

    let coefficients = (0..means.rows())
        .flat_map(|j| (0..means.cols()).map(move |k| (j, k)))
        .map(|(j, k)| {
            let s = model.summary.get(j, k);
            CoefficientRow {
                variable: names[j].clone(),
                term: labels[k].clone(),
                mean: s.mean,
                sd: s.sd,
                lower: s.lower,
                upper: s.upper,
                inclusion: s.inclusion,
                active: model.active.contains(&(j, k)),
                baseline: baseline.get(j, k),
                truth: prep.truth.as_ref().map(|t| t.get(j, k)),
            }
        })
        .collect();

    let report = Report {
        kind: "discover".into(),
        config: cfg.clone(),
        seeds: SeedRecord::from_config(cfg),
        dataset: DatasetInfo {
            source: prep.source.clone(),
            paths: prep.observed.count(),
            variables: prep.observed.dim(),
            points: prep.observed.len(),
            bootstrap_replicates: prep.bootstrapped.then_some(prep.kde_data.count()),
            initial_state: prep.initial_state.clone(),
        },
        variables: names.clone(),
        terms: labels.clone(),
        prior_samples: ensemble.total(),
        accepted: ensemble.len(),
        acceptance_rate: ensemble.acceptance_rate,
        diverged: ensemble.diverged,
        data_bandwidths: ensemble.data_bandwidths.clone(),
        pushforward_bandwidths: ensemble.pushforward_bandwidths.clone(),
        selected_equations: model.coefficients.equations(lib),
        active_terms: model.active.iter().map(|&(j, k)| format!("{}: {}", names[j], labels[k])).collect(),
        estimate: to_rows(&means),
        truth: prep.truth.as_ref().map(to_rows),
        coefficients,
        rmse,
        kl,
        band_level: cfg.band_level,
        band_members: band.members,
        band_diverged: band.diverged,
        baseline: baseline_report(cfg, &baseline, lib, prep.truth.as_ref())?,
    };
    Ok(ResultBundle { report, ensemble, band })
}

fn baseline_report(
    cfg: &ExperimentConfig,
    coeffs: &CoefficientMatrix,
    lib: &TermLibrary,
    truth: Option<&CoefficientMatrix>,
) -> Result<BaselineReport> {
    Ok(BaselineReport {
        coefficients: to_rows(coeffs),
        equations: coeffs.equations(lib),
        derivative: match cfg.derivative_window {
            Some(w) if w > 1 => format!("smoothed_difference({w})"),
            _ => "central_difference".into(),
        },
        threshold: cfg.stlsq_threshold,
        rmse: truth.map(|t| coefficient_rmse(coeffs, t)).transpose().map_err(CliError::stage("rmse"))?,
    })
}

/// Report of a baseline-only run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOnly {
    pub kind: String,
    pub config: ExperimentConfig,
    pub seeds: SeedRecord,
    pub variables: Vec<String>,
    pub terms: Vec<String>,
    pub estimate: Vec<Vec<f64>>,
    pub truth: Option<Vec<Vec<f64>>>,
    pub baseline: BaselineReport,
}

pub fn run_baseline(cfg: &ExperimentConfig) -> Result<BaselineOnly> {
    let prep = prepare(cfg)?;
    let lib = &prep.library;
    let coeffs = fit_baseline(&prep.observed, lib, cfg.derivative_method(), &cfg.stlsq())
        .map_err(CliError::stage("baseline"))?;
    Ok(BaselineOnly {
        kind: "baseline".into(),
        config: cfg.clone(),
        seeds: SeedRecord::from_config(cfg),
        variables: lib.variable_names().to_vec(),
        terms: lib.term_labels(),
        estimate: to_rows(&coeffs),
        truth: prep.truth.as_ref().map(to_rows),
        baseline: baseline_report(cfg, &coeffs, lib, prep.truth.as_ref())?,
    })
}
