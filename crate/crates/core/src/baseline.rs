//! Derivative-based sparse regression comparator: finite-difference
//! derivatives plus sequentially thresholded least squares.

use nalgebra::{DMatrix, DVector};

use crate::coeffs::CoefficientMatrix;
use crate::error::{contract, Error, Result};
use crate::library::TermLibrary;
use crate::path::{Dataset, SamplePath};

/// Relative singular-value cutoff below which a design is treated as singular.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMethod {
    /// Second-order three-point differences.
    CentralDifference,
    /// Centred moving average of the given odd window, then central differences.
    SmoothedDifference(usize),
}

/// Three-point derivative on a possibly nonuniform grid; one-sided
/// second-order stencils at both ends.
fn differentiate(t: &[f64], f: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        d[i] = -h2 / (h1 * (h1 + h2)) * f[i - 1] + (h2 - h1) / (h1 * h2) * f[i] + h1 / (h2 * (h1 + h2)) * f[i + 1];
    }
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] - h1 / (h2 * (h1 + h2)) * f[2];
    let (h1, h2) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
    d[n - 1] = h2 / (h1 * (h1 + h2)) * f[n - 3] - (h1 + h2) / (h1 * h2) * f[n - 2]
        + (h1 + 2.0 * h2) / (h2 * (h1 + h2)) * f[n - 1];
    d
}

/// Centred moving average; the window shrinks symmetrically near the ends.
fn moving_average(f: &[f64], window: usize) -> Vec<f64> {
    let n = f.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let r = half.min(i).min(n - 1 - i);
            f[i - r..=i + r].iter().sum::<f64>() / (2 * r + 1) as f64
        })
        .collect()
}

/// Time derivatives of every path, returned as paths on the same grid.
pub fn estimate_derivatives(dataset: &Dataset, method: DerivativeMethod) -> Result<Vec<SamplePath>> {
    let n = dataset.len();
    if n < 3 {
        return Err(contract(format!("derivative estimation needs at least 3 time points, got {n}")));
    }
    if let DerivativeMethod::SmoothedDifference(w) = method {
        if w == 0 || w % 2 == 0 || w > n {
            return Err(contract(format!("smoothing window {w} must be odd and at most {n}")));
        }
    }
    let t = dataset.times();
    dataset
        .paths()
        .iter()
        .map(|path| {
            let rows = (0..path.dim())
                .map(|j| match method {
                    DerivativeMethod::CentralDifference => differentiate(t, path.row(j)),
                    DerivativeMethod::SmoothedDifference(w) => differentiate(t, &moving_average(path.row(j), w)),
                })
                .collect();
            SamplePath::new(t.to_vec(), rows)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StlsqConfig {
    pub threshold: f64,
    pub max_iters: usize,
    pub ridge: f64,
}

impl Default for StlsqConfig {
    fn default() -> Self {
        Self { threshold: 0.05, max_iters: 20, ridge: 0.0 }
    }
}

impl StlsqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0) || !self.threshold.is_finite() {
            return Err(contract("STLSQ threshold must be a non-negative number"));
        }
        if self.max_iters == 0 {
            return Err(contract("STLSQ needs at least one iteration"));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(contract("STLSQ ridge must be a non-negative number"));
        }
        Ok(())
    }
}

/// Stacked design `Theta` (rows: every time point of every path) and
/// matching derivative targets.
pub fn regression_problem(
    dataset: &Dataset,
    library: &TermLibrary,
    method: DerivativeMethod,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if dataset.dim() != library.dim() {
        return Err(contract("dataset and library disagree on the state dimension"));
    }
    let derivs = estimate_derivatives(dataset, method)?;
    let (n, p, m) = (dataset.len(), dataset.dim(), library.len());
    let rows = n * dataset.count();
    let mut theta = DMatrix::zeros(rows, m);
    let mut xdot = DMatrix::zeros(rows, p);
    let mut buf = vec![0.0; m];
    for (k, (path, d)) in dataset.paths().iter().zip(&derivs).enumerate() {
        for t in 0..n {
            let r = k * n + t;
            library.eval_into(&path.state(t), &mut buf);
            for (c, v) in buf.iter().enumerate() {
                theta[(r, c)] = *v;
            }
            for j in 0..p {
                xdot[(r, j)] = d.get(j, t);
            }
        }
    }
    Ok((theta, xdot))
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64, labels: &[String]) -> Result<DVector<f64>> {
    if ridge > 0.0 {
        let ata = a.transpose() * a + DMatrix::identity(a.ncols(), a.ncols()) * ridge;
        let atb = a.transpose() * b;
        return ata
            .cholesky()
            .map(|c| c.solve(&atb))
            .ok_or_else(|| contract("ridge system is not positive definite"));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let (imin, smin) = svd.singular_values.argmin();
    if !(smin > RANK_TOL * smax) {
        let null = svd.v_t.as_ref().expect("requested V").row(imin).into_owned();
        let scale = null.amax();
        let terms = (0..a.ncols())
            .filter(|&c| null[c].abs() > 1e-6 * scale)
            .map(|c| labels[c].clone())
            .collect();
        return Err(Error::RankDeficient { terms });
    }
    svd.solve(b, 0.0).map_err(|e| contract(e.to_string()))
}

/// One threshold loop for one target column; returns the coefficients and
/// the active-term count after each iteration.
fn stlsq_column(
    theta: &DMatrix<f64>,
    target: &DVector<f64>,
    cfg: &StlsqConfig,
    labels: &[String],
) -> Result<(Vec<f64>, Vec<usize>)> {
    let m = theta.ncols();
    let mut active: Vec<usize> = (0..m).collect();
    let mut coef = vec![0.0; m];
    let mut history = Vec::new();
    for _ in 0..cfg.max_iters {
        if active.is_empty() {
            break;
        }
        let sub = theta.select_columns(&active);
        let sub_labels: Vec<String> = active.iter().map(|&c| labels[c].clone()).collect();
        let w = least_squares(&sub, target, cfg.ridge, &sub_labels)?;
        coef.iter_mut().for_each(|c| *c = 0.0);
        for (i, &c) in active.iter().enumerate() {
            coef[c] = w[i];
        }
        let survivors: Vec<usize> = active.iter().copied().filter(|&c| coef[c].abs() >= cfg.threshold).collect();
        let converged = survivors.len() == active.len();
        for &c in &active {
            if coef[c].abs() < cfg.threshold {
                coef[c] = 0.0;
            }
        }
        active = survivors;
        history.push(active.len());
        if converged {
            break;
        }
    }
    Ok((coef, history))
}

/// STLSQ with per-equation active-set histories.
pub fn stlsq_traced(
    theta: &DMatrix<f64>,
    xdot: &DMatrix<f64>,
    cfg: &StlsqConfig,
    labels: &[String],
) -> Result<(CoefficientMatrix, Vec<Vec<usize>>)> {
    cfg.validate()?;
    let (n, m) = theta.shape();
    if xdot.nrows() != n {
        return Err(contract(format!("design has {n} rows but targets have {}", xdot.nrows())));
    }
    if labels.len() != m {
        return Err(contract("one label per design column is required"));
    }
    if n < m {
        return Err(contract(format!("{n} regression rows cannot determine {m} coefficients")));
    }
    if theta.iter().chain(xdot.iter()).any(|v| !v.is_finite()) {
        return Err(contract("regression inputs must be finite"));
    }
    let p = xdot.ncols();
    let mut out = CoefficientMatrix::zeros(p, m);
    let mut histories = Vec::with_capacity(p);
    for j in 0..p {
        let (coef, hist) = stlsq_column(theta, &xdot.column(j).into_owned(), cfg, labels)?;
        for (k, v) in coef.into_iter().enumerate() {
            out.set(j, k, v);
        }
        histories.push(hist);
    }
    Ok((out, histories))
}

/// Sequentially thresholded least squares, one regression per state variable.
pub fn stlsq(theta: &DMatrix<f64>, xdot: &DMatrix<f64>, cfg: &StlsqConfig, labels: &[String]) -> Result<CoefficientMatrix> {
    stlsq_traced(theta, xdot, cfg, labels).map(|(c, _)| c)
}

/// Derivatives, stacked design and STLSQ in one call.
pub fn fit_baseline(
    dataset: &Dataset,
    library: &TermLibrary,
    method: DerivativeMethod,
    cfg: &StlsqConfig,
) -> Result<CoefficientMatrix> {
    let (theta, xdot) = regression_problem(dataset, library, method)?;
    stlsq(&theta, &xdot, cfg, &library.term_labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::build_library;
    use crate::simulate::{integrate, IntegratorConfig};

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dt).collect()
    }

    fn single(times: Vec<f64>, rows: Vec<Vec<f64>>) -> Dataset {
        Dataset::new(vec![SamplePath::new(times, rows).unwrap()]).unwrap()
    }

    #[test]
    fn linear_and_quadratic_are_exact() {
        let t = grid(20, 0.1);
        let lin = single(t.clone(), vec![t.clone()]);
        let d = estimate_derivatives(&lin, DerivativeMethod::CentralDifference).unwrap();
        assert!(d[0].row(0).iter().all(|v| (v - 1.0).abs() < 1e-12));

        let sq = single(t.clone(), vec![t.iter().map(|x| x * x).collect()]);
        let d = estimate_derivatives(&sq, DerivativeMethod::CentralDifference).unwrap();
        for (i, v) in d[0].row(0).iter().enumerate() {
            assert!((v - 2.0 * t[i]).abs() < 1e-10, "index {i}");
        }
    }

    #[test]
    fn nonuniform_grid_is_exact_for_quadratics() {
        let t: Vec<f64> = (0..15).map(|i| (i as f64).powf(1.3) * 0.1).collect();
        let f: Vec<f64> = t.iter().map(|x| 3.0 * x * x - x + 2.0).collect();
        let d = differentiate(&t, &f);
        for (i, v) in d.iter().enumerate() {
            assert!((v - (6.0 * t[i] - 1.0)).abs() < 1e-9, "index {i}");
        }
    }

    #[test]
    fn sine_derivative_error() {
        let t = grid(629, 0.01);
        let ds = single(t.clone(), vec![t.iter().map(|x| x.sin()).collect()]);
        let d = estimate_derivatives(&ds, DerivativeMethod::CentralDifference).unwrap();
        let err = d[0].row(0).iter().zip(&t).map(|(v, x)| (v - x.cos()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "max error {err}");
    }

    #[test]
    fn smoothing_and_contract() {
        let t = grid(10, 1.0);
        let ds = single(t.clone(), vec![t.clone()]);
        let d = estimate_derivatives(&ds, DerivativeMethod::SmoothedDifference(3)).unwrap();
        assert!(d[0].row(0).iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(estimate_derivatives(&ds, DerivativeMethod::SmoothedDifference(4)).is_err());
        let short = single(vec![0.0, 1.0], vec![vec![0.0, 1.0]]);
        assert!(estimate_derivatives(&short, DerivativeMethod::CentralDifference).is_err());
        assert_eq!(moving_average(&[1.0, 2.0, 6.0, 4.0], 3), vec![1.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn recovers_exponential_decay() {
        let lib = build_library(1, 2, false).unwrap();
        let t = grid(201, 0.01);
        let ds = single(t.clone(), vec![t.iter().map(|x| (-x).exp()).collect()]);
        let cfg = StlsqConfig { threshold: 0.1, ..Default::default() };
        let c = fit_baseline(&ds, &lib, DerivativeMethod::CentralDifference, &cfg).unwrap();
        assert!(c.get(0, 0).abs() < 1e-3 && c.get(0, 2).abs() < 1e-3);
        assert!((c.get(0, 1) + 1.0).abs() < 1e-3, "{:?}", c.row(0));
    }

    /// Plain least squares through the normal equations, solved by
    /// Gaussian elimination as an independent oracle.
    fn normal_equations(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
        let m = a.ncols();
        let mut aug = vec![vec![0.0; m + 1]; m];
        for i in 0..m {
            for j in 0..m {
                aug[i][j] = (0..a.nrows()).map(|r| a[(r, i)] * a[(r, j)]).sum();
            }
            aug[i][m] = (0..a.nrows()).map(|r| a[(r, i)] * b[r]).sum();
        }
        for c in 0..m {
            let piv = (c..m).max_by(|&x, &y| aug[x][c].abs().total_cmp(&aug[y][c].abs())).unwrap();
            aug.swap(c, piv);
            for r in 0..m {
                if r != c {
                    let f = aug[r][c] / aug[c][c];
                    let pivot = aug[c].clone();
                    for (x, p) in aug[r][c..].iter_mut().zip(&pivot[c..]) {
                        *x -= f * p;
                    }
                }
            }
        }
        (0..m).map(|i| aug[i][m] / aug[i][i]).collect()
    }

    #[test]
    fn zero_threshold_is_least_squares() {
        let a = DMatrix::from_fn(12, 3, |r, c| ((r * 7 + c * 3) % 5) as f64 + 0.1 * (r as f64) * (c as f64 + 1.0));
        let b: Vec<f64> = (0..12).map(|r| (r as f64 * 0.9).sin()).collect();
        let labels: Vec<String> = (0..3).map(|i| format!("t{i}")).collect();
        let cfg = StlsqConfig { threshold: 0.0, ..Default::default() };
        let c = stlsq(&a, &DMatrix::from_column_slice(12, 1, &b), &cfg, &labels).unwrap();
        let oracle = normal_equations(&a, &b);
        for (k, o) in oracle.iter().enumerate() {
            assert!((c.get(0, k) - o).abs() < 1e-9, "{k}: {} vs {o}", c.get(0, k));
        }
    }

    #[test]
    fn lotka_volterra_exact_derivatives() {
        let lib = build_library(2, 2, false).unwrap();
        // Terms: 1, u, v, u^2, uv, v^2.
        let truth = CoefficientMatrix::from_row_major(
            2,
            6,
            vec![0.0, 1.0, 0.0, 0.0, -0.1, 0.0, 0.0, 0.0, -1.5, 0.0, 0.075, 0.0],
        )
        .unwrap();
        let t = grid(111, 0.2);
        let path = integrate(&lib, &truth, &[10.0, 5.0], &t, &IntegratorConfig::default()).unwrap();
        let path = path.path().unwrap().clone();
        let n = t.len();
        let mut theta = DMatrix::zeros(n, 6);
        let mut xdot = DMatrix::zeros(n, 2);
        for i in 0..n {
            let s = path.state(i);
            let row = lib.eval(&s);
            for k in 0..6 {
                theta[(i, k)] = row[k];
            }
            for j in 0..2 {
                xdot[(i, j)] = truth.row(j).iter().zip(&row).map(|(a, b)| a * b).sum();
            }
        }
        let cfg = StlsqConfig { threshold: 0.02, ..Default::default() };
        let (c, hist) = stlsq_traced(&theta, &xdot, &cfg, &lib.term_labels()).unwrap();
        for (a, b) in c.entries().iter().zip(truth.entries()) {
            assert!((a - b).abs() < 1e-2, "{:?}", c.entries());
        }
        for h in hist {
            assert!(h.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn idempotent_on_active_set() {
        let lib = build_library(1, 2, false).unwrap();
        let t = grid(101, 0.02);
        let ds = single(t.clone(), vec![t.iter().map(|x| (0.5 * x).exp()).collect()]);
        let (theta, xdot) = regression_problem(&ds, &lib, DerivativeMethod::CentralDifference).unwrap();
        let labels = lib.term_labels();
        let cfg = StlsqConfig::default();
        let first = stlsq(&theta, &xdot, &cfg, &labels).unwrap();
        let active: Vec<usize> = (0..3).filter(|&k| first.get(0, k) != 0.0).collect();
        let sub_labels: Vec<String> = active.iter().map(|&k| labels[k].clone()).collect();
        let again = stlsq(&theta.select_columns(&active), &xdot, &cfg, &sub_labels).unwrap();
        for (i, &k) in active.iter().enumerate() {
            assert!((again.get(0, i) - first.get(0, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn colinear_terms_are_named() {
        let a = DMatrix::from_fn(10, 3, |r, c| match c {
            0 => 1.0,
            1 => r as f64,
            _ => 2.0 * r as f64,
        });
        let b = DMatrix::from_fn(10, 1, |r, _| r as f64);
        let labels = vec!["1".to_string(), "x".to_string(), "2x".to_string()];
        match stlsq(&a, &b, &StlsqConfig::default(), &labels) {
            Err(Error::RankDeficient { terms }) => assert_eq!(terms, vec!["x".to_string(), "2x".to_string()]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        let ridge = StlsqConfig { ridge: 1e-3, ..Default::default() };
        assert!(stlsq(&a, &b, &ridge, &labels).is_ok());
    }
}
