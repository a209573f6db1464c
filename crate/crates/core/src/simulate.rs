//! Forward integration of candidate models `dx/dt = coeffs * theta(x)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientMatrix;
use crate::error::{contract, Result};
use crate::library::TermLibrary;
use crate::path::{check_grid, SamplePath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Uniform RK4 substeps per observation interval.
    pub substeps_per_interval: usize,
    /// A state component with magnitude above this marks the run as diverged.
    pub blowup_threshold: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            substeps_per_interval: 10,
            blowup_threshold: 1e6,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.substeps_per_interval == 0 {
            return Err(contract("substeps_per_interval must be at least 1"));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(contract("blowup_threshold must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimOutcome {
    Path(SamplePath),
    /// The state left the admissible region while computing observation `at_index`.
    Diverged { at_index: usize },
}

impl SimOutcome {
    pub fn path(&self) -> Option<&SamplePath> {
        match self {
            SimOutcome::Path(p) => Some(p),
            SimOutcome::Diverged { .. } => None,
        }
    }

    pub fn is_diverged(&self) -> bool {
        matches!(self, SimOutcome::Diverged { .. })
    }
}

struct Rhs<'a> {
    library: &'a TermLibrary,
    coeffs: &'a CoefficientMatrix,
    theta: Vec<f64>,
}

impl Rhs<'_> {
    fn eval(&mut self, x: &[f64], out: &mut [f64]) {
        self.library.eval_into(x, &mut self.theta);
        for (j, o) in out.iter_mut().enumerate() {
            *o = self
                .coeffs
                .row(j)
                .iter()
                .zip(&self.theta)
                .map(|(c, t)| if *c == 0.0 { 0.0 } else { c * t })
                .sum();
        }
    }
}

/// Classical fourth-order Runge–Kutta on the observation grid, with
/// `cfg.substeps_per_interval` uniform substeps per interval.
pub fn integrate(
    library: &TermLibrary,
    coeffs: &CoefficientMatrix,
    x0: &[f64],
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<SimOutcome> {
    coeffs.check_library(library)?;
    cfg.validate()?;
    let p = library.dim();
    if x0.len() != p {
        return Err(contract(format!("initial state has length {}, expected {p}", x0.len())));
    }
    if times.is_empty() {
        return Err(contract("time grid is empty"));
    }
    check_grid(times)?;

    let n = times.len();
    let admissible = |x: &[f64]| x.iter().all(|v| v.is_finite() && v.abs() <= cfg.blowup_threshold);
    if !admissible(x0) {
        return Ok(SimOutcome::Diverged { at_index: 0 });
    }

    let mut rhs = Rhs {
        library,
        coeffs,
        theta: vec![0.0; library.len()],
    };
    let mut values = vec![0.0; p * n];
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; p], vec![0.0; p], vec![0.0; p], vec![0.0; p], vec![0.0; p]);
    for j in 0..p {
        values[j * n] = x[j];
    }

    let steps = cfg.substeps_per_interval;
    for i in 1..n {
        let h = (times[i] - times[i - 1]) / steps as f64;
        for _ in 0..steps {
            rhs.eval(&x, &mut k1);
            for j in 0..p {
                tmp[j] = x[j] + 0.5 * h * k1[j];
            }
            rhs.eval(&tmp, &mut k2);
            for j in 0..p {
                tmp[j] = x[j] + 0.5 * h * k2[j];
            }
            rhs.eval(&tmp, &mut k3);
            for j in 0..p {
                tmp[j] = x[j] + h * k3[j];
            }
            rhs.eval(&tmp, &mut k4);
            for j in 0..p {
                x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            if !admissible(&x) {
                return Ok(SimOutcome::Diverged { at_index: i });
            }
        }
        for j in 0..p {
            values[j * n + i] = x[j];
        }
    }
    Ok(SimOutcome::Path(SamplePath::from_flat(times.to_vec(), values, p)?))
}

/// Integrate every coefficient sample from the same initial state. Elements
/// run in parallel; output order matches input order and each element's
/// errors are kept separate.
pub fn push_forward(
    library: &TermLibrary,
    samples: &[CoefficientMatrix],
    x0: &[f64],
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Vec<Result<SimOutcome>> {
    samples
        .par_iter()
        .map(|c| integrate(library, c, x0, times, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{build_library, TermDescriptor};

    fn decay_library() -> (TermLibrary, CoefficientMatrix) {
        let lib = TermLibrary::new(1, vec![TermDescriptor::Monomial(vec![1])]).unwrap();
        let c = CoefficientMatrix::from_row_major(1, 1, vec![-1.0]).unwrap();
        (lib, c)
    }

    fn lv(alpha: f64, beta: f64, gamma: f64, delta: f64) -> (TermLibrary, CoefficientMatrix) {
        let lib = build_library(2, 2, false).unwrap();
        let mut c = CoefficientMatrix::zeros(2, 6);
        c.set(0, 1, alpha);
        c.set(0, 4, -beta);
        c.set(1, 2, -gamma);
        c.set(1, 4, delta);
        (lib, c)
    }

    fn decay_error(substeps: usize) -> f64 {
        let (lib, c) = decay_library();
        let cfg = IntegratorConfig { substeps_per_interval: substeps, ..Default::default() };
        let out = integrate(&lib, &c, &[1.0], &[0.0, 1.0], &cfg).unwrap();
        (out.path().unwrap().get(0, 1) - (-1.0f64).exp()).abs()
    }

    #[test]
    fn exponential_decay() {
        assert!(decay_error(100) < 1e-6);
    }

    #[test]
    fn fourth_order_convergence() {
        for s in [4, 8, 16] {
            let ratio = decay_error(s) / decay_error(2 * s);
            assert!(ratio >= 12.0, "substeps {s}: ratio {ratio}");
        }
    }

    fn lv_invariant(x: &[f64]) -> f64 {
        let (alpha, beta, gamma, delta) = (1.0, 0.1, 1.5, 0.075);
        delta * x[0] - gamma * x[0].ln() + beta * x[1] - alpha * x[1].ln()
    }

    fn lv_drift(substeps: usize) -> f64 {
        let (lib, c) = lv(1.0, 0.1, 1.5, 0.075);
        let times: Vec<f64> = (0..=110).map(|i| i as f64 * 0.2).collect();
        let cfg = IntegratorConfig { substeps_per_interval: substeps, ..Default::default() };
        let path = integrate(&lib, &c, &[10.0, 5.0], &times, &cfg).unwrap();
        let path = path.path().unwrap();
        let v0 = lv_invariant(&path.state(0));
        (0..path.len())
            .map(|t| ((lv_invariant(&path.state(t)) - v0) / v0).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn lotka_volterra_first_integral_conserved() {
        // 22 time units is about four periods from (10, 5).
        let drift = lv_drift(10);
        assert!(drift < 1e-4, "relative drift {drift}");
    }

    #[test]
    fn lotka_volterra_drift_shrinks_with_substeps() {
        let d: Vec<f64> = [1, 4, 16].iter().map(|&s| lv_drift(s)).collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }

    #[test]
    fn lorenz_stays_bounded() {
        let lib = build_library(3, 2, false).unwrap();
        let labels = lib.term_labels();
        let idx = |l: &str| labels.iter().position(|s| s == l).unwrap();
        let mut c = CoefficientMatrix::zeros(3, lib.len());
        c.set(0, idx("x"), -10.0);
        c.set(0, idx("y"), 10.0);
        c.set(1, idx("x"), 28.0);
        c.set(1, idx("x*z"), -1.0);
        c.set(1, idx("y"), -1.0);
        c.set(2, idx("x*y"), 1.0);
        c.set(2, idx("z"), -8.0 / 3.0);
        let times: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let out = integrate(&lib, &c, &[-8.0, 7.0, 27.0], &times, &IntegratorConfig::default()).unwrap();
        let path = out.path().expect("Lorenz run diverged");
        assert!(path.values().iter().all(|v| v.abs() < 100.0));
    }

    #[test]
    fn blowup_is_reported() {
        let lib = TermLibrary::new(1, vec![TermDescriptor::Monomial(vec![2])]).unwrap();
        let c = CoefficientMatrix::from_row_major(1, 1, vec![1.0]).unwrap();
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        // x' = x^2 from x0 = 1 explodes at t = 1.
        let out = integrate(&lib, &c, &[1.0], &times, &IntegratorConfig::default()).unwrap();
        match out {
            SimOutcome::Diverged { at_index } => assert!((9..=11).contains(&at_index)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let lib = build_library(2, 1, false).unwrap();
        let c = CoefficientMatrix::zeros(2, 2);
        assert!(integrate(&lib, &c, &[1.0, 1.0], &[0.0, 1.0], &IntegratorConfig::default()).is_err());
        let results = push_forward(&lib, &[c, CoefficientMatrix::zeros(2, 3)], &[1.0, 1.0], &[0.0, 1.0], &IntegratorConfig::default());
        assert!(results[0].is_err());
        assert!(results[1].is_ok());
    }

    #[test]
    fn push_forward_matches_integrate_and_is_thread_independent() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let draw = |m: f64, s: f64, rng: &mut rand_chacha::ChaCha8Rng| Normal::new(m, s).unwrap().sample(rng);
        let lib = build_library(2, 2, false).unwrap();
        let samples: Vec<CoefficientMatrix> = (0..100)
            .map(|_| {
                let a = draw(1.0, 0.1, &mut rng);
                let b = draw(0.1, 0.01, &mut rng);
                let g = draw(1.5, 0.15, &mut rng);
                let d = draw(0.075, 0.0075, &mut rng);
                lv(a, b, g, d).1
            })
            .collect();
        let times: Vec<f64> = (0..=110).map(|i| i as f64 * 0.2).collect();
        let cfg = IntegratorConfig::default();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| push_forward(&lib, &samples, &[10.0, 5.0], &times, &cfg))
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one, four);
        assert_eq!(one.iter().filter(|o| !o.as_ref().unwrap().is_diverged()).count(), 100);
        let single = integrate(&lib, &samples[7], &[10.0, 5.0], &times, &cfg).unwrap();
        assert_eq!(one[7].as_ref().unwrap(), &single);
        let dup = push_forward(&lib, &[samples[0].clone(), samples[0].clone()], &[10.0, 5.0], &times, &cfg);
        assert_eq!(dup[0], dup[1]);
    }
}
