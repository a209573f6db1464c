//! Statistical behaviour of the matched block bootstrap on a simulated
//! Lotka–Volterra trajectory.

use pfdisc::bootstrap::{mbb_resample, MbbConfig};
use pfdisc::stats::{ks_distance, lag1_autocorrelation};
use pfdisc::{build_library, integrate, CoefficientMatrix, IntegratorConfig, SamplePath};

fn lv_path() -> SamplePath {
    let lib = build_library(2, 2, false).unwrap();
    let truth = CoefficientMatrix::from_row_major(
        2,
        6,
        vec![0.0, 1.0, 0.0, 0.0, -0.1, 0.0, 0.0, 0.0, -1.5, 0.0, 0.075, 0.0],
    )
    .unwrap();
    let times: Vec<f64> = (0..111).map(|i| i as f64 * 0.2).collect();
    integrate(&lib, &truth, &[10.0, 5.0], &times, &IntegratorConfig::default())
        .unwrap()
        .path()
        .unwrap()
        .clone()
}

fn pooled_ks(source: &SamplePath, replicates: usize, seed: u64) -> f64 {
    let out = mbb_resample(source, &MbbConfig { replicates, seed, ..Default::default() }).unwrap();
    (0..source.dim())
        .map(|j| {
            let pooled: Vec<f64> = out.paths().iter().flat_map(|p| p.row(j).to_vec()).collect();
            ks_distance(&pooled, source.row(j))
        })
        .fold(0.0, f64::max)
}

#[test]
fn marginal_ks_small_at_two_hundred_replicates() {
    let src = lv_path();
    let d = pooled_ks(&src, 200, 11);
    assert!(d < 0.05, "KS distance {d}");
}

#[test]
fn marginal_ks_shrinks_with_more_replicates() {
    let src = lv_path();
    // Average over seeds so the comparison is not driven by one draw.
    let avg = |r: usize| (0..10).map(|s| pooled_ks(&src, r, 100 + s)).sum::<f64>() / 10.0;
    let (small, large) = (avg(20), avg(200));
    assert!(large < small, "KS at r=20: {small}, at r=200: {large}");
}

#[test]
fn lag_one_autocorrelation_is_preserved() {
    let src = lv_path();
    let out = mbb_resample(&src, &MbbConfig { replicates: 200, seed: 5, ..Default::default() }).unwrap();
    for j in 0..src.dim() {
        let target = lag1_autocorrelation(src.row(j));
        let mean: f64 = out.paths().iter().map(|p| lag1_autocorrelation(p.row(j))).sum::<f64>() / out.count() as f64;
        assert!((mean - target).abs() <= 0.15, "variable {j}: {mean} vs {target}");
    }
}
