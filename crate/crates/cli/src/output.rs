//! Result persistence: JSON summaries, CSV tables and a checksummed manifest.

use std::fs;
use std::path::{Path, PathBuf};

use pfdisc::density::estimate_kl;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::pipeline::{BaselineOnly, ResultBundle};

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";
pub const SAMPLES: &str = "posterior_samples.csv";
pub const BAND: &str = "predictive_band.csv";
pub const COEFFICIENT_DIR: &str = "coefficients";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Writer {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl Writer {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), entries: Vec::new() })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.entries.push(ManifestEntry { file: rel.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    fn finish(self) -> Result<Manifest> {
        let manifest = Manifest { files: self.entries };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.root.join(MANIFEST);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// File-name-safe form of a `variable`/`term` pair.
pub fn coefficient_file_name(variable: &str, term: &str) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| match c {
                '*' => 'x',
                c if c.is_ascii_alphanumeric() => c,
                _ => '_',
            })
            .collect()
    };
    format!("{}/{}__{}.txt", COEFFICIENT_DIR, clean(variable), clean(term))
}

/// Write every artifact of a discovery run into `dir`.
pub fn save_results(bundle: &ResultBundle, dir: &Path) -> Result<Manifest> {
    let report = &bundle.report;
    let mut w = Writer::new(dir)?;
    w.json(SUMMARY, report)?;

    let pairs: Vec<(usize, usize)> = (0..report.variables.len())
        .flat_map(|j| (0..report.terms.len()).map(move |k| (j, k)))
        .collect();
    let mut header = vec!["sample".to_string(), "prior_index".to_string(), "log_phi".to_string()];
    header.extend(pairs.iter().map(|&(j, k)| format!("{}:{}", report.variables[j], report.terms[k])));
    let ens = &bundle.ensemble;
    let rows = ens.accepted.iter().enumerate().map(|(i, c)| {
        let idx = ens.accepted_indices[i];
        let mut row = vec![i.to_string(), idx.to_string(), ens.log_phi[idx].to_string()];
        row.extend(pairs.iter().map(|&(j, k)| c.get(j, k).to_string()));
        row
    });
    w.write(SAMPLES, &csv_bytes(&header, rows))?;

    let band = &bundle.band;
    let header: Vec<String> = ["variable", "t", "lower", "mean", "upper"].iter().map(|s| s.to_string()).collect();
    let rows = (0..band.dim).flat_map(|j| {
        (0..band.len()).map(move |t| {
            let i = j * band.len() + t;
            vec![
                report.variables[j].clone(),
                band.times[t].to_string(),
                band.lower[i].to_string(),
                band.mean[i].to_string(),
                band.upper[i].to_string(),
            ]
        })
    });
    w.write(BAND, &csv_bytes(&header, rows))?;

    for &(j, k) in &pairs {
        let mut text = String::new();
        for c in &ens.accepted {
            text.push_str(&c.get(j, k).to_string());
            text.push('\n');
        }
        w.write(&coefficient_file_name(&report.variables[j], &report.terms[k]), text.as_bytes())?;
    }
    w.finish()
}

pub fn save_baseline(report: &BaselineOnly, dir: &Path) -> Result<Manifest> {
    let mut w = Writer::new(dir)?;
    w.json(SUMMARY, report)?;
    w.finish()
}

/// Re-hash every manifest entry; returns the files whose content changed.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.clone(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let mut bad = Vec::new();
    for entry in manifest.files {
        let p = dir.join(&entry.file);
        let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        if sha256_hex(&bytes) != entry.sha256 || bytes.len() as u64 != entry.bytes {
            bad.push(entry.file);
        }
    }
    Ok(bad)
}

/// The parts of any result directory that `compare` needs.
#[derive(Debug, Clone, Deserialize)]
struct Estimates {
    kind: String,
    variables: Vec<String>,
    terms: Vec<String>,
    estimate: Vec<Vec<f64>>,
    truth: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub variable: String,
    pub term: String,
    pub a: f64,
    pub b: f64,
    pub truth: Option<f64>,
    /// Marginal KL from A's posterior samples to B's, when both have them.
    pub kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub kind_a: String,
    pub kind_b: String,
    pub rmse_between: f64,
    pub rmse_a_truth: Option<f64>,
    pub rmse_b_truth: Option<f64>,
    pub mean_kl: Option<f64>,
    pub rows: Vec<ComparisonRow>,
}

fn load_estimates(dir: &Path) -> Result<Estimates> {
    let path = dir.join(SUMMARY);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse { path, line: e.line() as u64, message: e.to_string() })
}

fn load_samples(dir: &Path) -> Result<Option<Vec<Vec<f64>>>> {
    let path = dir.join(SAMPLES);
    if !path.exists() {
        return Ok(None);
    }
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| CliError::Parse { path: path.clone(), line: 1, message: e.to_string() })?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Parse {
            path: path.clone(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .skip(3)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::Parse { path: path.clone(), line, message: e.to_string() })?;
        rows.push(row);
    }
    Ok(Some(rows))
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Coefficient-by-coefficient comparison of two result directories.
pub fn compare_dirs(a: &Path, b: &Path) -> Result<Comparison> {
    let (ea, eb) = (load_estimates(a)?, load_estimates(b)?);
    if ea.variables != eb.variables || ea.terms != eb.terms {
        return Err(CliError::Config("result directories use different variables or term libraries".into()));
    }
    let (fa, fb) = (ea.estimate.concat(), eb.estimate.concat());
    let truth = ea.truth.clone().or_else(|| eb.truth.clone()).map(|t| t.concat());
    let kls = match (load_samples(a)?, load_samples(b)?) {
        (Some(sa), Some(sb)) if !sa.is_empty() && !sb.is_empty() => Some(
            (0..fa.len())
                .map(|c| {
                    let p: Vec<Vec<f64>> = sa.iter().map(|r| vec![r[c]]).collect();
                    let q: Vec<Vec<f64>> = sb.iter().map(|r| vec![r[c]]).collect();
                    estimate_kl(&p, &q).map_err(CliError::stage("compare"))
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };
    let m = ea.terms.len();
    let rows = (0..fa.len())
        .map(|i| ComparisonRow {
            variable: ea.variables[i / m].clone(),
            term: ea.terms[i % m].clone(),
            a: fa[i],
            b: fb[i],
            truth: truth.as_ref().map(|t| t[i]),
            kl: kls.as_ref().map(|k| k[i]),
        })
        .collect();
    Ok(Comparison {
        a: a.display().to_string(),
        b: b.display().to_string(),
        kind_a: ea.kind,
        kind_b: eb.kind,
        rmse_between: rmse(&fa, &fb),
        rmse_a_truth: ea.truth.map(|t| rmse(&fa, &t.concat())),
        rmse_b_truth: eb.truth.map(|t| rmse(&fb, &t.concat())),
        mean_kl: kls.map(|k| k.iter().sum::<f64>() / k.len() as f64),
        rows,
    })
}

impl Comparison {
    /// Plain-text table for the terminal.
    pub fn table(&self) -> String {
        let mut out = format!("{:<6} {:<10} {:>12} {:>12} {:>12} {:>10}\n", "var", "term", "A", "B", "truth", "KL(A|B)");
        let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<6} {:<10} {:>12.5} {:>12.5} {:>12} {:>10}\n",
                r.variable,
                r.term,
                r.a,
                r.b,
                opt(r.truth, 5),
                opt(r.kl, 4)
            ));
        }
        out.push_str(&format!("RMSE(A, B) = {:.6}\n", self.rmse_between));
        if let Some(v) = self.rmse_a_truth {
            out.push_str(&format!("RMSE(A, truth) = {v:.6}\n"));
        }
        if let Some(v) = self.rmse_b_truth {
            out.push_str(&format!("RMSE(B, truth) = {v:.6}\n"));
        }
        if let Some(v) = self.mean_kl {
            out.push_str(&format!("mean marginal KL(A | B) = {v:.6}\n"));
        }
        out
    }
}

pub fn save_comparison(cmp: &Comparison, dir: &Path) -> Result<Manifest> {
    let mut w = Writer::new(dir)?;
    w.json("comparison.json", cmp)?;
    w.finish()
}
