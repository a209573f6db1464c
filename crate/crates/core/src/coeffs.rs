use crate::error::{contract, Result};
use crate::library::TermLibrary;

/// Dense `p × m` coefficient matrix; row `j` holds the coefficients of the
/// equation for state variable `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    /// Row-major construction.
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(contract(format!(
                "expected {} coefficients for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(contract("coefficients must be finite"));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[j * self.cols + k]
    }

    pub fn set(&mut self, j: usize, k: usize, value: f64) {
        self.entries[j * self.cols + k] = value;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.entries[j * self.cols..(j + 1) * self.cols]
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|v| **v != 0.0).count()
    }

    /// Fails unless the matrix is shaped `(library.dim(), library.len())`.
    pub fn check_library(&self, library: &TermLibrary) -> Result<()> {
        if self.shape() != (library.dim(), library.len()) {
            return Err(contract(format!(
                "coefficient matrix is {}x{} but the library needs {}x{}",
                self.rows,
                self.cols,
                library.dim(),
                library.len()
            )));
        }
        Ok(())
    }

    /// Human-readable equations, one per state variable, skipping zero terms.
    pub fn equations(&self, library: &TermLibrary) -> Vec<String> {
        let labels = library.term_labels();
        let names = library.variable_names();
        (0..self.rows)
            .map(|j| {
                let mut rhs = String::new();
                for (k, label) in labels.iter().enumerate() {
                    let c = self.get(j, k);
                    if c == 0.0 {
                        continue;
                    }
                    let mag = format_coefficient(c.abs());
                    let term = if label == "1" { mag } else { format!("{mag}*{label}") };
                    if rhs.is_empty() {
                        rhs = if c < 0.0 { format!("-{term}") } else { term };
                    } else {
                        rhs.push_str(if c < 0.0 { " - " } else { " + " });
                        rhs.push_str(&term);
                    }
                }
                if rhs.is_empty() {
                    rhs.push('0');
                }
                format!("d{}/dt = {rhs}", names[j])
            })
            .collect()
    }
}

fn format_coefficient(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}
