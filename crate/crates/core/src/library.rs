//! Candidate term libraries and their evaluation.

use std::fmt;

use crate::error::{contract, Result};

/// One candidate column of the library.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TermDescriptor {
    Constant,
    /// Product of state variables raised to the given exponents (length `p`).
    Monomial(Vec<u32>),
    Sine(usize),
    Cosine(usize),
}

impl TermDescriptor {
    fn eval(&self, state: &[f64]) -> f64 {
        match self {
            TermDescriptor::Constant => 1.0,
            TermDescriptor::Monomial(exps) => exps
                .iter()
                .zip(state)
                .filter(|(e, _)| **e > 0)
                .map(|(&e, &x)| x.powi(e as i32))
                .product(),
            TermDescriptor::Sine(i) => state[*i].sin(),
            TermDescriptor::Cosine(i) => state[*i].cos(),
        }
    }

    fn label(&self, names: &[String]) -> String {
        match self {
            TermDescriptor::Constant => "1".to_string(),
            TermDescriptor::Monomial(exps) => {
                let parts: Vec<String> = exps
                    .iter()
                    .zip(names)
                    .filter(|(e, _)| **e > 0)
                    .map(|(&e, n)| if e == 1 { n.clone() } else { format!("{n}^{e}") })
                    .collect();
                if parts.is_empty() {
                    "1".to_string()
                } else {
                    parts.join("*")
                }
            }
            TermDescriptor::Sine(i) => format!("sin({})", names[*i]),
            TermDescriptor::Cosine(i) => format!("cos({})", names[*i]),
        }
    }
}

/// An ordered list of `m` distinct candidate terms over `p` state variables.
#[derive(Debug, Clone, PartialEq)]
pub struct TermLibrary {
    terms: Vec<TermDescriptor>,
    dim: usize,
    names: Vec<String>,
}

impl TermLibrary {
    /// Build a library from an explicit term list.
    pub fn new(dim: usize, terms: Vec<TermDescriptor>) -> Result<Self> {
        if dim == 0 {
            return Err(contract("library needs at least one state variable"));
        }
        if terms.is_empty() {
            return Err(contract("library needs at least one term"));
        }
        for (k, t) in terms.iter().enumerate() {
            match t {
                TermDescriptor::Monomial(e) if e.len() != dim => {
                    return Err(contract(format!(
                        "term {k}: exponent vector has length {}, expected {dim}",
                        e.len()
                    )))
                }
                TermDescriptor::Sine(i) | TermDescriptor::Cosine(i) if *i >= dim => {
                    return Err(contract(format!("term {k}: variable index {i} out of range")))
                }
                _ => {}
            }
            if terms[..k].contains(t) {
                return Err(contract(format!("term {k} duplicates an earlier term")));
            }
        }
        Ok(Self {
            terms,
            dim,
            names: default_names(dim),
        })
    }

    /// Replace the display names of the state variables.
    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim {
            return Err(contract("one name per state variable is required"));
        }
        self.names = names;
        Ok(self)
    }

    pub fn terms(&self) -> &[TermDescriptor] {
        &self.terms
    }

    /// State dimension `p`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of terms `m`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn variable_names(&self) -> &[String] {
        &self.names
    }

    pub fn term_labels(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.label(&self.names)).collect()
    }

    /// Evaluate every term at `state`.
    pub fn eval(&self, state: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(state, &mut out);
        out
    }

    /// Evaluate every term at `state`, writing into `out` (length `m`).
    pub fn eval_into(&self, state: &[f64], out: &mut [f64]) {
        debug_assert_eq!(state.len(), self.dim);
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(state);
        }
    }
}

fn default_names(dim: usize) -> Vec<String> {
    let fixed: &[&str] = match dim {
        1 => &["x"],
        2 => &["u", "v"],
        3 => &["x", "y", "z"],
        _ => &[],
    };
    if fixed.is_empty() {
        (1..=dim).map(|i| format!("x{i}")).collect()
    } else {
        fixed.iter().map(|s| s.to_string()).collect()
    }
}

impl fmt::Display for TermLibrary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.term_labels().join(", "))
    }
}

/// All monomials of total degree `≤ poly_degree` in graded-lexicographic
/// order (constant first, then `x1 > x2 > ...` within each degree), followed
/// by `sin` then `cos` of every variable when `include_trig` is set.
pub fn build_library(dim: usize, poly_degree: u32, include_trig: bool) -> Result<TermLibrary> {
    if dim == 0 {
        return Err(contract("library needs at least one state variable"));
    }
    let mut terms = Vec::new();
    for degree in 0..=poly_degree {
        let mut exps = Vec::new();
        compositions(dim, degree, &mut vec![0; dim], 0, &mut exps);
        terms.extend(exps.into_iter().map(|e| {
            if degree == 0 {
                TermDescriptor::Constant
            } else {
                TermDescriptor::Monomial(e)
            }
        }));
    }
    if include_trig {
        terms.extend((0..dim).map(TermDescriptor::Sine));
        terms.extend((0..dim).map(TermDescriptor::Cosine));
    }
    TermLibrary::new(dim, terms)
}

// Exponent vectors summing to `remaining`, emitted in descending lexicographic order.
fn compositions(dim: usize, remaining: u32, cur: &mut Vec<u32>, pos: usize, out: &mut Vec<Vec<u32>>) {
    if pos == dim - 1 {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e;
        compositions(dim, remaining - e, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binomial(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
    }

    // Brute force: every exponent vector in {0..=d}^p with sum <= d.
    fn brute_force_count(p: usize, d: u32) -> usize {
        let mut count = 0;
        let total = (d as usize + 1).pow(p as u32);
        for code in 0..total {
            let mut c = code;
            let mut s = 0;
            for _ in 0..p {
                s += (c % (d as usize + 1)) as u32;
                c /= d as usize + 1;
            }
            if s <= d {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn two_variable_quadratic_order() {
        let lib = build_library(2, 2, false).unwrap();
        assert_eq!(lib.term_labels(), vec!["1", "u", "v", "u^2", "u*v", "v^2"]);
    }

    #[test]
    fn constant_only() {
        let lib = build_library(1, 0, false).unwrap();
        assert_eq!(lib.terms(), &[TermDescriptor::Constant]);
    }

    #[test]
    fn three_variable_quadratic_has_ten_terms() {
        assert_eq!(brute_force_count(3, 2), 10);
        assert_eq!(build_library(3, 2, false).unwrap().len(), 10);
    }

    #[test]
    fn term_counts_match_enumeration() {
        for p in 1..=4 {
            for d in 0..=3 {
                let lib = build_library(p, d, false).unwrap();
                assert_eq!(lib.len(), brute_force_count(p, d), "p={p} d={d}");
                assert_eq!(lib.len() as u64, binomial((p as u64) + d as u64, d as u64));
            }
        }
    }

    #[test]
    fn trig_terms_appended() {
        let lib = build_library(1, 1, true).unwrap();
        assert_eq!(lib.term_labels(), vec!["1", "x", "sin(x)", "cos(x)"]);
        let v = lib.eval(&[0.0]);
        assert_eq!(v, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn eval_hand_cases() {
        let lib = TermLibrary::new(
            2,
            vec![
                TermDescriptor::Constant,
                TermDescriptor::Monomial(vec![1, 0]),
                TermDescriptor::Monomial(vec![0, 1]),
                TermDescriptor::Monomial(vec![1, 1]),
            ],
        )
        .unwrap();
        assert_eq!(lib.eval(&[2.0, 3.0]), vec![1.0, 2.0, 3.0, 6.0]);

        let lib = TermLibrary::new(1, vec![TermDescriptor::Constant, TermDescriptor::Monomial(vec![1]), TermDescriptor::Sine(0)]).unwrap();
        assert_eq!(lib.eval(&[0.0]), vec![1.0, 0.0, 0.0]);

        let lib = build_library(2, 2, false).unwrap();
        assert!(lib.eval(&[1.0, 1.0]).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_invalid_terms() {
        assert!(TermLibrary::new(2, vec![TermDescriptor::Monomial(vec![1])]).is_err());
        assert!(TermLibrary::new(2, vec![TermDescriptor::Sine(2)]).is_err());
        assert!(TermLibrary::new(1, vec![TermDescriptor::Constant, TermDescriptor::Constant]).is_err());
        assert!(TermLibrary::new(1, vec![]).is_err());
    }

    proptest! {
        #[test]
        fn monomials_are_multiplicative(
            state in proptest::collection::vec(-3.0f64..3.0, 3),
            a in proptest::collection::vec(0u32..3, 3),
            b in proptest::collection::vec(0u32..3, 3),
        ) {
            let sum: Vec<u32> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let f = |e: &Vec<u32>| TermDescriptor::Monomial(e.clone()).eval(&state);
            let lhs = f(&sum);
            let rhs = f(&a) * f(&b);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }
}
