//! Design-matrix construction for the linear learners.
//!
//! Continuous and pre-expanded dummy columns pass through unchanged.
//! Integer-coded categorical columns expand to reference-coded dummies
//! (level 0 dropped) plus all cross-column interaction products, i.e. the
//! saturated basis: for three 8-level covariates that is 21 + 147 + 343
//! terms. Indicator columns are stored as sorted row-index lists so that
//! coordinate descent touches only the nonzero rows.

use crate::data::ColKind;
use crate::error::{Error, Result};
use crate::mat::Matrix;

const MAX_TERMS: usize = 200_000;

/// One column of the expanded design.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Term {
    /// Raw column passthrough.
    Col(usize),
    /// Product of level indicators 1(x[col] == level); a single entry is a
    /// main-effect dummy.
    Interaction(Vec<(usize, u32)>),
}

impl Term {
    #[inline]
    pub fn eval(&self, row: &[f64]) -> f64 {
        match self {
            Term::Col(j) => row[*j],
            Term::Interaction(parts) => {
                for (j, level) in parts {
                    if row[*j] != *level as f64 {
                        return 0.0;
                    }
                }
                1.0
            }
        }
    }
}

/// Builds the expanded term list for a covariate matrix.
pub fn build_terms(kinds: &[ColKind]) -> Result<Vec<Term>> {
    let mut terms = Vec::new();
    let mut cats: Vec<(usize, usize)> = Vec::new();
    for (j, kind) in kinds.iter().enumerate() {
        match kind {
            ColKind::Continuous | ColKind::Dummy { .. } => terms.push(Term::Col(j)),
            ColKind::Categorical { levels } => cats.push((j, *levels)),
        }
    }
    // interaction orders 1..=#categorical columns, subsets in lexicographic
    // order within each order, level tuples row-major
    if cats.len() > 16 {
        return Err(Error::config(format!(
            "{} categorical columns would need 2^{} interaction groups; pre-encode as dummies instead",
            cats.len(),
            cats.len()
        )));
    }
    let m = cats.len();
    let mut subsets: Vec<Vec<usize>> = (1u32..(1 << m)).map(|bits| {
        (0..m).filter(|&s| (bits >> s) & 1 == 1).collect()
    }).collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    for subset in subsets {
        let cols: Vec<(usize, usize)> = subset.iter().map(|&s| cats[s]).collect();
        let order = cols.len();
        let mut levels: Vec<u32> = vec![1; order];
        'levels: loop {
            terms.push(Term::Interaction(
                cols.iter().zip(&levels).map(|(&(j, _), &l)| (j, l)).collect(),
            ));
            if terms.len() > MAX_TERMS {
                return Err(Error::config(format!(
                    "design expansion exceeds {MAX_TERMS} terms; reduce categorical cardinality"
                )));
            }
            for d in (0..order).rev() {
                levels[d] += 1;
                if (levels[d] as usize) < cols[d].1 {
                    continue 'levels;
                }
                levels[d] = 1;
            }
            break;
        }
    }
    Ok(terms)
}

/// A term realized on a sample.
#[derive(Debug, Clone)]
pub enum DesignCol {
    Dense(Vec<f64>),
    /// Sorted row indices where the value is exactly 1.
    Indicator(Vec<u32>),
}

impl DesignCol {
    pub fn dot(&self, v: &[f64]) -> f64 {
        match self {
            DesignCol::Dense(x) => x.iter().zip(v).map(|(a, b)| a * b).sum(),
            DesignCol::Indicator(idx) => idx.iter().map(|&i| v[i as usize]).sum(),
        }
    }

    pub fn sum(&self) -> f64 {
        match self {
            DesignCol::Dense(x) => x.iter().sum(),
            DesignCol::Indicator(idx) => idx.len() as f64,
        }
    }

    pub fn sum_sq(&self) -> f64 {
        match self {
            DesignCol::Dense(x) => x.iter().map(|a| a * a).sum(),
            DesignCol::Indicator(idx) => idx.len() as f64,
        }
    }
}

/// Realized design: columns plus standardization statistics.
#[derive(Debug, Clone)]
pub struct Design {
    pub terms: Vec<Term>,
    pub cols: Vec<DesignCol>,
    /// (mean, scale) per column; scale is the population standard deviation,
    /// or 0 for constant columns (excluded from fitting).
    pub stats: Vec<(f64, f64)>,
    pub n: usize,
}

impl Design {
    pub fn build(x: &Matrix, kinds: &[ColKind]) -> Result<Design> {
        let terms = build_terms(kinds)?;
        Ok(Design::realize(terms, x))
    }

    pub fn realize(terms: Vec<Term>, x: &Matrix) -> Design {
        let n = x.nrows();
        let mut cols = Vec::with_capacity(terms.len());
        for term in &terms {
            match term {
                Term::Col(j) => {
                    let col = x.col(*j);
                    if col.iter().all(|&v| v == 0.0 || v == 1.0) {
                        let idx: Vec<u32> = col
                            .iter()
                            .enumerate()
                            .filter(|(_, &v)| v == 1.0)
                            .map(|(i, _)| i as u32)
                            .collect();
                        cols.push(DesignCol::Indicator(idx));
                    } else {
                        cols.push(DesignCol::Dense(col));
                    }
                }
                Term::Interaction(parts) => {
                    let mut idx = Vec::new();
                    'rows: for i in 0..n {
                        for (j, level) in parts {
                            if x.get(i, *j) != *level as f64 {
                                continue 'rows;
                            }
                        }
                        idx.push(i as u32);
                    }
                    cols.push(DesignCol::Indicator(idx));
                }
            }
        }
        let stats = cols
            .iter()
            .map(|c| {
                let m = c.sum() / n as f64;
                let var = (c.sum_sq() / n as f64 - m * m).max(0.0);
                (m, var.sqrt())
            })
            .collect();
        Design { terms, cols, stats, n }
    }

    /// Number of columns with positive variance.
    pub fn active(&self) -> Vec<usize> {
        self.stats
            .iter()
            .enumerate()
            .filter(|(_, (_, s))| *s > 1e-12)
            .map(|(j, _)| j)
            .collect()
    }
}
