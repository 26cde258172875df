//! Tabular samples: the observation model W_i = (Y_i, X_i) or (Y_i, D_i, X_i).
//!
//! Datasets are immutable after construction and safe to share read-only
//! across parallel workers. Missing data is rejected outright, never imputed.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mat::Matrix;

/// How first-step learners treat the outcome scale.
///
/// `LogExp` fits the learner on ln Y and exponentiates predictions back to
/// level scale; estimators always see level-scale Y. Requires Y > 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum OutcomeTransform {
    #[default]
    None,
    LogExp,
}

/// Per-column kind tag for the covariate matrix.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ColKind {
    Continuous,
    /// Integer codes 0..levels.
    Categorical { levels: usize },
    /// 0/1 indicator produced by dummy expansion of a CSV string column.
    Dummy { source: String, level: String },
}

impl ColKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, ColKind::Categorical { .. })
    }
}

/// A validated sample: outcome vector, covariate matrix, optional binary
/// treatment, and per-column metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<f64>,
    x: Matrix,
    d: Option<Vec<u8>>,
    col_meta: Vec<ColKind>,
    y_name: String,
    d_name: Option<String>,
    x_names: Vec<String>,
}

impl Dataset {
    /// Builds and validates: all cells finite, n >= 2, d in {0,1}, consistent
    /// column counts, categorical codes integral and within range.
    pub fn new(
        y: Vec<f64>,
        x: Matrix,
        d: Option<Vec<u8>>,
        col_meta: Vec<ColKind>,
    ) -> Result<Self> {
        let names = (0..x.ncols()).map(|j| format!("x{}", j + 1)).collect();
        Dataset::with_names(y, x, d, col_meta, "y".to_string(), None, names)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_names(
        y: Vec<f64>,
        x: Matrix,
        d: Option<Vec<u8>>,
        col_meta: Vec<ColKind>,
        y_name: String,
        d_name: Option<String>,
        x_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::data(format!("need at least 2 observations, got {n}")));
        }
        if x.nrows() != n {
            return Err(Error::data(format!(
                "outcome has {n} rows but covariates have {}",
                x.nrows()
            )));
        }
        if col_meta.len() != x.ncols() {
            return Err(Error::data(format!(
                "{} covariate columns but {} column tags",
                x.ncols(),
                col_meta.len()
            )));
        }
        if x_names.len() != x.ncols() {
            return Err(Error::data("covariate name count mismatch"));
        }
        for (i, v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "non-finite outcome at row {} (column '{}')",
                    i + 1,
                    y_name
                )));
            }
        }
        if let Some(d) = &d {
            if d.len() != n {
                return Err(Error::data("treatment vector length mismatch"));
            }
            if let Some(i) = d.iter().position(|&v| v > 1) {
                return Err(Error::data(format!("treatment at row {} is not in {{0,1}}", i + 1)));
            }
        }
        for i in 0..n {
            for (j, kind) in col_meta.iter().enumerate() {
                let v = x.get(i, j);
                if !v.is_finite() {
                    return Err(Error::data(format!(
                        "non-finite covariate at row {}, column '{}'",
                        i + 1,
                        x_names[j]
                    )));
                }
                if let ColKind::Categorical { levels } = kind {
                    if v.fract() != 0.0 || v < 0.0 || v >= *levels as f64 {
                        return Err(Error::data(format!(
                            "categorical code {} at row {}, column '{}' outside 0..{}",
                            v,
                            i + 1,
                            x_names[j],
                            levels
                        )));
                    }
                }
            }
        }
        Ok(Dataset { y, x, d, col_meta, y_name, d_name, x_names })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn d(&self) -> Option<&[u8]> {
        self.d.as_deref()
    }

    pub fn col_meta(&self) -> &[ColKind] {
        &self.col_meta
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn mean_y(&self) -> f64 {
        crate::ustat::kahan_sum(self.y.iter().copied()) / self.n() as f64
    }

    /// Writes the dataset back to CSV with shortest-round-trip float
    /// formatting, so `load_csv . write_csv` is the identity on numeric
    /// content.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))?;
        let mut header = vec![self.y_name.clone()];
        if let Some(dn) = &self.d_name {
            header.push(dn.clone());
        } else if self.d.is_some() {
            header.push("d".to_string());
        }
        header.extend(self.x_names.iter().cloned());
        w.write_record(&header).map_err(|e| Error::data(e.to_string()))?;
        for i in 0..self.n() {
            let mut rec = vec![format!("{}", self.y[i])];
            if let Some(d) = &self.d {
                rec.push(format!("{}", d[i]));
            }
            for j in 0..self.p() {
                rec.push(format!("{}", self.x.get(i, j)));
            }
            w.write_record(&rec).map_err(|e| Error::data(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::data(e.to_string()))?;
        Ok(())
    }
}

/// Passes iff mean(y) > 0 (the Gini denominator); returns warnings for
/// negative outcome entries rather than failing on them.
pub fn validate_for_iop(data: &Dataset) -> Result<Vec<String>> {
    let mean = data.mean_y();
    if mean <= 0.0 {
        return Err(Error::data(format!(
            "Gini denominator nonpositive: mean outcome {mean} <= 0"
        )));
    }
    let negatives = data.y().iter().filter(|v| **v < 0.0).count();
    let mut warnings = Vec::new();
    if negatives > 0 {
        warnings.push(format!(
            "{negatives} negative outcome value(s); the Gini ratio stays defined because mean(y) > 0"
        ));
    }
    Ok(warnings)
}

fn is_missing(tok: &str) -> bool {
    let t = tok.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("null")
}

fn parse_cell(tok: &str, row: usize, col: &str) -> Result<f64> {
    if is_missing(tok) {
        return Err(Error::data(format!("missing value at row {row}, column '{col}'")));
    }
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| Error::data(format!("cannot parse '{tok}' at row {row}, column '{col}'")))?;
    if !v.is_finite() {
        return Err(Error::data(format!("non-finite value at row {row}, column '{col}'")));
    }
    Ok(v)
}

/// Loads a CSV file (comma-separated, UTF-8, header row, '.' decimal point).
///
/// String covariate columns are auto-detected and expanded to reference-coded
/// dummies (first level in sorted order dropped). Columns named in
/// `categorical_cols` are kept as integer codes tagged `Categorical`, so
/// generated samples survive a CSV round trip.
pub fn load_csv(
    path: &Path,
    outcome_col: &str,
    treatment_col: Option<&str>,
    covariate_cols: &[String],
    categorical_cols: &[String],
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::config(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::data(format!("bad header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::config(format!("column '{name}' not found in header")))
    };

    let y_idx = col_index(outcome_col)?;
    let d_idx = treatment_col.map(col_index).transpose()?;
    if covariate_cols.is_empty() {
        return Err(Error::config("no covariate columns named"));
    }
    let x_idx: Vec<usize> = covariate_cols
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<_>>()?;
    for c in categorical_cols {
        if !covariate_cols.contains(c) {
            return Err(Error::config(format!(
                "categorical column '{c}' is not among the covariates"
            )));
        }
    }

    let mut raw: Vec<Vec<String>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(format!("row {}: {e}", r + 2)))?;
        raw.push(rec.iter().map(|s| s.to_string()).collect());
    }
    let n = raw.len();
    if n < 2 {
        return Err(Error::data(format!("need at least 2 observations, got {n}")));
    }

    let mut y = Vec::with_capacity(n);
    for (r, rec) in raw.iter().enumerate() {
        y.push(parse_cell(&rec[y_idx], r + 1, outcome_col)?);
    }
    let d = match d_idx {
        None => None,
        Some(di) => {
            let mut d = Vec::with_capacity(n);
            let name = treatment_col.unwrap();
            for (r, rec) in raw.iter().enumerate() {
                let v = parse_cell(&rec[di], r + 1, name)?;
                if v != 0.0 && v != 1.0 {
                    return Err(Error::data(format!(
                        "treatment '{name}' at row {} must be 0 or 1, got {v}",
                        r + 1
                    )));
                }
                d.push(v as u8);
            }
            Some(d)
        }
    };

    // one source column -> one or more output columns
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut meta: Vec<ColKind> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (&ci, cname) in x_idx.iter().zip(covariate_cols) {
        for (r, rec) in raw.iter().enumerate() {
            if is_missing(&rec[ci]) {
                return Err(Error::data(format!(
                    "missing value at row {}, column '{cname}'",
                    r + 1
                )));
            }
        }
        let numeric: Option<Vec<f64>> = raw
            .iter()
            .map(|rec| rec[ci].trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        if categorical_cols.contains(cname) {
            let vals = numeric.ok_or_else(|| {
                Error::data(format!("categorical column '{cname}' must hold integer codes"))
            })?;
            let max = vals.iter().fold(0.0f64, |a, &b| a.max(b));
            let levels = max as usize + 1;
            cols.push(vals);
            meta.push(ColKind::Categorical { levels });
            names.push(cname.clone());
        } else if let Some(vals) = numeric {
            cols.push(vals);
            meta.push(ColKind::Continuous);
            names.push(cname.clone());
        } else {
            // string column: reference-coded dummy expansion
            let levels: BTreeSet<String> =
                raw.iter().map(|rec| rec[ci].trim().to_string()).collect();
            let levels: Vec<String> = levels.into_iter().collect();
            for level in levels.iter().skip(1) {
                let col: Vec<f64> = raw
                    .iter()
                    .map(|rec| if rec[ci].trim() == level { 1.0 } else { 0.0 })
                    .collect();
                cols.push(col);
                meta.push(ColKind::Dummy { source: cname.clone(), level: level.clone() });
                names.push(format!("{cname}={level}"));
            }
        }
    }

    let p = cols.len();
    let mut x = Matrix::zeros(n, p);
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            x.set(i, j, *v);
        }
    }
    Dataset::with_names(y, x, d, meta, outcome_col.to_string(), treatment_col.map(String::from), names)
}
