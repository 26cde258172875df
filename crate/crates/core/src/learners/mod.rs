//! Native first-step learners producing fitted values γ̂(·): ridge, lasso and
//! random forest, plus a fixed-constant learner for known nuisances.
//!
//! Penalized models standardize columns internally (mean 0, variance 1,
//! unpenalized intercept) and report coefficients on the original scale.
//! Cross-validated tuning scores out-of-fold RMSE on the transform scale
//! with ties broken toward larger penalties.

mod design;
mod forest;
mod linear;

pub use design::{Design, Term};
pub use forest::{CatSplit, ForestModel, RfParams};
pub use linear::{kkt_violation, lambda_max, LinearKind, LinearModel, KKT_TOL};

use serde::{Deserialize, Serialize};

use crate::data::{ColKind, OutcomeTransform};
use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearnerKind {
    Ridge,
    Lasso,
    RandomForest,
    /// Constant prediction; used to pass known nuisances such as a known
    /// propensity score.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Penalty {
    Fixed(f64),
    /// Cross-validated over `grid`; None uses 100 log-spaced values on
    /// [1e-4 λ_max, λ_max] with λ_max = max_j |x̃_j'y| / n.
    Cv { grid: Option<Vec<f64>>, folds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub penalty: Penalty,
    pub rf: RfParams,
    pub transform: OutcomeTransform,
}

impl LearnerSpec {
    pub fn ridge(lambda: f64) -> Self {
        LearnerSpec {
            kind: LearnerKind::Ridge,
            penalty: Penalty::Fixed(lambda),
            rf: RfParams::default(),
            transform: OutcomeTransform::None,
        }
    }

    pub fn lasso(lambda: f64) -> Self {
        LearnerSpec { kind: LearnerKind::Lasso, ..LearnerSpec::ridge(lambda) }
    }

    pub fn ridge_cv(folds: usize) -> Self {
        LearnerSpec {
            kind: LearnerKind::Ridge,
            penalty: Penalty::Cv { grid: None, folds },
            rf: RfParams::default(),
            transform: OutcomeTransform::None,
        }
    }

    pub fn lasso_cv(folds: usize) -> Self {
        LearnerSpec { kind: LearnerKind::Lasso, ..LearnerSpec::ridge_cv(folds) }
    }

    pub fn random_forest(seed: u64) -> Self {
        LearnerSpec {
            kind: LearnerKind::RandomForest,
            penalty: Penalty::Fixed(0.0),
            rf: RfParams { seed, ..Default::default() },
            transform: OutcomeTransform::None,
        }
    }

    pub fn fixed(value: f64) -> Self {
        LearnerSpec {
            kind: LearnerKind::Fixed(value),
            penalty: Penalty::Fixed(0.0),
            rf: RfParams::default(),
            transform: OutcomeTransform::None,
        }
    }

    pub fn with_transform(mut self, transform: OutcomeTransform) -> Self {
        self.transform = transform;
        self
    }

    pub fn with_grid(mut self, grid: Vec<f64>, folds: usize) -> Self {
        self.penalty = Penalty::Cv { grid: Some(grid), folds };
        self
    }

    pub fn with_rf(mut self, rf: RfParams) -> Self {
        self.rf = rf;
        self
    }

    /// Reseeds stochastic learners; a no-op for deterministic ones.
    pub fn reseeded(mut self, seed: u64) -> Self {
        self.rf.seed = seed;
        self
    }

    fn validate(&self, p: usize) -> Result<()> {
        match &self.penalty {
            Penalty::Fixed(l) => {
                if *l < 0.0 || !l.is_finite() {
                    return Err(Error::config(format!("penalty must be finite and >= 0, got {l}")));
                }
            }
            Penalty::Cv { grid, folds } => {
                if *folds < 2 {
                    return Err(Error::config("CV needs at least 2 folds"));
                }
                if let Some(g) = grid {
                    if g.is_empty() {
                        return Err(Error::config("CV grid must be non-empty"));
                    }
                    if g.iter().any(|l| !l.is_finite() || *l <= 0.0) {
                        return Err(Error::config("CV grid values must be strictly positive"));
                    }
                }
            }
        }
        if self.kind == LearnerKind::RandomForest {
            if self.rf.n_trees == 0 {
                return Err(Error::config("n_trees must be >= 1"));
            }
            if let Some(m) = self.rf.mtry {
                if m == 0 || m > p {
                    return Err(Error::config(format!("mtry = {m} outside 1..={p}")));
                }
            }
        }
        Ok(())
    }

    /// Short JSON summary used inside estimate reports.
    pub fn summary(&self) -> serde_json::Value {
        match &self.kind {
            LearnerKind::Ridge | LearnerKind::Lasso => serde_json::json!({
                "kind": if self.kind == LearnerKind::Ridge { "ridge" } else { "lasso" },
                "penalty": match &self.penalty {
                    Penalty::Fixed(l) => serde_json::json!({"fixed": l}),
                    Penalty::Cv { grid, folds } => serde_json::json!({
                        "cv_folds": folds,
                        "grid": grid.as_ref().map_or("default".to_string(), |g| format!("{} values", g.len())),
                    }),
                },
                "log_outcome": self.transform == OutcomeTransform::LogExp,
            }),
            LearnerKind::RandomForest => serde_json::json!({
                "kind": "random_forest",
                "n_trees": self.rf.n_trees,
                "mtry": self.rf.mtry,
                "min_node": self.rf.min_node,
                "seed": self.rf.seed,
                "log_outcome": self.transform == OutcomeTransform::LogExp,
            }),
            LearnerKind::Fixed(v) => serde_json::json!({"kind": "fixed", "value": v}),
        }
    }
}

/// Cross-validation report: grid in descending order, per-λ out-of-fold RMSE
/// on the transform scale, chosen λ (ties toward larger λ).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub grid: Vec<f64>,
    pub rmse: Vec<f64>,
    pub chosen: f64,
}

/// A trained first-step learner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FittedModel {
    Linear { model: LinearModel, cv: Option<CvReport> },
    Forest(ForestModel),
    Fixed { value: f64 },
}

impl FittedModel {
    pub fn cv_report(&self) -> Option<&CvReport> {
        match self {
            FittedModel::Linear { cv, .. } => cv.as_ref(),
            _ => None,
        }
    }

    fn p_raw(&self) -> Option<usize> {
        match self {
            FittedModel::Linear { model, .. } => Some(model.p_raw),
            FittedModel::Forest(f) => Some(f.p_raw),
            FittedModel::Fixed { .. } => None,
        }
    }

    fn transform(&self) -> OutcomeTransform {
        match self {
            FittedModel::Linear { model, .. } => model.transform,
            FittedModel::Forest(f) => f.transform,
            FittedModel::Fixed { .. } => OutcomeTransform::None,
        }
    }

    /// Level-scale prediction for one row.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let raw = match self {
            FittedModel::Linear { model, .. } => model.linear_value(row),
            FittedModel::Forest(f) => f.transform_value(row),
            FittedModel::Fixed { value } => return *value,
        };
        match self.transform() {
            OutcomeTransform::None => raw,
            OutcomeTransform::LogExp => raw.exp(),
        }
    }

    pub fn summary(&self) -> serde_json::Value {
        match self {
            FittedModel::Linear { model, cv } => serde_json::json!({
                "kind": if model.kind == LinearKind::Ridge { "ridge" } else { "lasso" },
                "lambda": model.lambda,
                "chosen_by_cv": cv.is_some(),
                "intercept": model.intercept,
                "nonzero": model.n_nonzero(),
                "coefficients": model.coefs,
            }),
            FittedModel::Forest(f) => serde_json::json!({
                "kind": "random_forest",
                "n_trees": f.n_trees(),
                "min_node": f.params.min_node,
                "seed": f.params.seed,
            }),
            FittedModel::Fixed { value } => serde_json::json!({"kind": "fixed", "value": value}),
        }
    }
}

fn transform_outcome(y: &[f64], transform: OutcomeTransform) -> Result<Vec<f64>> {
    match transform {
        OutcomeTransform::None => Ok(y.to_vec()),
        OutcomeTransform::LogExp => {
            if let Some(i) = y.iter().position(|v| *v <= 0.0) {
                return Err(Error::data(format!(
                    "log-outcome transform requires y > 0; row {} has {}",
                    i + 1,
                    y[i]
                )));
            }
            Ok(y.iter().map(|v| v.ln()).collect())
        }
    }
}

/// Fits a learner. `kinds` tags each covariate column; integer-coded
/// categorical columns expand to the saturated dummy basis for the penalized
/// models and split on level sets inside the forest.
pub fn fit(spec: &LearnerSpec, x: &Matrix, kinds: &[ColKind], y: &[f64]) -> Result<FittedModel> {
    if x.nrows() != y.len() {
        return Err(Error::config(format!(
            "x has {} rows but y has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::data("need at least 2 observations to fit"));
    }
    if kinds.len() != x.ncols() {
        return Err(Error::config("column kind tags do not match the covariate count"));
    }
    spec.validate(x.ncols())?;
    if let LearnerKind::Fixed(v) = spec.kind {
        return Ok(FittedModel::Fixed { value: v });
    }
    let y_t = transform_outcome(y, spec.transform)?;
    match spec.kind {
        LearnerKind::RandomForest => {
            let f = forest::fit_forest(spec.rf, x, kinds, &y_t, spec.transform)?;
            Ok(FittedModel::Forest(f))
        }
        LearnerKind::Ridge | LearnerKind::Lasso => {
            let design = Design::build(x, kinds)?;
            let (lambda, cv) = match &spec.penalty {
                Penalty::Fixed(l) => (*l, None),
                Penalty::Cv { .. } => {
                    let report = cv_tune_design(spec, &design, x, kinds, &y_t)?;
                    let chosen = report.chosen;
                    (chosen, Some(report))
                }
            };
            let model = if spec.kind == LearnerKind::Ridge {
                linear::fit_ridge(&design, &y_t, lambda, spec.transform, x.ncols())?
            } else {
                fit_lasso_path(&design, &y_t, lambda, spec.transform, x.ncols())?
            };
            Ok(FittedModel::Linear { model, cv })
        }
        LearnerKind::Fixed(_) => unreachable!(),
    }
}

/// Cold-start stability: approach the target penalty along a short
/// descending path from λ_max.
fn fit_lasso_path(
    design: &Design,
    y_t: &[f64],
    lambda: f64,
    transform: OutcomeTransform,
    p_raw: usize,
) -> Result<LinearModel> {
    let lmax = linear::lambda_max(design, y_t);
    if lambda >= lmax {
        return linear::fit_lasso(design, y_t, lambda, transform, p_raw);
    }
    let mut state = linear::lasso_init(design, y_t);
    let steps = 12;
    let mut prev = lmax;
    for s in 1..steps {
        let frac = s as f64 / steps as f64;
        let l = lmax * (lambda.max(1e-12) / lmax).powf(frac);
        if l > lambda {
            linear::lasso_descend_from(design, &mut state, l, Some(prev), linear::DescendMode::Path)?;
            prev = l;
        }
    }
    linear::lasso_descend_from(design, &mut state, lambda, Some(prev), linear::DescendMode::Strict)?;
    Ok(linear::lasso_pack(design, y_t, &state, lambda, transform, p_raw))
}

/// Cross-validated penalty tuning. Requires a CV penalty mode and n >= folds.
pub fn cv_tune(spec: &LearnerSpec, x: &Matrix, kinds: &[ColKind], y: &[f64]) -> Result<CvReport> {
    spec.validate(x.ncols())?;
    let y_t = transform_outcome(y, spec.transform)?;
    let design = Design::build(x, kinds)?;
    cv_tune_design(spec, &design, x, kinds, &y_t)
}

fn cv_tune_design(
    spec: &LearnerSpec,
    design: &Design,
    x: &Matrix,
    kinds: &[ColKind],
    y_t: &[f64],
) -> Result<CvReport> {
    let Penalty::Cv { grid, folds } = &spec.penalty else {
        return Err(Error::config("cv_tune requires a CV penalty mode"));
    };
    let n = x.nrows();
    if n < *folds {
        return Err(Error::config(format!("CV needs n >= folds, got n = {n}, folds = {folds}")));
    }
    let mut grid: Vec<f64> = match grid {
        Some(g) => g.clone(),
        None => {
            let lmax = linear::lambda_max(design, y_t).max(1e-12);
            let lmin = lmax * 1e-4;
            (0..100)
                .map(|i| lmax * (lmin / lmax).powf(i as f64 / 99.0))
                .collect()
        }
    };
    grid.sort_by(|a, b| b.total_cmp(a)); // descending for warm starts

    // deterministic internal fold split
    let cv_folds =
        crate::crossfit::make_folds(n, *folds, derive_seed(0x5EED_CF01, n as u64))?;
    let mut sse = vec![0.0f64; grid.len()];
    for f in 0..*folds {
        let test_idx: Vec<usize> = cv_folds.members(f);
        let train_idx: Vec<usize> =
            (0..n).filter(|i| cv_folds.fold_of(*i) != f).collect();
        let x_train = x.select_rows(&train_idx);
        let y_train: Vec<f64> = train_idx.iter().map(|&i| y_t[i]).collect();
        let sub = Design::build(&x_train, kinds)?;
        match spec.kind {
            LearnerKind::Lasso => {
                let mut state = linear::lasso_init(&sub, &y_train);
                let mut prev: Option<f64> = None;
                for (g, &lambda) in grid.iter().enumerate() {
                    linear::lasso_descend_from(&sub, &mut state, lambda, prev, linear::DescendMode::Path)?;
                    prev = Some(lambda);
                    let m = linear::lasso_pack(
                        &sub,
                        &y_train,
                        &state,
                        lambda,
                        spec.transform,
                        x.ncols(),
                    );
                    for &i in &test_idx {
                        let e = y_t[i] - m.linear_value(x.row(i));
                        sse[g] += e * e;
                    }
                }
            }
            LearnerKind::Ridge => {
                for (g, &lambda) in grid.iter().enumerate() {
                    let m = linear::fit_ridge(&sub, &y_train, lambda, spec.transform, x.ncols())?;
                    for &i in &test_idx {
                        let e = y_t[i] - m.linear_value(x.row(i));
                        sse[g] += e * e;
                    }
                }
            }
            _ => return Err(Error::config("cv_tune applies to ridge and lasso")),
        }
    }
    let rmse: Vec<f64> = sse.iter().map(|s| (s / n as f64).sqrt()).collect();
    for r in &rmse {
        if !r.is_finite() {
            return Err(Error::numerical("non-finite CV error"));
        }
    }
    // grid is descending, so scanning with strict < keeps the largest λ on ties
    let mut best = 0usize;
    for (g, r) in rmse.iter().enumerate() {
        if *r < rmse[best] {
            best = g;
        }
    }
    Ok(CvReport { chosen: grid[best], grid, rmse })
}

/// Level-scale predictions; column count must match training.
pub fn predict(model: &FittedModel, x: &Matrix) -> Result<Vec<f64>> {
    if let Some(p) = model.p_raw() {
        if x.ncols() != p {
            return Err(Error::config(format!(
                "prediction matrix has {} columns, model was trained on {p}",
                x.ncols()
            )));
        }
    }
    Ok((0..x.nrows()).map(|i| model.predict_row(x.row(i))).collect())
}

/// Root mean squared error on the level scale.
pub fn rmse(model: &FittedModel, x: &Matrix, y: &[f64]) -> Result<f64> {
    if x.nrows() != y.len() {
        return Err(Error::config("x and y row counts differ"));
    }
    let pred = predict(model, x)?;
    let sse: f64 = pred.iter().zip(y).map(|(p, v)| (p - v) * (p - v)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn continuous(x: &Matrix) -> Vec<ColKind> {
        vec![ColKind::Continuous; x.ncols()]
    }

    #[test]
    fn identity_fit_reproduces_training_values() {
        let x = Matrix::from_rows(vec![vec![1.0], vec![2.0], vec![4.0]]).unwrap();
        let y = vec![1.0, 2.0, 4.0];
        let m = fit(&LearnerSpec::ridge(0.0), &x, &continuous(&x), &y).unwrap();
        let pred = predict(&m, &x).unwrap();
        for (p, v) in pred.iter().zip(&y) {
            assert!((p - v).abs() < 1e-12);
        }
    }

    #[test]
    fn log_exp_round_trip_on_exact_fit() {
        let x = Matrix::from_rows(vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y: Vec<f64> = vec![1.0f64.exp(), 2.0f64.exp(), 3.0f64.exp()];
        let spec = LearnerSpec::ridge(0.0).with_transform(OutcomeTransform::LogExp);
        let m = fit(&spec, &x, &continuous(&x), &y).unwrap();
        let pred = predict(&m, &x).unwrap();
        for (p, v) in pred.iter().zip(&y) {
            assert!((p - v).abs() < 1e-10 * v, "{p} vs {v}");
        }
    }

    #[test]
    fn log_exp_requires_positive_outcome() {
        let x = Matrix::from_rows(vec![vec![1.0], vec![2.0]]).unwrap();
        let spec = LearnerSpec::ridge(1.0).with_transform(OutcomeTransform::LogExp);
        assert!(matches!(
            fit(&spec, &x, &continuous(&x), &[1.0, -1.0]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn fixed_learner_predicts_the_constant() {
        let x = Matrix::from_rows(vec![vec![1.0], vec![2.0]]).unwrap();
        let m = fit(&LearnerSpec::fixed(0.5), &x, &continuous(&x), &[0.0, 1.0]).unwrap();
        assert_eq!(predict(&m, &x).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let x = Matrix::from_rows(vec![vec![1.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let m = fit(&LearnerSpec::ridge(0.1), &x, &continuous(&x), &[1.0, 2.0]).unwrap();
        let bad = Matrix::from_rows(vec![vec![1.0]]).unwrap();
        assert!(matches!(predict(&m, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn cv_singleton_grid_is_chosen() {
        let mut rng = Rng::from_seed(2);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.normal()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + 0.1 * rng.normal()).collect();
        let x = Matrix::from_rows(rows).unwrap();
        let spec = LearnerSpec::lasso(0.0).with_grid(vec![0.1], 5);
        let report = cv_tune(&spec, &x, &continuous(&x), &y).unwrap();
        assert_eq!(report.chosen, 0.1);
    }

    #[test]
    fn cv_prefers_shrinkage_under_pure_noise() {
        // two-point grid {1e-4, 1e4}: the huge penalty wins for most seeds
        let mut wins = 0;
        for seed in 0..40 {
            let mut rng = Rng::from_seed(seed);
            let n = 60;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..8).map(|_| rng.normal()).collect())
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let x = Matrix::from_rows(rows).unwrap();
            let spec = LearnerSpec::lasso(0.0).with_grid(vec![1e-4, 1e4], 5);
            let report = cv_tune(&spec, &x, &continuous(&x), &y).unwrap();
            if report.chosen == 1e4 {
                wins += 1;
            }
        }
        assert!(wins >= 36, "shrinkage won only {wins}/40");
    }

    #[test]
    fn cv_prefers_no_shrinkage_on_exact_linear_signal() {
        let mut rng = Rng::from_seed(11);
        let n = 50;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] - r[1]).collect();
        let x = Matrix::from_rows(rows).unwrap();
        let spec = LearnerSpec::lasso(0.0).with_grid(vec![1e-6, 1e2], 5);
        let report = cv_tune(&spec, &x, &continuous(&x), &y).unwrap();
        assert_eq!(report.chosen, 1e-6);
    }

    #[test]
    fn cv_needs_enough_rows() {
        let x = Matrix::from_rows(vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let spec = LearnerSpec::lasso_cv(10);
        assert!(matches!(
            cv_tune(&spec, &x, &continuous(&x), &[1.0, 2.0, 3.0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rmse_contract() {
        let x = Matrix::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let m = fit(&LearnerSpec::fixed(1.0), &x, &continuous(&x), &[0.0, 2.0]).unwrap();
        assert_eq!(rmse(&m, &x, &[0.0, 2.0]).unwrap(), 1.0);
        let exact = fit(&LearnerSpec::ridge(0.0), &x, &continuous(&x), &[0.0, 2.0]).unwrap();
        assert!(rmse(&exact, &x, &[0.0, 2.0]).unwrap() < 1e-12);
    }

    #[test]
    fn lasso_kkt_on_random_problems() {
        for seed in 0..50u64 {
            let mut rng = Rng::from_seed(seed);
            let n = 30 + (seed as usize % 40);
            let p = 2 + (seed as usize % 6);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..p).map(|_| rng.normal()).collect())
                .collect();
            let beta: Vec<f64> = (0..p).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let y: Vec<f64> = rows
                .iter()
                .map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + rng.normal())
                .collect();
            let x = Matrix::from_rows(rows).unwrap();
            let lambda = rng.uniform(0.01, 0.5);
            let m = fit(&LearnerSpec::lasso(lambda), &x, &continuous(&x), &y).unwrap();
            let FittedModel::Linear { model, .. } = &m else { panic!() };
            let viol = kkt_violation(model, &x, &y).unwrap();
            assert!(viol <= KKT_TOL, "seed {seed}: violation {viol}");
        }
    }
}
