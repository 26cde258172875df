//! Ridge and lasso on the standardized design.
//!
//! Ridge solves (X'X + λI)β = X'y in closed form on standardized columns
//! with an unpenalized intercept. Lasso runs cyclic coordinate descent with
//! soft-thresholding to KKT tolerance 1e-6, capped at 10,000 sweeps.

use serde::{Deserialize, Serialize};

use crate::data::OutcomeTransform;
use crate::error::{Error, Result};
use crate::learners::design::{Design, DesignCol, Term};
use crate::mat::{cholesky_solve, Matrix};
use crate::ustat::kahan_sum;

pub const KKT_TOL: f64 = 1e-6;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinearKind {
    Ridge,
    Lasso,
}

/// A fitted penalized linear model, coefficients on the original scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub lambda: f64,
    pub intercept: f64,
    pub coefs: Vec<f64>,
    pub terms: Vec<Term>,
    /// Training standardization (mean, scale) per term.
    pub stats: Vec<(f64, f64)>,
    pub transform: OutcomeTransform,
    pub p_raw: usize,
}

impl LinearModel {
    /// Linear prediction on the transform scale.
    pub fn linear_value(&self, row: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (term, &b) in self.terms.iter().zip(&self.coefs) {
            if b != 0.0 {
                acc += b * term.eval(row);
            }
        }
        acc
    }

    pub fn n_nonzero(&self) -> usize {
        self.coefs.iter().filter(|b| **b != 0.0).count()
    }
}

/// Centers y and returns (mean, centered).
fn center(y: &[f64]) -> (f64, Vec<f64>) {
    let m = kahan_sum(y.iter().copied()) / y.len() as f64;
    (m, y.iter().map(|v| v - m).collect())
}

/// Largest penalty with an all-zero lasso solution: max_j |x̃_j'y_c| / n.
pub fn lambda_max(design: &Design, y: &[f64]) -> f64 {
    let (_, yc) = center(y);
    let n = design.n as f64;
    let mut best = 0.0f64;
    for j in design.active() {
        let (m, s) = design.stats[j];
        let corr = (design.cols[j].dot(&yc) - m * kahan_sum(yc.iter().copied())) / s;
        best = best.max((corr / n).abs());
    }
    best
}

pub fn fit_ridge(
    design: &Design,
    y: &[f64],
    lambda: f64,
    transform: OutcomeTransform,
    p_raw: usize,
) -> Result<LinearModel> {
    if lambda < 0.0 {
        return Err(Error::config(format!("ridge penalty must be >= 0, got {lambda}")));
    }
    let (ybar, yc) = center(y);
    let active = design.active();
    let k = active.len();
    let n = design.n as f64;

    // gram matrix of standardized active columns
    let mut g = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    // cache dense representations for cross products
    let dense: Vec<Vec<f64>> = active
        .iter()
        .map(|&j| match &design.cols[j] {
            DesignCol::Dense(v) => v.clone(),
            DesignCol::Indicator(idx) => {
                let mut v = vec![0.0; design.n];
                for &i in idx {
                    v[i as usize] = 1.0;
                }
                v
            }
        })
        .collect();
    for (aj, &j) in active.iter().enumerate() {
        let (mj, sj) = design.stats[j];
        b[aj] = (design.cols[j].dot(&yc) - mj * kahan_sum(yc.iter().copied())) / sj;
        for (ak, &kcol) in active.iter().enumerate().take(aj + 1) {
            let (mk, sk) = design.stats[kcol];
            let raw: f64 = dense[aj].iter().zip(&dense[ak]).map(|(a, c)| a * c).sum();
            let val = (raw - n * mj * mk) / (sj * sk);
            g[aj * k + ak] = val;
            g[ak * k + aj] = val;
        }
    }
    for d in 0..k {
        g[d * k + d] += lambda;
    }
    let beta_std = cholesky_solve(&g, &b, k)?;

    let mut coefs = vec![0.0; design.terms.len()];
    let mut intercept = ybar;
    for (aj, &j) in active.iter().enumerate() {
        let (mj, sj) = design.stats[j];
        let bo = beta_std[aj] / sj;
        coefs[j] = bo;
        intercept -= bo * mj;
    }
    Ok(LinearModel {
        kind: LinearKind::Ridge,
        lambda,
        intercept,
        coefs,
        terms: design.terms.clone(),
        stats: design.stats.clone(),
        transform,
        p_raw,
    })
}

#[inline]
fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Coordinate-descent state sharing the residual decomposition
/// r_i = t_i + const, where t carries only raw-column contributions so that
/// indicator columns update sparsely. x̃_j'r = (x_j't - m_j·Σt)/s_j.
struct CdState {
    t: Vec<f64>,
    t_sum: f64,
    beta: Vec<f64>,
    yc: Vec<f64>,
}

impl CdState {
    fn corr(&self, col: &DesignCol, m: f64, s: f64) -> f64 {
        (col.dot(&self.t) - m * self.t_sum) / s
    }

    fn update(&mut self, j: usize, col: &DesignCol, m: f64, s: f64, d: f64, n: f64) {
        match col {
            DesignCol::Dense(x) => {
                for (ti, xi) in self.t.iter_mut().zip(x) {
                    *ti -= d * xi / s;
                }
            }
            DesignCol::Indicator(idx) => {
                for &i in idx {
                    self.t[i as usize] -= d / s;
                }
            }
        }
        self.t_sum -= d * n * m / s;
        self.beta[j] += d;
    }

    /// Rebuilds the residual from scratch, clearing incremental drift.
    fn refresh(&mut self, design: &Design) {
        self.t.copy_from_slice(&self.yc);
        for (j, &b) in self.beta.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let (_, s) = design.stats[j];
            match &design.cols[j] {
                DesignCol::Dense(x) => {
                    for (ti, xi) in self.t.iter_mut().zip(x) {
                        *ti -= b * xi / s;
                    }
                }
                DesignCol::Indicator(idx) => {
                    for &i in idx {
                        self.t[i as usize] -= b / s;
                    }
                }
            }
        }
        self.t_sum = kahan_sum(self.t.iter().copied());
    }
}

/// Fits a lasso at a single penalty from a cold start, with the strict KKT
/// convergence contract.
pub fn fit_lasso(
    design: &Design,
    y: &[f64],
    lambda: f64,
    transform: OutcomeTransform,
    p_raw: usize,
) -> Result<LinearModel> {
    let mut state = lasso_init(design, y);
    lasso_descend(design, &mut state, lambda, DescendMode::Strict)?;
    Ok(lasso_pack(design, y, &state, lambda, transform, p_raw))
}

pub(crate) fn lasso_init(design: &Design, y: &[f64]) -> CdStatePub {
    let (_, yc) = center(y);
    let t_sum = kahan_sum(yc.iter().copied());
    CdStatePub(CdState {
        t: yc.clone(),
        t_sum,
        beta: vec![0.0; design.terms.len()],
        yc,
    })
}

/// Opaque warm-start state for path fitting.
pub struct CdStatePub(CdState);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum DescendMode {
    /// Path point inside cross-validation: coefficient-change stopping with
    /// a bounded sweep budget; never errors on the budget.
    Path,
    /// Final fit: polish until the KKT stationarity contract (1e-6) holds,
    /// erroring with the iteration count when the budget runs out.
    Strict,
}

pub(crate) fn lasso_descend(
    design: &Design,
    state: &mut CdStatePub,
    lambda: f64,
    mode: DescendMode,
) -> Result<()> {
    lasso_descend_from(design, state, lambda, None, mode)
}

/// One descent at `lambda`, warm-started from `state`. With `lambda_prev`
/// set (path fitting), the sequential strong rule screens the working set:
/// columns with |x̃_j'r|/n < 2λ − λ_prev at the warm start are skipped, and
/// a full KKT scan afterwards readmits any violator, so screening never
/// changes the solution.
pub(crate) fn lasso_descend_from(
    design: &Design,
    state: &mut CdStatePub,
    lambda: f64,
    lambda_prev: Option<f64>,
    mode: DescendMode,
) -> Result<()> {
    let st = &mut state.0;
    let n = design.n as f64;
    let active_cols = design.active();
    let scale = (kahan_sum(st.yc.iter().map(|v| v * v)) / n).sqrt().max(1e-12);
    let tol = 1e-10 * scale;
    let budget = match mode {
        DescendMode::Path => 300,
        DescendMode::Strict => MAX_SWEEPS,
    };
    let mut sweeps = 0usize;

    // strong-rule screening at the warm start
    let screen = lambda_prev.map(|lp| 2.0 * lambda - lp);
    let mut work: Vec<usize> = match screen {
        Some(thresh) if thresh > 0.0 => active_cols
            .iter()
            .copied()
            .filter(|&j| {
                if st.beta[j] != 0.0 {
                    return true;
                }
                let (m, s) = design.stats[j];
                (st.corr(&design.cols[j], m, s) / n).abs() >= thresh
            })
            .collect(),
        _ => active_cols.clone(),
    };

    loop {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for &j in &work {
            let (m, s) = design.stats[j];
            let corr = st.corr(&design.cols[j], m, s);
            let z = st.beta[j] + corr / n;
            let new = soft_threshold(z, lambda);
            let d = new - st.beta[j];
            if d != 0.0 {
                st.update(j, &design.cols[j], m, s, d, n);
                max_delta = max_delta.max(d.abs());
            }
        }
        // cycle the nonzero set until stable, charging the same budget
        while sweeps < budget {
            sweeps += 1;
            let mut inner_delta = 0.0f64;
            for &j in &work {
                if st.beta[j] == 0.0 {
                    continue;
                }
                let (m, s) = design.stats[j];
                let corr = st.corr(&design.cols[j], m, s);
                let z = st.beta[j] + corr / n;
                let new = soft_threshold(z, lambda);
                let d = new - st.beta[j];
                if d != 0.0 {
                    st.update(j, &design.cols[j], m, s, d, n);
                    inner_delta = inner_delta.max(d.abs());
                }
            }
            if inner_delta <= tol {
                break;
            }
        }
        let converged = max_delta <= tol;
        let out_of_budget = sweeps >= budget;
        if !converged && !out_of_budget {
            continue;
        }
        // readmit KKT violators missed by the screen
        if work.len() < active_cols.len() && !out_of_budget {
            let mut added = false;
            for &j in &active_cols {
                if st.beta[j] != 0.0 || work.contains(&j) {
                    continue;
                }
                let (m, s) = design.stats[j];
                if (st.corr(&design.cols[j], m, s) / n).abs() > lambda {
                    work.push(j);
                    added = true;
                }
            }
            if added {
                continue;
            }
        }
        match mode {
            DescendMode::Path => return Ok(()),
            DescendMode::Strict => {
                if converged {
                    // clear incremental drift, then verify stationarity
                    st.refresh(design);
                    let mut viol = 0.0f64;
                    for &j in &active_cols {
                        let (m, s) = design.stats[j];
                        let corr = st.corr(&design.cols[j], m, s) / n;
                        let v = if st.beta[j] == 0.0 {
                            (corr.abs() - lambda).max(0.0)
                        } else {
                            (corr - lambda * st.beta[j].signum()).abs()
                        };
                        viol = viol.max(v);
                    }
                    if viol <= KKT_TOL * 0.5 {
                        return Ok(());
                    }
                    work = active_cols.clone();
                }
                if out_of_budget {
                    return Err(Error::numerical(format!(
                        "lasso coordinate descent did not converge after {sweeps} sweeps"
                    )));
                }
            }
        }
    }
}

pub(crate) fn lasso_pack(
    design: &Design,
    y: &[f64],
    state: &CdStatePub,
    lambda: f64,
    transform: OutcomeTransform,
    p_raw: usize,
) -> LinearModel {
    let (ybar, _) = center(y);
    let mut coefs = vec![0.0; design.terms.len()];
    let mut intercept = ybar;
    for (j, &bs) in state.0.beta.iter().enumerate() {
        if bs != 0.0 {
            let (m, s) = design.stats[j];
            let bo = bs / s;
            coefs[j] = bo;
            intercept -= bo * m;
        }
    }
    LinearModel {
        kind: LinearKind::Lasso,
        lambda,
        intercept,
        coefs,
        terms: design.terms.clone(),
        stats: design.stats.clone(),
        transform,
        p_raw,
    }
}

/// Max KKT stationarity violation of a fitted lasso at its penalty, measured
/// on the standardized training-scale correlations: for every j,
/// |x̃_j'r|/n <= λ + tol with equality within tol when β_j != 0.
pub fn kkt_violation(model: &LinearModel, x: &Matrix, y: &[f64]) -> Result<f64> {
    if model.kind != LinearKind::Lasso {
        return Err(Error::config("KKT check applies to lasso models"));
    }
    let y_t: Vec<f64> = match model.transform {
        OutcomeTransform::None => y.to_vec(),
        OutcomeTransform::LogExp => y.iter().map(|v| v.ln()).collect(),
    };
    let design = Design::realize(model.terms.clone(), x);
    let n = x.nrows() as f64;
    let resid: Vec<f64> = (0..x.nrows())
        .map(|i| y_t[i] - model.linear_value(x.row(i)))
        .collect();
    let rsum = kahan_sum(resid.iter().copied());
    let mut viol = 0.0f64;
    for (j, term_stats) in model.stats.iter().enumerate() {
        let (m, s) = *term_stats;
        if s <= 1e-12 {
            continue;
        }
        let corr = (design.cols[j].dot(&resid) - m * rsum) / s / n;
        let beta_std = model.coefs[j] * s;
        let v = if beta_std == 0.0 {
            (corr.abs() - model.lambda).max(0.0)
        } else {
            (corr - model.lambda * beta_std.signum()).abs()
        };
        viol = viol.max(v);
    }
    Ok(viol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColKind;

    fn design_from(rows: Vec<Vec<f64>>) -> (Design, Matrix) {
        let x = Matrix::from_rows(rows).unwrap();
        let kinds = vec![ColKind::Continuous; x.ncols()];
        (Design::build(&x, &kinds).unwrap(), x)
    }

    #[test]
    fn ridge_at_zero_interpolates_line() {
        let (d, _) = design_from(vec![vec![1.0], vec![2.0]]);
        let m = fit_ridge(&d, &[1.0, 2.0], 0.0, OutcomeTransform::None, 1).unwrap();
        assert!((m.coefs[0] - 1.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
    }

    /// Independent oracle: ordinary least squares by Gaussian elimination
    /// with partial pivoting on the raw (unstandardized) normal equations.
    fn ols_oracle(x: &Matrix, y: &[f64]) -> Vec<f64> {
        let n = x.nrows();
        let p = x.ncols() + 1; // intercept first
        let mut a = vec![0.0; p * p];
        let mut b = vec![0.0; p];
        let xi = |i: usize, j: usize| if j == 0 { 1.0 } else { x.get(i, j - 1) };
        for r in 0..p {
            for c in 0..p {
                a[r * p + c] = (0..n).map(|i| xi(i, r) * xi(i, c)).sum();
            }
            b[r] = (0..n).map(|i| xi(i, r) * y[i]).sum();
        }
        // gaussian elimination with partial pivoting
        for col in 0..p {
            let piv = (col..p)
                .max_by(|&r1, &r2| a[r1 * p + col].abs().total_cmp(&a[r2 * p + col].abs()))
                .unwrap();
            for c in 0..p {
                a.swap(col * p + c, piv * p + c);
            }
            b.swap(col, piv);
            for r in col + 1..p {
                let f = a[r * p + col] / a[col * p + col];
                for c in col..p {
                    a[r * p + c] -= f * a[col * p + c];
                }
                b[r] -= f * b[col];
            }
        }
        let mut sol = vec![0.0; p];
        for r in (0..p).rev() {
            let mut s = b[r];
            for c in r + 1..p {
                s -= a[r * p + c] * sol[c];
            }
            sol[r] = s / a[r * p + r];
        }
        sol
    }

    #[test]
    fn ridge_at_zero_matches_normal_equation_oracle() {
        let mut rng = crate::rng::Rng::from_seed(5);
        for _ in 0..10 {
            let n = 40;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.normal(), rng.normal(), rng.normal()])
                .collect();
            let y: Vec<f64> = rows
                .iter()
                .map(|r| 1.5 + 2.0 * r[0] - r[1] + 0.3 * r[2] + 0.1 * rng.normal())
                .collect();
            let (d, x) = design_from(rows);
            let m = fit_ridge(&d, &y, 0.0, OutcomeTransform::None, 3).unwrap();
            let oracle = ols_oracle(&x, &y);
            assert!((m.intercept - oracle[0]).abs() < 1e-10, "intercept");
            for j in 0..3 {
                assert!((m.coefs[j] - oracle[j + 1]).abs() < 1e-10, "coef {j}");
            }
        }
    }

    #[test]
    fn ridge_collinear_at_zero_is_numerical_error() {
        let (d, _) = design_from(vec![
            vec![1.0, 2.0],
            vec![2.0, 4.0],
            vec![3.0, 6.0],
        ]);
        let err = fit_ridge(&d, &[1.0, 2.0, 3.0], 0.0, OutcomeTransform::None, 2).unwrap_err();
        match err {
            Error::Numerical(msg) => assert!(msg.contains("lambda"), "{msg}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn lasso_soft_threshold_oracle() {
        // single standardized covariate with cov(x,y) = 1, var(x) = 1:
        // slope = S(1, 0.4) / 1 = 0.6
        let (d, _) = design_from(vec![vec![-1.0], vec![1.0]]);
        let m = fit_lasso(&d, &[-1.0, 1.0], 0.4, OutcomeTransform::None, 1).unwrap();
        assert!((m.coefs[0] - 0.6).abs() < 1e-10, "slope {}", m.coefs[0]);
    }

    #[test]
    fn lasso_at_zero_matches_ols() {
        let mut rng = crate::rng::Rng::from_seed(17);
        let n = 60;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.normal(), rng.normal()])
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 0.5 - 1.2 * r[0] + 2.0 * r[1] + 0.05 * rng.normal())
            .collect();
        let (d, x) = design_from(rows);
        let m = fit_lasso(&d, &y, 0.0, OutcomeTransform::None, 2).unwrap();
        let oracle = ols_oracle(&x, &y);
        assert!((m.intercept - oracle[0]).abs() < 1e-6);
        for j in 0..2 {
            assert!((m.coefs[j] - oracle[j + 1]).abs() < 1e-6, "coef {j}");
        }
    }

    #[test]
    fn lasso_kkt_holds_at_moderate_penalty() {
        let mut rng = crate::rng::Rng::from_seed(23);
        let n = 80;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..5).map(|_| rng.normal()).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 2.0 * r[0] - r[2] + 0.3 * rng.normal())
            .collect();
        let x = Matrix::from_rows(rows).unwrap();
        let kinds = vec![ColKind::Continuous; 5];
        let d = Design::build(&x, &kinds).unwrap();
        let m = fit_lasso(&d, &y, 0.07, OutcomeTransform::None, 5).unwrap();
        let viol = kkt_violation(&m, &x, &y).unwrap();
        assert!(viol <= KKT_TOL, "violation {viol}");
        assert!(m.n_nonzero() >= 1);
    }

    #[test]
    fn lambda_max_kills_every_coefficient() {
        let mut rng = crate::rng::Rng::from_seed(3);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.normal(), rng.normal(), rng.normal()])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + rng.normal()).collect();
        let (d, _) = design_from(rows);
        let lmax = lambda_max(&d, &y);
        let m = fit_lasso(&d, &y, lmax, OutcomeTransform::None, 3).unwrap();
        assert_eq!(m.n_nonzero(), 0);
        let m2 = fit_lasso(&d, &y, lmax * 0.8, OutcomeTransform::None, 3).unwrap();
        assert!(m2.n_nonzero() >= 1);
    }
}
