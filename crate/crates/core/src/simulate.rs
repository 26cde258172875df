//! Monte Carlo data-generating processes and the replication harness
//! producing bias/coverage tables.
//!
//! Two DGPs: a three-covariate linear Gaussian design (variance of fitted
//! values, with per-dataset random coefficients) and a saturated
//! categorical design with three 8-level covariates, 512 coefficients and a
//! log-normal outcome whose population Gini of the conditional means is
//! computable by exact enumeration over the 512 cells.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColKind, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{
    iop_gini_debiased_np, iop_gini_plugin, varfv_debiased, varfv_plugin, EstimateResult,
};
use crate::learners::LearnerSpec;
use crate::mat::Matrix;
use crate::rng::{derive_seed, Rng};
use crate::ustat::kahan_sum;

/// Data-generating process for the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DgpSpec {
    /// Y = β'X + ε with β_k ~ U[0,2] drawn once per dataset, X trivariate
    /// normal with Σ_ij = 1(i=j) + 0.5·1(|i−j|=1), ε ~ N(0, 1/10).
    LinearGaussian,
    /// ln Y = saturated expansion of three 8-level covariates + N(0, σ²).
    SaturatedCategorical { sigma: f64 },
}

/// Estimator under study in a Monte Carlo cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McEstimator {
    IopPlugin,
    IopDebiased,
    VarfvPlugin,
    VarfvDebiased,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    pub dgp: DgpSpec,
    pub n: usize,
    pub reps: usize,
    pub estimator: McEstimator,
    pub learner: LearnerSpec,
    pub k: usize,
    pub level: f64,
    pub seed: u64,
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::config("reps must be >= 1"));
        }
        if self.n < 10 {
            return Err(Error::config("n must be >= 10"));
        }
        if let DgpSpec::SaturatedCategorical { sigma } = self.dgp {
            if sigma <= 0.0 {
                return Err(Error::config("sigma must be > 0"));
            }
        }
        if !(0.0 < self.level && self.level < 1.0) {
            return Err(Error::config("CI level must be in (0,1)"));
        }
        Ok(())
    }
}

/// Per-cell Monte Carlo summary mirroring a bias/coverage table cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub schema_version: u32,
    pub estimator: McEstimator,
    pub learner: serde_json::Value,
    pub dgp: DgpSpec,
    pub n: usize,
    pub reps: usize,
    pub reps_failed: usize,
    /// mean(θ̂) − θ_true, averaged over successful replications.
    pub bias: f64,
    /// fraction of successful replications whose CI contains the truth.
    pub coverage: f64,
    pub sd_estimates: f64,
    pub mean_se: f64,
    pub mean_theta: f64,
    pub mean_truth: f64,
}

impl McReport {
    pub fn csv_header() -> &'static str {
        "estimator,learner,dgp,n,reps,reps_failed,bias,coverage,sd_estimates,mean_se"
    }

    pub fn to_csv_row(&self) -> String {
        let est = match self.estimator {
            McEstimator::IopPlugin => "iop_plugin",
            McEstimator::IopDebiased => "iop_debiased",
            McEstimator::VarfvPlugin => "varfv_plugin",
            McEstimator::VarfvDebiased => "varfv_debiased",
        };
        let learner = self.learner["kind"].as_str().unwrap_or("?").to_string();
        let dgp = match self.dgp {
            DgpSpec::LinearGaussian => "linear".to_string(),
            DgpSpec::SaturatedCategorical { sigma } => format!("saturated(sigma={sigma})"),
        };
        format!(
            "{est},{learner},{dgp},{},{},{},{:.6},{:.4},{:.6},{:.6}",
            self.n, self.reps, self.reps_failed, self.bias, self.coverage, self.sd_estimates,
            self.mean_se
        )
    }

    pub fn text_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:<16} {:>8} {:>6} {:>9} {:>9} {:>9} {:>9} {:>7}\n",
            "estimator", "learner", "n", "bias", "coverage", "sd", "mean_se", "failed"
        ));
        let est = match self.estimator {
            McEstimator::IopPlugin => "iop_plugin",
            McEstimator::IopDebiased => "iop_debiased",
            McEstimator::VarfvPlugin => "varfv_plugin",
            McEstimator::VarfvDebiased => "varfv_debiased",
        };
        s.push_str(&format!(
            "{:<16} {:>8} {:>6} {:>9.4} {:>9.3} {:>9.4} {:>9.4} {:>7}\n",
            est,
            self.learner["kind"].as_str().unwrap_or("?"),
            self.n,
            self.bias,
            self.coverage,
            self.sd_estimates,
            self.mean_se,
            self.reps_failed
        ));
        s
    }
}

/// Tridiagonal covariance of the linear DGP: 1 on the diagonal, 0.5 off.
const SIGMA_CHOL: [[f64; 3]; 3] = {
    // Cholesky factor computed in closed form: l11 = 1, l21 = 0.5,
    // l22 = sqrt(3)/2, l32 = 0.5/l22, l33 = sqrt(1 - 1/3)
    [
        [1.0, 0.0, 0.0],
        [0.5, 0.866_025_403_784_438_6, 0.0],
        [0.0, 0.577_350_269_189_625_7, 0.816_496_580_927_726,
        ],
    ]
};

/// Draws the linear Gaussian sample and returns it with the per-dataset
/// truth θ = β'Σβ for the variance of fitted values.
pub fn gen_linear_gaussian(n: usize, seed: u64) -> Result<(Dataset, f64)> {
    if n < 10 {
        return Err(Error::config("n must be >= 10"));
    }
    let mut rng = Rng::from_seed(seed);
    let beta: Vec<f64> = (0..3).map(|_| rng.uniform(0.0, 2.0)).collect();
    let eps_sd = (0.1f64).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let z = [rng.normal(), rng.normal(), rng.normal()];
        let x: Vec<f64> = (0..3)
            .map(|r| (0..3).map(|c| SIGMA_CHOL[r][c] * z[c]).sum())
            .collect();
        let signal: f64 = beta.iter().zip(&x).map(|(b, v)| b * v).sum();
        y.push(signal + eps_sd * rng.normal());
        rows.push(x);
    }
    let x = Matrix::from_rows(rows)?;
    let data = Dataset::new(y, x, None, vec![ColKind::Continuous; 3])?;
    // theta = beta' Sigma beta with Sigma tridiagonal(1, 0.5)
    let theta = beta.iter().map(|b| b * b).sum::<f64>()
        + beta[0] * beta[1]
        + beta[1] * beta[2];
    Ok((data, theta))
}

/// Coefficients of the saturated DGP, in the pinned order: intercept 5;
/// main effects β_m = 0.2(−1)^{m+1} for m=1..21 (covariate-major, level
/// minor); interactions ξ_m = (2m²)^{-1} for m=1..490, pairwise blocks
/// (1,2), (1,3), (2,3) scanning levels row-major, then threewise row-major.
fn saturated_cell_exponents() -> Vec<f64> {
    let beta = |m: usize| 0.2 * if m % 2 == 1 { 1.0 } else { -1.0 };
    let xi = |m: usize| 1.0 / (2.0 * (m as f64) * (m as f64));
    let mut eta = vec![0.0f64; 512];
    for (cell, e) in eta.iter_mut().enumerate() {
        let a = cell / 64; // level of covariate 1
        let b = (cell / 8) % 8; // covariate 2
        let c = cell % 8; // covariate 3
        let mut v = 5.0;
        let levels = [a, b, c];
        for (k, &l) in levels.iter().enumerate() {
            if l >= 1 {
                v += beta(7 * k + l);
            }
        }
        // pairwise blocks (1,2), (1,3), (2,3); 49 coefficients each
        let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
        for (block, &(p, q)) in pairs.iter().enumerate() {
            let (lp, lq) = (levels[p], levels[q]);
            if lp >= 1 && lq >= 1 {
                let m = 49 * block + 7 * (lp - 1) + (lq - 1) + 1;
                v += xi(m);
            }
        }
        if a >= 1 && b >= 1 && c >= 1 {
            let m = 147 + 49 * (a - 1) + 7 * (b - 1) + (c - 1) + 1;
            v += xi(m);
        }
        *e = v;
    }
    eta
}

/// Draws the saturated categorical sample: three independent 8-level
/// covariates, ln Y = η(cell) + N(0, σ²), Y on the level scale.
pub fn gen_saturated(n: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::config("n must be >= 10"));
    }
    if sigma <= 0.0 {
        return Err(Error::config("sigma must be > 0"));
    }
    let eta = saturated_cell_exponents();
    let mut rng = Rng::from_seed(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.index(8);
        let b = rng.index(8);
        let c = rng.index(8);
        let cell = a * 64 + b * 8 + c;
        y.push((eta[cell] + sigma * rng.normal()).exp());
        rows.push(vec![a as f64, b as f64, c as f64]);
    }
    let x = Matrix::from_rows(rows)?;
    Dataset::new(y, x, None, vec![ColKind::Categorical { levels: 8 }; 3])
}

/// Population Gini of the conditional means E[Y|X] by exact enumeration
/// over the 512 equally likely cells: μ_c = exp(η_c + σ²/2), Gini over the
/// discrete uniform distribution on {μ_c}. The σ²/2 shift cancels by scale
/// invariance, so the value is identical for every σ.
pub fn true_gini_saturated(sigma: f64) -> f64 {
    let eta = saturated_cell_exponents();
    let mu: Vec<f64> = eta.iter().map(|e| (e + sigma * sigma / 2.0).exp()).collect();
    let n = mu.len();
    let mut num = crate::ustat::Kahan::new();
    for i in 0..n {
        for j in i + 1..n {
            num.add((mu[i] - mu[j]).abs());
        }
    }
    let total = kahan_sum(mu.iter().copied());
    num.total() / (n as f64 * total)
}

fn run_one(config: &McConfig, rep: usize) -> Result<(EstimateResult, f64)> {
    let rep_seed = derive_seed(config.seed, rep as u64);
    let (data, truth) = match config.dgp {
        DgpSpec::LinearGaussian => gen_linear_gaussian(config.n, rep_seed)?,
        DgpSpec::SaturatedCategorical { sigma } => {
            let data = gen_saturated(config.n, sigma, rep_seed)?;
            (data, true_gini_saturated(sigma))
        }
    };
    let learner = config.learner.clone().reseeded(derive_seed(rep_seed, 0x7247_3365));
    let folds_seed = derive_seed(rep_seed, 0xF01D_5EED);
    let result = match config.estimator {
        McEstimator::IopPlugin => iop_gini_plugin(&data, &learner, None)?,
        McEstimator::IopDebiased => {
            let folds = crate::crossfit::make_folds(config.n, config.k, folds_seed)?;
            iop_gini_debiased_np(&data, &learner, &folds)?
        }
        McEstimator::VarfvPlugin => varfv_plugin(&data, &learner)?,
        McEstimator::VarfvDebiased => {
            let folds = crate::crossfit::make_folds(config.n, config.k, folds_seed)?;
            varfv_debiased(&data, &learner, &folds)?
        }
    };
    Ok((result, truth))
}

/// Runs the Monte Carlo cell: reps independent datasets from derived seeds,
/// the chosen estimator on each, bias and coverage against the truth.
/// Failed replications are counted and excluded.
pub fn run_mc(config: &McConfig) -> Result<McReport> {
    config.validate()?;
    let z = crate::estimators::normal_quantile(0.5 + config.level / 2.0);
    let outcomes: Vec<Result<(EstimateResult, f64)>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_one(config, rep))
        .collect();
    let mut thetas = Vec::new();
    let mut ses = Vec::new();
    let mut covered = 0usize;
    let mut truths = Vec::new();
    let mut failed = 0usize;
    for out in outcomes {
        match out {
            Ok((res, truth)) => {
                // coverage band at the requested level
                let lo = res.theta - z * res.se;
                let hi = res.theta + z * res.se;
                if lo <= truth && truth <= hi {
                    covered += 1;
                }
                thetas.push(res.theta);
                ses.push(res.se);
                truths.push(truth);
            }
            Err(Error::Config(msg)) => return Err(Error::Config(msg)),
            Err(_) => failed += 1,
        }
    }
    if thetas.is_empty() {
        return Err(Error::numerical("all Monte Carlo replications failed"));
    }
    let m = thetas.len() as f64;
    let mean_theta = kahan_sum(thetas.iter().copied()) / m;
    let mean_truth = kahan_sum(truths.iter().copied()) / m;
    let bias = kahan_sum(thetas.iter().zip(&truths).map(|(t, tr)| t - tr)) / m;
    let var = kahan_sum(thetas.iter().map(|t| (t - mean_theta) * (t - mean_theta)))
        / (m - 1.0).max(1.0);
    Ok(McReport {
        schema_version: 1,
        estimator: config.estimator,
        learner: config.learner.summary(),
        dgp: config.dgp,
        n: config.n,
        reps: config.reps,
        reps_failed: failed,
        bias,
        coverage: covered as f64 / m,
        sd_estimates: var.sqrt(),
        mean_se: kahan_sum(ses.iter().copied()) / m,
        mean_theta,
        mean_truth,
    })
}
