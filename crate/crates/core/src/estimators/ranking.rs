//! Optimal bipartite ranking risk for binary labels:
//! θ̂ = (n(n−1))^{-1} Σ_l Σ_{(i,j)∈I_l} (Y_i − Y_j)(Y_i − Y_j − δ(X_i, X_j, γ̂_l))
//! in the joint nonparametric case, with δ = sgn of the fitted-probability
//! difference and probabilities clamped to [0, 1] before signing.

use crate::crossfit::FoldPartition;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::LearnerSpec;
use crate::ustat::{degeneracy_diagnostic, loo_means, pair_sum, sigma_hat};

use super::{fit_block_gamma, fit_full, sgn, Diagnostics, EstimateResult, Method};

#[inline]
fn clamp01(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

/// Debiased optimal ranking risk (joint nonparametric form).
pub fn ranking_risk_debiased(
    data: &Dataset,
    spec: &LearnerSpec,
    folds: &FoldPartition,
) -> Result<EstimateResult> {
    let y = data.y();
    let n = data.n();
    if let Some(i) = y.iter().position(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::data(format!(
            "ranking risk needs binary labels in {{0,1}}; row {} has {}",
            i + 1,
            y[i]
        )));
    }
    let gamma = fit_block_gamma(data, spec, folds, y)?;
    let total = pair_sum(
        &|i: usize, j: usize| {
            let l = gamma.block_of(i, j);
            let delta = sgn(clamp01(gamma.gamma(l, i)) - clamp01(gamma.gamma(l, j)));
            let yd = y[i] - y[j];
            yd * (yd - delta)
        },
        n,
    )?;
    let theta = total / (n as f64 * (n as f64 - 1.0));

    // full-sample refit for the variance
    let (_model_full, v) = fit_full(data, spec, y)?;
    let loo = loo_means(
        &|i: usize, j: usize| {
            let delta = sgn(clamp01(v[i]) - clamp01(v[j]));
            let yd = y[i] - y[j];
            0.5 * yd * (yd - delta) - theta
        },
        n,
    )?;
    let sigma = sigma_hat(&loo);
    let se = (sigma / n as f64).sqrt();
    let diagnostics = Diagnostics {
        degenerate: degeneracy_diagnostic(sigma, theta.abs()),
        negative_iop: false,
        plugin_se_invalid: false,
        first_stage_rmse: super::rmse_from(&v, data.y()),
        tie_fraction: None,
    };
    Ok(EstimateResult::build(
        "ranking_risk",
        Method::DebiasedNp,
        theta,
        se,
        0.95,
        n,
        Some(folds.k()),
        spec.summary(),
        diagnostics,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossfit::make_folds;
    use crate::data::ColKind;
    use crate::mat::Matrix;

    fn dataset_xy(y: Vec<f64>, x1: Vec<f64>) -> Dataset {
        let x = Matrix::from_rows(x1.into_iter().map(|v| vec![v]).collect()).unwrap();
        Dataset::new(y, x, None, vec![ColKind::Continuous]).unwrap()
    }

    #[test]
    fn rejects_non_binary_labels() {
        let data = dataset_xy(vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 3.0]);
        let folds = make_folds(3, 3, 1).unwrap();
        assert!(matches!(
            ranking_risk_debiased(&data, &LearnerSpec::ridge(1.0), &folds),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn perfect_deterministic_labels_give_zero_risk() {
        // x separates the labels exactly; ridge on x = y reproduces the
        // labels, so every pair term vanishes
        let n = 30;
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let data = dataset_xy(y.clone(), y.clone());
        let folds = make_folds(n, 3, 2).unwrap();
        let res = ranking_risk_debiased(&data, &LearnerSpec::ridge(0.0), &folds).unwrap();
        assert!(res.theta.abs() < 1e-12, "{}", res.theta);
    }

    #[test]
    fn all_labels_equal_gives_zero() {
        let n = 20;
        let y = vec![1.0; n];
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let data = dataset_xy(y, x);
        let folds = make_folds(n, 4, 3).unwrap();
        let res = ranking_risk_debiased(&data, &LearnerSpec::fixed(0.7), &folds).unwrap();
        assert_eq!(res.theta, 0.0);
    }

    #[test]
    fn constant_propensity_recovers_p_one_minus_p() {
        // gamma_0 = p constant: theta_0 = p(1-p); a single moderate sample
        // should land within a few SE
        let p = 0.3;
        let n = 600;
        let mut rng = crate::rng::Rng::from_seed(12);
        let y: Vec<f64> = (0..n).map(|_| if rng.f64() < p { 1.0 } else { 0.0 }).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let data = dataset_xy(y, x);
        let folds = make_folds(n, 5, 4).unwrap();
        let res = ranking_risk_debiased(&data, &LearnerSpec::fixed(p), &folds).unwrap();
        let truth = p * (1.0 - p);
        assert!(
            (res.theta - truth).abs() <= 4.0 * res.se.max(1e-3),
            "theta {} truth {truth} se {}",
            res.theta,
            res.se
        );
    }
}
