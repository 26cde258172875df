//! Variance of fitted values: the pairwise half-squared-difference plug-in
//! and its debiased counterpart
//! θ̂ = C(n,2)^{-1} Σ_l Σ_{(i,j)∈I_l} (γ̂_l(X_i) − γ̂_l(X_j)) (Y_i − Y_j − (γ̂_l(X_i) − γ̂_l(X_j))/2).

use crate::crossfit::FoldPartition;
use crate::data::Dataset;
use crate::error::Result;
use crate::learners::LearnerSpec;
use crate::ustat::{degeneracy_diagnostic, loo_means, sigma_hat, u_mean};

use super::{fit_block_gamma, fit_full, BlockGamma, Diagnostics, EstimateResult, Method};

/// Point estimate of the debiased variance of fitted values from
/// cross-fitted predictions.
pub fn varfv_debiased_point(y: &[f64], gamma: &BlockGamma) -> Result<f64> {
    u_mean(
        &|i: usize, j: usize| {
            let l = gamma.block_of(i, j);
            let d = gamma.gamma(l, i) - gamma.gamma(l, j);
            d * (y[i] - y[j] - d / 2.0)
        },
        y.len(),
    )
}

/// Plug-in variance of fitted values: C(n,2)^{-1} Σ_{i<j} (γ̂_i − γ̂_j)²/2,
/// the sample variance of the full-sample fitted values.
pub fn varfv_plugin(data: &Dataset, spec: &LearnerSpec) -> Result<EstimateResult> {
    let n = data.n();
    let (_model, v) = fit_full(data, spec, data.y())?;
    let theta = u_mean(
        &|i: usize, j: usize| {
            let d = v[i] - v[j];
            d * d / 2.0
        },
        n,
    )?;
    let loo = loo_means(
        &|i: usize, j: usize| {
            let d = v[i] - v[j];
            d * d / 2.0 - theta
        },
        n,
    )?;
    let sigma = sigma_hat(&loo);
    let se = (sigma / n as f64).sqrt();
    let diagnostics = Diagnostics {
        degenerate: degeneracy_diagnostic(sigma, theta.abs()),
        negative_iop: false,
        plugin_se_invalid: true,
        first_stage_rmse: super::rmse_from(&v, data.y()),
        tie_fraction: None,
    };
    Ok(EstimateResult::build(
        "varfv",
        Method::Plugin,
        theta,
        se,
        0.95,
        n,
        None,
        spec.summary(),
        diagnostics,
    ))
}

/// Debiased variance of fitted values with the Example-1 variance formula
/// evaluated at a full-sample refit.
pub fn varfv_debiased(
    data: &Dataset,
    spec: &LearnerSpec,
    folds: &FoldPartition,
) -> Result<EstimateResult> {
    let n = data.n();
    let y = data.y();
    let gamma = fit_block_gamma(data, spec, folds, y)?;
    let theta = varfv_debiased_point(y, &gamma)?;

    let (_model_full, v) = fit_full(data, spec, y)?;
    let loo = loo_means(
        &|i: usize, j: usize| {
            let d = v[i] - v[j];
            d * (y[i] - y[j] - d / 2.0) - theta
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
        "varfv",
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
    use crate::crossfit::{make_folds, make_pair_blocks};
    use crate::data::ColKind;
    use crate::mat::Matrix;

    fn dataset_xy(y: Vec<f64>, x1: Vec<f64>) -> Dataset {
        let x = Matrix::from_rows(x1.into_iter().map(|v| vec![v]).collect()).unwrap();
        Dataset::new(y, x, None, vec![ColKind::Continuous]).unwrap()
    }

    #[test]
    fn plugin_constant_gamma_is_zero_and_two_point_case() {
        let data = dataset_xy(vec![1.0, 3.0], vec![1.0, 3.0]);
        let constant = varfv_plugin(&data, &LearnerSpec::fixed(2.0)).unwrap();
        assert_eq!(constant.theta, 0.0);
        assert!(constant.diagnostics.degenerate);

        // gamma values (1, 3): single pair contributes (1/2)(-2)^2 = 2
        let exact = varfv_plugin(&data, &LearnerSpec::ridge(0.0)).unwrap();
        assert!((exact.theta - 2.0).abs() < 1e-10);
    }

    #[test]
    fn plugin_equals_direct_sample_variance() {
        let mut rng = crate::rng::Rng::from_seed(5);
        let n = 73;
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let y = x.clone();
        let data = dataset_xy(y, x.clone());
        let res = varfv_plugin(&data, &LearnerSpec::ridge(0.0)).unwrap();
        // direct sample variance of the fitted values (n-1 denominator)
        let v = x; // exact fit reproduces x up to rounding
        let mean = v.iter().sum::<f64>() / n as f64;
        let direct = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n as f64 - 1.0);
        assert!(
            (res.theta - direct).abs() <= 1e-10 * direct,
            "{} vs {direct}",
            res.theta
        );
    }

    #[test]
    fn debiased_pair_term_hand_case() {
        // (Y, gamma) = ((1,1),(3,3)): (-2)(-2 - (-1)) = 2, matching plug-in
        let y = [1.0, 3.0];
        let folds = crate::crossfit::FoldPartition::from_assignment(vec![0, 1], 2).unwrap();
        let gamma = BlockGamma::shared(make_pair_blocks(folds), vec![1.0, 3.0]).unwrap();
        let theta = varfv_debiased_point(&y, &gamma).unwrap();
        assert!((theta - 2.0).abs() < 1e-15);
    }

    #[test]
    fn debiased_constant_gamma_flags_degenerate() {
        let n = 24;
        let y: Vec<f64> = (0..n).map(|i| (i % 5) as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let data = dataset_xy(y, x);
        let folds = make_folds(n, 3, 1).unwrap();
        let res = varfv_debiased(&data, &LearnerSpec::fixed(1.0), &folds).unwrap();
        assert_eq!(res.theta, 0.0);
        assert!(res.diagnostics.degenerate);
        assert_eq!(res.se, 0.0);
    }

    #[test]
    fn debiased_equals_plugin_under_interpolation() {
        // gamma reproduces Y exactly on every evaluation point
        let n = 36;
        let y: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let data = dataset_xy(y.clone(), y.clone());
        let folds = make_folds(n, 3, 9).unwrap();
        let deb = varfv_debiased(&data, &LearnerSpec::ridge(0.0), &folds).unwrap();
        let plug = varfv_plugin(&data, &LearnerSpec::ridge(0.0)).unwrap();
        assert!(
            (deb.theta - plug.theta).abs() <= 1e-10 * plug.theta,
            "{} vs {}",
            deb.theta,
            plug.theta
        );
    }

    #[test]
    fn scale_scales_theta_quadratically() {
        let n = 30;
        let mut rng = crate::rng::Rng::from_seed(3);
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 0.1 * rng.normal()).collect();
        let folds = make_folds(n, 3, 4).unwrap();
        let base =
            varfv_debiased(&dataset_xy(y.clone(), x.clone()), &LearnerSpec::ridge(0.0), &folds)
                .unwrap();
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let scaled =
            varfv_debiased(&dataset_xy(y2, x), &LearnerSpec::ridge(0.0), &folds).unwrap();
        assert!((scaled.theta - 4.0 * base.theta).abs() <= 1e-10 * base.theta.abs());
    }
}
