//! Gini inequality of opportunity: the classic Gini coefficient, the
//! plug-in Gini of fitted values, and the debiased estimators.
//!
//! The joint nonparametric debiased estimator is the sign form
//! θ̂ = Σ_l Σ_{(i,j)∈I_l} sgn(γ̂_l(X_i) − γ̂_l(X_j)) (Y_i − Y_j) / Σ_{i<j} (Y_i + Y_j)
//! with sgn(0) = 0, so pairs with tied fitted values contribute nothing.

use crate::crossfit::FoldPartition;
use crate::data::{validate_for_iop, Dataset, OutcomeTransform};
use crate::error::{Error, Result};
use crate::learners::{self, FittedModel, LearnerSpec};
use crate::ustat::{degeneracy_diagnostic, loo_means, pair_sum, sigma_hat};

use super::{
    fit_block_gamma, fit_full, pair_outcome_sum, sgn, AlphaKind, AlphaModel, BlockGamma,
    Diagnostics, EstimateResult, Method,
};

/// Classic Gini coefficient Σ_{i<j} |y_i − y_j| / Σ_{i<j} (y_i + y_j).
pub fn gini_classic(y: &[f64]) -> Result<f64> {
    let n = y.len();
    if n < 2 {
        return Err(Error::data("Gini needs at least 2 observations"));
    }
    let den = pair_outcome_sum(y);
    if den <= 0.0 {
        return Err(Error::data(format!(
            "Gini denominator nonpositive: sum of pairwise outcome sums is {den}"
        )));
    }
    let num = pair_sum(&|i: usize, j: usize| (y[i] - y[j]).abs(), n)?;
    Ok(num / den)
}

/// Point estimate of the joint-NP debiased Gini from cross-fitted
/// predictions; exposed for bring-your-own-first-step use.
pub fn iop_gini_debiased_np_point(y: &[f64], gamma: &BlockGamma) -> Result<f64> {
    let n = y.len();
    let den = pair_outcome_sum(y);
    if den <= 0.0 {
        return Err(Error::data("Gini denominator nonpositive"));
    }
    let num = pair_sum(
        &|i: usize, j: usize| {
            let l = gamma.block_of(i, j);
            sgn(gamma.gamma(l, i) - gamma.gamma(l, j)) * (y[i] - y[j])
        },
        n,
    )?;
    Ok(num / den)
}

fn tie_fraction(y_len: usize, delta: impl Fn(usize, usize) -> f64 + Sync) -> Result<f64> {
    let ties = pair_sum(
        &|i: usize, j: usize| if delta(i, j) == 0.0 { 1.0 } else { 0.0 },
        y_len,
    )?;
    Ok(ties / (y_len as f64 * (y_len as f64 - 1.0) / 2.0))
}

/// Standard error of the debiased Gini from a full-sample refit: √(V̂/n) with
/// V̂ = Σ̂ / B̂² where ψ̂ is the orthogonal pair moment at (γ̂, α̂, θ̂) and
/// B̂ = 2 ȳ. Returns (se, degenerate flag).
pub fn iop_gini_se(
    data: &Dataset,
    gamma_full: &FittedModel,
    alpha_full: &AlphaModel,
    theta: f64,
) -> Result<(f64, bool)> {
    let y = data.y();
    let n = data.n();
    let v = super::refit_values(gamma_full, data)?;
    let loo = match alpha_full {
        AlphaModel::PairwiseDelta => loo_means(
            &|i: usize, j: usize| {
                theta * (y[i] + y[j]) - sgn(v[i] - v[j]) * (y[i] - y[j])
            },
            n,
        )?,
        AlphaModel::Additive { a1, a2, mean_delta } => {
            let a1p = learners::predict(a1, data.x())?;
            let a2p = learners::predict(a2, data.x())?;
            let md = *mean_delta;
            loo_means(
                &|i: usize, j: usize| {
                    let alpha = a1p[i] + a2p[j] - md;
                    theta * (y[i] + y[j])
                        - (v[i] - v[j]).abs()
                        - alpha * (y[i] - y[j] - v[i] + v[j])
                },
                n,
            )?
        }
    };
    let sigma = sigma_hat(&loo);
    let b_hat = 2.0 * data.mean_y();
    let v_hat = sigma / (b_hat * b_hat);
    let degenerate = degeneracy_diagnostic(sigma, (b_hat * theta).abs());
    Ok(((v_hat / n as f64).sqrt(), degenerate))
}

/// Plug-in IOp: the sample Gini coefficient of fitted values. Its reported
/// standard error treats the fitted values as data and is flagged invalid.
/// `ablation_folds` switches to cross-fitted fitted values for comparisons.
pub fn iop_gini_plugin(
    data: &Dataset,
    spec: &LearnerSpec,
    ablation_folds: Option<&FoldPartition>,
) -> Result<EstimateResult> {
    validate_for_iop(data)?;
    let n = data.n();
    let (model, v): (Option<FittedModel>, Vec<f64>) = match ablation_folds {
        None => {
            let (m, v) = fit_full(data, spec, data.y())?;
            (Some(m), v)
        }
        Some(folds) => {
            // cross-fitted plug-in ablation: each observation predicted by
            // the diagonal block of its own fold (trained on the other folds)
            let gamma = fit_block_gamma(data, spec, folds, data.y())?;
            let v = (0..n)
                .map(|i| {
                    let diag = gamma.blocks().folds().fold_of(i); // diagonal blocks come first
                    gamma.gamma(diag, i)
                })
                .collect();
            (None, v)
        }
    };
    let den = pair_outcome_sum(&v);
    if den <= 0.0 {
        return Err(Error::data(
            "plug-in Gini denominator nonpositive: fitted values sum to <= 0",
        ));
    }
    let num = pair_sum(&|i: usize, j: usize| (v[i] - v[j]).abs(), n)?;
    let theta = num / den;

    // naive Gini SE of the fitted values, ignoring the first step
    let loo = loo_means(
        &|i: usize, j: usize| theta * (v[i] + v[j]) - (v[i] - v[j]).abs(),
        n,
    )?;
    let sigma = sigma_hat(&loo);
    let b_hat = 2.0 * crate::ustat::kahan_sum(v.iter().copied()) / n as f64;
    let se = (sigma / (b_hat * b_hat) / n as f64).sqrt();
    let first_stage_rmse = match &model {
        Some(m) => learners::rmse(m, data.x(), data.y())?,
        None => {
            let sse: f64 = v.iter().zip(data.y()).map(|(p, y)| (p - y) * (p - y)).sum();
            (sse / n as f64).sqrt()
        }
    };
    let diagnostics = Diagnostics {
        degenerate: degeneracy_diagnostic(sigma, (b_hat * theta).abs()),
        negative_iop: theta < 0.0,
        plugin_se_invalid: true,
        first_stage_rmse,
        tie_fraction: Some(tie_fraction(n, |i, j| v[i] - v[j])?),
    };
    Ok(EstimateResult::build(
        "iop_gini",
        Method::Plugin,
        theta,
        se,
        0.95,
        n,
        ablation_folds.map(|f| f.k()),
        spec.summary(),
        diagnostics,
    ))
}

/// Debiased IOp, joint nonparametric case (sign form).
pub fn iop_gini_debiased_np(
    data: &Dataset,
    spec: &LearnerSpec,
    folds: &FoldPartition,
) -> Result<EstimateResult> {
    validate_for_iop(data)?;
    let n = data.n();
    let gamma = fit_block_gamma(data, spec, folds, data.y())?;
    let theta = iop_gini_debiased_np_point(data.y(), &gamma)?;

    let (model_full, preds_full) = fit_full(data, spec, data.y())?;
    let (se, degenerate) = iop_gini_se(data, &model_full, &AlphaModel::PairwiseDelta, theta)?;
    let diagnostics = Diagnostics {
        degenerate,
        negative_iop: theta < 0.0,
        plugin_se_invalid: false,
        first_stage_rmse: super::rmse_from(&preds_full, data.y()),
        tie_fraction: Some(tie_fraction(n, |i, j| {
            let l = gamma.block_of(i, j);
            gamma.gamma(l, i) - gamma.gamma(l, j)
        })?),
    };
    Ok(EstimateResult::build(
        "iop_gini",
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

/// Leave-one-out averages of δ_ij = sgn(v_i − v_j) over a set of fitted
/// values: (#{v_j < v_i} − #{v_j > v_i}) / (m − 1).
fn loo_sign_averages(v: &[f64]) -> Vec<f64> {
    let m = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    v.iter()
        .map(|&vi| {
            let less = sorted.partition_point(|&s| s < vi);
            let leq = sorted.partition_point(|&s| s <= vi);
            let greater = m - leq;
            (less as f64 - greater as f64) / (m as f64 - 1.0)
        })
        .collect()
}

/// Fits the additive α̂ components on `rows` (targets from γ̂ predictions on
/// those rows), returning (a1, a2, mean_delta).
fn fit_additive_alpha(
    data: &Dataset,
    rows: &[usize],
    gamma_preds_all: &[f64],
    alpha_spec: &LearnerSpec,
) -> Result<(FittedModel, FittedModel, f64)> {
    let v: Vec<f64> = rows.iter().map(|&i| gamma_preds_all[i]).collect();
    let t1 = loo_sign_averages(&v);
    let t2: Vec<f64> = t1.iter().map(|t| -t).collect();
    let mean_delta = crate::ustat::kahan_sum(t1.iter().copied()) / t1.len() as f64;
    let x_rows = data.x().select_rows(rows);
    let spec = alpha_spec.clone().with_transform(OutcomeTransform::None);
    let a1 = learners::fit(&spec, &x_rows, data.col_meta(), &t1)?;
    let a2 = learners::fit(&spec, &x_rows, data.col_meta(), &t2)?;
    Ok((a1, a2, mean_delta))
}

/// Debiased IOp, general form: |γ̂_l(X_i) − γ̂_l(X_j)| plus the α̂ correction
/// term, divided by Σ_{i<j}(Y_i + Y_j). With `AlphaKind::PairwiseDelta` the
/// α̂ plug makes it coincide with the joint-NP sign form.
pub fn iop_gini_debiased_general(
    data: &Dataset,
    spec: &LearnerSpec,
    alpha_spec: &LearnerSpec,
    folds: &FoldPartition,
    alpha_kind: AlphaKind,
) -> Result<EstimateResult> {
    validate_for_iop(data)?;
    let n = data.n();
    let y = data.y();
    let gamma = fit_block_gamma(data, spec, folds, y)?;
    let den = pair_outcome_sum(y);
    if den <= 0.0 {
        return Err(Error::data("Gini denominator nonpositive"));
    }

    let num = match alpha_kind {
        AlphaKind::PairwiseDelta => pair_sum(
            &|i: usize, j: usize| {
                let l = gamma.block_of(i, j);
                let d = gamma.gamma(l, i) - gamma.gamma(l, j);
                d.abs() + sgn(d) * (y[i] - y[j] - d)
            },
            n,
        )?,
        AlphaKind::Additive => {
            // per-block additive alpha fit on the block's training rows
            let blocks = gamma.blocks();
            let mut a1_preds: Vec<Vec<f64>> = Vec::with_capacity(blocks.len());
            let mut a2_preds: Vec<Vec<f64>> = Vec::with_capacity(blocks.len());
            let mut mean_deltas: Vec<f64> = Vec::with_capacity(blocks.len());
            for l in 0..blocks.len() {
                let train = blocks.training_indices(l)?;
                let (a1, a2, md) =
                    fit_additive_alpha(data, &train, gamma.block_preds(l), alpha_spec)?;
                a1_preds.push(learners::predict(&a1, data.x())?);
                a2_preds.push(learners::predict(&a2, data.x())?);
                mean_deltas.push(md);
            }
            pair_sum(
                &|i: usize, j: usize| {
                    let l = gamma.block_of(i, j);
                    let d = gamma.gamma(l, i) - gamma.gamma(l, j);
                    let alpha = a1_preds[l][i] + a2_preds[l][j] - mean_deltas[l];
                    d.abs() + alpha * (y[i] - y[j] - d)
                },
                n,
            )?
        }
    };
    let theta = num / den;

    let (model_full, preds_full) = fit_full(data, spec, y)?;
    let alpha_full = match alpha_kind {
        AlphaKind::PairwiseDelta => AlphaModel::PairwiseDelta,
        AlphaKind::Additive => {
            let all: Vec<usize> = (0..n).collect();
            let (a1, a2, md) = fit_additive_alpha(data, &all, &preds_full, alpha_spec)?;
            AlphaModel::Additive { a1, a2, mean_delta: md }
        }
    };
    let (se, degenerate) = iop_gini_se(data, &model_full, &alpha_full, theta)?;
    let diagnostics = Diagnostics {
        degenerate,
        negative_iop: theta < 0.0,
        plugin_se_invalid: false,
        first_stage_rmse: super::rmse_from(&preds_full, data.y()),
        tie_fraction: Some(tie_fraction(n, |i, j| {
            let l = gamma.block_of(i, j);
            gamma.gamma(l, i) - gamma.gamma(l, j)
        })?),
    };
    Ok(EstimateResult::build(
        "iop_gini",
        Method::DebiasedGeneral,
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
    use crate::crossfit::make_pair_blocks;
    use crate::data::ColKind;
    use crate::mat::Matrix;

    fn dataset_xy(y: Vec<f64>, x1: Vec<f64>) -> Dataset {
        let x = Matrix::from_rows(x1.into_iter().map(|v| vec![v]).collect()).unwrap();
        Dataset::new(y, x, None, vec![ColKind::Continuous]).unwrap()
    }

    #[test]
    fn gini_classic_hand_values() {
        assert!((gini_classic(&[1.0, 2.0, 3.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(gini_classic(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(gini_classic(&[0.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(gini_classic(&[-1.0, -2.0]), Err(Error::Data(_))));
    }

    #[test]
    fn np_point_order_preserving_equals_classic_bitwise() {
        // identical traversal order makes the numerators bit-equal
        let n = 40;
        let y: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let gpred: Vec<f64> = y.iter().map(|v| 2.0 * v + 1.0).collect();
        let folds = crate::crossfit::make_folds(n, 4, 3).unwrap();
        let blocks = make_pair_blocks(folds);
        let gamma = BlockGamma::shared(blocks, gpred).unwrap();
        let num_np = pair_sum(
            &|i: usize, j: usize| {
                let l = gamma.block_of(i, j);
                sgn(gamma.gamma(l, i) - gamma.gamma(l, j)) * (y[i] - y[j])
            },
            n,
        )
        .unwrap();
        let num_classic = pair_sum(&|i: usize, j: usize| (y[i] - y[j]).abs(), n).unwrap();
        assert_eq!(num_np.to_bits(), num_classic.to_bits());
        let theta = iop_gini_debiased_np_point(&y, &gamma).unwrap();
        assert_eq!(theta.to_bits(), gini_classic(&y).unwrap().to_bits());
    }

    #[test]
    fn np_point_constant_gamma_is_zero() {
        let y = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
        let folds = crate::crossfit::make_folds(6, 3, 1).unwrap();
        let gamma = BlockGamma::shared(make_pair_blocks(folds), vec![2.0; 6]).unwrap();
        assert_eq!(iop_gini_debiased_np_point(&y, &gamma).unwrap(), 0.0);
    }

    #[test]
    fn np_point_reversed_ordering_is_negative() {
        let y = vec![1.0, 2.0, 3.0];
        let folds = crate::crossfit::FoldPartition::from_assignment(vec![0, 1, 2], 3).unwrap();
        let gamma =
            BlockGamma::shared(make_pair_blocks(folds), vec![3.0, 2.0, 1.0]).unwrap();
        let theta = iop_gini_debiased_np_point(&y, &gamma).unwrap();
        assert!((theta + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn plugin_constant_fit_is_zero_and_saturated_fit_matches_classic() {
        let y: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let data = dataset_xy(y.clone(), y.clone());
        let constant = iop_gini_plugin(&data, &LearnerSpec::fixed(1.5), None).unwrap();
        assert_eq!(constant.theta, 0.0);
        assert!(constant.diagnostics.degenerate);
        assert!(constant.diagnostics.plugin_se_invalid);

        let exact = iop_gini_plugin(&data, &LearnerSpec::ridge(0.0), None).unwrap();
        let classic = gini_classic(&y).unwrap();
        assert!((exact.theta - classic).abs() < 1e-10);
    }

    #[test]
    fn debiased_np_full_pipeline_order_preserving() {
        // x carries the outcome exactly, so every block fit is strictly
        // order-preserving and the estimator equals the classic Gini
        let n = 60;
        let y: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let data = dataset_xy(y.clone(), y.clone());
        let folds = crate::crossfit::make_folds(n, 3, 11).unwrap();
        let res = iop_gini_debiased_np(&data, &LearnerSpec::ridge(0.0), &folds).unwrap();
        let classic = gini_classic(&y).unwrap();
        assert!(
            (res.theta - classic).abs() <= 1e-12 * classic,
            "{} vs {classic}",
            res.theta
        );
        assert!(!res.diagnostics.negative_iop);
        assert!(res.se > 0.0);
        assert!(res.ci_low <= res.theta && res.theta <= res.ci_high);
    }

    #[test]
    fn debiased_np_constant_learner_flags_degenerate() {
        let n = 30;
        let y: Vec<f64> = (1..=n).map(|i| 1.0 + (i % 7) as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.77).sin()).collect();
        let data = dataset_xy(y, x);
        let folds = crate::crossfit::make_folds(n, 3, 5).unwrap();
        let res = iop_gini_debiased_np(&data, &LearnerSpec::fixed(2.0), &folds).unwrap();
        assert_eq!(res.theta, 0.0);
        assert_eq!(res.se, 0.0);
        assert!(res.diagnostics.degenerate);
        assert_eq!(res.diagnostics.tie_fraction, Some(1.0));
    }

    #[test]
    fn general_with_pairwise_alpha_equals_np_form() {
        let n = 48;
        let mut rng = crate::rng::Rng::from_seed(9);
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 1.3).exp() + rng.f64()).collect();
        let data = dataset_xy(y, x);
        let folds = crate::crossfit::make_folds(n, 4, 2).unwrap();
        let spec = LearnerSpec::ridge(0.1);
        let np = iop_gini_debiased_np(&data, &spec, &folds).unwrap();
        let general = iop_gini_debiased_general(
            &data,
            &spec,
            &LearnerSpec::ridge(0.1),
            &folds,
            AlphaKind::PairwiseDelta,
        )
        .unwrap();
        let tol = 1e-12 * np.theta.abs().max(1.0);
        assert!((np.theta - general.theta).abs() <= tol, "{} vs {}", np.theta, general.theta);
        assert!((np.se - general.se).abs() <= 1e-12 * np.se.max(1e-30));
    }

    #[test]
    fn general_with_zero_alpha_is_crossfit_plugin_ratio() {
        // alpha == 0 kills the correction term: the numerator collapses to
        // the cross-fitted plug-in numerator sum |gamma_l(i) - gamma_l(j)|
        // over the Y denominator; with an order-preserving exact fit that
        // is the classic Gini of y
        let n = 45;
        let y: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let data = dataset_xy(y.clone(), y.clone());
        let folds = crate::crossfit::make_folds(n, 3, 6).unwrap();
        let res = iop_gini_debiased_general(
            &data,
            &LearnerSpec::ridge(0.0),
            &LearnerSpec::fixed(0.0),
            &folds,
            AlphaKind::Additive,
        )
        .unwrap();
        let classic = gini_classic(&y).unwrap();
        assert!(
            (res.theta - classic).abs() <= 1e-10 * classic,
            "{} vs {classic}",
            res.theta
        );
    }

    #[test]
    fn scale_equivariance_of_debiased_np() {
        // scaling Y by a power of two leaves theta and se bit-identical
        let n = 40;
        let mut rng = crate::rng::Rng::from_seed(21);
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let y: Vec<f64> = x.iter().map(|v| 5.0 + v + 0.3 * rng.normal()).collect();
        let folds = crate::crossfit::make_folds(n, 4, 7).unwrap();
        let spec = LearnerSpec::ridge(0.0);
        let base = iop_gini_debiased_np(&dataset_xy(y.clone(), x.clone()), &spec, &folds).unwrap();
        let scaled_y: Vec<f64> = y.iter().map(|v| 4.0 * v).collect();
        let scaled =
            iop_gini_debiased_np(&dataset_xy(scaled_y, x.clone()), &spec, &folds).unwrap();
        assert_eq!(base.theta.to_bits(), scaled.theta.to_bits());
        assert_eq!(base.se.to_bits(), scaled.se.to_bits());

        // non-dyadic scaling agrees to 1e-12 relative
        let y3: Vec<f64> = y.iter().map(|v| 3.0 * v).collect();
        let s3 = iop_gini_debiased_np(&dataset_xy(y3, x), &spec, &folds).unwrap();
        assert!((base.theta - s3.theta).abs() <= 1e-12 * base.theta.abs());
        assert!((base.se - s3.se).abs() <= 1e-12 * base.se);
    }
}
