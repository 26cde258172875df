//! The native first-step learners: ridge, lasso (with CV tuning and a KKT
//! certificate) and a random forest.
//!
//! Run with: cargo run --release --example first_step_learners

use debiased_ustat::data::ColKind;
use debiased_ustat::learners::{self, FittedModel, LearnerSpec};
use debiased_ustat::mat::Matrix;
use debiased_ustat::rng::Rng;

fn main() -> debiased_ustat::Result<()> {
    let mut rng = Rng::from_seed(5);
    let n = 300;
    let p = 12;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.normal()).collect()).collect();
    // sparse truth: only three active coefficients
    let y: Vec<f64> = rows
        .iter()
        .map(|r| 2.0 * r[0] - 1.5 * r[3] + 0.8 * r[7] + 0.5 * rng.normal())
        .collect();
    let x = Matrix::from_rows(rows)?;
    let kinds = vec![ColKind::Continuous; p];

    let ridge = learners::fit(&LearnerSpec::ridge(1.0), &x, &kinds, &y)?;
    println!("ridge(λ=1): in-sample RMSE {:.3}", learners::rmse(&ridge, &x, &y)?);

    let lasso = learners::fit(&LearnerSpec::lasso_cv(10), &x, &kinds, &y)?;
    if let Some(cv) = lasso.cv_report() {
        println!(
            "lasso CV: {} candidate penalties, chosen λ = {:.4}",
            cv.grid.len(),
            cv.chosen
        );
    }
    if let FittedModel::Linear { model, .. } = &lasso {
        let nonzero: Vec<usize> = model
            .coefs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, _)| j)
            .collect();
        println!("lasso support: {nonzero:?} (truth: [0, 3, 7])");
        let viol = learners::kkt_violation(model, &x, &y)?;
        println!("lasso KKT violation: {viol:.2e} (contract: <= 1e-6)");
    }
    println!("lasso in-sample RMSE {:.3}", learners::rmse(&lasso, &x, &y)?);

    let forest = learners::fit(&LearnerSpec::random_forest(9), &x, &kinds, &y)?;
    println!("forest in-sample RMSE {:.3}", learners::rmse(&forest, &x, &y)?);
    let preds = learners::predict(&forest, &x)?;
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "forest predictions stay inside the training range: {}",
        preds.iter().all(|p| *p >= lo && *p <= hi)
    );
    Ok(())
}
