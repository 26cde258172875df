//! Variance of fitted values under a linear Gaussian design: the plug-in
//! pairwise estimator inherits the first step's regularization bias, the
//! debiased pair moment removes it.
//!
//! Run with: cargo run --release --example variance_of_fitted_values

use debiased_ustat::crossfit::make_folds;
use debiased_ustat::estimators::{varfv_debiased, varfv_plugin};
use debiased_ustat::learners::LearnerSpec;
use debiased_ustat::simulate::gen_linear_gaussian;

fn main() -> debiased_ustat::Result<()> {
    let n = 1000;
    let (data, truth) = gen_linear_gaussian(n, 3)?;
    println!("truth (variance of the population fitted values): {truth:.4}\n");

    let rf = LearnerSpec::random_forest(1);

    let plugin = varfv_plugin(&data, &rf)?;
    println!("--- plug-in ---");
    print!("{}", plugin.text_report());

    let folds = make_folds(n, 5, 42)?;
    let debiased = varfv_debiased(&data, &rf, &folds)?;
    println!("\n--- debiased ---");
    print!("{}", debiased.text_report());

    println!("\nplug-in error   {:+.4}", plugin.theta - truth);
    println!("debiased error  {:+.4}", debiased.theta - truth);
    Ok(())
}
