//! A desk-scale Monte Carlo cell: bias and coverage of the debiased IOp
//! estimator against the enumerated population truth.
//!
//! Run with: cargo run --release --example monte_carlo

use debiased_ustat::data::OutcomeTransform;
use debiased_ustat::learners::LearnerSpec;
use debiased_ustat::simulate::{run_mc, DgpSpec, McConfig, McEstimator, McReport};

fn main() -> debiased_ustat::Result<()> {
    let base = McConfig {
        dgp: DgpSpec::SaturatedCategorical { sigma: 0.1 },
        n: 500,
        reps: 40,
        estimator: McEstimator::IopDebiased,
        learner: LearnerSpec::lasso_cv(10).with_transform(OutcomeTransform::LogExp),
        k: 5,
        level: 0.95,
        seed: 42,
    };
    println!("debiased lasso, n = {}, {} replications:", base.n, base.reps);
    let debiased = run_mc(&base)?;
    print!("{}", debiased.text_table());

    let plugin = run_mc(&McConfig { estimator: McEstimator::IopPlugin, ..base })?;
    println!("\nplug-in lasso, same draws:");
    print!("{}", plugin.text_table());

    println!("\nCSV rows:");
    println!("{}", McReport::csv_header());
    println!("{}", debiased.to_csv_row());
    println!("{}", plugin.to_csv_row());
    Ok(())
}
