//! Round-tripping a sample through CSV and estimating from the file, the
//! same path the `dustat` binary drives.
//!
//! Run with: cargo run --release --example csv_workflow

use debiased_ustat::crossfit::make_folds;
use debiased_ustat::data::{load_csv, validate_for_iop, OutcomeTransform};
use debiased_ustat::estimators::iop_gini_debiased_np;
use debiased_ustat::learners::LearnerSpec;
use debiased_ustat::simulate::gen_saturated;

fn main() -> debiased_ustat::Result<()> {
    let path = std::env::temp_dir().join("dustat_example_sample.csv");
    gen_saturated(600, 0.1, 5)?.write_csv(&path)?;
    println!("wrote {}", path.display());

    let covs: Vec<String> = vec!["x1".into(), "x2".into(), "x3".into()];
    let data = load_csv(&path, "y", None, &covs, &covs)?;
    println!("loaded n = {}, p = {}", data.n(), data.p());
    for w in validate_for_iop(&data)? {
        println!("warning: {w}");
    }

    let learner = LearnerSpec::random_forest(1).with_transform(OutcomeTransform::LogExp);
    let folds = make_folds(data.n(), 5, 42)?;
    let result = iop_gini_debiased_np(&data, &learner, &folds)?;
    print!("{}", result.text_report());
    println!("\nJSON document:\n{}", result.to_json());

    std::fs::remove_file(&path).ok();
    Ok(())
}
