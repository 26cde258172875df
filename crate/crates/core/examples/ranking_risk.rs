//! Optimal bipartite ranking risk with binary labels: the debiased
//! estimator recovers P(ranking mistake) of the oracle ranking rule.
//!
//! Run with: cargo run --release --example ranking_risk

use debiased_ustat::crossfit::make_folds;
use debiased_ustat::data::{ColKind, Dataset};
use debiased_ustat::estimators::ranking_risk_debiased;
use debiased_ustat::learners::LearnerSpec;
use debiased_ustat::mat::Matrix;
use debiased_ustat::rng::Rng;

fn main() -> debiased_ustat::Result<()> {
    let mut rng = Rng::from_seed(11);
    let n = 1200;
    // gamma_0(x) = logistic(2x): labels are noisier near x = 0
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.normal()]).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| {
            let p = 1.0 / (1.0 + (-2.0 * r[0]).exp());
            if rng.f64() < p {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let x = Matrix::from_rows(rows)?;
    let data = Dataset::new(y, x, None, vec![ColKind::Continuous])?;

    // Monte Carlo value of the optimal risk for this design
    let mut acc = 0.0;
    let draws = 200_000;
    for _ in 0..draws {
        let (a, b) = (rng.normal(), rng.normal());
        let (pa, pb) = (
            1.0 / (1.0 + (-2.0 * a).exp()),
            1.0 / (1.0 + (-2.0 * b).exp()),
        );
        acc += pa * (1.0 - pb) + pb * (1.0 - pa) - (pa - pb).abs();
    }
    let truth = acc / (2.0 * draws as f64);
    println!("optimal ranking risk (Monte Carlo): {truth:.4}\n");

    let folds = make_folds(n, 5, 42)?;
    let result = ranking_risk_debiased(&data, &LearnerSpec::random_forest(3), &folds)?;
    print!("{}", result.text_report());
    println!("\nerror {:+.4}, CI covers truth: {}", result.theta - truth, result.covers(truth));
    Ok(())
}
