//! Debiased (locally robust) estimation of semiparametric U-statistics with
//! machine-learning first steps.
//!
//! Many pairwise parameters — the Gini of fitted values used to measure
//! inequality of opportunity, the variance of fitted values, the optimal
//! bipartite ranking risk, distributional treatment-effect contrasts — are
//! naturally estimated by plugging a learned regression γ̂ into a
//! U-statistic. Plug-in versions inherit the learner's regularization and
//! model-selection bias; the estimators here add the pair-moment correction
//! that makes the moment locally robust to the first step, train first
//! steps on pair-block cross-fitting partitions, and report U-statistic
//! standard errors from a Hájek-projection variance formula.
//!
//! The headline estimator is the debiased Gini of fitted values,
//!
//! ```text
//! θ̂ = Σ_{i<j} sgn(γ̂(X_i) − γ̂(X_j)) (Y_i − Y_j) / Σ_{i<j} (Y_i + Y_j),
//! ```
//!
//! the standard Gini with the sign of outcome differences replaced by the
//! sign of fitted-value differences, evaluated with cross-fitted γ̂.
//!
//! ## Quick start
//!
//! ```rust
//! use debiased_ustat::crossfit::make_folds;
//! use debiased_ustat::estimators::iop_gini_debiased_np;
//! use debiased_ustat::learners::LearnerSpec;
//! use debiased_ustat::simulate::gen_saturated;
//!
//! let data = gen_saturated(200, 0.1, 7).unwrap();
//! let folds = make_folds(data.n(), 5, 42).unwrap();
//! let learner = LearnerSpec::random_forest(1);
//! let estimate = iop_gini_debiased_np(&data, &learner, &folds).unwrap();
//! assert!(estimate.se > 0.0);
//! println!("{}", estimate.text_report());
//! ```
//!
//! ## Examples
//!
//! One runnable example per capability, under `examples/`:
//!
//! - **`iop_gini`** — debiased vs. plug-in Gini inequality of opportunity.
//! - **`variance_of_fitted_values`** — the pair-moment correction for the
//!   variance of fitted values.
//! - **`cross_fitting`** — the K-fold pair-block partition, training sets
//!   and pair-of-pair counts.
//! - **`first_step_learners`** — ridge, CV-tuned lasso with a KKT
//!   certificate, and the random forest.
//! - **`ranking_risk`** — the optimal bipartite ranking risk.
//! - **`treatment_contrast`** — ATE and superiority-probability contrasts
//!   under confounded assignment.
//! - **`monte_carlo`** — a desk-scale bias/coverage cell.
//! - **`orthogonality_probe`** — finite-difference slopes of ψ versus g.
//! - **`csv_workflow`** — CSV round trip and estimation from a file.
//!
//! ```bash
//! cargo run --release --example iop_gini
//! ```
//!
//! A thin binary, `dustat`, drives the same pipelines from the command line
//! with `estimate`, `simulate` and `folds` subcommands.
//!
//! ## Module map
//!
//! - [`data`] — validated samples, CSV ingestion, dummy expansion.
//! - [`crossfit`] — fold partitions, pair blocks, training sets, κ counts.
//! - [`learners`] — ridge / lasso / random forest first steps.
//! - [`ustat`] — pair-kernel means, leave-one-out sums, Σ̂, degeneracy.
//! - [`estimators`] — the four applications with standard errors.
//! - [`simulate`] — data-generating processes and the Monte Carlo harness.
//! - [`cli`] — the `dustat` command implementations.
//!
//! Estimates are deterministic given (data, learner spec, folds, seed),
//! regardless of thread count.

pub mod cli;
pub mod crossfit;
pub mod data;
pub mod error;
pub mod estimators;
pub mod learners;
pub mod mat;
pub mod rng;
pub mod simulate;
pub mod ustat;

pub use error::{Error, Result};
