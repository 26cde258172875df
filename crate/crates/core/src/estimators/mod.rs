//! Plug-in and debiased estimators with U-statistic standard errors for the
//! four applications: variance of fitted values, Gini inequality of
//! opportunity, bipartite ranking risk and treatment-effect contrasts.
//!
//! Debiased estimators evaluate their orthogonal pair moment over the
//! pair-block partition, with first steps trained on each block's held-out
//! observations. Variance estimation never uses cross-fitting: it refits the
//! first steps once on the full sample and applies the Hájek-projection
//! formula Σ̂ = 4/(n(n-1)²) Σ_i [Σ_{j≠i} ψ̂_ij]² with V̂ = B̂⁻¹ Σ̂ B̂⁻¹.

mod gini;
mod ortho;
mod ranking;
mod treatment;
mod varfv;

pub use gini::{
    gini_classic, iop_gini_debiased_general, iop_gini_debiased_np, iop_gini_debiased_np_point,
    iop_gini_plugin, iop_gini_se,
};
pub use ortho::{orthogonality_check, Estimand, OrthoReport};
pub use ranking::ranking_risk_debiased;
pub use treatment::{contrast_te_debiased, PROPENSITY_CLAMP};
pub use varfv::{varfv_debiased, varfv_debiased_point, varfv_plugin};

use serde::{Deserialize, Serialize};

use crate::crossfit::{FoldPartition, PairBlocks};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{self, FittedModel, LearnerSpec, Penalty};
use crate::ustat::kahan_sum;

/// How an estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Plugin,
    DebiasedNp,
    DebiasedGeneral,
}

/// Which α̂ enters the general debiased estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaKind {
    /// α̂ = δ(·, γ̂): the joint nonparametric plug.
    PairwiseDelta,
    /// α̂(x_i, x_j) = α̂01(x_i) + α̂02(x_j) − E_n[δ], each component a
    /// learner fit to leave-one-out δ averages over training pairs.
    Additive,
}

/// The additive-α̂ representation kept for full-sample variance evaluation.
#[derive(Debug, Clone)]
pub enum AlphaModel {
    PairwiseDelta,
    Additive { a1: FittedModel, a2: FittedModel, mean_delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    /// Σ̂ is numerically degenerate; the CI is unreliable.
    pub degenerate: bool,
    /// The debiased IOp estimate came out negative (reported verbatim).
    pub negative_iop: bool,
    /// Plug-in standard errors ignore the first step and are not valid for
    /// inference.
    pub plugin_se_invalid: bool,
    /// Level-scale RMSE of the full-sample first-step refit.
    pub first_stage_rmse: f64,
    /// Share of pairs with exactly tied fitted values (sgn = 0).
    pub tie_fraction: Option<f64>,
}

/// Point estimate, standard error and confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResult {
    pub schema_version: u32,
    pub estimand: String,
    pub method: Method,
    pub theta: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub n: usize,
    pub k_folds: Option<usize>,
    pub learner: serde_json::Value,
    pub diagnostics: Diagnostics,
}

impl EstimateResult {
    pub(crate) fn build(
        estimand: &str,
        method: Method,
        theta: f64,
        se: f64,
        level: f64,
        n: usize,
        k_folds: Option<usize>,
        learner: serde_json::Value,
        diagnostics: Diagnostics,
    ) -> Self {
        let z = normal_quantile(0.5 + level / 2.0);
        EstimateResult {
            schema_version: 1,
            estimand: estimand.to_string(),
            method,
            theta,
            se,
            ci_low: theta - z * se,
            ci_high: theta + z * se,
            level,
            n,
            k_folds,
            learner,
            diagnostics,
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }

    /// Rebuilds the confidence interval at a different level.
    pub fn at_level(mut self, level: f64) -> Self {
        let z = normal_quantile(0.5 + level / 2.0);
        self.level = level;
        self.ci_low = self.theta - z * self.se;
        self.ci_high = self.theta + z * self.se;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }

    pub fn csv_header() -> &'static str {
        "schema_version,estimand,method,theta,se,ci_low,ci_high,level,n,k_folds,degenerate,negative_iop,plugin_se_invalid,first_stage_rmse,tie_fraction"
    }

    pub fn to_csv_row(&self) -> String {
        let method = match self.method {
            Method::Plugin => "plugin",
            Method::DebiasedNp => "debiased_np",
            Method::DebiasedGeneral => "debiased_general",
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.schema_version,
            self.estimand,
            method,
            self.theta,
            self.se,
            self.ci_low,
            self.ci_high,
            self.level,
            self.n,
            self.k_folds.map_or(String::new(), |k| k.to_string()),
            self.diagnostics.degenerate,
            self.diagnostics.negative_iop,
            self.diagnostics.plugin_se_invalid,
            self.diagnostics.first_stage_rmse,
            self.diagnostics.tie_fraction.map_or(String::new(), |t| t.to_string()),
        )
    }

    /// Aligned plain-text report.
    pub fn text_report(&self) -> String {
        let method = match self.method {
            Method::Plugin => "plug-in",
            Method::DebiasedNp => "debiased (joint NP)",
            Method::DebiasedGeneral => "debiased (general)",
        };
        let mut s = String::new();
        s.push_str(&format!("estimand        {}\n", self.estimand));
        s.push_str(&format!("method          {}\n", method));
        s.push_str(&format!("n               {}\n", self.n));
        if let Some(k) = self.k_folds {
            s.push_str(&format!("folds           {k}\n"));
        }
        s.push_str(&format!("theta           {:.6}\n", self.theta));
        s.push_str(&format!("se              {:.6}\n", self.se));
        s.push_str(&format!(
            "{:.0}% CI          [{:.6}, {:.6}]\n",
            self.level * 100.0,
            self.ci_low,
            self.ci_high
        ));
        s.push_str(&format!(
            "first-step RMSE {:.6}\n",
            self.diagnostics.first_stage_rmse
        ));
        if let Some(t) = self.diagnostics.tie_fraction {
            s.push_str(&format!("tied pairs      {:.4}\n", t));
        }
        if self.diagnostics.plugin_se_invalid {
            s.push_str("warning         plug-in SE ignores the first step and is invalid for inference\n");
        }
        if self.diagnostics.degenerate {
            s.push_str("warning         orthogonal moment is numerically degenerate; CI unreliable\n");
        }
        if self.diagnostics.negative_iop {
            s.push_str("warning         negative IOp estimate reported verbatim\n");
        }
        s
    }
}

/// Φ⁻¹(p) by Wichura's AS 241 (PPND16), accurate to double precision.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(
            r,
            &[
                3.387_132_872_796_366_5e3,
                1.331_416_678_917_843_8e5,
                1.971_590_950_306_551_3e6,
                1.373_716_968_717_112_4e7,
                4.592_195_393_154_987e7,
                6.726_577_092_700_87e7,
                3.343_057_558_358_813e7,
                2.509_080_928_730_122_7e6,
            ],
        ) / poly(
            r,
            &[
                1.0,
                4.231_333_070_160_091e4,
                6.871_870_074_920_579e5,
                5.394_196_021_424_751e6,
                2.121_379_430_415_576e7,
                3.930_789_580_009_271e7,
                2.872_908_573_572_194_3e7,
                5.226_495_278_852_545_5e6,
            ],
        );
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        poly(
            r,
            &[
                1.423_437_110_749_683_5,
                4.630_337_846_156_546,
                5.769_497_221_460_691,
                3.647_848_324_763_204_5,
                1.270_458_252_452_368_4,
                2.417_807_251_774_506e-1,
                2.272_384_498_926_918_4e-2,
                7.745_450_142_783_414e-4,
            ],
        ) / poly(
            r,
            &[
                1.0,
                2.053_191_626_637_759,
                1.676_384_830_183_803_8,
                6.897_673_349_851e-1,
                1.481_039_764_274_800_8e-1,
                1.519_866_656_361_645_7e-2,
                5.475_938_084_995_345e-4,
                1.050_750_071_644_416_9e-9,
            ],
        )
    } else {
        r -= 5.0;
        poly(
            r,
            &[
                6.657_904_643_501_103,
                5.463_784_911_164_114,
                1.784_826_539_917_291_3,
                2.965_605_718_285_048_7e-1,
                2.653_218_952_657_612_4e-2,
                1.242_660_947_388_078_4e-3,
                2.711_555_568_743_487_6e-5,
                2.010_334_399_292_288_1e-7,
            ],
        ) / poly(
            r,
            &[
                1.0,
                5.998_322_065_558_88e-1,
                1.369_298_809_227_358e-1,
                1.487_536_129_085_061_5e-2,
                7.868_691_311_456_133e-4,
                1.846_318_317_510_054_8e-5,
                1.421_511_758_316_446e-7,
                2.044_263_103_389_939_7e-15,
            ],
        )
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn poly(x: f64, coefs: &[f64]) -> f64 {
    coefs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Σ_{i<j} (y_i + y_j) = (n-1) Σ_i y_i.
pub(crate) fn pair_outcome_sum(y: &[f64]) -> f64 {
    (y.len() as f64 - 1.0) * kahan_sum(y.iter().copied())
}

#[inline]
pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Cross-fitted first-step predictions: one prediction vector per pair
/// block, each trained on the block's held-out observations. The `shared`
/// constructor evaluates one external model for every block, which is the
/// bridge for bring-your-own-first-step use and for oracle tests.
#[derive(Debug, Clone)]
pub struct BlockGamma {
    blocks: PairBlocks,
    preds: Vec<Vec<f64>>,
    models: Vec<FittedModel>,
}

impl BlockGamma {
    pub fn shared(blocks: PairBlocks, preds: Vec<f64>) -> Result<Self> {
        if preds.len() != blocks.n() {
            return Err(Error::config("prediction vector length must equal n"));
        }
        let l = blocks.len();
        Ok(BlockGamma { blocks, preds: vec![preds; l], models: Vec::new() })
    }

    pub fn blocks(&self) -> &PairBlocks {
        &self.blocks
    }

    pub fn models(&self) -> &[FittedModel] {
        &self.models
    }

    #[inline]
    pub fn block_of(&self, i: usize, j: usize) -> usize {
        self.blocks.block_of(i, j)
    }

    /// γ̂_l(X_i): the block-l prediction for observation i.
    #[inline]
    pub fn gamma(&self, l: usize, i: usize) -> f64 {
        self.preds[l][i]
    }

    pub fn block_preds(&self, l: usize) -> &[f64] {
        &self.preds[l]
    }
}

/// Resolves a CV penalty once on the full sample so block refits share the
/// chosen λ; other specs pass through unchanged.
pub(crate) fn resolve_spec(spec: &LearnerSpec, data: &Dataset, y: &[f64]) -> Result<LearnerSpec> {
    match (&spec.kind, &spec.penalty) {
        (crate::learners::LearnerKind::Ridge | crate::learners::LearnerKind::Lasso, Penalty::Cv { .. }) => {
            let report = learners::cv_tune(spec, data.x(), data.col_meta(), y)?;
            let mut resolved = spec.clone();
            resolved.penalty = Penalty::Fixed(report.chosen);
            Ok(resolved)
        }
        _ => Ok(spec.clone()),
    }
}

/// Fits one first step per pair block on its held-out training set and
/// evaluates each on every observation.
pub(crate) fn fit_block_gamma(
    data: &Dataset,
    spec: &LearnerSpec,
    folds: &FoldPartition,
    outcome: &[f64],
) -> Result<BlockGamma> {
    if folds.n() != data.n() {
        return Err(Error::config(format!(
            "fold partition covers {} observations but the data has {}",
            folds.n(),
            data.n()
        )));
    }
    if folds.k() < 3 {
        return Err(Error::config(
            "pair-block cross-fitting needs K >= 3 so every block has held-out training data",
        ));
    }
    let blocks = crate::crossfit::make_pair_blocks(folds.clone());
    let resolved = resolve_spec(spec, data, outcome)?;
    use rayon::prelude::*;
    let fitted: Vec<Result<(FittedModel, Vec<f64>)>> = (0..blocks.len())
        .into_par_iter()
        .map(|l| {
            let train = blocks.training_indices(l)?;
            let x_tr = data.x().select_rows(&train);
            let y_tr: Vec<f64> = train.iter().map(|&i| outcome[i]).collect();
            let model = learners::fit(&resolved, &x_tr, data.col_meta(), &y_tr)?;
            let preds = learners::predict(&model, data.x())?;
            Ok((model, preds))
        })
        .collect();
    let mut preds = Vec::with_capacity(blocks.len());
    let mut models = Vec::with_capacity(blocks.len());
    for f in fitted {
        let (m, p) = f?;
        models.push(m);
        preds.push(p);
    }
    Ok(BlockGamma { blocks, preds, models })
}

/// Fitted values of a full-sample refit on its own training rows. Forests
/// report out-of-bag fitted values (the standard honest fitted value of a
/// single forest fit); other learners report ordinary fitted values.
pub(crate) fn refit_values(model: &FittedModel, data: &Dataset) -> Result<Vec<f64>> {
    match model {
        FittedModel::Forest(f) => Ok((0..data.n())
            .map(|i| {
                let raw = f.oob_transform_value(i, data.x().row(i));
                match f.transform {
                    crate::data::OutcomeTransform::None => raw,
                    crate::data::OutcomeTransform::LogExp => raw.exp(),
                }
            })
            .collect()),
        _ => learners::predict(model, data.x()),
    }
}

/// Level-scale RMSE of fitted values against the outcome.
pub(crate) fn rmse_from(preds: &[f64], y: &[f64]) -> f64 {
    let sse: f64 = preds.iter().zip(y).map(|(p, v)| (p - v) * (p - v)).sum();
    (sse / y.len() as f64).sqrt()
}

/// Full-sample refit used by every variance estimator.
pub(crate) fn fit_full(
    data: &Dataset,
    spec: &LearnerSpec,
    outcome: &[f64],
) -> Result<(FittedModel, Vec<f64>)> {
    let resolved = resolve_spec(spec, data, outcome)?;
    let model = learners::fit(&resolved, data.x(), data.col_meta(), outcome)?;
    let preds = refit_values(&model, data)?;
    Ok((model, preds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantile_reference_values() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((normal_quantile(0.5)).abs() < 1e-15);
        assert!((normal_quantile(0.995) - 2.5758293035489004).abs() < 1e-12);
        assert!((normal_quantile(0.025) + 1.959963984540054).abs() < 1e-12);
    }

    #[test]
    fn pair_outcome_sum_matches_pairwise_definition() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(pair_outcome_sum(&y), 12.0);
    }

    #[test]
    fn estimate_result_json_round_trip() {
        let r = EstimateResult::build(
            "iop_gini",
            Method::DebiasedNp,
            0.18,
            0.01,
            0.95,
            100,
            Some(5),
            serde_json::json!({"kind": "lasso"}),
            Diagnostics::default(),
        );
        let s = r.to_json();
        let back: EstimateResult = serde_json::from_str(&s).unwrap();
        assert_eq!(back.theta, r.theta);
        assert_eq!(back.ci_low, r.ci_low);
        assert_eq!(back.schema_version, 1);
        assert!(r.ci_low <= r.theta && r.theta <= r.ci_high);
    }
}
