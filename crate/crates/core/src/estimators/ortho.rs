//! Finite-difference orthogonality probe: perturb the first step as
//! γ̂ + ε·direction and compare the slope of the orthogonal moment mean ψ̄
//! against the slope of the identifying moment mean ḡ. Local robustness
//! means |slope(ψ)| stays far below |slope(g)|.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{self, FittedModel};
use crate::ustat::{pair_sum, u_mean};

use super::{pair_outcome_sum, sgn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimand {
    Varfv,
    Iop,
    Ranking,
}

#[derive(Debug, Clone)]
pub struct OrthoReport {
    pub estimand: Estimand,
    pub theta: f64,
    pub eps: Vec<f64>,
    pub psi_slopes: Vec<f64>,
    pub g_slopes: Vec<f64>,
}

impl OrthoReport {
    /// max over the grid of |slope ψ| / |slope g|.
    pub fn max_ratio(&self) -> f64 {
        self.psi_slopes
            .iter()
            .zip(&self.g_slopes)
            .map(|(p, g)| p.abs() / g.abs())
            .fold(0.0, f64::max)
    }
}

fn psi_mean(estimand: Estimand, y: &[f64], v: &[f64], theta: f64) -> Result<f64> {
    let n = y.len();
    match estimand {
        Estimand::Varfv => Ok(u_mean(
            &|i: usize, j: usize| {
                let d = v[i] - v[j];
                d * (y[i] - y[j] - d / 2.0)
            },
            n,
        )? - theta),
        Estimand::Iop => {
            let den = pair_outcome_sum(y);
            let num = pair_sum(
                &|i: usize, j: usize| sgn(v[i] - v[j]) * (y[i] - y[j]),
                n,
            )?;
            // mean of psi scaled by C(n,2): theta*(y_i+y_j) - sgn(.)(y_i-y_j)
            Ok((theta * den - num) / (n as f64 * (n as f64 - 1.0) / 2.0))
        }
        Estimand::Ranking => Ok(u_mean(
            &|i: usize, j: usize| {
                let d = sgn(v[i].clamp(0.0, 1.0) - v[j].clamp(0.0, 1.0));
                let yd = y[i] - y[j];
                0.5 * yd * (yd - d)
            },
            n,
        )? - theta),
    }
}

fn g_mean(estimand: Estimand, y: &[f64], v: &[f64], theta: f64) -> Result<f64> {
    let n = y.len();
    match estimand {
        Estimand::Varfv => Ok(u_mean(
            &|i: usize, j: usize| {
                let d = v[i] - v[j];
                d * d / 2.0
            },
            n,
        )? - theta),
        Estimand::Iop => Ok(u_mean(
            &|i: usize, j: usize| theta * (v[i] + v[j]) - (v[i] - v[j]).abs(),
            n,
        )?),
        Estimand::Ranking => Ok(u_mean(
            &|i: usize, j: usize| {
                let yd = y[i] - y[j];
                0.5 * (yd * yd - (v[i].clamp(0.0, 1.0) - v[j].clamp(0.0, 1.0)).abs())
            },
            n,
        )? - theta),
    }
}

fn solve_theta(estimand: Estimand, y: &[f64], v: &[f64]) -> Result<f64> {
    let n = y.len();
    match estimand {
        Estimand::Varfv => u_mean(
            &|i: usize, j: usize| {
                let d = v[i] - v[j];
                d * (y[i] - y[j] - d / 2.0)
            },
            n,
        ),
        Estimand::Iop => {
            let den = pair_outcome_sum(y);
            if den <= 0.0 {
                return Err(Error::data("Gini denominator nonpositive"));
            }
            let num = pair_sum(
                &|i: usize, j: usize| sgn(v[i] - v[j]) * (y[i] - y[j]),
                n,
            )?;
            Ok(num / den)
        }
        Estimand::Ranking => Ok(u_mean(
            &|i: usize, j: usize| {
                let d = sgn(v[i].clamp(0.0, 1.0) - v[j].clamp(0.0, 1.0));
                let yd = y[i] - y[j];
                yd * (yd - d)
            },
            n,
        )? / 2.0),
    }
}

/// Evaluates the empirical ψ and g means at γ̂ + ε·direction for each ε and
/// reports the finite-difference slopes (m(ε) − m(0)) / ε.
pub fn orthogonality_check(
    estimand: Estimand,
    data: &Dataset,
    gamma: &FittedModel,
    direction: &[f64],
    eps_grid: &[f64],
) -> Result<OrthoReport> {
    let n = data.n();
    if direction.len() != n {
        return Err(Error::config("direction must supply one value per observation"));
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|e| *e == 0.0 || !e.is_finite()) {
        return Err(Error::config("eps grid must be non-empty and nonzero"));
    }
    let y = data.y();
    let v0 = learners::predict(gamma, data.x())?;
    let theta = solve_theta(estimand, y, &v0)?;
    let psi0 = psi_mean(estimand, y, &v0, theta)?;
    let g0 = g_mean(estimand, y, &v0, theta)?;
    let mut psi_slopes = Vec::with_capacity(eps_grid.len());
    let mut g_slopes = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let v: Vec<f64> = v0.iter().zip(direction).map(|(a, d)| a + eps * d).collect();
        psi_slopes.push((psi_mean(estimand, y, &v, theta)? - psi0) / eps);
        g_slopes.push((g_mean(estimand, y, &v, theta)? - g0) / eps);
    }
    Ok(OrthoReport { estimand, theta, eps: eps_grid.to_vec(), psi_slopes, g_slopes })
}
