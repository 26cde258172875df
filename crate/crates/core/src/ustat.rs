//! Generic U-statistic engine: pairwise kernel means, leave-one-out sums and
//! the variance building block Σ̂ = 4/(n(n-1)²) Σ_i [Σ_{j≠i} ψ_ij]².
//!
//! Kernels are evaluated lazily from indices; no n×n matrix is ever formed.
//! All reductions use compensated summation with a fixed chunked reduction
//! tree, so results are identical regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Rng;

const CHUNK: usize = 256;

/// Compensated (Kahan) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Kahan::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum
    }
}

/// Kahan sum of an iterator.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Kahan::new();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

/// A pair evaluation rule k(i, j) defined for i != j.
pub trait PairKernel: Sync {
    fn eval(&self, i: usize, j: usize) -> f64;

    /// Whether k(i,j) = k(j,i) is promised by the caller.
    fn is_symmetric(&self) -> bool {
        true
    }
}

impl<F: Fn(usize, usize) -> f64 + Sync> PairKernel for F {
    fn eval(&self, i: usize, j: usize) -> f64 {
        self(i, j)
    }
}

/// Symmetrization wrapper: (k(i,j) + k(j,i)) / 2.
pub struct Symmetrized<K>(pub K);

impl<K: PairKernel> PairKernel for Symmetrized<K> {
    fn eval(&self, i: usize, j: usize) -> f64 {
        0.5 * (self.0.eval(i, j) + self.0.eval(j, i))
    }
}

/// Spot-checks the symmetry promise on up to 100 seeded random pairs.
pub fn verify_symmetry<K: PairKernel>(kernel: &K, n: usize, seed: u64) -> Result<()> {
    if n < 2 {
        return Ok(());
    }
    let mut rng = Rng::from_seed(seed);
    for _ in 0..100 {
        let i = rng.index(n);
        let mut j = rng.index(n);
        if i == j {
            j = (j + 1) % n;
        }
        let a = kernel.eval(i, j);
        let b = kernel.eval(j, i);
        let tol = 1e-10 * a.abs().max(b.abs()).max(1.0);
        if (a - b).abs() > tol {
            return Err(Error::numerical(format!(
                "kernel not symmetric at pair ({i}, {j}): {a} vs {b}"
            )));
        }
    }
    Ok(())
}

/// Sum of k(i,j) over all pairs i < j, deterministic under parallelism.
pub fn pair_sum<K: PairKernel>(kernel: &K, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::config(format!("pair sum needs n >= 2, got {n}")));
    }
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<Result<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n);
            let mut acc = Kahan::new();
            for i in lo..hi {
                for j in i + 1..n {
                    let v = kernel.eval(i, j);
                    if !v.is_finite() {
                        return Err(Error::numerical(format!(
                            "kernel value {v} at pair ({}, {})",
                            i + 1,
                            j + 1
                        )));
                    }
                    acc.add(v);
                }
            }
            Ok(acc.total())
        })
        .collect();
    let mut acc = Kahan::new();
    for p in partials {
        acc.add(p?);
    }
    Ok(acc.total())
}

/// U-statistic mean: C(n,2)^{-1} Σ_{i<j} k(i,j).
pub fn u_mean<K: PairKernel>(kernel: &K, n: usize) -> Result<f64> {
    let total = pair_sum(kernel, n)?;
    Ok(total / (n as f64 * (n as f64 - 1.0) / 2.0))
}

/// Per-index leave-one-out means s_i = (n-1)^{-1} Σ_{j≠i} k(i,j).
#[derive(Debug, Clone)]
pub struct LooSums {
    values: Vec<f64>,
}

impl LooSums {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        kahan_sum(self.values.iter().copied()) / self.values.len() as f64
    }
}

/// Computes all leave-one-out means. For symmetric kernels the mean of the
/// result equals the U-statistic mean.
pub fn loo_means<K: PairKernel>(kernel: &K, n: usize) -> Result<LooSums> {
    if n < 2 {
        return Err(Error::config(format!("leave-one-out sums need n >= 2, got {n}")));
    }
    let values: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = Kahan::new();
            for j in 0..n {
                if j == i {
                    continue;
                }
                let v = kernel.eval(i, j);
                if !v.is_finite() {
                    return Err(Error::numerical(format!(
                        "kernel value {v} at pair ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
                acc.add(v);
            }
            Ok(acc.total() / (n as f64 - 1.0))
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(LooSums { values })
}

/// Σ̂ = 4/(n(n-1)²) Σ_i [Σ_{j≠i} ψ_ij]², written in terms of the stored
/// leave-one-out means: (4/n) Σ_i s_i².
pub fn sigma_hat(psi_loo: &LooSums) -> f64 {
    let n = psi_loo.values.len() as f64;
    4.0 / n * kahan_sum(psi_loo.values.iter().map(|s| s * s))
}

/// Vector-valued pair kernel for multi-parameter moments.
pub trait VecPairKernel: Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, i: usize, j: usize, out: &mut [f64]);
}

/// Leave-one-out means of a vector kernel, one row per observation.
pub fn loo_means_vec<K: VecPairKernel>(kernel: &K, n: usize) -> Result<Vec<Vec<f64>>> {
    if n < 2 {
        return Err(Error::config("leave-one-out sums need n >= 2"));
    }
    let d = kernel.dim();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![Kahan::new(); d];
            let mut buf = vec![0.0; d];
            for j in 0..n {
                if j == i {
                    continue;
                }
                kernel.eval_into(i, j, &mut buf);
                for (a, v) in acc.iter_mut().zip(&buf) {
                    if !v.is_finite() {
                        return Err(Error::numerical(format!(
                            "kernel value {v} at pair ({}, {})",
                            i + 1,
                            j + 1
                        )));
                    }
                    a.add(*v);
                }
            }
            Ok(acc.iter().map(|a| a.total() / (n as f64 - 1.0)).collect())
        })
        .collect()
}

/// Matrix Σ̂ for a vector kernel: (4/n) Σ_i s_i s_i'.
pub fn sigma_hat_matrix(psi_loo: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = psi_loo.len() as f64;
    let d = psi_loo.first().map_or(0, |v| v.len());
    let mut out = vec![vec![Kahan::new(); d]; d];
    for s in psi_loo {
        for a in 0..d {
            for b in 0..d {
                out[a][b].add(s[a] * s[b]);
            }
        }
    }
    out.iter()
        .map(|row| row.iter().map(|k| 4.0 / n * k.total()).collect())
        .collect()
}

/// Flags near-degeneracy of the orthogonal moment: Σ̂ below
/// 1e-10 · max(1, scale²) makes the normal CI unreliable.
pub fn degeneracy_diagnostic(sigma: f64, theta_scale: f64) -> bool {
    sigma < 1e-10 * theta_scale.powi(2).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_kernel_mean_is_the_constant() {
        let k = |_i: usize, _j: usize| 2.5;
        assert_eq!(u_mean(&k, 10).unwrap(), 2.5);
    }

    #[test]
    fn abs_difference_kernel_hand_sum() {
        let y: [f64; 3] = [1.0, 2.0, 3.0];
        let k = move |i: usize, j: usize| (y[i] - y[j]).abs();
        let m = u_mean(&k, 3).unwrap();
        assert!((m - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sum_kernel_hand_values() {
        let y = [1.0, 2.0, 3.0];
        let k = move |i: usize, j: usize| y[i] + y[j];
        assert!((u_mean(&k, 3).unwrap() - 4.0).abs() < 1e-15);
        let loo = loo_means(&k, 3).unwrap();
        assert_eq!(loo.values(), &[3.5, 4.0, 4.5]);
    }

    #[test]
    fn constant_kernel_loo_all_ones() {
        let k = |_: usize, _: usize| 1.0;
        let loo = loo_means(&k, 5).unwrap();
        assert!(loo.values().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn loo_mean_matches_u_mean_for_symmetric_kernels() {
        let y: Vec<f64> = (0..57).map(|i| (i as f64 * 0.37).sin() * 3.0 + 1.0).collect();
        let k = move |i: usize, j: usize| (y[i] - y[j]).powi(2) / 2.0 + y[i] * y[j];
        let um = u_mean(&k, 57).unwrap();
        let lm = loo_means(&k, 57).unwrap().mean();
        assert!((um - lm).abs() <= 1e-12 * um.abs().max(1.0));
    }

    #[test]
    fn antisymmetric_kernel_symmetrized() {
        let y = [1.0, 4.0, 9.0];
        let anti = move |i: usize, j: usize| y[i] - y[j];
        let sym = Symmetrized(anti);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(sym.eval(i, j), 0.0);
                }
            }
        }
        verify_symmetry(&sym, 3, 1).unwrap();
        assert!(verify_symmetry(&anti, 3, 1).is_err());
    }

    #[test]
    fn sigma_hat_degenerate_and_hand_cases() {
        let zero = |_: usize, _: usize| 0.0;
        let loo = loo_means(&zero, 4).unwrap();
        assert_eq!(sigma_hat(&loo), 0.0);

        // psi(i,j) = y_i + y_j - 2*ybar on y = (0, 2): both inner sums vanish
        let y = [0.0, 2.0];
        let k = move |i: usize, j: usize| y[i] + y[j] - 2.0;
        let loo = loo_means(&k, 2).unwrap();
        assert_eq!(sigma_hat(&loo), 0.0);

        // y = (1,2,3): inner sums (-1, 0, 1) scaled -> 2/3
        let y = [1.0, 2.0, 3.0];
        let k = move |i: usize, j: usize| y[i] + y[j] - 4.0;
        let loo = loo_means(&k, 3).unwrap();
        assert!((sigma_hat(&loo) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degeneracy_flag_contract() {
        assert!(degeneracy_diagnostic(0.0, 1.0));
        assert!(!degeneracy_diagnostic(1.0, 1.0));
        assert!(degeneracy_diagnostic(1e-11, 0.5));
        assert!(!degeneracy_diagnostic(1e-8, 1.0));
    }

    #[test]
    fn non_finite_kernel_names_the_pair() {
        let k = |i: usize, j: usize| if i == 2 && j == 5 { f64::NAN } else { 1.0 };
        let err = pair_sum(&k, 10).unwrap_err();
        match err {
            Error::Numerical(msg) => assert!(msg.contains("(3, 6)"), "{msg}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn parallel_reduction_matches_single_thread() {
        // identical chunk tree regardless of thread count: build a local
        // single-thread pool and compare bit-for-bit
        let y: Vec<f64> = (0..1500).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let k = move |i: usize, j: usize| (y[i] - y[j]).abs() as f64;
        let wide = pair_sum(&k, 1500).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let narrow = pool.install(|| pair_sum(&k, 1500).unwrap());
        assert_eq!(wide.to_bits(), narrow.to_bits());
    }

    #[test]
    fn vector_kernel_matches_scalar_machinery() {
        let y = [1.0, 2.0, 3.0, 5.0];
        struct K([f64; 4]);
        impl VecPairKernel for K {
            fn dim(&self) -> usize {
                2
            }
            fn eval_into(&self, i: usize, j: usize, out: &mut [f64]) {
                out[0] = self.0[i] + self.0[j];
                out[1] = (self.0[i] - self.0[j]).abs();
            }
        }
        let loo = loo_means_vec(&K(y), 4).unwrap();
        let k0 = move |i: usize, j: usize| y[i] + y[j];
        let k1 = move |i: usize, j: usize| (y[i] - y[j]).abs();
        let l0 = loo_means(&k0, 4).unwrap();
        let l1 = loo_means(&k1, 4).unwrap();
        let m = sigma_hat_matrix(&loo);
        assert!((m[0][0] - sigma_hat(&l0)).abs() < 1e-14);
        assert!((m[1][1] - sigma_hat(&l1)).abs() < 1e-14);
        let cross = 4.0 / 4.0
            * l0.values()
                .iter()
                .zip(l1.values())
                .map(|(a, b)| a * b)
                .sum::<f64>();
        assert!((m[0][1] - cross).abs() < 1e-14);
        assert_eq!(m[0][1], m[1][0]);
    }

    /// Example-1 degenerate kernel: conditional means given either argument
    /// are zero; checked by Monte Carlo over 10,000 draws of the second
    /// argument.
    #[test]
    fn degenerate_kernel_conditional_mean_near_zero() {
        let mut rng = crate::rng::Rng::from_seed(99);
        // gamma0(x) = 2x, y = gamma0 + eps, E[Y] known = 0 for x ~ N(0,1)
        let draw = |rng: &mut crate::rng::Rng| {
            let x = rng.normal();
            let g = 2.0 * x;
            let y = g + rng.normal() * 0.5;
            (y, g)
        };
        let mu = 0.0;
        let xi = |wi: (f64, f64), wj: (f64, f64)| {
            (mu - wj.1) * (wi.0 - wi.1) - (mu - wi.1) * (wj.0 - wj.1)
        };
        for _ in 0..3 {
            let wi = draw(&mut rng);
            let m = 10_000;
            let mut acc = Kahan::new();
            let mut sq = Kahan::new();
            for _ in 0..m {
                let wj = draw(&mut rng);
                let v = xi(wi, wj);
                acc.add(v);
                sq.add(v * v);
            }
            let mean = acc.total() / m as f64;
            let var = sq.total() / m as f64 - mean * mean;
            let se = (var / m as f64).sqrt();
            assert!(mean.abs() <= 3.0 * se, "conditional mean {mean} vs 3se {}", 3.0 * se);
        }
    }
}
