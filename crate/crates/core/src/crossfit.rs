//! Pair-block cross-fitting: a K-fold partition of observation indices and
//! the derived partition of all pairs {(i,j): i < j} into L = K(K+1)/2
//! blocks, each with a held-out training set.
//!
//! Blocks are stored implicitly by their fold pair; pair lists are never
//! materialized (O(n^2) memory is unacceptable at the sample sizes the
//! estimators target), but can be enumerated lazily.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Seeded K-fold partition of {0,...,n-1}. Fold sizes differ by at most one
/// and the assignment is deterministic given (n, K, seed).
#[derive(Debug, Clone, Serialize)]
pub struct FoldPartition {
    assignment: Vec<u32>,
    k: usize,
    seed: u64,
}

/// Builds a K-fold partition via a Fisher–Yates shuffle of the indices.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPartition> {
    if k < 2 {
        return Err(Error::config(format!(
            "K = {k} < 2: a single fold leaves no held-out training data for its own pair block"
        )));
    }
    if k > n {
        return Err(Error::config(format!("K = {k} exceeds the sample size n = {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::from_seed(seed).shuffle(&mut order);
    let base = n / k;
    let extra = n % k;
    let mut assignment = vec![0u32; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &idx in &order[pos..pos + size] {
            assignment[idx] = fold as u32;
        }
        pos += size;
    }
    Ok(FoldPartition { assignment, k, seed })
}

impl FoldPartition {
    /// Wraps an explicit assignment (fold ids 0..k). Every fold must be
    /// non-empty.
    pub fn from_assignment(assignment: Vec<u32>, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::config("K must be at least 2"));
        }
        let mut seen = vec![false; k];
        for &f in &assignment {
            if f as usize >= k {
                return Err(Error::config(format!("fold id {f} out of range 0..{k}")));
            }
            seen[f as usize] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::config("every fold must be non-empty"));
        }
        Ok(FoldPartition { assignment, k, seed: 0 })
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fold id of observation i (0-based).
    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i] as usize
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &f in &self.assignment {
            sizes[f as usize] += 1;
        }
        sizes
    }

    /// Members of fold f in ascending index order.
    pub fn members(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of(i) == f).collect()
    }
}

/// The L = K(K+1)/2 pair blocks derived from a fold partition: diagonal
/// blocks (within-fold pairs) first, then off-diagonal blocks (cross-fold
/// pairs) in lexicographic fold order.
#[derive(Debug, Clone)]
pub struct PairBlocks {
    folds: FoldPartition,
    /// (a, b) with a <= b: fold pair defining each block.
    block_folds: Vec<(usize, usize)>,
    /// lookup[a][b] = block id for the unordered fold pair {a, b}.
    lookup: Vec<Vec<usize>>,
}

/// Derives the pair-block partition from a fold partition.
pub fn make_pair_blocks(folds: FoldPartition) -> PairBlocks {
    let k = folds.k();
    let mut block_folds = Vec::with_capacity(k * (k + 1) / 2);
    for a in 0..k {
        block_folds.push((a, a));
    }
    for a in 0..k {
        for b in a + 1..k {
            block_folds.push((a, b));
        }
    }
    let mut lookup = vec![vec![0usize; k]; k];
    for (l, &(a, b)) in block_folds.iter().enumerate() {
        lookup[a][b] = l;
        lookup[b][a] = l;
    }
    PairBlocks { folds, block_folds, lookup }
}

impl PairBlocks {
    pub fn folds(&self) -> &FoldPartition {
        &self.folds
    }

    pub fn n(&self) -> usize {
        self.folds.n()
    }

    /// L = K(K+1)/2.
    pub fn len(&self) -> usize {
        self.block_folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block_folds.is_empty()
    }

    /// The one or two fold ids block l is built from.
    pub fn block_folds(&self, l: usize) -> (usize, usize) {
        self.block_folds[l]
    }

    /// Block that pair (i, j) belongs to.
    pub fn block_of(&self, i: usize, j: usize) -> usize {
        self.lookup[self.folds.fold_of(i)][self.folds.fold_of(j)]
    }

    /// Number of pairs in block l.
    pub fn block_size(&self, l: usize) -> usize {
        let sizes = self.folds.fold_sizes();
        let (a, b) = self.block_folds[l];
        if a == b {
            sizes[a] * (sizes[a].saturating_sub(1)) / 2
        } else {
            sizes[a] * sizes[b]
        }
    }

    /// Enumerates the pairs (i, j), i < j, of block l.
    pub fn pairs(&self, l: usize) -> Vec<(usize, usize)> {
        let (a, b) = self.block_folds[l];
        let ma = self.folds.members(a);
        let mut out = Vec::with_capacity(self.block_size(l));
        if a == b {
            for (s, &i) in ma.iter().enumerate() {
                for &j in &ma[s + 1..] {
                    out.push((i, j));
                }
            }
        } else {
            let mb = self.folds.members(b);
            for &i in &ma {
                for &j in &mb {
                    out.push((i.min(j), i.max(j)));
                }
            }
        }
        out
    }

    /// Indices available for training block l's first step: all observations
    /// whose fold is not part of the block. Empty training sets (the K = 2
    /// off-diagonal block) are a configuration error.
    pub fn training_indices(&self, l: usize) -> Result<Vec<usize>> {
        let (a, b) = self.block_folds[l];
        let out: Vec<usize> = (0..self.n())
            .filter(|&i| {
                let f = self.folds.fold_of(i);
                f != a && f != b
            })
            .collect();
        if out.is_empty() {
            return Err(Error::config(format!(
                "block {} (folds {},{}) has an empty training set; use K >= 3",
                l + 1,
                a + 1,
                b + 1
            )));
        }
        Ok(out)
    }

    /// Counts ordered pairs-of-pairs of block l sharing exactly r members,
    /// r in {1, 2}; the same pair chosen twice shares 2 members. Returns
    /// (kappa1, kappa2).
    pub fn kappa_counts(&self, l: usize) -> (u64, u64) {
        let sizes = self.folds.fold_sizes();
        let (fa, fb) = self.block_folds[l];
        if fa == fb {
            let c = sizes[fa] as u64;
            let pairs = c * c.saturating_sub(1) / 2;
            let kappa1 = pairs * 2 * c.saturating_sub(2);
            (kappa1, pairs)
        } else {
            let a = sizes[fa] as u64;
            let b = sizes[fb] as u64;
            // ordered distinct pairs sharing the fold-a member: a*b*(b-1);
            // sharing the fold-b member: a*b*(a-1)
            let kappa1 = a * b * (a + b - 2);
            (kappa1, a * b)
        }
    }
}
