//! Random-forest regression: CART-style trees on bootstrap resamples with a
//! variance-reduction split criterion.
//!
//! Continuous and dummy columns split on thresholds; integer-coded
//! categorical columns split on level sets, found exactly by scanning levels
//! in order of their mean response. Trees grow in parallel with per-tree
//! derived seeds, so the forest is bit-identical regardless of scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColKind, OutcomeTransform};
use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::rng::{derive_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CatSplit {
    /// Order the levels of each categorical column once per forest by mean
    /// response, then scan contiguous groups in that order.
    GlobalOrder,
    /// Re-order levels by mean response within every node (exact best
    /// subset for the variance criterion).
    NodeSort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_trees: usize,
    /// Columns sampled per split; defaults to max(1, ceil(p/3)).
    pub mtry: Option<usize>,
    pub min_node: usize,
    pub seed: u64,
    pub cat_split: CatSplit,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            n_trees: 500,
            mtry: None,
            min_node: 5,
            seed: 0,
            cat_split: CatSplit::NodeSort,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Leaf { value: f64 },
    SplitNum { col: u32, threshold: f64, left: u32, right: u32 },
    /// Levels with a set bit go left; unseen levels go right.
    SplitCat { col: u32, mask: u64, left: u32, right: u32 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
    /// In-bag bitmask over training rows, for out-of-bag fitted values.
    inbag: Vec<u64>,
}

impl Tree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::SplitNum { col, threshold, left, right } => {
                    at = if row[*col as usize] <= *threshold { *left } else { *right } as usize;
                }
                Node::SplitCat { col, mask, left, right } => {
                    let level = row[*col as usize] as i64;
                    let goes_left =
                        level >= 0 && level < 64 && (mask >> level) & 1 == 1;
                    at = if goes_left { *left } else { *right } as usize;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<Tree>,
    pub params: RfParams,
    pub transform: OutcomeTransform,
    pub p_raw: usize,
    categorical: Vec<bool>,
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Prediction on the transform scale.
    pub fn transform_value(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        sum / self.trees.len() as f64
    }

    /// Out-of-bag fitted value on the transform scale for training row i;
    /// averages only trees whose bootstrap sample missed row i. Falls back
    /// to the all-tree prediction when every tree saw the row.
    pub fn oob_transform_value(&self, i: usize, row: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut cnt = 0usize;
        for t in &self.trees {
            if (t.inbag[i / 64] >> (i % 64)) & 1 == 0 {
                sum += t.predict_row(row);
                cnt += 1;
            }
        }
        if cnt == 0 {
            self.transform_value(row)
        } else {
            sum / cnt as f64
        }
    }
}

struct GrowCtx<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    categorical: &'a [bool],
    mtry: usize,
    min_node: usize,
    /// Forest-level rank of each level per categorical column (GlobalOrder).
    cat_rank: Vec<Option<Vec<u8>>>,
}

fn node_stats(idx: &[usize], y: &[f64]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for &i in idx {
        sum += y[i];
        sumsq += y[i] * y[i];
    }
    (sum, sumsq)
}

#[derive(Clone)]
enum SplitRule {
    Num { col: usize, threshold: f64 },
    Cat { col: usize, mask: u64 },
}

/// Best split of `idx` on `col` by variance reduction, or None when the
/// column admits no split.
fn best_split_on(
    ctx: &GrowCtx,
    idx: &[usize],
    col: usize,
    sum: f64,
    sumsq: f64,
) -> Option<(f64, SplitRule)> {
    let parent_sse = sumsq - sum * sum / idx.len() as f64;
    let mut best: Option<(f64, SplitRule)> = None;
    if ctx.categorical[col] {
        // exact best level-set split: scan levels in mean order
        let mut sums = [0.0f64; 64];
        let mut cnts = [0usize; 64];
        for &i in idx {
            let l = ctx.x.get(i, col) as usize;
            sums[l] += ctx.y[i];
            cnts[l] += 1;
        }
        let mut present: Vec<usize> = (0..64).filter(|&l| cnts[l] > 0).collect();
        if present.len() < 2 {
            return None;
        }
        match &ctx.cat_rank[col] {
            Some(rank) => present.sort_by_key(|&l| rank[l]),
            None => present.sort_by(|&a, &b| {
                (sums[a] / cnts[a] as f64)
                    .total_cmp(&(sums[b] / cnts[b] as f64))
                    .then(a.cmp(&b))
            }),
        }
        let total = idx.len();
        let mut left_sum = 0.0;
        let mut left_cnt = 0usize;
        let mut mask = 0u64;
        for &l in present.iter().take(present.len() - 1) {
            left_sum += sums[l];
            left_cnt += cnts[l];
            mask |= 1 << l;
            let right_cnt = total - left_cnt;
            let right_sum = sum - left_sum;
            let gain = parent_sse
                - (sumsq
                    - left_sum * left_sum / left_cnt as f64
                    - right_sum * right_sum / right_cnt as f64);
            if best.as_ref().is_none_or(|(g, _)| gain > *g) {
                best = Some((gain, SplitRule::Cat { col, mask }));
            }
        }
    } else {
        let mut vals: Vec<(f64, f64)> = idx.iter().map(|&i| (ctx.x.get(i, col), ctx.y[i])).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total = idx.len();
        let mut left_sum = 0.0;
        for (pos, w) in vals.iter().enumerate().take(total - 1) {
            left_sum += w.1;
            if vals[pos + 1].0 == w.0 {
                continue;
            }
            let left_cnt = pos + 1;
            let right_cnt = total - left_cnt;
            let right_sum = sum - left_sum;
            let gain = parent_sse
                - (sumsq
                    - left_sum * left_sum / left_cnt as f64
                    - right_sum * right_sum / right_cnt as f64);
            if best.as_ref().is_none_or(|(g, _)| gain > *g) {
                let threshold = w.0 + (vals[pos + 1].0 - w.0) / 2.0;
                best = Some((gain, SplitRule::Num { col, threshold }));
            }
        }
    }
    best
}

fn grow(ctx: &GrowCtx, nodes: &mut Vec<Node>, idx: Vec<usize>, rng: &mut Rng) -> u32 {
    let me = nodes.len() as u32;
    nodes.push(Node::Leaf { value: 0.0 });
    let (sum, sumsq) = node_stats(&idx, ctx.y);
    let n = idx.len();
    let mean = sum / n as f64;
    let sse = sumsq - sum * sum / n as f64;
    // ranger semantics: nodes of min_node or fewer observations are
    // terminal; children of a split may be smaller
    if n <= ctx.min_node || sse <= 0.0 {
        nodes[me as usize] = Node::Leaf { value: mean };
        return me;
    }
    // mtry columns without replacement, scan in sampled order,
    // first-encountered best wins ties
    let p = ctx.x.ncols();
    let mut cols: Vec<usize> = (0..p).collect();
    for s in 0..ctx.mtry.min(p) {
        let r = s + rng.index(p - s);
        cols.swap(s, r);
    }
    let mut best: Option<(f64, SplitRule)> = None;
    for &col in cols.iter().take(ctx.mtry.min(p)) {
        if let Some((gain, rule)) = best_split_on(ctx, &idx, col, sum, sumsq) {
            if best.as_ref().is_none_or(|(g, _)| gain > *g) {
                best = Some((gain, rule));
            }
        }
    }
    let Some((gain, rule)) = best else {
        nodes[me as usize] = Node::Leaf { value: mean };
        return me;
    };
    if gain <= 0.0 {
        nodes[me as usize] = Node::Leaf { value: mean };
        return me;
    }
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = match &rule {
        SplitRule::Num { col, threshold } => {
            idx.into_iter().partition(|&i| ctx.x.get(i, *col) <= *threshold)
        }
        SplitRule::Cat { col, mask } => idx.into_iter().partition(|&i| {
            let l = ctx.x.get(i, *col) as i64;
            l >= 0 && l < 64 && (mask >> l) & 1 == 1
        }),
    };
    let left = grow(ctx, nodes, left_idx, rng);
    let right = grow(ctx, nodes, right_idx, rng);
    nodes[me as usize] = match rule {
        SplitRule::Num { col, threshold } => {
            Node::SplitNum { col: col as u32, threshold, left, right }
        }
        SplitRule::Cat { col, mask } => Node::SplitCat { col: col as u32, mask, left, right },
    };
    me
}

pub fn fit_forest(
    params: RfParams,
    x: &Matrix,
    kinds: &[ColKind],
    y_t: &[f64],
    transform: OutcomeTransform,
) -> Result<ForestModel> {
    let n = x.nrows();
    let p = x.ncols();
    if params.n_trees == 0 {
        return Err(Error::config("random forest needs at least 1 tree"));
    }
    if params.min_node == 0 {
        return Err(Error::config("min_node must be at least 1"));
    }
    let mtry = params.mtry.unwrap_or_else(|| (p).div_ceil(3).max(1));
    if mtry == 0 || mtry > p {
        return Err(Error::config(format!("mtry = {mtry} outside 1..={p}")));
    }
    for (j, k) in kinds.iter().enumerate() {
        if let ColKind::Categorical { levels } = k {
            if *levels > 64 {
                return Err(Error::config(format!(
                    "categorical column {j} has {levels} levels; forest level masks support up to 64"
                )));
            }
        }
    }
    let categorical: Vec<bool> = kinds.iter().map(ColKind::is_categorical).collect();
    // forest-level level ordering by mean response for GlobalOrder splитting
    let cat_rank: Vec<Option<Vec<u8>>> = kinds
        .iter()
        .enumerate()
        .map(|(j, k)| match (params.cat_split, k) {
            (CatSplit::GlobalOrder, ColKind::Categorical { levels }) => {
                let mut sums = vec![0.0f64; *levels];
                let mut cnts = vec![0usize; *levels];
                for i in 0..n {
                    let l = x.get(i, j) as usize;
                    sums[l] += y_t[i];
                    cnts[l] += 1;
                }
                let mut order: Vec<usize> = (0..*levels).collect();
                order.sort_by(|&a, &b| {
                    let ma = if cnts[a] > 0 { sums[a] / cnts[a] as f64 } else { f64::INFINITY };
                    let mb = if cnts[b] > 0 { sums[b] / cnts[b] as f64 } else { f64::INFINITY };
                    ma.total_cmp(&mb).then(a.cmp(&b))
                });
                let mut rank = vec![0u8; 64];
                for (r, &l) in order.iter().enumerate() {
                    rank[l] = r as u8;
                }
                Some(rank)
            }
            _ => None,
        })
        .collect();
    let ctx = GrowCtx {
        x,
        y: y_t,
        categorical: &categorical,
        mtry,
        min_node: params.min_node,
        cat_rank,
    };
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = Rng::from_seed(derive_seed(params.seed, t as u64));
            let idx: Vec<usize> = (0..n).map(|_| rng.index(n)).collect();
            let mut inbag = vec![0u64; n.div_ceil(64)];
            for &i in &idx {
                inbag[i / 64] |= 1 << (i % 64);
            }
            let mut nodes = Vec::new();
            grow(&ctx, &mut nodes, idx, &mut rng);
            Tree { nodes, inbag }
        })
        .collect();
    Ok(ForestModel { trees, params, transform, p_raw: p, categorical })
}
