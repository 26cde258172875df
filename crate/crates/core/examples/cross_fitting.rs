//! The pair-block cross-fitting geometry: K folds induce L = K(K+1)/2
//! blocks of index pairs, each trained on the folds it does not touch.
//!
//! Run with: cargo run --example cross_fitting

use debiased_ustat::crossfit::{make_folds, make_pair_blocks};

fn main() -> debiased_ustat::Result<()> {
    let n = 21;
    let k = 3;
    let folds = make_folds(n, k, 7)?;
    println!("n = {n}, K = {k}, fold sizes {:?}\n", folds.fold_sizes());

    let blocks = make_pair_blocks(folds);
    println!(
        "{:<7} {:<8} {:>7} {:>12} {:>9} {:>9}",
        "block", "folds", "pairs", "train_size", "kappa1", "kappa2"
    );
    for l in 0..blocks.len() {
        let (a, b) = blocks.block_folds(l);
        let folds_str = if a == b {
            format!("{}", a + 1)
        } else {
            format!("{},{}", a + 1, b + 1)
        };
        let (k1, k2) = blocks.kappa_counts(l);
        println!(
            "{:<7} {:<8} {:>7} {:>12} {:>9} {:>9}",
            l + 1,
            folds_str,
            blocks.block_size(l),
            blocks.training_indices(l)?.len(),
            k1,
            k2
        );
    }
    let total: usize = (0..blocks.len()).map(|l| blocks.block_size(l)).sum();
    println!("\nblocks partition all C({n},2) = {} pairs: {}", n * (n - 1) / 2, total);

    // every pair's block never trains on the pair's own members
    for l in 0..blocks.len() {
        let train = blocks.training_indices(l)?;
        for (i, j) in blocks.pairs(l) {
            assert!(!train.contains(&i) && !train.contains(&j));
        }
    }
    println!("independence contract holds: no block trains on its own pairs");
    Ok(())
}
