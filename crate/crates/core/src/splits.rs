//! Class-disjoint partitions and the per-sample GZSL pools.
//!
//! Classes are divided into train / validation / test sets. Among the
//! samples of train and validation classes a fraction is held out as the
//! seen test set, and a further fraction of the remaining train-class
//! samples becomes the seen validation set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClassPartition, Dataset, GzslSplit};
use crate::error::{Error, Result};

const STREAM_TEST_CLASSES: u64 = 0;
const STREAM_VAL_CLASSES: u64 = 1;
const STREAM_SEEN_TEST: u64 = 2;
const STREAM_SEEN_VAL: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub n_val_classes: usize,
    pub n_test_classes: usize,
    pub seen_test_fraction: f64,
    pub seen_val_fraction: f64,
    pub n_val_folds: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            n_val_classes: 1,
            n_test_classes: 1,
            seen_test_fraction: 0.2,
            seen_val_fraction: 0.2,
            n_val_folds: 3,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self, class_count: usize) -> Result<()> {
        for (name, f) in [
            ("seen_test_fraction", self.seen_test_fraction),
            ("seen_val_fraction", self.seen_val_fraction),
        ] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::InvalidConfig(format!("{name} = {f} outside [0, 1)")));
            }
        }
        if self.n_val_classes == 0 || self.n_test_classes == 0 {
            return Err(Error::InvalidConfig(
                "validation and test class counts must be at least 1".into(),
            ));
        }
        if self.n_val_folds == 0 {
            return Err(Error::InvalidConfig("n_val_folds must be at least 1".into()));
        }
        let needed = self.n_val_classes + self.n_test_classes;
        if needed >= class_count {
            return Err(Error::NotEnoughClasses {
                needed,
                available: class_count,
            });
        }
        Ok(())
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// `round(fraction * n)` with halves rounded up.
pub fn held_out_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + 0.5).floor() as usize
}

fn draw_test_classes(class_count: usize, cfg: &SplitConfig) -> Vec<usize> {
    let mut classes: Vec<usize> = (0..class_count).collect();
    classes.shuffle(&mut rng(cfg.seed, STREAM_TEST_CLASSES));
    let mut test = classes[..cfg.n_test_classes].to_vec();
    test.sort_unstable();
    test
}

fn partition_around(class_count: usize, test: Vec<usize>, n_val: usize, val_seed: u64) -> ClassPartition {
    let mut rest: Vec<usize> = (0..class_count).filter(|c| test.binary_search(c).is_err()).collect();
    rest.shuffle(&mut rng(val_seed, STREAM_VAL_CLASSES));
    let mut val = rest[..n_val].to_vec();
    let mut train = rest[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    ClassPartition {
        train_classes: train,
        val_classes: val,
        test_classes: test,
    }
}

/// Draws a class partition uniformly at random from `cfg.seed`.
pub fn make_partition(d: &Dataset, cfg: &SplitConfig) -> Result<ClassPartition> {
    cfg.validate(d.class_count())?;
    let test = draw_test_classes(d.class_count(), cfg);
    Ok(partition_around(d.class_count(), test, cfg.n_val_classes, cfg.seed))
}

/// Assigns the samples of `partition`'s classes to the five GZSL pools.
pub fn make_gzsl_split(d: &Dataset, partition: &ClassPartition, cfg: &SplitConfig) -> Result<GzslSplit> {
    cfg.validate(d.class_count())?;
    partition.validate(d.class_count())?;
    assign_pools(d, partition, cfg, cfg.seed, cfg.seed)
}

/// `n_val_folds` splits sharing the test classes and the seen test pool.
///
/// Fold `i` re-draws the train/validation class division and the seen
/// validation pool from `seed + i`. Fold 0 equals
/// `make_gzsl_split(d, &make_partition(d, cfg)?, cfg)`.
pub fn make_validation_folds(d: &Dataset, cfg: &SplitConfig) -> Result<Vec<GzslSplit>> {
    cfg.validate(d.class_count())?;
    let test = draw_test_classes(d.class_count(), cfg);
    (0..cfg.n_val_folds as u64)
        .map(|fold| {
            let fold_seed = cfg.seed.wrapping_add(fold);
            let partition = partition_around(d.class_count(), test.clone(), cfg.n_val_classes, fold_seed);
            assign_pools(d, &partition, cfg, cfg.seed, fold_seed)
        })
        .collect()
}

fn assign_pools(
    d: &Dataset,
    partition: &ClassPartition,
    cfg: &SplitConfig,
    seen_test_seed: u64,
    seen_val_seed: u64,
) -> Result<GzslSplit> {
    let by_class = d.indices_by_class();
    let mut split = GzslSplit {
        partition: partition.clone(),
        train_idx: Vec::new(),
        seen_val_idx: Vec::new(),
        seen_test_idx: Vec::new(),
        unseen_val_idx: Vec::new(),
        unseen_test_idx: Vec::new(),
    };

    // Train and validation classes together, ascending, so the seen test
    // draw does not depend on how they are divided.
    let mut test_rng = rng(seen_test_seed, STREAM_SEEN_TEST);
    let mut val_rng = rng(seen_val_seed, STREAM_SEEN_VAL);
    for c in partition.seen_classes() {
        let mut samples = by_class[c].clone();
        samples.shuffle(&mut test_rng);
        let k = held_out_count(cfg.seen_test_fraction, samples.len());
        split.seen_test_idx.extend_from_slice(&samples[..k]);
        let mut rest = samples[k..].to_vec();
        rest.sort_unstable();

        if partition.val_classes.binary_search(&c).is_ok() {
            if rest.is_empty() {
                return Err(Error::EmptyPool(c));
            }
            split.unseen_val_idx.extend(rest);
        } else {
            rest.shuffle(&mut val_rng);
            let k = held_out_count(cfg.seen_val_fraction, rest.len());
            if k == rest.len() {
                return Err(Error::EmptyPool(c));
            }
            split.seen_val_idx.extend_from_slice(&rest[..k]);
            split.train_idx.extend_from_slice(&rest[k..]);
        }
    }
    for &c in &partition.test_classes {
        if by_class[c].is_empty() {
            return Err(Error::EmptyPool(c));
        }
        split.unseen_test_idx.extend_from_slice(&by_class[c]);
    }

    for pool in [
        &mut split.train_idx,
        &mut split.seen_val_idx,
        &mut split.seen_test_idx,
        &mut split.unseen_val_idx,
        &mut split.unseen_test_idx,
    ] {
        pool.sort_unstable();
    }
    Ok(split)
}
