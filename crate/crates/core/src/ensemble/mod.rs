//! Bootstrap-aggregated decision trees combined by majority vote.
//!
//! Randomness: tree `t` draws its bootstrap sample from a ChaCha8 generator
//! seeded with the ensemble seed and switched to stream `t`
//! (`ChaCha8Rng::seed_from_u64(seed)` then `set_stream(t)`). Trees are
//! therefore independent of the ensemble size, of each other and of thread
//! scheduling.

mod model;
mod tree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use model::{BaggedModel, ModelConfig, SCHEMA_VERSION, SUPPORTED_VERSIONS};
pub use tree::{gini_impurity, train_tree, Row, TreeLimits, TreeNode};

use crate::error::{Error, Result};
use crate::features::{LabeledDataset, Normalizer, WindowingConfig};
use crate::mcd::McdConfig;

pub const DEFAULT_TREES: usize = 30;
pub const DEFAULT_SEED: u64 = 42;

/// Label emitted when the vote is split exactly in half.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    Alert,
    Fatigue,
}

impl TieRule {
    fn class(self) -> u8 {
        match self {
            TieRule::Alert => 0,
            TieRule::Fatigue => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Resampling {
    #[default]
    Bootstrap,
    /// Every tree sees the training set as-is. Test hook for degenerate
    /// ensembles.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub n_trees: usize,
    pub seed: u64,
    pub limits: TreeLimits,
    pub tie: TieRule,
    pub resampling: Resampling,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_TREES,
            seed: DEFAULT_SEED,
            limits: TreeLimits::default(),
            tie: TieRule::Alert,
            resampling: Resampling::Bootstrap,
        }
    }
}

/// Feature-extraction settings stored alongside a trained model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelContext {
    pub channel_name: String,
    pub windowing: WindowingConfig,
    pub mcd: McdConfig,
}

/// Generator for tree `tree_index` of an ensemble seeded with `seed`.
pub fn tree_rng(seed: u64, tree_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index);
    rng
}

/// `n` indices drawn uniformly from `0..n` with replacement.
pub fn bootstrap_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidArgument("bootstrap of an empty set".into()));
    }
    Ok((0..n).map(|_| rng.random_range(0..n)).collect())
}

/// Trains `cfg.n_trees` trees on resamples of the normalized training rows.
/// The normalizer is fitted on `dataset` and frozen into the model.
pub fn train_ensemble(
    dataset: &LabeledDataset,
    cfg: &EnsembleConfig,
    context: &ModelContext,
) -> Result<BaggedModel> {
    if cfg.n_trees == 0 {
        return Err(Error::InvalidArgument(
            "ensemble needs at least one tree".into(),
        ));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let normalizer = Normalizer::fit(&dataset.rows)?;
    let rows = normalizer.apply_rows(&dataset.rows);
    let labels: Vec<u8> = dataset.labels.iter().map(|l| l.as_u8()).collect();

    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| train_member(&rows, &labels, cfg, t as u64))
        .collect::<Result<Vec<_>>>()?;

    Ok(BaggedModel {
        version: SCHEMA_VERSION.to_string(),
        seed: cfg.seed,
        ensemble_size: cfg.n_trees,
        channel_name: context.channel_name.clone(),
        normalizer,
        config: ModelConfig {
            window_s: context.windowing.window_s,
            step_s: context.windowing.step_s,
            alpha: context.mcd.alpha,
            quantile_level: context.mcd.quantile_level,
            tie_rule: cfg.tie,
            max_depth: cfg.limits.max_depth,
            min_leaf: cfg.limits.min_leaf,
        },
        provenance: Default::default(),
        trees,
    })
}

fn train_member(rows: &[Row], labels: &[u8], cfg: &EnsembleConfig, t: u64) -> Result<TreeNode> {
    match cfg.resampling {
        Resampling::Identity => train_tree(rows, labels, &cfg.limits),
        Resampling::Bootstrap => {
            let mut rng = tree_rng(cfg.seed, t);
            let idx = bootstrap_sample(rows.len(), &mut rng)?;
            let r: Vec<Row> = idx.iter().map(|&i| rows[i]).collect();
            let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            train_tree(&r, &l, &cfg.limits)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub label: u8,
    /// Fraction of trees voting fatigue.
    pub vote_fraction: f64,
}

/// Majority vote over per-tree class votes.
pub fn majority_vote(votes: &[u8], tie: TieRule) -> Prediction {
    let ones = votes.iter().filter(|&&v| v == 1).count();
    let zeros = votes.len() - ones;
    let label = match ones.cmp(&zeros) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => 0,
        std::cmp::Ordering::Equal => tie.class(),
    };
    Prediction {
        label,
        vote_fraction: if votes.is_empty() {
            0.0
        } else {
            ones as f64 / votes.len() as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use crate::signal_io::Label;

    #[test]
    fn vote_examples() {
        let p = majority_vote(&[1, 1, 0], TieRule::Alert);
        assert_eq!(p.label, 1);
        assert!((p.vote_fraction - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            majority_vote(&[0, 0, 0, 0], TieRule::Alert),
            Prediction {
                label: 0,
                vote_fraction: 0.0
            }
        );
        assert_eq!(
            majority_vote(&[1, 0], TieRule::Alert),
            Prediction {
                label: 0,
                vote_fraction: 0.5
            }
        );
        assert_eq!(majority_vote(&[1, 0], TieRule::Fatigue).label, 1);
    }

    #[test]
    fn bootstrap_examples() {
        let mut rng = tree_rng(1, 0);
        assert_eq!(bootstrap_sample(1, &mut rng).unwrap(), vec![0]);
        let a = bootstrap_sample(50, &mut tree_rng(9, 3)).unwrap();
        let b = bootstrap_sample(50, &mut tree_rng(9, 3)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&i| i < 50));
        assert!(bootstrap_sample(0, &mut rng).is_err());
    }

    #[test]
    fn bootstrap_distinct_fraction_near_one_minus_inv_e() {
        let n = 100_000;
        let idx = bootstrap_sample(n, &mut tree_rng(42, 0)).unwrap();
        let mut seen = vec![false; n];
        for i in idx {
            seen[i] = true;
        }
        let frac = seen.iter().filter(|&&s| s).count() as f64 / n as f64;
        let expected = 1.0 - (-1.0f64).exp();
        assert!((frac - expected).abs() <= 0.01, "{frac}");
    }

    fn toy_dataset() -> LabeledDataset {
        let mut ds = LabeledDataset::default();
        for i in 0..40 {
            let label = if i % 2 == 0 {
                Label::Alert
            } else {
                Label::Fatigue
            };
            let base = if label == Label::Fatigue { 10.0 } else { 1.0 };
            let jitter = ((i * 7919) % 13) as f64 * 0.1;
            ds.push(
                FeatureVector {
                    robust_scale: base + jitter,
                    robust_location: jitter,
                    variance: base * 1.1 + jitter,
                    autocovariance: base + 0.5 * jitter,
                    window_start_s: i as f64,
                },
                label,
                "r",
            );
        }
        ds
    }

    #[test]
    fn identity_single_tree_equals_plain_tree() {
        let ds = toy_dataset();
        let cfg = EnsembleConfig {
            n_trees: 1,
            resampling: Resampling::Identity,
            ..EnsembleConfig::default()
        };
        let model = train_ensemble(&ds, &cfg, &ModelContext::default()).unwrap();
        let nz = Normalizer::fit(&ds.rows).unwrap();
        let labels: Vec<u8> = ds.labels.iter().map(|l| l.as_u8()).collect();
        let tree = train_tree(&nz.apply_rows(&ds.rows), &labels, &TreeLimits::default()).unwrap();
        assert_eq!(model.trees, vec![tree]);
    }

    #[test]
    fn prefix_stability() {
        let ds = toy_dataset();
        let small = train_ensemble(
            &ds,
            &EnsembleConfig {
                n_trees: 5,
                ..Default::default()
            },
            &ModelContext::default(),
        )
        .unwrap();
        let big = train_ensemble(
            &ds,
            &EnsembleConfig {
                n_trees: 9,
                ..Default::default()
            },
            &ModelContext::default(),
        )
        .unwrap();
        assert_eq!(small.trees[..], big.trees[..5]);
    }

    #[test]
    fn zero_trees_rejected() {
        let cfg = EnsembleConfig {
            n_trees: 0,
            ..Default::default()
        };
        assert!(train_ensemble(&toy_dataset(), &cfg, &ModelContext::default()).is_err());
        assert!(matches!(
            train_ensemble(
                &LabeledDataset::default(),
                &EnsembleConfig::default(),
                &ModelContext::default()
            ),
            Err(Error::EmptyDataset)
        ));
    }
}
