use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_row, sorted_by_feature, validate_matrix, TreeNode};
use crate::error::{Error, Result};
use crate::fusion::{ClassDistribution, TiePolicy, VoteOutcome};
use crate::seed::sub_seed;
use crate::serial::{ByteReader, ByteWriter};
use crate::severity::{Severity, N_CLASSES};

const MIN_GAIN: f64 = 1e-12;
const SECTION_FOREST: u32 = u32::from_le_bytes(*b"RFO1");

type Counts = [u32; N_CLASSES];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 5,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    /// One tree grown on the full training set.
    pub fn single_tree(max_depth: usize) -> Self {
        ForestParams {
            n_trees: 1,
            max_depth,
            bootstrap: false,
        }
    }
}

/// Bagged Gini trees over the five severity classes. Leaves keep the class
/// counts of the training rows that reached them.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub n_features: usize,
    pub max_depth: usize,
    pub trees: Vec<TreeNode<Counts>>,
}

fn gini_mass(counts: &Counts) -> f64 {
    let n: u32 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = f64::from(n);
    n - counts.iter().map(|&c| f64::from(c).powi(2)).sum::<f64>() / n
}

fn leaf_class(counts: &Counts) -> Severity {
    let best = *counts.iter().max().expect("five classes");
    Severity::from_index(counts.iter().position(|&c| c == best).expect("max is present"))
}

struct Grower<'a> {
    features: &'a [Vec<f64>],
    labels: &'a [Severity],
    max_depth: usize,
}

impl Grower<'_> {
    fn counts(&self, rows: &[usize]) -> Counts {
        let mut c = [0; N_CLASSES];
        for &r in rows {
            c[self.labels[r].index()] += 1;
        }
        c
    }

    fn grow(&self, rows: &[usize], depth: usize) -> TreeNode<Counts> {
        let counts = self.counts(rows);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= self.max_depth || rows.len() < 2 || pure {
            return TreeNode::Leaf(counts);
        }
        let parent = gini_mass(&counts);
        let mut best: Option<(f64, usize, usize, Vec<usize>)> = None;
        for feature in 0..self.features[0].len() {
            let order = sorted_by_feature(self.features, rows, feature);
            let mut left = [0u32; N_CLASSES];
            for k in 1..order.len() {
                left[self.labels[order[k - 1]].index()] += 1;
                if self.features[order[k - 1]][feature] >= self.features[order[k]][feature] {
                    continue;
                }
                let mut right = counts;
                for (r, l) in right.iter_mut().zip(&left) {
                    *r -= l;
                }
                let gain = parent - gini_mass(&left) - gini_mass(&right);
                let better = match &best {
                    None => gain > MIN_GAIN,
                    Some((g, ..)) => gain > g + 1e-12 * g.abs(),
                };
                if better {
                    best = Some((gain, feature, k, order.clone()));
                }
            }
        }
        match best {
            None => TreeNode::Leaf(counts),
            Some((_, feature, k, order)) => {
                let lo = self.features[order[k - 1]][feature];
                let hi = self.features[order[k]][feature];
                let mid = 0.5 * (lo + hi);
                TreeNode::Split {
                    feature,
                    threshold: if mid > lo { mid } else { hi },
                    left: Box::new(self.grow(&order[..k], depth + 1)),
                    right: Box::new(self.grow(&order[k..], depth + 1)),
                }
            }
        }
    }
}

/// Trees are grown in parallel; tree `t` draws its bootstrap sample from the
/// sub-seed `forest/tree/t`, so results do not depend on scheduling.
pub fn train_forest(features: &[Vec<f64>], labels: &[Severity], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    if params.max_depth == 0 {
        return Err(Error::InvalidParameter("forest max_depth must be at least 1".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("forest needs at least one tree".into()));
    }
    let n_features = validate_matrix(features)?;
    if labels.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    if labels.iter().all(|l| *l == labels[0]) {
        return Err(Error::SingleClass);
    }
    let grower = Grower {
        features,
        labels,
        max_depth: params.max_depth,
    };
    let n = features.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let rows: Vec<usize> = if params.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &format!("forest/tree/{t}")));
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grower.grow(&rows, 0)
        })
        .collect();
    Ok(ForestModel {
        n_features,
        max_depth: params.max_depth,
        trees,
    })
}

impl ForestModel {
    /// Plurality over each tree's leaf class.
    pub fn predict(&self, row: &[f64], policy: TiePolicy) -> Result<VoteOutcome> {
        check_row(row, self.n_features)?;
        let mut votes = [0usize; N_CLASSES];
        for tree in &self.trees {
            votes[leaf_class(tree.leaf_for(row)).index()] += 1;
        }
        VoteOutcome::from_counts(votes, policy)
    }

    /// Mean of the per-tree leaf class frequencies.
    pub fn predict_distribution(&self, row: &[f64]) -> Result<ClassDistribution> {
        check_row(row, self.n_features)?;
        let mut sum = [0.0; N_CLASSES];
        for tree in &self.trees {
            let counts = tree.leaf_for(row);
            let n: u32 = counts.iter().sum();
            for (s, &c) in sum.iter_mut().zip(counts) {
                *s += f64::from(c) / f64::from(n.max(1));
            }
        }
        ClassDistribution::from_weights(sum)
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        w.section(SECTION_FOREST, |w| {
            w.u32(self.n_features as u32);
            w.u32(self.max_depth as u32);
            w.u32(self.trees.len() as u32);
            for tree in &self.trees {
                tree.write(w, &|w, counts: &Counts| {
                    for &c in counts {
                        w.u32(c);
                    }
                });
            }
        });
    }

    pub(crate) fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let mut s = r.section(SECTION_FOREST)?;
        let n_features = s.u32()? as usize;
        let max_depth = s.u32()? as usize;
        let n_trees = s.u32()? as usize;
        if n_trees == 0 {
            return Err(Error::ModelFormat("forest without trees".into()));
        }
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            trees.push(TreeNode::read(&mut s, n_features, max_depth, &|r| {
                let mut c = [0u32; N_CLASSES];
                for v in c.iter_mut() {
                    *v = r.u32()?;
                }
                if c.iter().all(|&v| v == 0) {
                    return Err(Error::ModelFormat("empty forest leaf".into()));
                }
                Ok(c)
            })?);
        }
        s.finish()?;
        Ok(ForestModel {
            n_features,
            max_depth,
            trees,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header();
        self.write(&mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::with_header(bytes)?;
        let model = Self::read(&mut r)?;
        r.finish()?;
        Ok(model)
    }
}
