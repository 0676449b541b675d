use super::{check_row, sorted_by_feature, validate_matrix, TreeNode};
use crate::error::{Error, Result};
use crate::serial::{ByteReader, ByteWriter};

const HESSIAN_FLOOR: f64 = 1e-6;
const MIN_SAMPLES_LEAF: usize = 2;
const MIN_GAIN: f64 = 1e-12;
const MAX_BACKTRACK: usize = 40;
const PROBA_CLAMP: f64 = 1e-15;
const SECTION_GBM: u32 = u32::from_le_bytes(*b"GBM1");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            n_estimators: 100,
            learning_rate: 0.01,
            max_depth: 3,
        }
    }
}

impl GbmParams {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidParameter("GBM max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Binary logistic gradient-boosted trees. Leaves hold raw Newton steps;
/// the margin is `base_score + learning_rate * sum(leaves)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_features: usize,
    pub trees: Vec<TreeNode<f64>>,
}

fn sigmoid(margin: f64) -> f64 {
    1.0 / (1.0 + (-margin).exp())
}

/// `log(1 + e^m) - y m`, the negative log-likelihood of label `y`.
fn point_loss(margin: f64, label: bool) -> f64 {
    let softplus = margin.max(0.0) + (-margin.abs()).exp().ln_1p();
    if label {
        softplus - margin
    } else {
        softplus
    }
}

/// Weighted mean logistic loss of raw margins.
pub fn log_loss(margins: &[f64], labels: &[bool], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    margins
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((&m, &y), &w)| w * point_loss(m, y))
        .sum::<f64>()
        / total
}

struct Trainer<'a> {
    features: &'a [Vec<f64>],
    labels: &'a [bool],
    weights: &'a [f64],
    margins: Vec<f64>,
    grad: Vec<f64>,
    hess: Vec<f64>,
    params: GbmParams,
}

impl Trainer<'_> {
    fn sums(&self, indices: &[usize]) -> (f64, f64) {
        indices
            .iter()
            .fold((0.0, 0.0), |(g, h), &i| (g + self.grad[i], h + self.hess[i]))
    }

    /// Newton step for a leaf, halved until the leaf's loss does not rise.
    fn leaf_value(&self, indices: &[usize]) -> f64 {
        let (g, h) = self.sums(indices);
        let mut value = -g / h.max(HESSIAN_FLOOR);
        let loss_at = |step: f64| -> f64 {
            indices
                .iter()
                .map(|&i| self.weights[i] * point_loss(self.margins[i] + step, self.labels[i]))
                .sum()
        };
        let before = loss_at(0.0);
        for _ in 0..MAX_BACKTRACK {
            if loss_at(self.params.learning_rate * value) <= before {
                return value;
            }
            value *= 0.5;
        }
        0.0
    }

    fn gain_term(g: f64, h: f64) -> f64 {
        g * g / h.max(HESSIAN_FLOOR)
    }

    fn best_split(&self, indices: &[usize]) -> Option<(usize, f64, Vec<usize>, Vec<usize>)> {
        let (g_total, h_total) = self.sums(indices);
        let parent = Self::gain_term(g_total, h_total);
        let mut best: Option<(f64, usize, usize, Vec<usize>)> = None;
        for feature in 0..self.features[0].len() {
            let order = sorted_by_feature(self.features, indices, feature);
            let (mut g_left, mut h_left) = (0.0, 0.0);
            for k in 1..order.len() {
                g_left += self.grad[order[k - 1]];
                h_left += self.hess[order[k - 1]];
                if k < MIN_SAMPLES_LEAF || order.len() - k < MIN_SAMPLES_LEAF {
                    continue;
                }
                if self.features[order[k - 1]][feature] >= self.features[order[k]][feature] {
                    continue;
                }
                let gain = Self::gain_term(g_left, h_left)
                    + Self::gain_term(g_total - g_left, h_total - h_left)
                    - parent;
                let better = match &best {
                    None => gain > MIN_GAIN,
                    Some((best_gain, ..)) => gain > best_gain + 1e-12 * best_gain.abs(),
                };
                if better {
                    best = Some((gain, feature, k, order.clone()));
                }
            }
        }
        best.map(|(_, feature, k, order)| {
            let lo = self.features[order[k - 1]][feature];
            let hi = self.features[order[k]][feature];
            let mid = 0.5 * (lo + hi);
            let threshold = if mid > lo { mid } else { hi };
            (feature, threshold, order[..k].to_vec(), order[k..].to_vec())
        })
    }

    fn build(&self, indices: &[usize], depth: usize) -> TreeNode<f64> {
        if depth < self.params.max_depth && indices.len() >= 2 * MIN_SAMPLES_LEAF {
            if let Some((feature, threshold, left, right)) = self.best_split(indices) {
                return TreeNode::Split {
                    feature,
                    threshold,
                    left: Box::new(self.build(&left, depth + 1)),
                    right: Box::new(self.build(&right, depth + 1)),
                };
            }
        }
        TreeNode::Leaf(self.leaf_value(indices))
    }
}

/// Fits `params.n_estimators` regression trees to the logistic gradients.
/// There is no row or column subsampling, so training is deterministic.
pub fn train_gbm(features: &[Vec<f64>], labels: &[bool], weights: &[f64], params: &GbmParams) -> Result<GbmModel> {
    params.validate()?;
    let n_features = validate_matrix(features)?;
    for len in [labels.len(), weights.len()] {
        if len != features.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                found: len,
            });
        }
    }
    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::InvalidParameter("sample weights must be positive and finite".into()));
    }
    let positive: f64 = labels.iter().zip(weights).filter(|(y, _)| **y).map(|(_, w)| w).sum();
    let negative: f64 = labels.iter().zip(weights).filter(|(y, _)| !**y).map(|(_, w)| w).sum();
    if positive == 0.0 || negative == 0.0 {
        return Err(Error::SingleClass);
    }
    let base_score = (positive / negative).ln();

    let n = features.len();
    let mut trainer = Trainer {
        features,
        labels,
        weights,
        margins: vec![base_score; n],
        grad: vec![0.0; n],
        hess: vec![0.0; n],
        params: *params,
    };
    let all: Vec<usize> = (0..n).collect();
    let mut trees = Vec::with_capacity(params.n_estimators);
    for _ in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(trainer.margins[i]);
            let y = if labels[i] { 1.0 } else { 0.0 };
            trainer.grad[i] = weights[i] * (p - y);
            trainer.hess[i] = weights[i] * p * (1.0 - p);
        }
        let tree = trainer.build(&all, 0);
        for i in 0..n {
            trainer.margins[i] += params.learning_rate * tree.leaf_for(&features[i]);
        }
        trees.push(tree);
    }
    Ok(GbmModel {
        base_score,
        learning_rate: params.learning_rate,
        max_depth: params.max_depth,
        n_features,
        trees,
    })
}

impl GbmModel {
    fn margin_unchecked(&self, row: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.leaf_for(row)).sum::<f64>()
    }

    pub fn margin(&self, row: &[f64]) -> Result<f64> {
        check_row(row, self.n_features)?;
        Ok(self.margin_unchecked(row))
    }

    /// Probability of the positive class, kept strictly inside (0, 1).
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.margin(row)?).clamp(PROBA_CLAMP, 1.0 - PROBA_CLAMP))
    }

    /// Training-set loss after 0, 1, ..., n_trees rounds.
    pub fn staged_log_loss(&self, features: &[Vec<f64>], labels: &[bool], weights: &[f64]) -> Result<Vec<f64>> {
        for row in features {
            check_row(row, self.n_features)?;
        }
        let mut margins = vec![self.base_score; features.len()];
        let mut losses = vec![log_loss(&margins, labels, weights)];
        for tree in &self.trees {
            for (m, row) in margins.iter_mut().zip(features) {
                *m += self.learning_rate * tree.leaf_for(row);
            }
            losses.push(log_loss(&margins, labels, weights));
        }
        Ok(losses)
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        w.section(SECTION_GBM, |w| {
            w.u32(self.n_features as u32);
            w.u32(self.max_depth as u32);
            w.f64(self.learning_rate);
            w.f64(self.base_score);
            w.u32(self.trees.len() as u32);
            for tree in &self.trees {
                tree.write(w, &|w, v| w.f64(*v));
            }
        });
    }

    pub(crate) fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let mut s = r.section(SECTION_GBM)?;
        let n_features = s.u32()? as usize;
        let max_depth = s.u32()? as usize;
        let learning_rate = s.f64()?;
        let base_score = s.f64()?;
        if !(learning_rate > 0.0 && learning_rate <= 1.0) || !base_score.is_finite() {
            return Err(Error::ModelFormat("GBM header out of range".into()));
        }
        let n_trees = s.u32()? as usize;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            trees.push(TreeNode::read(&mut s, n_features, max_depth, &|r| {
                let v = r.f64()?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::ModelFormat("non-finite leaf".into()))
                }
            })?);
        }
        s.finish()?;
        Ok(GbmModel {
            base_score,
            learning_rate,
            max_depth,
            n_features,
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

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn separable(n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![-1.0 + 2.0 * i as f64 / (n - 1) as f64]).collect();
        let ys = xs.iter().map(|x| x[0] >= 0.0).collect();
        (xs, ys)
    }

    fn noisy(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<bool>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ys = xs.iter().map(|x| x[0] + 0.5 * x[1 % d] + rng.gen_range(-0.5..0.5) > 0.0).collect();
        let ws = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        (xs, ys, ws)
    }

    fn params(n: usize, lr: f64) -> GbmParams {
        GbmParams {
            n_estimators: n,
            learning_rate: lr,
            max_depth: 3,
        }
    }

    #[test]
    fn separable_reaches_full_accuracy() {
        let (xs, ys) = separable(40);
        let m = train_gbm(&xs, &ys, &vec![1.0; 40], &params(50, 0.1)).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(m.predict_proba(x).unwrap() >= 0.5, *y);
        }
        assert!(m.predict_proba(&[0.95]).unwrap() > 0.9);
    }

    #[test]
    fn mirrored_data_gives_complementary_probabilities() {
        let (xs, ys) = separable(40);
        let m = train_gbm(&xs, &ys, &vec![1.0; 40], &params(50, 0.1)).unwrap();
        for x in [0.1, 0.37, 0.8, 0.99] {
            let s = m.predict_proba(&[x]).unwrap() + m.predict_proba(&[-x]).unwrap();
            assert!((s - 1.0).abs() < 0.05, "x={x}: {s}");
        }
    }

    #[test]
    fn zero_trees_is_the_base_rate() {
        let (xs, _) = separable(10);
        let ys = [true, true, true, false, false, false, false, false, false, false];
        let m = train_gbm(&xs, &ys, &[1.0; 10], &params(0, 0.1)).unwrap();
        assert!((m.predict_proba(&[0.0]).unwrap() - 0.3).abs() < 1e-12);
        assert!((m.base_score - (3.0f64 / 7.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_features_stay_at_one_half() {
        let xs = vec![vec![1.0, 2.0]; 20];
        let ys: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let m = train_gbm(&xs, &ys, &[1.0; 20], &params(30, 0.3)).unwrap();
        assert!((m.predict_proba(&[1.0, 2.0]).unwrap() - 0.5).abs() < 1e-6);
        assert!(m.trees.iter().all(|t| t.depth() == 0));
    }

    #[test]
    fn precondition_errors() {
        let (xs, _) = separable(6);
        assert!(matches!(train_gbm(&xs, &[true; 6], &[1.0; 6], &params(5, 0.1)), Err(Error::SingleClass)));
        let ys = [true, false, true, false, true, false];
        let mut bad = xs.clone();
        bad[2][0] = f64::NAN;
        assert!(matches!(
            train_gbm(&bad, &ys, &[1.0; 6], &params(5, 0.1)),
            Err(Error::NonFiniteFeature { row: 2, column: 0 })
        ));
        assert!(train_gbm(&xs, &ys[..5], &[1.0; 6], &params(5, 0.1)).is_err());
        assert!(train_gbm(&xs, &ys, &[1.0; 6], &params(5, 0.0)).is_err());
        let m = train_gbm(&xs, &ys, &[1.0; 6], &params(5, 0.1)).unwrap();
        assert!(matches!(m.predict_proba(&[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn depth_is_bounded() {
        let (xs, ys, ws) = noisy(1, 200, 4);
        for depth in 1..5 {
            let p = GbmParams {
                max_depth: depth,
                ..params(20, 0.3)
            };
            let m = train_gbm(&xs, &ys, &ws, &p).unwrap();
            assert!(m.trees.iter().all(|t| t.depth() <= depth));
        }
    }

    #[test]
    fn serialization_round_trip_and_corruption() {
        let (xs, ys, ws) = noisy(2, 100, 3);
        let m = train_gbm(&xs, &ys, &ws, &params(25, 0.1)).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(GbmModel::from_bytes(&bytes).unwrap(), m);
        assert!(GbmModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut flipped = bytes.clone();
        flipped[0] ^= 0xff;
        assert!(GbmModel::from_bytes(&flipped).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn loss_never_increases(seed in any::<u64>(), lr in 0.01f64..1.0) {
            let (xs, ys, ws) = noisy(seed, 80, 3);
            let m = train_gbm(&xs, &ys, &ws, &params(40, lr)).unwrap();
            let losses = m.staged_log_loss(&xs, &ys, &ws).unwrap();
            for pair in losses.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-12, "{} -> {}", pair[0], pair[1]);
            }
        }

        #[test]
        fn monotone_transform_keeps_training_predictions(seed in any::<u64>(), col in 0usize..3) {
            let (xs, ys, ws) = noisy(seed, 60, 3);
            let warped: Vec<Vec<f64>> = xs
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r[col] = (3.0 * r[col]).exp() + 7.0;
                    r
                })
                .collect();
            let a = train_gbm(&xs, &ys, &ws, &params(20, 0.2)).unwrap();
            let b = train_gbm(&warped, &ys, &ws, &params(20, 0.2)).unwrap();
            for (x, w) in xs.iter().zip(&warped) {
                prop_assert_eq!(a.margin(x).unwrap(), b.margin(w).unwrap());
            }
        }

        #[test]
        fn deterministic_bytes(seed in any::<u64>()) {
            let (xs, ys, ws) = noisy(seed, 50, 4);
            let a = train_gbm(&xs, &ys, &ws, &params(15, 0.1)).unwrap().to_bytes();
            let b = train_gbm(&xs, &ys, &ws, &params(15, 0.1)).unwrap().to_bytes();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn probabilities_are_open_interval(seed in any::<u64>(), probe in prop::collection::vec(-1e6f64..1e6, 3)) {
            let (xs, ys, ws) = noisy(seed, 50, 3);
            let m = train_gbm(&xs, &ys, &ws, &params(30, 1.0)).unwrap();
            let p = m.predict_proba(&probe).unwrap();
            prop_assert!(p > 0.0 && p < 1.0);
        }
    }
}
