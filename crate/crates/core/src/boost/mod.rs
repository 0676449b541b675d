//! Tree learners: logistic gradient boosting for the binary stage-1 models
//! and a bagged Gini forest for the five-class stage 2.

mod forest;
mod gbm;
mod tree;

pub use forest::{train_forest, ForestModel, ForestParams};
pub use gbm::{log_loss, train_gbm, GbmModel, GbmParams};
pub use tree::TreeNode;

use crate::error::{Error, Result};

/// Checks a row-major feature matrix and returns its column count.
pub(crate) fn validate_matrix(features: &[Vec<f64>]) -> Result<usize> {
    let first = features.first().ok_or(Error::EmptyInput("feature matrix"))?;
    let n_features = first.len();
    if n_features == 0 {
        return Err(Error::EmptyInput("feature columns"));
    }
    for (row, values) in features.iter().enumerate() {
        if values.len() != n_features {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                found: values.len(),
            });
        }
        if let Some(column) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { row, column });
        }
    }
    Ok(n_features)
}

pub(crate) fn check_row(row: &[f64], n_features: usize) -> Result<()> {
    if row.len() != n_features {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            found: row.len(),
        });
    }
    if let Some(column) = row.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteFeature { row: 0, column });
    }
    Ok(())
}

/// Indices sorted by one feature; equal values keep index order.
pub(crate) fn sorted_by_feature(features: &[Vec<f64>], indices: &[usize], feature: usize) -> Vec<usize> {
    let mut order = indices.to_vec();
    order.sort_by(|&a, &b| features[a][feature].total_cmp(&features[b][feature]).then(a.cmp(&b)));
    order
}
