use crate::error::{Error, Result};
use crate::serial::{ByteReader, ByteWriter};

const TAG_LEAF: u8 = 0;
const TAG_SPLIT: u8 = 1;

/// Binary decision tree; rows with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode<L> {
    Leaf(L),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode<L>>,
        right: Box<TreeNode<L>>,
    },
}

impl<L> TreeNode<L> {
    pub fn leaf_for(&self, row: &[f64]) -> &L {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf(value) => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] < *threshold { left } else { right },
            }
        }
    }

    /// Edges on the longest root-to-leaf path; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub(crate) fn write(&self, w: &mut ByteWriter, leaf: &impl Fn(&mut ByteWriter, &L)) {
        match self {
            TreeNode::Leaf(value) => {
                w.u8(TAG_LEAF);
                leaf(w, value);
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                w.u8(TAG_SPLIT);
                w.u32(*feature as u32);
                w.f64(*threshold);
                left.write(w, leaf);
                right.write(w, leaf);
            }
        }
    }

    pub(crate) fn read(
        r: &mut ByteReader<'_>,
        n_features: usize,
        max_depth: usize,
        leaf: &impl Fn(&mut ByteReader<'_>) -> Result<L>,
    ) -> Result<Self> {
        match r.u8()? {
            TAG_LEAF => Ok(TreeNode::Leaf(leaf(r)?)),
            TAG_SPLIT => {
                if max_depth == 0 {
                    return Err(Error::ModelFormat("tree deeper than its declared maximum".into()));
                }
                let feature = r.u32()? as usize;
                let threshold = r.f64()?;
                if feature >= n_features || !threshold.is_finite() {
                    return Err(Error::ModelFormat(format!(
                        "bad split on feature {feature} at {threshold}"
                    )));
                }
                let left = Box::new(Self::read(r, n_features, max_depth - 1, leaf)?);
                let right = Box::new(Self::read(r, n_features, max_depth - 1, leaf)?);
                Ok(TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                })
            }
            tag => Err(Error::ModelFormat(format!("unknown tree node tag {tag}"))),
        }
    }
}
