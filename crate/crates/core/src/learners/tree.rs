//! Binary decision tree storage shared by the forest and boosting learners.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub enum TreeNode<F: Scalar> {
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
    Leaf {
        values: Vec<F>,
    },
}

/// Nodes in a flat arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Tree<F: Scalar> {
    pub nodes: Vec<TreeNode<F>>,
}

impl<F: Scalar> Tree<F> {
    pub fn leaf(values: Vec<F>) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf { values }],
        }
    }

    pub fn leaf_values(&self, x: ArrayView1<'_, F>) -> &[F] {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { values } => return values,
            }
        }
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .max()
    }
}
