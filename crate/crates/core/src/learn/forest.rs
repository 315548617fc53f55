//! Bootstrap-bagged CART forest with majority voting.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams};
use crate::seed::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
}

impl RandomForest {
    /// Tree `t` draws from its own stream derived from `(seed, t)`, so the
    /// result does not depend on how trees are scheduled.
    pub fn fit(
        x: &Array2<f64>,
        y: &[usize],
        n_classes: usize,
        n_trees: usize,
        bootstrap: bool,
        params: TreeParams,
        seed: u64,
    ) -> Self {
        let n = x.nrows();
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_for(seed, &[t as u64]);
                let mut w = vec![if bootstrap { 0.0 } else { 1.0 }; n];
                if bootstrap {
                    for _ in 0..n {
                        w[rng.random_range(0..n)] += 1.0;
                    }
                }
                DecisionTree::fit(x, y, &w, n_classes, params, &mut rng)
            })
            .collect();
        Self { trees, n_classes }
    }

    pub fn votes(&self, x: ArrayView1<f64>) -> Vec<usize> {
        let mut v = vec![0; self.n_classes];
        for t in &self.trees {
            v[t.predict(x)] += 1;
        }
        v
    }

    /// Majority vote; ties go to the smaller class.
    pub fn predict(&self, x: ArrayView1<f64>) -> usize {
        let v = self.votes(x);
        let mut best = 0;
        for (i, &c) in v.iter().enumerate() {
            if c > v[best] {
                best = i;
            }
        }
        best
    }
}
