//! Multiclass AdaBoost with real-valued (SAMME.R) stage votes.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::tree::{argmax, DecisionTree, TreeParams};
use crate::seed::rng_for;

/// Probability floor before taking logarithms.
const PROB_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub stages: Vec<DecisionTree>,
    pub n_classes: usize,
    pub learning_rate: f64,
}

/// Symmetric log-probability vote of one stage:
/// `(K - 1) * (log p_k - mean_j log p_j)`, scaled by the learning rate.
fn stage_vote(tree: &DecisionTree, x: ArrayView1<f64>, lr: f64, out: &mut [f64]) {
    let k = out.len() as f64;
    let p = tree.predict_proba(x);
    let logs: Vec<f64> = p.iter().map(|&v| v.max(PROB_FLOOR).ln()).collect();
    let mean = logs.iter().sum::<f64>() / k;
    for (o, l) in out.iter_mut().zip(&logs) {
        *o += lr * (k - 1.0) * (l - mean);
    }
}

impl AdaBoost {
    pub fn fit(
        x: &Array2<f64>,
        y: &[usize],
        n_classes: usize,
        n_stages: usize,
        learning_rate: f64,
        params: TreeParams,
        seed: u64,
    ) -> Self {
        let n = x.nrows();
        let k = n_classes as f64;
        let mut w = vec![1.0 / n as f64; n];
        let mut stages = Vec::with_capacity(n_stages);
        for s in 0..n_stages {
            let mut rng = rng_for(seed, &[s as u64]);
            let tree = DecisionTree::fit(x, y, &w, n_classes, params, &mut rng);
            let mut err = 0.0;
            let mut factors = vec![0.0; n];
            for i in 0..n {
                let p = tree.predict_proba(x.row(i));
                if argmax(p) != y[i] {
                    err += w[i];
                }
                // Coding: 1 for the true class, -1/(K-1) elsewhere, so
                // y . log p = (K log p_y - sum log p) / (K - 1).
                let logs: Vec<f64> = p.iter().map(|&v| v.max(PROB_FLOOR).ln()).collect();
                let dot = (k * logs[y[i]] - logs.iter().sum::<f64>()) / (k - 1.0);
                factors[i] = -learning_rate * (k - 1.0) / k * dot;
            }
            stages.push(tree);
            if err <= 0.0 {
                break;
            }
            for (wi, f) in w.iter_mut().zip(&factors) {
                *wi *= f.exp();
            }
            let total: f64 = w.iter().sum();
            if !(total.is_finite() && total > 0.0) {
                break;
            }
            w.iter_mut().for_each(|wi| *wi /= total);
        }
        Self { stages, n_classes, learning_rate }
    }

    pub fn decision(&self, x: ArrayView1<f64>) -> Vec<f64> {
        let mut score = vec![0.0; self.n_classes];
        for t in &self.stages {
            stage_vote(t, x, self.learning_rate, &mut score);
        }
        score
    }

    /// Largest summed vote; ties go to the smaller class.
    pub fn predict(&self, x: ArrayView1<f64>) -> usize {
        argmax(&self.decision(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_first_stage_stops_boosting() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let y = [0, 0, 1, 1, 2, 2];
        let params = TreeParams { max_depth: Some(3), ..Default::default() };
        let b = AdaBoost::fit(&x, &y, 3, 50, 1.0, params, 1);
        assert_eq!(b.stages.len(), 1);
        for i in 0..6 {
            assert_eq!(b.predict(x.row(i)), b.stages[0].predict(x.row(i)));
            assert_eq!(b.predict(x.row(i)), y[i]);
        }
    }

    #[test]
    fn boosting_beats_a_stump() {
        // Interval class structure needs several stumps.
        let x = Array2::from_shape_fn((90, 1), |(i, _)| i as f64);
        let y: Vec<usize> = (0..90).map(|i| (i / 10) % 3).collect();
        let stump = TreeParams { max_depth: Some(1), ..Default::default() };
        let b = AdaBoost::fit(&x, &y, 3, 50, 1.0, stump, 2);
        let acc = |f: &dyn Fn(usize) -> usize| (0..90).filter(|&i| f(i) == y[i]).count();
        let single = acc(&|i| b.stages[0].predict(x.row(i)));
        let boosted = acc(&|i| b.predict(x.row(i)));
        assert!(b.stages.len() > 1);
        assert!(boosted > single, "{boosted} vs {single}");
    }

    #[test]
    fn vote_is_zero_sum() {
        let t = DecisionTree { nodes: vec![super::super::tree::Node::Leaf { dist: vec![0.2, 0.5, 0.3] }], n_classes: 3 };
        let mut out = vec![0.0; 3];
        stage_vote(&t, array![0.0].view(), 1.0, &mut out);
        assert!(out.iter().sum::<f64>().abs() < 1e-12);
        assert_eq!(argmax(&out), 1);
    }
}
