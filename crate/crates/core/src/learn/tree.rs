//! CART classification tree with Gini impurity and sample weights.

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Candidate features drawn per split; `None` tries all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: None, min_leaf: 1, max_features: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Normalised weighted class distribution.
    Leaf { dist: Vec<f64> },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
}

struct Builder<'a, R> {
    x: &'a Array2<f64>,
    y: &'a [usize],
    w: &'a [f64],
    k: usize,
    params: TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn gini_mass(counts: &[f64], total: f64) -> f64 {
    // total * gini = total - sum(c^2) / total
    if total <= 0.0 {
        return 0.0;
    }
    total - counts.iter().map(|c| c * c).sum::<f64>() / total
}

impl<R: Rng> Builder<'_, R> {
    fn class_counts(&self, rows: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.k];
        for &r in rows {
            counts[self.y[r]] += self.w[r];
        }
        counts
    }

    fn leaf(&mut self, counts: Vec<f64>) -> usize {
        let total: f64 = counts.iter().sum();
        let dist = if total > 0.0 { counts.iter().map(|c| c / total).collect() } else { vec![1.0 / self.k as f64; self.k] };
        self.nodes.push(Node::Leaf { dist });
        self.nodes.len() - 1
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.ncols();
        match self.params.max_features {
            Some(m) if m < d => {
                let mut f = sample(self.rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize], counts: &[f64], total: f64) -> Option<Best> {
        let parent = gini_mass(counts, total);
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<Best> = None;
        let mut order = rows.to_vec();
        for f in self.candidate_features() {
            let col = self.x.column(f);
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            let mut left = vec![0.0; self.k];
            let mut lw = 0.0;
            for i in 0..order.len() - 1 {
                let r = order[i];
                left[self.y[r]] += self.w[r];
                lw += self.w[r];
                let (v, next) = (col[r], col[order[i + 1]]);
                if v == next || i + 1 < min_leaf || order.len() - i - 1 < min_leaf {
                    continue;
                }
                let right: Vec<f64> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let score = gini_mass(&left, lw) + gini_mass(&right, total - lw);
                let improves = best.as_ref().is_none_or(|b| score < b.score - 1e-12 * total);
                if score < parent - 1e-12 * total && improves {
                    let mut threshold = 0.5 * (v + next);
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(Best { feature: f, threshold, score });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let counts = self.class_counts(&rows);
        let total: f64 = counts.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_done = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_done || rows.len() < 2 * self.params.min_leaf.max(1) {
            return self.leaf(counts);
        }
        let Some(best) = self.best_split(&rows, &counts, total) else {
            return self.leaf(counts);
        };
        let col = self.x.column(best.feature);
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= best.threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Split { feature: best.feature, threshold: best.threshold, left: 0, right: 0 });
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        id
    }
}

impl DecisionTree {
    /// Fits on rows with positive weight. `y` holds class indices below `n_classes`.
    pub fn fit<R: Rng>(
        x: &Array2<f64>,
        y: &[usize],
        w: &[f64],
        n_classes: usize,
        params: TreeParams,
        rng: &mut R,
    ) -> Self {
        let rows: Vec<usize> = (0..x.nrows()).filter(|&i| w[i] > 0.0).collect();
        let mut b = Builder { x, y, w, k: n_classes, params, rng, nodes: Vec::new() };
        b.grow(rows, 0);
        Self { nodes: b.nodes, n_classes }
    }

    pub fn predict_proba(&self, x: ArrayView1<f64>) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { dist } => return dist,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Most probable class; ties go to the smaller index.
    pub fn predict(&self, x: ArrayView1<f64>) -> usize {
        argmax(self.predict_proba(x))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
