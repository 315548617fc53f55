//! Classifiers, metrics and the repeated split-train-test protocol.

pub mod boost;
pub mod codec;
pub mod forest;
pub mod metrics;
pub mod mlp;
pub mod protocol;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::features::LAYOUT_VERSION;
use crate::sim::Scenario;

pub use boost::AdaBoost;
pub use forest::RandomForest;
pub use metrics::Metrics;
pub use mlp::{Mlp, MlpParams};
pub use protocol::{run_protocol, stratified_split, MetricSummary, ProtocolSummary};
pub use tree::{DecisionTree, TreeParams};

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub scenario: Option<Scenario>,
    pub layout_version: u16,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<u8>, scenario: Option<Scenario>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", features.nrows(), labels.len())));
        }
        if let Some(((r, c), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(domain(format!("non-finite feature at row {r}, column {c}")));
        }
        if let Some(s) = scenario {
            if let Some(&bad) = labels.iter().find(|&&l| l as usize > s.max_people()) {
                return Err(domain(format!("label {bad} exceeds {} for {s}", s.max_people())));
            }
        }
        Ok(Self { features, labels, scenario, layout_version: LAYOUT_VERSION })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            scenario: self.scenario,
            layout_version: self.layout_version,
        }
    }

    /// Keeps only the given feature columns.
    pub fn columns(&self, cols: &[usize]) -> Self {
        Self { features: self.features.select(Axis(1), cols), ..self.clone() }
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<u8> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierKind {
    DecisionTree,
    RandomForest,
    AdaBoost,
    NeuralNet,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] =
        [ClassifierKind::DecisionTree, ClassifierKind::RandomForest, ClassifierKind::AdaBoost, ClassifierKind::NeuralNet];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::DecisionTree => "decision_tree",
            ClassifierKind::RandomForest => "random_forest",
            ClassifierKind::AdaBoost => "adaboost",
            ClassifierKind::NeuralNet => "neural_net",
        }
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "decision_tree" | "dt" | "tree" => Ok(ClassifierKind::DecisionTree),
            "random_forest" | "rf" | "forest" => Ok(ClassifierKind::RandomForest),
            "adaboost" | "ada" => Ok(ClassifierKind::AdaBoost),
            "neural_net" | "nn" | "mlp" => Ok(ClassifierKind::NeuralNet),
            _ => Err(domain(format!("unknown classifier {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub trees: usize,
    pub estimators: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: Optimizer,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means all for a single tree and
    /// `floor(sqrt(d))` for a forest.
    pub feature_subset_size: Option<usize>,
    pub bootstrap: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl ClassifierConfig {
    pub fn new(kind: ClassifierKind) -> Self {
        let base = Self {
            kind,
            trees: 200,
            estimators: 50,
            hidden: vec![100, 200, 100],
            activation: Activation::ReLU,
            optimizer: Optimizer::Adam,
            max_depth: None,
            min_leaf: 1,
            feature_subset_size: None,
            bootstrap: true,
            learning_rate: 1.0,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        };
        match kind {
            ClassifierKind::AdaBoost => Self { max_depth: Some(3), ..base },
            ClassifierKind::NeuralNet => Self { learning_rate: 1e-3, ..base },
            _ => base,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("trees", self.trees),
            ("estimators", self.estimators),
            ("min_leaf", self.min_leaf),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(domain(format!("{name} must be positive")));
        }
        if self.hidden.contains(&0) || self.max_depth == Some(0) || self.feature_subset_size == Some(0) {
            return Err(domain("layer widths, max_depth and feature_subset_size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(domain(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }

    fn tree_params(&self, n_features: usize) -> TreeParams {
        let max_features = match (self.kind, self.feature_subset_size) {
            (_, Some(m)) => Some(m.min(n_features)),
            (ClassifierKind::RandomForest, None) => Some(((n_features as f64).sqrt().floor() as usize).max(1)),
            _ => None,
        };
        TreeParams { max_depth: self.max_depth, min_leaf: self.min_leaf, max_features }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelBody {
    /// Single-class training data.
    Constant,
    Tree(DecisionTree),
    Forest(RandomForest),
    Boost(AdaBoost),
    Net(Mlp),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub kind: ClassifierKind,
    pub body: ModelBody,
    /// Label of each internal class index, ascending.
    pub classes: Vec<u8>,
    pub n_features: usize,
    pub layout_version: u16,
    pub seed: u64,
}

pub fn train(cfg: &ClassifierConfig, data: &LabeledDataset) -> Result<TrainedModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(domain("empty training set"));
    }
    if data.features.iter().any(|v| !v.is_finite()) {
        return Err(domain("non-finite training features"));
    }
    let classes = data.classes();
    let index_of = |l: u8| classes.binary_search(&l).expect("label is in class list");
    let y: Vec<usize> = data.labels.iter().map(|&l| index_of(l)).collect();
    let k = classes.len();
    let x = &data.features;
    let params = cfg.tree_params(data.n_features());
    let body = if k == 1 {
        ModelBody::Constant
    } else {
        match cfg.kind {
            ClassifierKind::DecisionTree => {
                let w = vec![1.0; y.len()];
                let mut rng = crate::seed::rng_for(cfg.seed, &[0]);
                ModelBody::Tree(DecisionTree::fit(x, &y, &w, k, params, &mut rng))
            }
            ClassifierKind::RandomForest => {
                ModelBody::Forest(RandomForest::fit(x, &y, k, cfg.trees, cfg.bootstrap, params, cfg.seed))
            }
            ClassifierKind::AdaBoost => {
                ModelBody::Boost(AdaBoost::fit(x, &y, k, cfg.estimators, cfg.learning_rate, params, cfg.seed))
            }
            ClassifierKind::NeuralNet => {
                let p = MlpParams {
                    hidden: cfg.hidden.clone(),
                    learning_rate: cfg.learning_rate,
                    epochs: cfg.epochs,
                    batch_size: cfg.batch_size,
                };
                ModelBody::Net(Mlp::fit(x, &y, k, &p, cfg.seed))
            }
        }
    };
    Ok(TrainedModel {
        kind: cfg.kind,
        body,
        classes,
        n_features: data.n_features(),
        layout_version: data.layout_version,
        seed: cfg.seed,
    })
}

impl TrainedModel {
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<u8> {
        if x.len() != self.n_features {
            return Err(domain(format!("model expects {} features, got {}", self.n_features, x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(domain("non-finite input features"));
        }
        let idx = match &self.body {
            ModelBody::Constant => 0,
            ModelBody::Tree(t) => t.predict(x),
            ModelBody::Forest(f) => f.predict(x),
            ModelBody::Boost(b) => b.predict(x),
            ModelBody::Net(n) => n.predict(x),
        };
        Ok(self.classes[idx])
    }

    pub fn predict_all(&self, data: &LabeledDataset) -> Result<Vec<u8>> {
        if data.layout_version != self.layout_version {
            return Err(domain(format!(
                "feature layout {} does not match model layout {}",
                data.layout_version, self.layout_version
            )));
        }
        data.features.rows().into_iter().map(|r| self.predict(r)).collect()
    }
}

pub fn predict(model: &TrainedModel, x: ArrayView1<f64>) -> Result<u8> {
    model.predict(x)
}

/// Confusion and macro scores over the labels seen in either the model or the test set.
pub fn evaluate(model: &TrainedModel, test: &LabeledDataset) -> Result<Metrics> {
    if test.is_empty() {
        return Err(domain("empty test set"));
    }
    let pred = model.predict_all(test)?;
    let n_classes = test.labels.iter().chain(&model.classes).max().map_or(1, |&m| m as usize + 1);
    Metrics::from_predictions(&test.labels, &pred, n_classes)
}
