//! Fully connected ReLU network with softmax output, trained by Adam.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::tree::argmax;
use crate::seed::rng_for;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// fan_in x fan_out
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self { hidden: vec![100, 200, 100], learning_rate: 1e-3, epochs: 200, batch_size: 32 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    /// Per-feature standardisation fitted on the training rows.
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

pub type Gradients = Vec<Dense>;

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(shape: &[Dense]) -> Self {
        let zeros: Gradients =
            shape.iter().map(|l| Dense { w: Array2::zeros(l.w.raw_dim()), b: Array1::zeros(l.b.len()) }).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, layers: &mut [Dense], grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        };
        for (((l, g), m), v) in layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut l.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut l.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

/// Row-wise log-softmax.
fn log_softmax(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, identity standardisation.
    pub fn init(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|p| {
                let bound = (6.0 / (p[0] + p[1]) as f64).sqrt();
                let u = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                Dense { w: Array2::from_shape_fn((p[0], p[1]), |_| u.sample(rng)), b: Array1::zeros(p[1]) }
            })
            .collect();
        Self { layers, mean: Array1::zeros(sizes[0]), scale: Array1::ones(sizes[0]) }
    }

    pub fn standardize(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.scale
    }

    /// Pre-activations of every layer for standardised inputs.
    fn forward(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let z = a.dot(&l.w) + &l.b;
            if i + 1 < self.layers.len() {
                a = relu(&z);
            }
            zs.push(z);
        }
        zs
    }

    pub fn logits(&self, x_std: &Array2<f64>) -> Array2<f64> {
        self.forward(x_std).pop().expect("at least one layer")
    }

    /// Mean cross-entropy on standardised inputs.
    pub fn loss(&self, x_std: &Array2<f64>, y: &[usize]) -> f64 {
        let lp = log_softmax(&self.logits(x_std));
        -y.iter().enumerate().map(|(i, &c)| lp[[i, c]]).sum::<f64>() / y.len() as f64
    }

    /// Mean cross-entropy and its gradient by backpropagation.
    pub fn loss_and_grad(&self, x_std: &Array2<f64>, y: &[usize]) -> (f64, Gradients) {
        let n = y.len() as f64;
        let zs = self.forward(x_std);
        let lp = log_softmax(zs.last().expect("at least one layer"));
        let loss = -y.iter().enumerate().map(|(i, &c)| lp[[i, c]]).sum::<f64>() / n;

        let mut delta = lp.mapv(f64::exp);
        for (i, &c) in y.iter().enumerate() {
            delta[[i, c]] -= 1.0;
        }
        delta /= n;

        let mut grads = Vec::with_capacity(self.layers.len());
        for li in (0..self.layers.len()).rev() {
            let input = if li == 0 { x_std.clone() } else { relu(&zs[li - 1]) };
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if li > 0 {
                let mut back = delta.dot(&self.layers[li].w.t());
                ndarray::Zip::from(&mut back).and(&zs[li - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn fit(x: &Array2<f64>, y: &[usize], n_classes: usize, params: &MlpParams, seed: u64) -> Self {
        let mut sizes = vec![x.ncols()];
        sizes.extend(&params.hidden);
        sizes.push(n_classes);
        let mut net = Self::init(&sizes, &mut rng_for(seed, &[0]));
        net.mean = x.mean_axis(Axis(0)).expect("non-empty training set");
        net.scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        let xs = net.standardize(x);

        let mut adam = Adam::new(&net.layers);
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        let mut rng = rng_for(seed, &[1]);
        let batch = params.batch_size.max(1);
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let xb = xs.select(Axis(0), chunk);
                let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
                let (_, g) = net.loss_and_grad(&xb, &yb);
                adam.step(&mut net.layers, &g, params.learning_rate);
            }
        }
        net
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> usize {
        let row = x.to_owned().insert_axis(Axis(0));
        let z = self.logits(&self.standardize(&row));
        argmax(z.row(0).as_slice().expect("contiguous row"))
    }
}
