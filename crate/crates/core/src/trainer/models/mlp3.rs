use ndarray::{s, Array2};

use super::{dense, init_uniform, linear, linear_back, relu_back, relu_inplace, Forward, Network};
use crate::tasks::Inputs;
use crate::trainer::loss::Loss;
use crate::trainer::params::{Layout, TensorId, View, ViewMut};

/// Bias-free `W_3 ReLU(W_2 ReLU(W_1 x))` with every weight scaled by `α` at
/// initialization; `φ` is the second hidden layer.
pub struct Mlp3Scaled {
    layout: Layout,
    w1: TensorId,
    w2: TensorId,
    w3: TensorId,
    alpha: f64,
    beta: f64,
    d_in: usize,
    width: usize,
    classes: usize,
}

struct Cache {
    h1: Array2<f64>,
    h2: Array2<f64>,
    logits: Array2<f64>,
}

impl Mlp3Scaled {
    pub fn new(d_in: usize, width: usize, classes: usize, alpha: f64, beta: f64) -> Self {
        let mut layout = Layout::default();
        let w1 = layout.add("w1", width, d_in);
        let w2 = layout.add("w2", width, width);
        let w3 = layout.add("w3", classes, width);
        Self { layout, w1, w2, w3, alpha, beta, d_in, width, classes }
    }

    fn run(&self, params: &[f64], x: &Inputs) -> Cache {
        let p = View { layout: &self.layout, data: params };
        let mut h1 = linear(dense(x), p.mat(self.w1), None);
        relu_inplace(&mut h1);
        let mut h2 = linear(h1.view(), p.mat(self.w2), None);
        relu_inplace(&mut h2);
        let logits = linear(h2.view(), p.mat(self.w3), None);
        Cache { h1, h2, logits }
    }
}

impl Network for Mlp3Scaled {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        let mut data = vec![0.0; self.layout.len()];
        init_uniform(&mut data[self.layout.range(self.w1)], self.d_in, seed, 1, self.alpha);
        init_uniform(&mut data[self.layout.range(self.w2)], self.width, seed, 2, self.alpha);
        init_uniform(&mut data[self.layout.range(self.w3)], self.width, seed, 3, self.alpha * self.beta);
        data
    }

    fn forward(&self, params: &[f64], x: &Inputs) -> Forward {
        let c = self.run(params, x);
        Forward { logits: c.logits, features: c.h2 }
    }

    fn loss_and_grad(&self, params: &[f64], x: &Inputs, labels: &[u32], loss: Loss) -> (f64, Vec<f64>) {
        let c = self.run(params, x);
        let (value, dlogits) = loss.value_and_grad(c.logits.view(), labels);
        let p = View { layout: &self.layout, data: params };
        let mut grad = vec![0.0; self.layout.len()];
        let mut g = ViewMut { layout: &self.layout, data: &mut grad };
        let mut dh2 = linear_back(c.h2.view(), p.mat(self.w3), dlogits.view(), g.mat(self.w3), None, true).unwrap();
        relu_back(&mut dh2, &c.h2);
        let mut dh1 = linear_back(c.h1.view(), p.mat(self.w2), dh2.view(), g.mat(self.w2), None, true).unwrap();
        relu_back(&mut dh1, &c.h1);
        linear_back(dense(x), p.mat(self.w1), dh1.view(), g.mat(self.w1), None, false);
        (value, grad)
    }

    fn readout(&self, params: &[f64]) -> Array2<f64> {
        let p = View { layout: &self.layout, data: params };
        let mut w = Array2::zeros((self.classes, self.width + 1));
        w.slice_mut(s![.., ..self.width]).assign(&p.mat(self.w3));
        w
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn feature_dim(&self) -> usize {
        self.width
    }
}
