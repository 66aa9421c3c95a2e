use ndarray::{s, Array2, Axis};

use super::{dense, init_uniform, linear, linear_back, relu_back, relu_inplace, Forward, Network};
use crate::tasks::Inputs;
use crate::trainer::loss::Loss;
use crate::trainer::params::{Layout, TensorId, View, ViewMut};

/// `h = ReLU(W_in x + b)`, scalar `f = w·h`; logits are `[0, f]`; `φ = h`.
pub struct MlpParity {
    layout: Layout,
    w_in: TensorId,
    b_in: TensorId,
    w_out: TensorId,
    beta: f64,
    d_in: usize,
    d_hidden: usize,
}

impl MlpParity {
    pub fn new(d_in: usize, d_hidden: usize, beta: f64) -> Self {
        let mut layout = Layout::default();
        let w_in = layout.add("w_in", d_hidden, d_in);
        let b_in = layout.add("b_in", 1, d_hidden);
        let w_out = layout.add("w_out", 1, d_hidden);
        Self { layout, w_in, b_in, w_out, beta, d_in, d_hidden }
    }

    fn run(&self, params: &[f64], x: &Inputs) -> (Array2<f64>, Array2<f64>) {
        let p = View { layout: &self.layout, data: params };
        let mut h = linear(dense(x), p.mat(self.w_in), Some(p.vec(self.b_in)));
        relu_inplace(&mut h);
        let f = linear(h.view(), p.mat(self.w_out), None);
        let mut logits = Array2::zeros((h.nrows(), 2));
        logits.column_mut(1).assign(&f.column(0));
        (h, logits)
    }
}

impl Network for MlpParity {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        let mut data = vec![0.0; self.layout.len()];
        init_uniform(&mut data[self.layout.range(self.w_in)], self.d_in, seed, 1, 1.0);
        init_uniform(&mut data[self.layout.range(self.b_in)], self.d_in, seed, 2, 1.0);
        init_uniform(&mut data[self.layout.range(self.w_out)], self.d_hidden, seed, 3, self.beta);
        data
    }

    fn forward(&self, params: &[f64], x: &Inputs) -> Forward {
        let (h, logits) = self.run(params, x);
        Forward { logits, features: h }
    }

    fn loss_and_grad(&self, params: &[f64], x: &Inputs, labels: &[u32], loss: Loss) -> (f64, Vec<f64>) {
        let (h, logits) = self.run(params, x);
        let (value, dlogits) = loss.value_and_grad(logits.view(), labels);
        let df = dlogits.slice(s![.., 1..2]).to_owned();
        let p = View { layout: &self.layout, data: params };
        let mut grad = vec![0.0; self.layout.len()];
        let mut g = ViewMut { layout: &self.layout, data: &mut grad };
        let mut dh = linear_back(h.view(), p.mat(self.w_out), df.view(), g.mat(self.w_out), None, true).unwrap();
        relu_back(&mut dh, &h);
        linear_back(dense(x), p.mat(self.w_in), dh.view(), g.mat(self.w_in), None, false);
        g.vec(self.b_in).assign(&dh.sum_axis(Axis(0)));
        (value, grad)
    }

    fn readout(&self, params: &[f64]) -> Array2<f64> {
        let p = View { layout: &self.layout, data: params };
        let mut w = Array2::zeros((2, self.d_hidden + 1));
        w.slice_mut(s![1, ..self.d_hidden]).assign(&p.vec(self.w_out));
        w
    }

    fn classes(&self) -> usize {
        2
    }

    fn feature_dim(&self) -> usize {
        self.d_hidden
    }
}
