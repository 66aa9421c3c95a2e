use ndarray::{s, Array2};

use super::{init_normal, init_uniform, linear, linear_back, pairs, relu_back, relu_inplace, Forward, Network};
use crate::tasks::Inputs;
use crate::trainer::loss::Loss;
use crate::trainer::params::{Layout, TensorId, View, ViewMut};

/// `x = e_a + e_b`, `h = ReLU(W_in x + b)`, `z = ReLU(W_out h + b)`, `logits = U z + c`; `φ = z`.
pub struct MlpModadd {
    layout: Layout,
    emb: TensorId,
    w_in: TensorId,
    b_in: TensorId,
    w_out: TensorId,
    b_out: TensorId,
    unemb: TensorId,
    b_unemb: TensorId,
    beta: f64,
    emb_std: f64,
    classes: usize,
    d_emb: usize,
}

struct Cache {
    x: Array2<f64>,
    h: Array2<f64>,
    z: Array2<f64>,
    logits: Array2<f64>,
}

impl MlpModadd {
    pub fn new(vocab: usize, classes: usize, d_emb: usize, d_hidden: usize, beta: f64, emb_std: Option<f64>) -> Self {
        let mut layout = Layout::default();
        let emb = layout.add("embed", vocab, d_emb);
        let w_in = layout.add("w_in", d_hidden, d_emb);
        let b_in = layout.add("b_in", 1, d_hidden);
        let w_out = layout.add("w_out", d_emb, d_hidden);
        let b_out = layout.add("b_out", 1, d_emb);
        let unemb = layout.add("unembed", classes, d_emb);
        let b_unemb = layout.add("b_unembed", 1, classes);
        Self {
            layout,
            emb,
            w_in,
            b_in,
            w_out,
            b_out,
            unemb,
            b_unemb,
            beta,
            emb_std: emb_std.unwrap_or(1.0 / (d_emb as f64).sqrt()),
            classes,
            d_emb,
        }
    }

    fn run(&self, params: &[f64], x: &Inputs) -> Cache {
        let p = View { layout: &self.layout, data: params };
        let e = p.mat(self.emb);
        let pairs = pairs(x);
        let mut xs = Array2::zeros((pairs.len(), self.d_emb));
        for (i, &(a, b)) in pairs.iter().enumerate() {
            let mut row = xs.row_mut(i);
            row += &e.row(a as usize);
            row += &e.row(b as usize);
        }
        let mut h = linear(xs.view(), p.mat(self.w_in), Some(p.vec(self.b_in)));
        relu_inplace(&mut h);
        let mut z = linear(h.view(), p.mat(self.w_out), Some(p.vec(self.b_out)));
        relu_inplace(&mut z);
        let logits = linear(z.view(), p.mat(self.unemb), Some(p.vec(self.b_unemb)));
        Cache { x: xs, h, z, logits }
    }
}

impl Network for MlpModadd {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        let mut data = vec![0.0; self.layout.len()];
        let d_hidden = self.layout.spec(self.w_in).shape.0;
        init_normal(&mut data[self.layout.range(self.emb)], self.emb_std, seed, 0);
        init_uniform(&mut data[self.layout.range(self.w_in)], self.d_emb, seed, 1, 1.0);
        init_uniform(&mut data[self.layout.range(self.b_in)], self.d_emb, seed, 2, 1.0);
        init_uniform(&mut data[self.layout.range(self.w_out)], d_hidden, seed, 3, 1.0);
        init_uniform(&mut data[self.layout.range(self.b_out)], d_hidden, seed, 4, 1.0);
        init_uniform(&mut data[self.layout.range(self.unemb)], self.d_emb, seed, 5, self.beta);
        init_uniform(&mut data[self.layout.range(self.b_unemb)], self.d_emb, seed, 6, self.beta);
        data
    }

    fn forward(&self, params: &[f64], x: &Inputs) -> Forward {
        let c = self.run(params, x);
        Forward { logits: c.logits, features: c.z }
    }

    fn loss_and_grad(&self, params: &[f64], x: &Inputs, labels: &[u32], loss: Loss) -> (f64, Vec<f64>) {
        let c = self.run(params, x);
        let (value, dlogits) = loss.value_and_grad(c.logits.view(), labels);
        let p = View { layout: &self.layout, data: params };
        let mut grad = vec![0.0; self.layout.len()];
        let mut g = ViewMut { layout: &self.layout, data: &mut grad };

        let dz = linear_back(c.z.view(), p.mat(self.unemb), dlogits.view(), g.mat(self.unemb), None, true);
        g.vec(self.b_unemb).assign(&dlogits.sum_axis(ndarray::Axis(0)));
        let mut dz = dz.unwrap();
        relu_back(&mut dz, &c.z);
        let mut dh = linear_back(c.h.view(), p.mat(self.w_out), dz.view(), g.mat(self.w_out), None, true).unwrap();
        g.vec(self.b_out).assign(&dz.sum_axis(ndarray::Axis(0)));
        relu_back(&mut dh, &c.h);
        let dx = linear_back(c.x.view(), p.mat(self.w_in), dh.view(), g.mat(self.w_in), None, true).unwrap();
        g.vec(self.b_in).assign(&dh.sum_axis(ndarray::Axis(0)));
        let mut ge = g.mat(self.emb);
        for (i, &(a, b)) in pairs(x).iter().enumerate() {
            let row = dx.row(i);
            let mut ra = ge.row_mut(a as usize);
            ra += &row;
            let mut rb = ge.row_mut(b as usize);
            rb += &row;
        }
        (value, grad)
    }

    fn readout(&self, params: &[f64]) -> Array2<f64> {
        let p = View { layout: &self.layout, data: params };
        let mut w = Array2::zeros((self.classes, self.d_emb + 1));
        w.slice_mut(s![.., ..self.d_emb]).assign(&p.mat(self.unemb));
        w.column_mut(self.d_emb).assign(&p.vec(self.b_unemb));
        w
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn feature_dim(&self) -> usize {
        self.d_emb
    }
}
