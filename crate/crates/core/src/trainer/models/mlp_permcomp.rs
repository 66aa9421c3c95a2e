use ndarray::{s, Array2, Axis};

use super::{init_normal, init_uniform, linear, linear_back, pairs, relu_back, relu_inplace, Forward, Network};
use crate::tasks::Inputs;
use crate::trainer::loss::Loss;
use crate::trainer::params::{Layout, TensorId, View, ViewMut};

/// `x = [e_σ; e_τ]`, `h = ReLU(W_in x + b)`, `z = W_out h + b`, `logits = β E z`; `φ = z`.
///
/// The readout is tied to the embedding table `E`, so the output scale `β` is
/// a fixed multiplier on the readout path rather than a rescaling of `E`.
pub struct MlpPermcomp {
    layout: Layout,
    emb: TensorId,
    w_in: TensorId,
    b_in: TensorId,
    w_out: TensorId,
    b_out: TensorId,
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

impl MlpPermcomp {
    pub fn new(classes: usize, d_emb: usize, d_hidden: usize, beta: f64, emb_std: Option<f64>) -> Self {
        let mut layout = Layout::default();
        let emb = layout.add("embed", classes, d_emb);
        let w_in = layout.add("w_in", d_hidden, 2 * d_emb);
        let b_in = layout.add("b_in", 1, d_hidden);
        let w_out = layout.add("w_out", d_emb, d_hidden);
        let b_out = layout.add("b_out", 1, d_emb);
        Self {
            layout,
            emb,
            w_in,
            b_in,
            w_out,
            b_out,
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
        let d = self.d_emb;
        let mut xs = Array2::zeros((pairs.len(), 2 * d));
        for (i, &(a, b)) in pairs.iter().enumerate() {
            xs.slice_mut(s![i, ..d]).assign(&e.row(a as usize));
            xs.slice_mut(s![i, d..]).assign(&e.row(b as usize));
        }
        let mut h = linear(xs.view(), p.mat(self.w_in), Some(p.vec(self.b_in)));
        relu_inplace(&mut h);
        let z = linear(h.view(), p.mat(self.w_out), Some(p.vec(self.b_out)));
        let logits = z.dot(&e.t()) * self.beta;
        Cache { x: xs, h, z, logits }
    }
}

impl Network for MlpPermcomp {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        let mut data = vec![0.0; self.layout.len()];
        let d_hidden = self.layout.spec(self.w_in).shape.0;
        init_normal(&mut data[self.layout.range(self.emb)], self.emb_std, seed, 0);
        init_uniform(&mut data[self.layout.range(self.w_in)], 2 * self.d_emb, seed, 1, 1.0);
        init_uniform(&mut data[self.layout.range(self.b_in)], 2 * self.d_emb, seed, 2, 1.0);
        init_uniform(&mut data[self.layout.range(self.w_out)], d_hidden, seed, 3, 1.0);
        init_uniform(&mut data[self.layout.range(self.b_out)], d_hidden, seed, 4, 1.0);
        data
    }

    fn forward(&self, params: &[f64], x: &Inputs) -> Forward {
        let c = self.run(params, x);
        Forward { logits: c.logits, features: c.z }
    }

    fn loss_and_grad(&self, params: &[f64], x: &Inputs, labels: &[u32], loss: Loss) -> (f64, Vec<f64>) {
        let c = self.run(params, x);
        let (value, dlogits) = loss.value_and_grad(c.logits.view(), labels);
        let dlogits = dlogits * self.beta;
        let p = View { layout: &self.layout, data: params };
        let mut grad = vec![0.0; self.layout.len()];
        let mut g = ViewMut { layout: &self.layout, data: &mut grad };
        let d = self.d_emb;

        let dz = linear_back(c.z.view(), p.mat(self.emb), dlogits.view(), g.mat(self.emb), None, true).unwrap();
        let mut dh = linear_back(c.h.view(), p.mat(self.w_out), dz.view(), g.mat(self.w_out), None, true).unwrap();
        g.vec(self.b_out).assign(&dz.sum_axis(Axis(0)));
        relu_back(&mut dh, &c.h);
        let dx = linear_back(c.x.view(), p.mat(self.w_in), dh.view(), g.mat(self.w_in), None, true).unwrap();
        g.vec(self.b_in).assign(&dh.sum_axis(Axis(0)));
        let mut ge = g.mat(self.emb);
        for (i, &(a, b)) in pairs(x).iter().enumerate() {
            let mut ra = ge.row_mut(a as usize);
            ra += &dx.slice(s![i, ..d]);
            let mut rb = ge.row_mut(b as usize);
            rb += &dx.slice(s![i, d..]);
        }
        (value, grad)
    }

    fn readout(&self, params: &[f64]) -> Array2<f64> {
        let p = View { layout: &self.layout, data: params };
        let mut w = Array2::zeros((self.classes, self.d_emb + 1));
        w.slice_mut(s![.., ..self.d_emb]).assign(&(&p.mat(self.emb) * self.beta));
        w
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn feature_dim(&self) -> usize {
        self.d_emb
    }
}
