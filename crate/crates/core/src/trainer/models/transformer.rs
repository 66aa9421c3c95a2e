use ndarray::{s, Array1, Array2, Array3, Axis};

use super::{init_normal, init_uniform, linear, linear_back, pairs, relu_back, relu_inplace, Forward, Network};
use crate::tasks::Inputs;
use crate::trainer::loss::Loss;
use crate::trainer::params::{Layout, TensorId, View, ViewMut};

const SEQ: usize = 3;
const LN_EPS: f64 = 1e-5;

/// One decoder block over `[a, b, sep]` with learned positions, causal
/// multi-head attention (no biases, `1/sqrt(d_head)` scaling), a ReLU MLP and
/// a single final LayerNorm. `φ` is the normalized state at the last position.
///
/// Only the last position feeds the readout, so queries and the MLP are
/// evaluated there alone.
pub struct TransformerOneBlock {
    layout: Layout,
    embed: TensorId,
    pos: TensorId,
    wq: TensorId,
    wk: TensorId,
    wv: TensorId,
    wo: TensorId,
    w1: TensorId,
    b1: TensorId,
    w2: TensorId,
    b2: TensorId,
    ln_g: TensorId,
    ln_b: TensorId,
    unembed: TensorId,
    vocab: usize,
    classes: usize,
    d: usize,
    heads: usize,
    d_mlp: usize,
    beta: f64,
}

struct Cache {
    xs: Vec<Array2<f64>>,
    q: Array2<f64>,
    ks: Vec<Array2<f64>>,
    vs: Vec<Array2<f64>>,
    /// Attention weights, `B × heads × SEQ`.
    attn: Array3<f64>,
    o: Array2<f64>,
    x1: Array2<f64>,
    m: Array2<f64>,
    xhat: Array2<f64>,
    rstd: Array1<f64>,
    phi: Array2<f64>,
    logits: Array2<f64>,
}

impl TransformerOneBlock {
    pub fn new(vocab: usize, classes: usize, d: usize, heads: usize, d_mlp: usize, beta: f64) -> Self {
        let mut l = Layout::default();
        let embed = l.add("embed", vocab + 1, d);
        let pos = l.add("pos", SEQ, d);
        let wq = l.add("w_q", d, d);
        let wk = l.add("w_k", d, d);
        let wv = l.add("w_v", d, d);
        let wo = l.add("w_o", d, d);
        let w1 = l.add("mlp_in", d_mlp, d);
        let b1 = l.add("mlp_in_bias", 1, d_mlp);
        let w2 = l.add("mlp_out", d, d_mlp);
        let b2 = l.add("mlp_out_bias", 1, d);
        let ln_g = l.add("ln_gain", 1, d);
        let ln_b = l.add("ln_bias", 1, d);
        let unembed = l.add("unembed", classes, d);
        Self {
            layout: l,
            embed,
            pos,
            wq,
            wk,
            wv,
            wo,
            w1,
            b1,
            w2,
            b2,
            ln_g,
            ln_b,
            unembed,
            vocab,
            classes,
            d,
            heads,
            d_mlp,
            beta,
        }
    }

    fn tokens(&self, x: &Inputs) -> Vec<[usize; SEQ]> {
        pairs(x).iter().map(|&(a, b)| [a as usize, b as usize, self.vocab]).collect()
    }

    fn run(&self, params: &[f64], x: &Inputs) -> Cache {
        let p = View { layout: &self.layout, data: params };
        let toks = self.tokens(x);
        let b = toks.len();
        let (d, heads) = (self.d, self.heads);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let e = p.mat(self.embed);
        let pos = p.mat(self.pos);

        let xs: Vec<Array2<f64>> = (0..SEQ)
            .map(|t| {
                let mut xt = Array2::zeros((b, d));
                for (i, tk) in toks.iter().enumerate() {
                    let mut row = xt.row_mut(i);
                    row.assign(&e.row(tk[t]));
                    row += &pos.row(t);
                }
                xt
            })
            .collect();
        let q = linear(xs[SEQ - 1].view(), p.mat(self.wq), None);
        let ks: Vec<_> = xs.iter().map(|xt| linear(xt.view(), p.mat(self.wk), None)).collect();
        let vs: Vec<_> = xs.iter().map(|xt| linear(xt.view(), p.mat(self.wv), None)).collect();

        let mut attn = Array3::zeros((b, heads, SEQ));
        let mut o = Array2::zeros((b, d));
        for i in 0..b {
            for h in 0..heads {
                let qh = q.slice(s![i, h * dh..(h + 1) * dh]);
                let mut scores = [0.0; SEQ];
                for t in 0..SEQ {
                    scores[t] = qh.dot(&ks[t].slice(s![i, h * dh..(h + 1) * dh])) * scale;
                }
                let max = scores.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                let mut sum = 0.0;
                for s in &mut scores {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                let mut oh = o.slice_mut(s![i, h * dh..(h + 1) * dh]);
                for t in 0..SEQ {
                    let a = scores[t] / sum;
                    attn[[i, h, t]] = a;
                    oh.scaled_add(a, &vs[t].slice(s![i, h * dh..(h + 1) * dh]));
                }
            }
        }
        let x1 = &xs[SEQ - 1] + &linear(o.view(), p.mat(self.wo), None);
        let mut m = linear(x1.view(), p.mat(self.w1), Some(p.vec(self.b1)));
        relu_inplace(&mut m);
        let x2 = &x1 + &linear(m.view(), p.mat(self.w2), Some(p.vec(self.b2)));

        let mut xhat = Array2::zeros((b, d));
        let mut rstd = Array1::zeros(b);
        for i in 0..b {
            let row = x2.row(i);
            let mu = row.mean().unwrap();
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + LN_EPS).sqrt();
            rstd[i] = r;
            xhat.row_mut(i).assign(&row.mapv(|v| (v - mu) * r));
        }
        let phi = &xhat * &p.vec(self.ln_g) + &p.vec(self.ln_b);
        let logits = linear(phi.view(), p.mat(self.unembed), None);
        Cache { xs, q, ks, vs, attn, o, x1, m, xhat, rstd, phi, logits }
    }
}

impl Network for TransformerOneBlock {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        let mut data = vec![0.0; self.layout.len()];
        let l = &self.layout;
        let d = self.d;
        let std = 1.0 / (d as f64).sqrt();
        init_normal(&mut data[l.range(self.embed)], std, seed, 0);
        init_normal(&mut data[l.range(self.pos)], std, seed, 1);
        for (k, id) in [self.wq, self.wk, self.wv, self.wo, self.w1, self.b1].into_iter().enumerate() {
            init_uniform(&mut data[l.range(id)], d, seed, 2 + k as u64, 1.0);
        }
        init_uniform(&mut data[l.range(self.w2)], self.d_mlp, seed, 8, 1.0);
        init_uniform(&mut data[l.range(self.b2)], self.d_mlp, seed, 9, 1.0);
        data[l.range(self.ln_g)].fill(1.0);
        init_uniform(&mut data[l.range(self.unembed)], d, seed, 10, self.beta);
        data
    }

    fn forward(&self, params: &[f64], x: &Inputs) -> Forward {
        let c = self.run(params, x);
        Forward { logits: c.logits, features: c.phi }
    }

    fn loss_and_grad(&self, params: &[f64], x: &Inputs, labels: &[u32], loss: Loss) -> (f64, Vec<f64>) {
        let c = self.run(params, x);
        let (value, dlogits) = loss.value_and_grad(c.logits.view(), labels);
        let p = View { layout: &self.layout, data: params };
        let mut grad = vec![0.0; self.layout.len()];
        let mut g = ViewMut { layout: &self.layout, data: &mut grad };
        let (d, heads) = (self.d, self.heads);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let b = c.phi.nrows();

        let dphi =
            linear_back(c.phi.view(), p.mat(self.unembed), dlogits.view(), g.mat(self.unembed), None, true).unwrap();

        // final LayerNorm
        g.vec(self.ln_b).assign(&dphi.sum_axis(Axis(0)));
        g.vec(self.ln_g).assign(&(&dphi * &c.xhat).sum_axis(Axis(0)));
        let dxhat = &dphi * &p.vec(self.ln_g);
        let mut dx2 = Array2::zeros((b, d));
        for i in 0..b {
            let dr = dxhat.row(i);
            let xr = c.xhat.row(i);
            let mean_d = dr.mean().unwrap();
            let mean_dx = dr.dot(&xr) / d as f64;
            dx2.row_mut(i).assign(&((&dr - mean_d - &(&xr * mean_dx)) * c.rstd[i]));
        }

        // MLP residual branch
        let mut dm = linear_back(c.m.view(), p.mat(self.w2), dx2.view(), g.mat(self.w2), None, true).unwrap();
        g.vec(self.b2).assign(&dx2.sum_axis(Axis(0)));
        relu_back(&mut dm, &c.m);
        let dx1_mlp = linear_back(c.x1.view(), p.mat(self.w1), dm.view(), g.mat(self.w1), None, true).unwrap();
        g.vec(self.b1).assign(&dm.sum_axis(Axis(0)));
        let dx1 = dx2 + dx1_mlp;

        // attention residual branch
        let mut dxs: Vec<Array2<f64>> = (0..SEQ).map(|_| Array2::zeros((b, d))).collect();
        dxs[SEQ - 1] += &dx1;
        let do_ = linear_back(c.o.view(), p.mat(self.wo), dx1.view(), g.mat(self.wo), None, true).unwrap();
        let mut dq = Array2::zeros((b, d));
        let mut dks: Vec<Array2<f64>> = (0..SEQ).map(|_| Array2::zeros((b, d))).collect();
        let mut dvs: Vec<Array2<f64>> = (0..SEQ).map(|_| Array2::zeros((b, d))).collect();
        for i in 0..b {
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let doh = do_.slice(s![i, cols.clone()]);
                let mut da = [0.0; SEQ];
                for t in 0..SEQ {
                    da[t] = doh.dot(&c.vs[t].slice(s![i, cols.clone()]));
                    let a = c.attn[[i, h, t]];
                    dvs[t].slice_mut(s![i, cols.clone()]).scaled_add(a, &doh);
                }
                let dot: f64 = (0..SEQ).map(|t| c.attn[[i, h, t]] * da[t]).sum();
                for t in 0..SEQ {
                    let ds = c.attn[[i, h, t]] * (da[t] - dot) * scale;
                    dq.slice_mut(s![i, cols.clone()]).scaled_add(ds, &c.ks[t].slice(s![i, cols.clone()]));
                    dks[t].slice_mut(s![i, cols.clone()]).scaled_add(ds, &c.q.slice(s![i, cols.clone()]));
                }
            }
        }
        let dxq = linear_back(c.xs[SEQ - 1].view(), p.mat(self.wq), dq.view(), g.mat(self.wq), None, true).unwrap();
        dxs[SEQ - 1] += &dxq;
        for t in 0..SEQ {
            let dxk = linear_back(c.xs[t].view(), p.mat(self.wk), dks[t].view(), g.mat(self.wk), None, true).unwrap();
            let dxv = linear_back(c.xs[t].view(), p.mat(self.wv), dvs[t].view(), g.mat(self.wv), None, true).unwrap();
            dxs[t] += &dxk;
            dxs[t] += &dxv;
        }

        // embeddings
        let toks = self.tokens(x);
        {
            let mut gp = g.mat(self.pos);
            for t in 0..SEQ {
                let mut row = gp.row_mut(t);
                row += &dxs[t].sum_axis(Axis(0));
            }
        }
        let mut ge = g.mat(self.embed);
        for (i, tk) in toks.iter().enumerate() {
            for t in 0..SEQ {
                let mut row = ge.row_mut(tk[t]);
                row += &dxs[t].row(i);
            }
        }
        (value, grad)
    }

    fn readout(&self, params: &[f64]) -> Array2<f64> {
        let p = View { layout: &self.layout, data: params };
        let mut w = Array2::zeros((self.classes, self.d + 1));
        w.slice_mut(s![.., ..self.d]).assign(&p.mat(self.unembed));
        w
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn feature_dim(&self) -> usize {
        self.d
    }
}
