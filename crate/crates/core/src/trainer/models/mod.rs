//! The five supported architectures with hand-derived backward passes.
//!
//! Every network exposes the decomposition `logits = W · [φ; 1]`: `features`
//! returns `φ` and [`Network::readout`] returns `W` including the bias column.

mod mlp3;
mod mlp_modadd;
mod mlp_parity;
mod mlp_permcomp;
mod transformer;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{Architecture, ModelSpec, ScaleSpec};
use super::loss::Loss;
use super::params::Layout;
use crate::error::{Error, Result};
use crate::rng::{domain, substream};
use crate::tasks::{Dataset, Inputs};

pub use mlp3::Mlp3Scaled;
pub use mlp_modadd::MlpModadd;
pub use mlp_parity::MlpParity;
pub use mlp_permcomp::MlpPermcomp;
pub use transformer::TransformerOneBlock;

/// Output of a forward pass.
pub struct Forward {
    pub logits: Array2<f64>,
    /// Decomposition-point activations `φ`, without the constant column.
    pub features: Array2<f64>,
}

pub trait Network: Send + Sync {
    fn layout(&self) -> &Layout;

    /// Freshly initialized flat parameter vector.
    fn init(&self, seed: u64) -> Vec<f64>;

    fn forward(&self, params: &[f64], x: &Inputs) -> Forward;

    /// Mean loss and its gradient over the batch.
    fn loss_and_grad(&self, params: &[f64], x: &Inputs, labels: &[u32], loss: Loss) -> (f64, Vec<f64>);

    /// Readout `W` of shape `C × (N + 1)`; the last column multiplies the constant feature.
    fn readout(&self, params: &[f64]) -> Array2<f64>;

    fn classes(&self) -> usize;

    /// Width of `φ` before the constant column is appended.
    fn feature_dim(&self) -> usize;
}

/// Build the network named by `spec` for `ds`.
pub fn build_model(spec: &ModelSpec, scale: &ScaleSpec, ds: &Dataset) -> Result<Box<dyn Network>> {
    let classes = ds.classes();
    let arch = spec.architecture;
    let mismatch = || Error::InvalidArgument(format!("architecture {arch:?} does not fit the dataset inputs"));
    Ok(match (arch, &ds.inputs) {
        (Architecture::MlpModadd, Inputs::Pairs { vocab, .. }) => Box::new(MlpModadd::new(
            *vocab,
            classes,
            spec.d_emb.unwrap_or(256),
            spec.d_hidden.unwrap_or(128),
            scale.beta,
            spec.embedding_std,
        )),
        (Architecture::MlpPermcomp, Inputs::Pairs { vocab, .. }) => {
            if *vocab != classes {
                return Err(Error::InvalidArgument("tied readout needs vocabulary == classes".into()));
            }
            Box::new(MlpPermcomp::new(
                classes,
                spec.d_emb.unwrap_or(256),
                spec.d_hidden.unwrap_or(512),
                scale.beta,
                spec.embedding_std,
            ))
        }
        (Architecture::MlpParity, Inputs::Dense(x)) => {
            if classes != 2 {
                return Err(mismatch());
            }
            Box::new(MlpParity::new(x.ncols(), spec.d_hidden.unwrap_or(1000), scale.beta))
        }
        (Architecture::Mlp3layerScaled, Inputs::Dense(x)) => {
            Box::new(Mlp3Scaled::new(x.ncols(), spec.d_hidden.unwrap_or(200), classes, scale.alpha, scale.beta))
        }
        (Architecture::TransformerOneblock, Inputs::Pairs { vocab, .. }) => {
            let d = spec.d_emb.unwrap_or(256);
            let heads = spec.n_heads.unwrap_or(4);
            if d % heads != 0 {
                return Err(Error::InvalidArgument(format!("d_model {d} not divisible by {heads} heads")));
            }
            Box::new(TransformerOneBlock::new(*vocab, classes, d, heads, spec.d_mlp.unwrap_or(1024), scale.beta))
        }
        _ => return Err(mismatch()),
    })
}

/// `φ` with a trailing constant column, the representation the readout acts on.
pub fn encode(net: &dyn Network, params: &[f64], x: &Inputs) -> Array2<f64> {
    with_constant(&net.forward(params, x).features)
}

pub(crate) fn with_constant(features: &Array2<f64>) -> Array2<f64> {
    let (n, d) = features.dim();
    let mut out = Array2::ones((n, d + 1));
    out.slice_mut(ndarray::s![.., ..d]).assign(features);
    out
}

// ---- initialization ----

pub(crate) fn init_uniform(data: &mut [f64], fan_in: usize, seed: u64, tensor: u64, scale: f64) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut rng = substream(seed, domain::INIT, tensor);
    for v in data {
        *v = scale * rng.random_range(-bound..bound);
    }
}

pub(crate) fn init_normal(data: &mut [f64], std: f64, seed: u64, tensor: u64) {
    let mut rng = substream(seed, domain::INIT, tensor);
    for v in data {
        *v = std * rng.sample::<f64, _>(StandardNormal);
    }
}

// ---- layer primitives ----

/// `y = x Wᵀ + b` for `x: B×in`, `W: out×in`.
pub(crate) fn linear(x: ArrayView2<f64>, w: ArrayView2<f64>, b: Option<ArrayView1<f64>>) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    if let Some(b) = b {
        y += &b;
    }
    y
}

/// Accumulate `dW += dyᵀ x`, `db += Σ dy`; return `dx = dy W`.
pub(crate) fn linear_back(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    mut gw: ArrayViewMut2<f64>,
    gb: Option<ArrayViewMut1<f64>>,
    need_dx: bool,
) -> Option<Array2<f64>> {
    ndarray::linalg::general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut gw);
    if let Some(mut gb) = gb {
        gb += &dy.sum_axis(Axis(0));
    }
    need_dx.then(|| dy.dot(&w))
}

pub(crate) fn relu_inplace(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Zero `dy` where the post-activation output was not positive.
pub(crate) fn relu_back(dy: &mut Array2<f64>, out: &Array2<f64>) {
    ndarray::Zip::from(dy).and(out).for_each(|d, &o| {
        if o <= 0.0 {
            *d = 0.0;
        }
    });
}

pub(crate) fn pairs(x: &Inputs) -> &[(u32, u32)] {
    match x {
        Inputs::Pairs { pairs, .. } => pairs,
        Inputs::Dense(_) => panic!("token-pair network given dense inputs"),
    }
}

pub(crate) fn dense(x: &Inputs) -> ArrayView2<'_, f64> {
    match x {
        Inputs::Dense(x) => x.view(),
        Inputs::Pairs { .. } => panic!("dense network given token inputs"),
    }
}
