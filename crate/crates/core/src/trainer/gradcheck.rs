use rand::Rng;

use super::loss::Loss;
use super::models::Network;
use crate::rng::{domain, substream};
use crate::tasks::Inputs;

/// Largest relative error between analytic gradients and central differences
/// over `n_probe` randomly chosen parameters.
///
/// Relative error is `|g − fd| / max(|g|, |fd|, floor)`; the floor keeps
/// entries that are zero up to rounding from dominating.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_gradcheck(
    net: &dyn Network,
    params: &[f64],
    x: &Inputs,
    labels: &[u32],
    loss: Loss,
    epsilon: f64,
    n_probe: usize,
    seed: u64,
) -> f64 {
    let (_, grad) = net.loss_and_grad(params, x, labels, loss);
    let mut rng = substream(seed, domain::GRADCHECK, 0);
    let floor = 1e-6;
    let mut worst = 0.0f64;
    let mut p = params.to_vec();
    for _ in 0..n_probe {
        let i = rng.random_range(0..params.len());
        p[i] = params[i] + epsilon;
        let up = loss.value(net.forward(&p, x).logits.view(), labels);
        p[i] = params[i] - epsilon;
        let down = loss.value(net.forward(&p, x).logits.view(), labels);
        p[i] = params[i];
        let fd = (up - down) / (2.0 * epsilon);
        let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}
