use rrd_core::tasks::Dataset;
use rrd_core::trainer::{build_model, finite_difference_gradcheck, Loss, Network, TaskSpec, TrainConfig};

fn setup(preset: &str, shrink: impl FnOnce(&mut TrainConfig)) -> (Box<dyn Network>, Dataset, TrainConfig) {
    let mut cfg = TrainConfig::preset(preset).unwrap();
    shrink(&mut cfg);
    let ds = cfg.task.build(0).unwrap();
    (build_model(&cfg.model, &cfg.scale, &ds).unwrap(), ds, cfg)
}

fn check(preset: &str, shrink: impl FnOnce(&mut TrainConfig), tol: f64) {
    let (net, ds, cfg) = setup(preset, shrink);
    let params = net.init(1);
    let idx = &ds.train[..16];
    let x = ds.inputs.select(idx);
    let y: Vec<u32> = idx.iter().map(|&i| ds.labels.as_slice()[i]).collect();
    let err = finite_difference_gradcheck(net.as_ref(), &params, &x, &y, cfg.optimizer.loss, 1e-5, 300, 7);
    assert!(err < tol, "{preset}: max relative error {err:.3e}");
}

#[test]
fn mlp_modadd_gradients() {
    check("modadd_mlp_grok", |c| *c = c.clone().with_modulus(23), 1e-4);
}

#[test]
fn mlp_permcomp_gradients() {
    check(
        "permcomp_mlp_grok",
        |c| {
            c.task = TaskSpec::Permcomp { n: 4, train_fraction: 0.5, n_train: None };
            c.model.d_emb = Some(32);
            c.model.d_hidden = Some(48);
            c.scale.beta = 0.7;
        },
        1e-4,
    );
}

#[test]
fn transformer_gradients() {
    check(
        "modadd_transformer_grok",
        |c| {
            *c = c.clone().with_modulus(17);
            c.model.d_emb = Some(32);
            c.model.d_mlp = Some(64);
        },
        1e-3,
    );
}

#[test]
fn mlp_parity_and_mlp3_gradients() {
    let small = |c: &mut TrainConfig| {
        c.task = TaskSpec::SparseParity { n: 12, k: 3, n_train: 40, n_test: 10 };
        c.model.d_hidden = Some(64);
    };
    check("parity_mlp_grok", small, 1e-4);
    check("parity_mlp3_scaled", small, 1e-4);
}

#[test]
fn saturated_hinge_gives_zero_gradient() {
    let (net, ds, _) = setup("parity_mlp_grok", |c| {
        c.task = TaskSpec::SparseParity { n: 12, k: 3, n_train: 40, n_test: 10 };
        c.model.d_hidden = Some(32);
    });
    let params = net.init(2);
    let x = ds.inputs.select(&ds.train);
    // label every sample by the sign of its current output, scaled far past the margin
    let logits = net.forward(&params, &x).logits;
    let y: Vec<u32> = logits.rows().into_iter().map(|r| u32::from(r[1] > 0.0)).collect();
    let mut scaled = params.clone();
    let n = scaled.len();
    let out = &mut scaled[n - 32..];
    let f_min = logits.column(1).iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    out.iter_mut().for_each(|w| *w *= 10.0 / f_min);
    let (loss, grad) = net.loss_and_grad(&scaled, &x, &y, Loss::Hinge);
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|&g| g == 0.0));
}
