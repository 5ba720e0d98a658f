use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ris_learn::{check_gradients, Activation, Adam, AdamConfig, Checkpoint, Mlp, MlpSpec};

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

#[test]
fn smooth_nets_of_any_shape_pass_the_gradient_check() {
    let outputs = [Activation::Identity, Activation::Tanh, Activation::Sigmoid];
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths: Vec<usize> = (0..4).map(|_| rng.random_range(1..7)).collect();
        let spec = MlpSpec::new(&widths, Activation::Tanh, outputs[seed as usize % 3]);
        let mut net = Mlp::new(&spec, None, &mut rng).unwrap();
        let x = random(5, widths[0], &mut rng);
        let c = random(5, widths[3], &mut rng);
        let (_, tape) = net.forward_batch(x.view()).unwrap();
        let analytic = net.backward(&tape, c.view()).unwrap().flatten();
        let loss = |m: &Mlp| (&m.predict_batch(x.view()).unwrap() * &c).sum();
        let all: Vec<usize> = (0..analytic.len()).collect();
        let report = check_gradients(&mut net, loss, &analytic, &all, 1e-5);
        assert!(report.passed(1e-4), "widths {widths:?}: {report:?}");
    }
}

#[test]
fn adam_fits_a_sine() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = MlpSpec::new(&[1, 16, 16, 1], Activation::Tanh, Activation::Identity);
    let mut net = Mlp::new(&spec, None, &mut rng).unwrap();
    let x = Array2::from_shape_fn((64, 1), |(i, _)| -3.0 + 6.0 * i as f64 / 63.0);
    let y = x.mapv(f64::sin);
    let mut opt = Adam::for_mlp(AdamConfig::adam(1e-2), &net);
    let mse = |net: &Mlp| (&net.predict_batch(x.view()).unwrap() - &y).mapv(|d| d * d).mean().unwrap();
    let start = mse(&net);
    for _ in 0..2000 {
        let (out, tape) = net.forward_batch(x.view()).unwrap();
        let upstream = (&out - &y) * (2.0 / 64.0);
        let grads = net.backward(&tape, upstream.view()).unwrap();
        opt.step_mlp(&mut net, &grads.slices()).unwrap();
    }
    let end = mse(&net);
    assert!(end < 0.01 * start, "{start} -> {end}");
}

#[test]
fn networks_survive_a_checkpoint_file() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = MlpSpec::new(&[6, 8, 3], Activation::Relu, Activation::Tanh);
    let net = Mlp::new(&spec, None, &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ck");
    Checkpoint::new("test-net", serde_json::json!({ "widths": spec.widths }), net.to_tensors("actor")).save(&path).unwrap();

    let ck = Checkpoint::load(&path).unwrap();
    ck.expect_kind("test-net").unwrap();
    assert!(ck.expect_kind("other").is_err());
    let back = Mlp::from_tensors(&spec, "actor", &ck.tensors).unwrap();
    for (a, b) in net.layers().iter().zip(back.layers()) {
        assert!(a.weight.iter().zip(&b.weight).all(|(x, y)| (*x as f32) as f64 == *y));
        assert!(a.bias.iter().zip(&b.bias).all(|(x, y)| (*x as f32) as f64 == *y));
    }
    assert!(Mlp::from_tensors(&spec, "critic", &ck.tensors).is_err());
}
