use rand::Rng;

use super::*;
use crate::rng::seeded_rng;

/// Independent forward pass: explicit index loops over the raw weight array.
fn reference_forward(mlp: &Mlp, input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    for (li, layer) in mlp.layers.iter().enumerate() {
        let mut y = vec![0.0; layer.outputs];
        for r in 0..layer.outputs {
            let mut acc = layer.bias[r];
            for c in 0..layer.inputs {
                acc += layer.weights[r * layer.inputs + c] * x[c];
            }
            y[r] = if li + 1 == mlp.layers.len() { acc } else { acc.tanh() };
        }
        x = y;
    }
    x
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

fn random_net(rng: &mut impl Rng) -> Mlp {
    let depth = rng.gen_range(1..=3);
    let mut sizes = vec![rng.gen_range(1..6)];
    for _ in 0..depth {
        sizes.push(rng.gen_range(1..7));
    }
    let mut net = Mlp::new(&sizes, rng);
    for l in &mut net.layers {
        l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
    }
    net
}

fn scalar_head(net: &Mlp, x: &[f64], g: &[f64]) -> f64 {
    dot(&net.forward(x).unwrap(), g)
}

#[test]
fn zero_network_outputs_zero() {
    let net = Mlp::zeros(&[3, 8, 8, 2]);
    assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn identity_single_layer() {
    let mut net = Mlp::zeros(&[2, 2]);
    net.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
    assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
}

#[test]
fn forward_matches_reference() {
    let mut rng = seeded_rng(11, "nn-forward");
    for _ in 0..50 {
        let net = Mlp::new(&[5, 7, 6, 3], &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let a = net.forward(&x).unwrap();
        let b = reference_forward(&net, &x);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
        assert_eq!(net.forward_trace(&x).unwrap().output(), a.as_slice());
    }
}

#[test]
fn forward_rejects_wrong_length() {
    let net = Mlp::zeros(&[3, 2]);
    assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
    assert!(matches!(net.backward(&[1.0, 2.0, 3.0], &[1.0]), Err(Error::Shape(_))));
}

#[test]
fn zero_output_grad_gives_zero_gradients() {
    let mut rng = seeded_rng(1, "nn");
    let net = Mlp::new(&[3, 4, 2], &mut rng);
    let g = net.backward(&[0.3, -0.1, 0.8], &[0.0, 0.0]).unwrap();
    assert_eq!(g.params.squared_norm(), 0.0);
    assert!(g.input.iter().all(|v| *v == 0.0));
}

#[test]
fn linear_layer_gradient_is_outer_product() {
    let mut rng = seeded_rng(2, "nn");
    let net = Mlp::new(&[3, 2], &mut rng);
    let x = [0.5, -1.5, 2.0];
    let g = [0.25, -3.0];
    let grads = net.backward(&x, &g).unwrap();
    for r in 0..2 {
        for c in 0..3 {
            assert_eq!(grads.params.layers[0].weights[r * 3 + c], g[r] * x[c]);
        }
        assert_eq!(grads.params.layers[0].bias[r], g[r]);
    }
}

#[test]
fn backward_matches_finite_differences() {
    let mut rng = seeded_rng(3, "nn-fd");
    let h = 1e-5;
    for _ in 0..100 {
        let net = random_net(&mut rng);
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let g: Vec<f64> = (0..net.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grads = net.backward(&x, &g).unwrap();
        for li in 0..net.layers.len() {
            for wi in 0..net.layers[li].weights.len() {
                let mut plus = net.clone();
                plus.layers[li].weights[wi] += h;
                let mut minus = net.clone();
                minus.layers[li].weights[wi] -= h;
                let fd = (scalar_head(&plus, &x, &g) - scalar_head(&minus, &x, &g)) / (2.0 * h);
                assert!(rel_err(fd, grads.params.layers[li].weights[wi]) < 1e-4);
            }
            for bi in 0..net.layers[li].bias.len() {
                let mut plus = net.clone();
                plus.layers[li].bias[bi] += h;
                let mut minus = net.clone();
                minus.layers[li].bias[bi] -= h;
                let fd = (scalar_head(&plus, &x, &g) - scalar_head(&minus, &x, &g)) / (2.0 * h);
                assert!(rel_err(fd, grads.params.layers[li].bias[bi]) < 1e-4);
            }
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (scalar_head(&net, &xp, &g) - scalar_head(&net, &xm, &g)) / (2.0 * h);
            assert!(rel_err(fd, grads.input[i]) < 1e-4);
        }
    }
}

#[test]
fn directional_slope_matches_gradient() {
    let mut rng = seeded_rng(4, "nn-dir");
    let h = 1e-5;
    for _ in 0..20 {
        let net = Mlp::new(&[4, 6, 6, 1], &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grads = net.backward(&x, &[1.0]).unwrap();
        let mut dir = net.zeros_like();
        for l in &mut dir.layers {
            l.weights.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
            l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
        }
        let analytic: f64 = grads
            .params
            .layers
            .iter()
            .zip(&dir.layers)
            .map(|(g, d)| dot(&g.weights, &d.weights) + dot(&g.bias, &d.bias))
            .sum();
        let mut plus = net.clone();
        plus.add_scaled(&dir, h);
        let mut minus = net.clone();
        minus.add_scaled(&dir, -h);
        let fd = (plus.forward(&x).unwrap()[0] - minus.forward(&x).unwrap()[0]) / (2.0 * h);
        assert!(rel_err(fd, analytic) < 1e-4);
    }
}

#[test]
fn adam_zero_gradient_keeps_params() {
    let mut rng = seeded_rng(5, "nn");
    let mut net = Mlp::new(&[2, 3, 1], &mut rng);
    let before = net.clone();
    let mut state = AdamState::new(&net, AdamConfig::default());
    adam_step(&mut net, &before.zeros_like(), &mut state).unwrap();
    assert_eq!(net, before);
    assert_eq!(state.step_count, 1);
}

#[test]
fn adam_first_step_is_learning_rate() {
    let mut net = Mlp::zeros(&[1, 1]);
    net.layers[0].weights[0] = 2.0;
    let mut grad = net.zeros_like();
    grad.layers[0].weights[0] = 1.0;
    let cfg = AdamConfig {
        learning_rate: 0.001,
        epsilon: 1e-8,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(&net, cfg);
    adam_step(&mut net, &grad, &mut state).unwrap();
    assert_eq!(net.layers[0].weights[0], 2.0 - 0.001 / (1.0 + 1e-8));
}

#[test]
fn adam_descends_quadratic() {
    // loss = 0.5 * |w - target|^2 over every parameter
    let mut rng = seeded_rng(6, "nn");
    let mut net = Mlp::new(&[3, 4, 2], &mut rng);
    let target = Mlp::new(&[3, 4, 2], &mut rng);
    let loss = |n: &Mlp| {
        let mut d = n.clone();
        d.add_scaled(&target, -1.0);
        0.5 * d.squared_norm()
    };
    let mut state = AdamState::new(
        &net,
        AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        },
    );
    let mut prev = loss(&net);
    for _ in 0..10 {
        let mut grad = net.clone();
        grad.add_scaled(&target, -1.0);
        adam_step(&mut net, &grad, &mut state).unwrap();
        let now = loss(&net);
        assert!(now < prev);
        prev = now;
    }
    assert_eq!(state.step_count, 10);
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let mut net = Mlp::zeros(&[2, 2, 1]);
    let before = net.clone();
    let mut grad = net.zeros_like();
    grad.layers[1].bias[0] = f64::NAN;
    let mut state = AdamState::new(&net, AdamConfig::default());
    let err = adam_step(&mut net, &grad, &mut state).unwrap_err();
    assert!(err.to_string().contains("layer 1 bias"), "{err}");
    assert_eq!(net, before);
    assert_eq!(state.step_count, 0);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut rng = seeded_rng(7, "nn");
    let net = Mlp::new(&[4, 5, 3], &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    save_checkpoint(&net, &path).unwrap();
    assert!(std::fs::read_to_string(&path).unwrap().contains(CHECKPOINT_FORMAT));
    assert_eq!(load_checkpoint(&path).unwrap(), net);
}

#[test]
fn checkpoint_rejects_bad_header_and_shapes() {
    let net = Mlp::zeros(&[2, 1]);
    let text = net.to_checkpoint_json().unwrap();
    let bad = text.replace(CHECKPOINT_FORMAT, "isb-lab-ckpt-v0");
    assert!(matches!(Mlp::from_checkpoint_json(&bad), Err(Error::Checkpoint(_))));
    let broken = r#"{"format":"isb-lab-ckpt-v1","hidden_activation":"tanh","output_activation":"identity",
        "layers":[{"shape":[2,3],"weights":[0,0,0,0,0,0],"bias":[0,0]},{"shape":[1,4],"weights":[0,0,0,0],"bias":[0]}]}"#;
    assert!(matches!(Mlp::from_checkpoint_json(broken), Err(Error::Shape(_))));
}
