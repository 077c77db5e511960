use emgse_core::emg::ChannelSet;
use emgse_model::gradcheck::check_gradients;
use emgse_model::layers::dropout_mask;
use emgse_model::{NetConfig, Network, Variant};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(variant: Variant) -> NetConfig {
    NetConfig {
        variant,
        channel_set: ChannelSet::Full,
        emg_dim: 8,
        audio_dim: 6,
        encoder_hidden: 5,
        encoder_out: 4,
        fusion_dim: 8,
        lstm_hidden: 3,
        lstm_layers: 2,
        dropout: 0.5,
    }
}

/// Random parameters away from the ReLU kinks that exact zero biases sit on.
fn random_net(variant: Variant, rng: &mut ChaCha8Rng) -> Network {
    let mut net = Network::init(tiny(variant), rng).unwrap();
    for (_, data) in net.tensors_mut() {
        data.iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
    }
    net
}

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.gen_range(lo..hi))
}

#[test]
fn emgse_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let net = random_net(Variant::Emgse, &mut rng);
    let xe = rand_mat(&mut rng, 3, 8, 0.0, 1.0);
    let xa = rand_mat(&mut rng, 3, 6, 0.0, 1.0);
    let masks = net.sample_masks(&mut rng, 3).unwrap();
    let target = rand_mat(&mut rng, 3, 6, 0.0, 1.0);
    let r = check_gradients(&net, Some(xe.view()), xa.view(), target.view(), Some(&masks), 1e-5).unwrap();
    assert_eq!(r.checked, net.num_params());
    assert!(r.max_rel_err < 1e-4, "{} at {}", r.max_rel_err, r.worst);
}

#[test]
fn se_a_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = random_net(Variant::SeA, &mut rng);
    let xa = rand_mat(&mut rng, 3, 6, 0.0, 1.0);
    let target = rand_mat(&mut rng, 3, 6, 0.0, 1.0);
    let r = check_gradients(&net, None, xa.view(), target.view(), None, 1e-5).unwrap();
    assert!(r.max_rel_err < 1e-4, "{} at {}", r.max_rel_err, r.worst);
}

#[test]
fn masked_unit_gets_no_input_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Network::init(tiny(Variant::Emgse), &mut rng).unwrap();
    let xe = rand_mat(&mut rng, 3, 8, 0.0, 1.0);
    let xa = rand_mat(&mut rng, 3, 6, 0.0, 1.0);
    let target = rand_mat(&mut rng, 3, 6, 0.0, 1.0);
    let mut masks = net.sample_masks(&mut rng, 3).unwrap();
    masks.hidden.fill(2.0);
    masks.hidden.column_mut(1).fill(0.0);
    let (_, g) = net
        .loss_and_grads(Some(xe.view()), xa.view(), target.view(), Some(&masks))
        .unwrap();
    assert!(g.aux[0].w.row(1).iter().all(|&v| v == 0.0));
    assert_eq!(g.aux[0].b[1], 0.0);
    assert!(g.aux[0].w.iter().any(|&v| v != 0.0));
}

#[test]
fn inverted_dropout_preserves_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let act = rand_mat(&mut rng, 1, 64, 0.2, 1.5);
    let mut sum = Array2::<f64>::zeros((1, 64));
    let n = 10_000;
    for _ in 0..n {
        sum += &(&act * &dropout_mask(&mut rng, 1, 64, 0.5));
    }
    let mean = sum / n as f64;
    let err = (&mean - &act).mapv(|v| v * v).sum().sqrt();
    let norm = act.mapv(|v| v * v).sum().sqrt();
    assert!(err / norm < 0.02, "relative deviation {}", err / norm);
}

#[test]
fn eval_mode_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = Network::init(tiny(Variant::Emgse), &mut rng).unwrap();
    let xe = rand_mat(&mut rng, 4, 8, 0.0, 1.0);
    let xa = rand_mat(&mut rng, 4, 6, 0.0, 1.0);
    let a = net.forward(Some(xe.view()), xa.view(), None).unwrap();
    let b = net.forward(Some(xe.view()), xa.view(), None).unwrap();
    assert_eq!(a.z, b.z);
    assert_eq!(a.latent, b.latent);
}
