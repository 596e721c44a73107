use super::*;
use crate::verify::oracles::{fd_gradient, naive_micro_step, worst_relative_error, NaiveState};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn zeroed(mut net: NetworkParams, names: &[&str]) -> NetworkParams {
    for name in names {
        let id = net.id(name).unwrap();
        net.store_mut().slice_mut(id).iter_mut().for_each(|v| *v = 0.0);
    }
    net
}

fn plain_row(tape: &mut Tape<'_>, v: &[f64]) -> NodeId {
    tape.leaf(JetTensor::plain(Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap()))
}

fn row_values(tape: &Tape<'_>, id: NodeId) -> Vec<f64> {
    tape.value(id).values().iter().copied().collect()
}

#[test]
fn zero_parameters_make_the_micro_step_an_identity() {
    let cfg = ModelConfig::xlstm(2, 1, 5, 1);
    let mut net = NetworkParams::init(&cfg, 1).unwrap();
    net.store_mut().values_mut().iter_mut().for_each(|v| *v = 0.0);
    let u = [0.3, -0.2, 0.9, -1.0, 0.0];
    let (next, _) = net.micro_step_values(0, &u, &StateValues::zero(5)).unwrap();
    assert_eq!(next, u.to_vec());
}

#[test]
fn stabilized_matches_naive_recurrence() {
    let mut r = rng(10);
    for trial in 0..200 {
        let w = 2 + trial % 4;
        let mut cfg = ModelConfig::xlstm(2, 1, w, 1);
        cfg.eps = 0.0;
        if trial % 2 == 1 {
            cfg.input_gate = GateMode::Sigmoid;
        }
        let mut net = NetworkParams::init(&cfg, trial as u64).unwrap();
        // keep every pre-activation inside [−2, 2]: |u| ≤ 1, |h| ≤ 1
        let scale = 0.6 / w as f64;
        for name in ["block0.gate_w", "block0.gate_u"] {
            let id = net.id(name).unwrap();
            net.store_mut().slice_mut(id).iter_mut().for_each(|v| *v = r.random_range(-scale..scale));
        }
        let id = net.id("block0.gate_b").unwrap();
        net.store_mut().slice_mut(id).iter_mut().for_each(|v| *v = r.random_range(-0.6..0.6));
        let mut u: Vec<f64> = (0..w).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut un = u.clone();
        let mut st = StateValues::zero(w);
        let mut naive = NaiveState::zero(w);
        for _ in 0..4 {
            let (a, s) = net.micro_step_values(0, &u, &st).unwrap();
            let (b, ns) = naive_micro_step(&net, 0, &un, &naive).unwrap();
            for j in 0..w {
                assert!((s.h[j] - ns.h[j]).abs() < 1e-12, "trial {trial}");
                assert!((a[j] - b[j]).abs() < 1e-12, "trial {trial}");
            }
            u = a;
            un = b;
            st = s;
            naive = ns;
        }
    }
}

#[test]
fn large_forget_activation_overflows_only_the_naive_path() {
    let mut cfg = ModelConfig::xlstm(2, 1, 3, 1);
    cfg.forget_gate = GateMode::Exponential;
    let mut net = NetworkParams::init(&cfg, 4).unwrap();
    let (wid, uid, bid) = (net.id("block0.gate_w").unwrap(), net.id("block0.gate_u").unwrap(), net.id("block0.gate_b").unwrap());
    for id in [wid, uid] {
        net.store_mut().view_mut(id).slice_mut(ndarray::s![3..6, ..]).fill(0.0);
    }
    net.store_mut().slice_mut(bid)[3..6].iter_mut().for_each(|v| *v = 60.0);
    let mut u = vec![0.5, -0.3, 0.1];
    let mut un = u.clone();
    let mut st = StateValues::zero(3);
    let mut naive = NaiveState::zero(3);
    for _ in 0..16 {
        let (a, s) = net.micro_step_values(0, &u, &st).unwrap();
        let (b, ns) = naive_micro_step(&net, 0, &un, &naive).unwrap();
        u = a;
        st = s;
        un = b;
        naive = ns;
    }
    assert!(st.all_finite() && u.iter().all(|v| v.is_finite()));
    assert!(!naive.all_finite());
}

#[test]
fn zero_micro_steps_leave_the_input_unchanged() {
    let net = NetworkParams::init(&ModelConfig::xlstm(2, 1, 4, 0), 2).unwrap();
    let mut tape = Tape::new(net.store());
    let u = plain_row(&mut tape, &[0.1, 0.2, -0.3, 0.4]);
    assert_eq!(net.micro_steps(&mut tape, 0, u).unwrap(), u);
}

#[test]
fn zero_mixer_passes_the_recurrent_output() {
    let net = zeroed(NetworkParams::init(&ModelConfig::xlstm(2, 1, 4, 2), 3).unwrap(), &["block0.mix1", "block0.mix2"]);
    let mut tape = Tape::new(net.store());
    let u = plain_row(&mut tape, &[0.1, 0.2, -0.3, 0.4]);
    let us = net.micro_steps(&mut tape, 0, u).unwrap();
    let plus = net.mixer(&mut tape, 0, us).unwrap();
    assert_eq!(row_values(&tape, plus), row_values(&tape, us));
}

#[test]
fn unrolled_micro_steps_are_bit_identical() {
    let net = NetworkParams::init(&ModelConfig::xlstm(2, 1, 6, 3), 5).unwrap();
    let u0 = [0.3, -0.7, 0.2, 0.0, 0.9, -0.1];
    let mut tape = Tape::new(net.store());
    let u = plain_row(&mut tape, &u0);
    let us = net.micro_steps(&mut tape, 0, u).unwrap();
    let mut u = u0.to_vec();
    let mut st = StateValues::zero(6);
    for _ in 0..3 {
        let (a, s) = net.micro_step_values(0, &u, &st).unwrap();
        u = a;
        st = s;
    }
    let recorded = row_values(&tape, us);
    assert!(recorded.iter().zip(&u).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn parameter_count_is_independent_of_micro_steps() {
    let counts: Vec<usize> = [1, 2, 4]
        .iter()
        .map(|&s| NetworkParams::init(&ModelConfig::xlstm(2, 3, 8, s), 0).unwrap().param_count())
        .collect();
    assert!(counts.windows(2).all(|p| p[0] == p[1]));
    let (d, l, w) = (2, 3, 8);
    assert_eq!(counts[0], l * (13 * w * w + 6 * w) + w * d + 2 * w + 1);
    assert_eq!(ModelConfig::xlstm(2, 3, 8, 1).param_count(), counts[0]);
    let b = ModelConfig::baseline(d, l, w);
    assert_eq!(NetworkParams::init(&b, 0).unwrap().param_count(), l * (w * w + w) + w * d + 2 * w + 1);
    assert_eq!(b.param_count(), l * (w * w + w) + w * d + 2 * w + 1);
}

#[test]
fn matched_baseline_is_closest_width() {
    let x = ModelConfig::xlstm(2, 2, 16, 2);
    let b = x.matched_baseline();
    let gap = |c: &ModelConfig| (c.param_count() as i64 - x.param_count() as i64).abs();
    for w in [b.width - 1, b.width + 1] {
        assert!(gap(&b) <= gap(&ModelConfig::baseline(2, 2, w)));
    }
    assert_eq!(b.blocks, 2);
}

#[test]
fn initialization_is_seeded() {
    let cfg = ModelConfig::xlstm(2, 2, 8, 2);
    let a = NetworkParams::init(&cfg, 9).unwrap();
    let b = NetworkParams::init(&cfg, 9).unwrap();
    let c = NetworkParams::init(&cfg, 10).unwrap();
    assert_eq!(a.store(), b.store());
    assert_ne!(a.store().values(), c.store().values());
    let fb = net_slice(&a, "block1.gate_b");
    assert!(fb[8..16].iter().all(|v| *v == 1.0));
    assert!(fb[..8].iter().chain(&fb[16..]).all(|v| *v == 0.0));
    let bound = (1.0f64 / 8.0).sqrt();
    assert!(net_slice(&a, "block0.proj").iter().all(|v| v.abs() <= bound));
}

fn net_slice<'a>(net: &'a NetworkParams, name: &str) -> &'a [f64] {
    net.store().slice(net.id(name).unwrap())
}

#[test]
fn wide_models_are_finite_at_the_origin() {
    for w in [16, 64, 128] {
        let net = NetworkParams::init(&ModelConfig::xlstm(2, 4, w, 3), 1).unwrap();
        let y = net.predict(Array2::zeros((1, 2)).view()).unwrap();
        assert!(y[0].is_finite());
    }
}

#[test]
fn reduced_xlstm_equals_baseline_layer_map() {
    let x = zeroed(NetworkParams::init(&ModelConfig::xlstm(2, 2, 5, 0), 6).unwrap(), &["block0.mix1", "block0.mix2", "block1.mix1", "block1.mix2"]);
    let mut b = NetworkParams::init(&ModelConfig::baseline(2, 2, 5), 7).unwrap();
    let copy = [
        ("embed.w", "embed.w"),
        ("embed.b", "embed.b"),
        ("block0.shape_w", "layer0.w"),
        ("block0.shape_b", "layer0.b"),
        ("block1.shape_w", "layer1.w"),
        ("block1.shape_b", "layer1.b"),
        ("head.w", "head.w"),
        ("head.b", "head.b"),
    ];
    for (from, to) in copy {
        let src = net_slice(&x, from).to_vec();
        let id = b.id(to).unwrap();
        b.store_mut().slice_mut(id).copy_from_slice(&src);
    }
    let pts = Array2::from_shape_fn((7, 2), |(i, j)| (i as f64 * 0.37 + j as f64 * 0.11).sin());
    assert_eq!(x.predict(pts.view()).unwrap(), b.predict(pts.view()).unwrap());
}

#[test]
fn shallow_and_headless_networks() {
    let net = NetworkParams::init(&ModelConfig::xlstm(2, 0, 4, 2), 3).unwrap();
    let p = [0.4, -0.6];
    let ew = net.store().view(net.id("embed.w").unwrap());
    let eb = net_slice(&net, "embed.b");
    let hw = net_slice(&net, "head.w");
    let hb = net_slice(&net, "head.b")[0];
    let expect: f64 = (0..4).map(|j| hw[j] * (ew[[j, 0]] * p[0] + ew[[j, 1]] * p[1] + eb[j]).tanh()).sum::<f64>() + hb;
    let got = net.predict(Array2::from_shape_vec((1, 2), p.to_vec()).unwrap().view()).unwrap()[0];
    assert!((got - expect).abs() < 1e-15);

    let mut net = zeroed(NetworkParams::init(&ModelConfig::xlstm(2, 2, 4, 2), 3).unwrap(), &["head.w"]);
    let id = net.id("head.b").unwrap();
    net.store_mut().slice_mut(id)[0] = 0.25;
    let pts = Array2::from_shape_fn((5, 2), |(i, j)| i as f64 - j as f64);
    assert!(net.predict(pts.view()).unwrap().iter().all(|v| *v == 0.25));
}

#[test]
fn state_stays_finite_under_random_inputs() {
    let cfg = ModelConfig::xlstm(2, 1, 8, 1);
    let net = NetworkParams::init(&cfg, 12).unwrap();
    let mut r = rng(12);
    let mut st = StateValues::zero(8);
    for step in 0..10_000 {
        let u: Vec<f64> = (0..8).map(|_| r.random_range(-10.0..10.0)).collect();
        let (_, s) = net.micro_step_values(0, &u, &st).unwrap();
        assert!(s.all_finite(), "step {step}");
        assert!(s.n.iter().all(|v| *v > 0.0));
        st = s;
    }
}

#[test]
fn non_finite_input_names_the_gate() {
    let net = NetworkParams::init(&ModelConfig::xlstm(2, 1, 3, 1), 1).unwrap();
    let err = net.micro_step_values(0, &[f64::NAN, 0.0, 0.0], &StateValues::zero(3)).unwrap_err();
    assert!(matches!(err, Error::NonFinite { block: 0, step: 0, gate: "gate pre-activation" }));
    let bad = net.predict(Array2::zeros((2, 3)).view());
    assert!(matches!(bad, Err(Error::Autodiff(_))));
    assert!(matches!(net.micro_step_values(0, &[0.0; 2], &StateValues::zero(3)), Err(Error::Config(_))));
}

#[test]
fn block_gradient_matches_finite_differences() {
    for (seed, cfg) in [
        (1, ModelConfig::xlstm(2, 1, 3, 2)),
        (2, ModelConfig { layer_norm: true, forget_gate: GateMode::Exponential, ..ModelConfig::xlstm(2, 1, 3, 3) }),
    ] {
        let net = NetworkParams::init(&cfg, seed).unwrap();
        let u0 = [0.4, -0.8, 0.3];
        let loss = |store: &ParamStore| -> Result<f64> {
            let mut tape = Tape::new(store);
            let n = NetworkParams::from_store(&cfg, store.clone())?;
            let u = plain_row(&mut tape, &u0);
            let y = n.block_forward(&mut tape, 0, u)?;
            let s = tape.sum_squares(y, 1.0)?;
            Ok(tape.scalar(s))
        };
        let mut tape = Tape::new(net.store());
        let u = plain_row(&mut tape, &u0);
        let y = net.block_forward(&mut tape, 0, u).unwrap();
        let s = tape.sum_squares(y, 1.0).unwrap();
        assert!(tape.branch_margin() > 1e-3);
        let g = tape.param_grad(s).unwrap();
        let fd = fd_gradient(net.store(), loss).unwrap();
        assert!(worst_relative_error(&g, &fd, 1e-6) < 1e-5);
    }
}

#[test]
fn config_validation() {
    assert!(ModelConfig { width: 0, ..Default::default() }.validate().is_err());
    assert!(ModelConfig { clip_lo: 1.0, ..Default::default() }.validate().is_err());
    assert!(ModelConfig { eps: f64::NAN, ..Default::default() }.validate().is_err());
    let json = serde_json::to_string(&ModelConfig::default()).unwrap();
    assert_eq!(serde_json::from_str::<ModelConfig>(&json).unwrap(), ModelConfig::default());
    let partial: ModelConfig = serde_json::from_str(r#"{"width": 12, "architecture": "baseline"}"#).unwrap();
    assert_eq!(partial.width, 12);
    assert_eq!(partial.architecture, Architecture::Baseline);
}

proptest! {
    #[test]
    fn micro_step_is_finite_for_bounded_inputs(seed in 0u64..500, scale in 0.0f64..10.0) {
        let net = NetworkParams::init(&ModelConfig::xlstm(2, 1, 4, 1), seed).unwrap();
        let mut r = rng(seed);
        let u: Vec<f64> = (0..4).map(|_| r.random_range(-scale..=scale)).collect();
        let (next, s) = net.micro_step_values(0, &u, &StateValues::zero(4)).unwrap();
        prop_assert!(s.all_finite());
        prop_assert!(next.iter().all(|v| v.is_finite()));
        prop_assert!(s.n.iter().all(|v| *v > 0.0));
    }
}
