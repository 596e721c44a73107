use super::*;
use crate::model::GateMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sigmoid_net(width: usize, seed: u64) -> NetworkParams {
    let cfg = ModelConfig {
        input_gate: GateMode::Sigmoid,
        forget_gate: GateMode::Sigmoid,
        ..ModelConfig::xlstm(1, 1, width, 1)
    };
    let mut net = NetworkParams::init(&cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in net.store_mut().values_mut() {
        *v = rng.random_range(-0.8..0.8);
    }
    net
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-scale..scale))
}

/// Matrix exponential by scaling and squaring of a truncated series.
fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

#[test]
fn euler_matches_closed_form() {
    for &(lambda, eta) in &[(1.0, 1e-3), (37.5, 2e-3), (0.01, 0.5)] {
        let state = ModalState { wavenumber: 3.0, error0: 0.7, eigenvalue: lambda, learning_rate: eta };
        let t = 3.0 / (eta * lambda);
        let steps = (3.0 / 5e-4) as usize;
        let exact = state.error_at(t);
        let approx = state.euler(t, steps);
        assert!(((approx - exact) / exact).abs() < 1e-3, "{approx} vs {exact}");
    }
}

#[test]
fn threshold_examples() {
    let t1 = time_to_threshold(2.0, 0.1, 1.0, 0.1).unwrap();
    let t2 = time_to_threshold(4.0, 0.1, 1.0, 0.1).unwrap();
    assert_eq!(t2 * 2.0, t1);
    assert_eq!(time_to_threshold(3.0, 0.1, 0.1, 0.1).unwrap(), 0.0);
    assert_eq!(time_to_threshold(0.0, 0.1, 1.0, 0.1).unwrap(), f64::INFINITY);
    assert!(matches!(time_to_threshold(-1.0, 0.1, 1.0, 0.1), Err(Error::Domain(_))));
    assert!(matches!(modal_decay(1.0, 0.0, 1.0, 1.0), Err(Error::Domain(_))));
}

#[test]
fn endpoint_gain_is_ratio_of_decays() {
    let (eta, t, e0) = (1e-3, 500.0, 0.9);
    for &(lb, lx) in &[(1.0, 2.5), (3.0, 3.1), (0.2, 0.1)] {
        let ratio = modal_decay(lb, eta, e0, t).unwrap() / modal_decay(lx, eta, e0, t).unwrap();
        let gain = endpoint_gain(lb, lx, eta, t);
        assert!((ratio - gain).abs() <= 4.0 * f64::EPSILON * gain, "{ratio} {gain}");
        let tau = time_to_threshold(lx, eta, e0, 0.1).unwrap() / time_to_threshold(lb, eta, e0, 0.1).unwrap();
        assert!((tau - threshold_ratio(lb, lx)).abs() <= 4.0 * f64::EPSILON * tau);
    }
}

#[test]
fn larger_eigenvalue_reaches_threshold_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let a: f64 = rng.random_range(0.01..10.0);
        let b = a * rng.random_range(1.001..5.0);
        assert!(time_to_threshold(a, 0.01, 1.0, 0.1).unwrap() > time_to_threshold(b, 0.01, 1.0, 0.1).unwrap());
    }
}

#[test]
fn bandwidth_construction() {
    let ks = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(resolvable_bandwidth(&ks, &[0.05, 0.05, 0.05, 0.5], 0.1), Some(3.0));
    assert_eq!(resolvable_bandwidth(&ks, &[0.2, 0.0, 0.0, 0.0], 0.1), None);
    assert_eq!(resolvable_bandwidth(&[3.0, 1.0, 2.0], &[0.1, 0.01, 0.01], 0.1), Some(2.0));
    assert_eq!(resolvable_bandwidth(&ks, &[0.0, f64::NAN, 0.0, 0.0], 0.1), Some(1.0));
}

#[test]
fn zero_block_has_zero_linearization() {
    let mut net = sigmoid_net(5, 1);
    net.store_mut().values_mut().fill(0.0);
    let a = compute_a(&net, 0, &[0.3, -0.2, 0.1, 0.0, 0.5]).unwrap();
    assert_eq!(a, DMatrix::zeros(5, 5));
}

#[test]
fn zero_candidate_bias_removes_input_gate_path() {
    let mut net = sigmoid_net(4, 2);
    let w = 4;
    let gw = net.id("block0.gate_w").unwrap();
    let gb = net.id("block0.gate_b").unwrap();
    net.store_mut().slice_mut(gb)[3 * w..].fill(0.0);
    net.store_mut().view_mut(gw).slice_mut(ndarray::s![3 * w.., ..]).fill(0.0);
    let u = [0.2, -0.4, 0.1, 0.3];
    let a0 = compute_a(&net, 0, &u).unwrap();
    net.store_mut().view_mut(gw).slice_mut(ndarray::s![..w, ..]).mapv_inplace(|v| 3.0 * v + 0.1);
    assert_eq!(compute_a(&net, 0, &u).unwrap(), a0);
}

#[test]
fn linearization_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..20 {
        let net = sigmoid_net(6, seed);
        let u: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = compute_a(&net, 0, &u).unwrap();
        let h = 1e-5;
        for col in 0..6 {
            let mut up = u.clone();
            let mut down = u.clone();
            up[col] += h;
            down[col] -= h;
            let (fu, fd) = (probe_displacement(&net, 0, &up).unwrap(), probe_displacement(&net, 0, &down).unwrap());
            for row in 0..6 {
                let fdv = (fu[row] - fd[row]) / (2.0 * h);
                assert!((fdv - a[(row, col)]).abs() < 1e-6, "{fdv} vs {}", a[(row, col)]);
            }
        }
    }
}

#[test]
fn linearization_requires_sigmoid_gates() {
    let net = NetworkParams::init(&ModelConfig::xlstm(1, 1, 4, 1), 1).unwrap();
    assert!(matches!(compute_a(&net, 0, &[0.0; 4]), Err(Error::Config(_))));
}

#[test]
fn effective_map_examples() {
    let id = effective_map(&DMatrix::zeros(4, 4), 3).unwrap();
    assert_eq!(id.matrix, DMatrix::identity(4, 4));
    assert!((id.sigma_min - 1.0).abs() < 1e-15 && (id.sigma_max - 1.0).abs() < 1e-15);
    let m = effective_map(&DMatrix::from_diagonal_element(3, 3, 0.1), 1).unwrap();
    assert!((m.sigma_min - 1.1).abs() < 1e-14 && (m.sigma_max - 1.1).abs() < 1e-14);
    assert!(matches!(effective_map(&DMatrix::zeros(2, 2), 0), Err(Error::Config(_))));
}

#[test]
fn power_approaches_exponential_as_a_shrinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random_matrix(&mut rng, 6, 0.2);
    let s = 3;
    let gap = |scale: f64| {
        let scaled = &a * scale;
        (effective_map(&scaled, s).unwrap().matrix - expm(&(&scaled * s as f64))).norm()
    };
    let (g1, g2, g4) = (gap(1.0), gap(0.5), gap(0.25));
    assert!(g2 < g1 && g4 < g2, "{g1} {g2} {g4}");
    assert!(g1 / g2 > 3.0 && g2 / g4 > 3.0);
}

#[test]
fn expm_oracle_sanity() {
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -2.0, 3.0]));
    let e = expm(&d);
    for (i, v) in [0.5f64, -2.0, 3.0].iter().enumerate() {
        assert!((e[(i, i)] - v.exp()).abs() < 1e-12 * v.exp());
    }
}

#[test]
fn kernel_bound_at_one_step_always_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let n = rng.random_range(2..9);
        let scale = rng.random_range(0.01..2.0);
        let a = random_matrix(&mut rng, n, scale);
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let map = effective_map(&a, 1).unwrap();
        let mode = kernel_mode(1.0, &v, &a, &map.matrix, 1);
        assert_eq!(mode.bound_holds(), Some(true), "{mode:?}");
    }
}

#[test]
fn zero_block_leaves_kernel_unchanged() {
    let v = DVector::from_vec(vec![0.3, -1.0, 2.0]);
    let a = DMatrix::zeros(3, 3);
    for s in 1..4 {
        let mode = kernel_mode(2.0, &v, &a, &effective_map(&a, s).unwrap().matrix, s);
        assert_eq!(mode.ratio(), Some(1.0));
        assert_eq!(mode.bound, 1.0);
    }
}

#[test]
fn symmetric_eigenvector_ratio_is_exact() {
    let q = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1).into_inner();
    let q = DMatrix::from_fn(3, 3, |r, c| q[(r, c)]);
    let eig = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 0.5, 1.5]));
    let a = &q * eig * q.transpose();
    for (j, beta) in [0.25, 0.5, 1.5].into_iter().enumerate() {
        let v = q.column(j).into_owned() * 2.0;
        let mode = kernel_mode(1.0, &v, &a, &effective_map(&a, 1).unwrap().matrix, 1);
        let want = (1.0 + beta) * (1.0 + beta);
        assert!((mode.ratio().unwrap() - want).abs() < 1e-12 * want);
        assert!((mode.rayleigh - beta).abs() < 1e-12);
    }
}

#[test]
fn degenerate_direction_is_flagged() {
    let a = DMatrix::from_diagonal_element(2, 2, 0.1);
    let mode = kernel_mode(5.0, &DVector::zeros(2), &a, &effective_map(&a, 1).unwrap().matrix, 1);
    assert!(mode.degenerate);
    assert_eq!(mode.ratio(), None);
}

#[test]
fn probe_base_eigenvalue_two_ways() {
    let net = sigmoid_net(8, 4);
    let ks: Vec<f64> = (1..=6).map(f64::from).collect();
    let probe = LinearizationProbe::build(&net, 0, 512, &ks, 0.3).unwrap();
    let n = probe.points.len() as f64;
    let gram = &probe.features * probe.features.transpose();
    for mode in &probe.modes {
        let target = plane_wave_target(&[mode.wavenumber], 0.3);
        let phi = DVector::from_iterator(probe.points.len(), probe.points.iter().map(|&x| target(&[x])));
        let quad = phi.dot(&(&gram * &phi)) / n;
        assert!((quad - mode.base).abs() <= 1e-12 * mode.base, "{quad} {}", mode.base);
    }
    assert_eq!(probe.b, symmetric_part(&probe.a));
    assert_eq!(probe.to_csv().lines().count(), 7);
}

#[test]
fn features_need_one_dimensional_model() {
    let net = NetworkParams::init(&ModelConfig::xlstm(2, 1, 4, 1), 1).unwrap();
    assert!(layer_features(&net, 0, &[0.0]).is_err());
}

#[test]
fn band_statistics() {
    let b = Band::of(&[1.0, 2.0, 3.0]);
    assert_eq!((b.mean, b.sd, b.count), (2.0, 1.0, 3));
    assert_eq!(Band::of(&[4.0]).sd, 0.0);
    assert!(Band::of(&[]).mean.is_nan());
}

#[test]
fn constant_mode_is_easy_for_both_models() {
    let config = FrequencyConfig {
        model: ModelConfig::xlstm(1, 1, 8, 1),
        wavenumbers: vec![0.0],
        seeds: vec![1, 2],
        train: TrainConfig { iterations: 400, ..TrainConfig::default() },
        phase: std::f64::consts::FRAC_PI_2,
        points: 128,
        ..FrequencyConfig::default()
    };
    let report = frequency_benchmark(&config).unwrap();
    assert!(report.dropped.is_empty());
    for run in &report.runs {
        assert!(run.tau.is_some(), "{:?} never reached the threshold", run.architecture);
    }
    let row = &report.rows[0];
    assert!(row.gain.mean > 0.0);
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.to_csv().lines().count(), 2);
}
