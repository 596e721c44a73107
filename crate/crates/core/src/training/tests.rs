use super::*;
use crate::autodiff::{AnalyticField, JetValue, NodeId, ParamStore};
use crate::problems::Problem;
use ndarray::Array2;

fn one_point_sets(spec: &ProblemSpec, point: &[f64]) -> SampleSets {
    let mut sets: Vec<Array2<f64>> = spec.terms.iter().map(|_| Array2::zeros((0, spec.dim()))).collect();
    sets[0] = Array2::from_shape_vec((1, point.len()), point.to_vec()).unwrap();
    SampleSets { sets }
}

/// `u* + a·0 + b` with trainable `a = 1`, `b = 0`: exact at initialization.
struct OffsetReference<'a> {
    spec: &'a ProblemSpec,
    store: ParamStore,
}

impl<'a> OffsetReference<'a> {
    fn new(spec: &'a ProblemSpec) -> Self {
        let mut store = ParamStore::new();
        let w = store.add("w", 1, 1);
        store.add("b", 1, 1);
        store.slice_mut(w)[0] = 1.0;
        OffsetReference { spec, store }
    }
}

impl Field for OffsetReference<'_> {
    fn input_dim(&self) -> usize {
        self.spec.dim()
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn eval(&self, tape: &mut Tape<'_>, input: NodeId) -> Result<NodeId> {
        let u = self.spec.reference.as_field().eval(tape, input)?;
        let w = self.store.id("w").unwrap();
        let b = self.store.id("b").unwrap();
        Ok(tape.affine(u, w, Some(b))?)
    }
}

#[test]
fn reference_field_has_negligible_loss_and_gradient() {
    for p in Problem::benchmarks() {
        let spec = p.spec();
        let sets = sample(&spec, 1);
        let field = OffsetReference::new(&spec);
        let (b, g) = assemble_loss(&spec, &field, &LossWeights::uniform(spec.terms.len()), &sets).unwrap();
        assert!(b.terms.iter().all(|t| *t < 1e-18), "{}: {:?}", spec.name, b.terms);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-9, "{}: {norm:e}", spec.name);
    }
}

#[test]
fn zero_weights_give_zero_total() {
    let spec = Problem::Laplace2d.spec();
    let sets = sample(&spec, 2);
    let net = NetworkParams::init(&ModelConfig::xlstm(2, 1, 4, 1), 3).unwrap();
    let (b, g) = assemble_loss(&spec, &net, &LossWeights(vec![0.0; 5]), &sets).unwrap();
    assert_eq!(b.total, 0.0);
    assert!(b.terms.iter().all(|t| *t > 0.0));
    assert!(g.iter().all(|v| *v == 0.0));
}

#[test]
fn one_point_advection_loss() {
    let spec = Problem::Advection1d.spec();
    let sets = one_point_sets(&spec, &[0.8, 0.0]);
    let field = AnalyticField::new(2, |x: &[JetValue]| x[1]);
    let b = loss_value(&spec, &field, &LossWeights(vec![2.5, 0.0, 0.0]), &sets).unwrap();
    assert_eq!(b.terms[0], 1.0);
    assert_eq!(b.total, 2.5);
    let err = loss_value(&spec, &field, &LossWeights(vec![1.0, 1.0, 0.0]), &sets);
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn total_is_recomputable_from_terms() {
    let spec = Problem::PoissonBeam.spec();
    let sets = sample(&spec, 4);
    let net = NetworkParams::init(&ModelConfig::xlstm(2, 1, 4, 2), 5).unwrap();
    let w = LossWeights(vec![0.3, 1.0, 2.0, 0.1, 7.0, 1.5, 0.25]);
    let (b, _) = assemble_loss(&spec, &net, &w, &sets).unwrap();
    assert_eq!(b.total.to_bits(), LossBreakdown::weighted_total(&w.0, &b.terms).to_bits());
}

#[test]
fn gradient_does_not_depend_on_chunking() {
    let spec = Problem::DiskRobin { biot: 1.0 }.spec();
    let sets = sample(&spec, 6);
    let net = NetworkParams::init(&ModelConfig::xlstm(2, 1, 4, 2), 7).unwrap();
    let w = LossWeights::uniform(2);
    let mut g1 = Vec::new();
    let mut g2 = Vec::new();
    let a = evaluate_loss(&spec, &net, &w, &sets, 64, Some(&mut g1)).unwrap();
    let b = evaluate_loss(&spec, &net, &w, &sets, 1000, Some(&mut g2)).unwrap();
    assert!((a.total - b.total).abs() <= 1e-12 * a.total);
    for (x, y) in g1.iter().zip(&g2) {
        assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
    }
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut st = OptimState::new(1, AdamConfig { learning_rate: 0.01, ..Default::default() });
    let mut p = [2.0];
    st.adam_step(&mut p, &[-3.7]).unwrap();
    assert!((p[0] - 2.01).abs() < 1e-10);
    let mut st = OptimState::new(2, AdamConfig::default());
    let mut p = [1.0, -1.0];
    st.adam_step(&mut p, &[0.0, 0.0]).unwrap();
    assert_eq!(p, [1.0, -1.0]);
    assert_eq!(st.step, 1);
}

#[test]
fn adam_converges_on_quadratic() {
    let mut st = OptimState::new(1, AdamConfig { learning_rate: 0.1, ..Default::default() });
    let mut p = [0.0];
    for _ in 0..100 {
        let g = 2.0 * (p[0] - 3.0);
        st.adam_step(&mut p, &[g]).unwrap();
    }
    assert!((p[0] - 3.0).abs() < 0.05, "{}", p[0]);
}

#[test]
fn adam_rejects_bad_gradients() {
    let mut st = OptimState::new(2, AdamConfig::default());
    let mut p = [0.0, 0.0];
    assert!(matches!(st.adam_step(&mut p, &[1.0, f64::NAN]), Err(Error::Diverged { .. })));
    assert!(matches!(st.adam_step(&mut p, &[1.0]), Err(Error::Config(_))));
    assert_eq!(st.step, 0);
}

fn quick(iterations: usize) -> TrainConfig {
    TrainConfig { iterations, ..Default::default() }
}

#[test]
fn budget_of_one_gives_one_record() {
    let spec = Problem::Advection1d.spec();
    let sets = sample(&spec, 1);
    let net = NetworkParams::init(&ModelConfig::xlstm(2, 1, 4, 1), 1).unwrap();
    let out = train(&spec, net.clone(), &sets, &quick(1), 1).unwrap();
    assert_eq!(out.record.history.len(), 1);
    assert_eq!(out.record.status, RunStatus::Completed);
    assert!(matches!(train(&spec, net, &sets, &quick(0), 1), Err(Error::Config(_))));
}

#[test]
fn training_is_bit_reproducible() {
    let spec = Problem::Laplace2d.spec();
    let sets = sample(&spec, 8);
    let cfg = ModelConfig::xlstm(2, 1, 4, 2);
    let run = || train(&spec, NetworkParams::init(&cfg, 8).unwrap(), &sets, &quick(3), 8).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.params.store().values(), b.params.store().values());
    assert_eq!(a.record.history, b.record.history);
}

#[test]
fn run_record_round_trips_through_json() {
    let spec = Problem::DiskRobin { biot: 1.0 }.spec();
    let sets = sample(&spec, 2);
    let net = NetworkParams::init(&ModelConfig::baseline(2, 1, 5), 2).unwrap();
    let out = train(&spec, net, &sets, &quick(2), 2).unwrap();
    let json = serde_json::to_string(&out.record).unwrap();
    let back: RunRecord = serde_json::from_str(&json).unwrap();
    assert_eq!(back, out.record);
    for (x, y) in back.history.iter().zip(&out.record.history) {
        assert_eq!(x.total.to_bits(), y.total.to_bits());
    }
}

#[test]
fn paired_runs_share_sets_and_match_counts() {
    let spec = Problem::Advection1d.spec();
    let cfg = ModelConfig::xlstm(2, 2, 16, 2);
    let out = train_paired(&spec, &cfg, &quick(1), 3).unwrap();
    assert_eq!(out.xlstm.record.sample_digest, out.baseline.record.sample_digest);
    assert!(count_gap(out.xlstm.record.param_count, out.baseline.record.param_count) <= MAX_COUNT_GAP);
    assert_eq!(out.baseline.record.model.architecture, Architecture::Baseline);
    assert!(matches!(
        train_paired(&spec, &ModelConfig::baseline(2, 1, 4), &quick(1), 3),
        Err(Error::Config(_))
    ));
}

#[test]
fn diverging_run_keeps_last_finite_parameters() {
    let spec = Problem::Advection1d.spec();
    let sets = sample(&spec, 1);
    let net = NetworkParams::init(&ModelConfig::baseline(2, 1, 4), 1).unwrap();
    let cfg = TrainConfig { optimizer: AdamConfig { learning_rate: f64::INFINITY, ..Default::default() }, ..quick(5) };
    let out = train(&spec, net, &sets, &cfg, 1).unwrap();
    assert!(matches!(out.record.status, RunStatus::Aborted { .. }));
    assert!(out.params.store().all_finite());
    assert!(!out.record.history.is_empty());
}
