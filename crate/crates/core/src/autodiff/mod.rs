//! Differentiation engine: Taylor jets for input-space derivatives up to
//! fourth order, recorded on a tensor tape for exact parameter gradients.

mod jet;
mod params;
mod tape;

use ndarray::Array2;
use thiserror::Error;

pub use jet::{JetValue, Primitive, DIV_GUARD, MAX_ORDER};
pub use params::{ParamEntry, ParamId, ParamStore};
pub use tape::{Coef, JetTensor, Layout, NodeId, Tape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("unsupported primitive `{0}`")]
    Unsupported(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("structural error: {0}")]
    Structural(String),
}

/// A scalar field that can be evaluated on seeded coordinate jets.
pub trait Field {
    fn input_dim(&self) -> usize;

    /// Parameters the field reads while recording.
    fn params(&self) -> &ParamStore;

    /// Record the field on `input` (`rows × input_dim`), returning a `rows × 1` node.
    fn eval(&self, tape: &mut Tape<'_>, input: NodeId) -> Result<NodeId, crate::Error>;
}

static NO_PARAMS: std::sync::OnceLock<ParamStore> = std::sync::OnceLock::new();

/// A closed-form field written against [`JetValue`] arithmetic.
pub struct AnalyticField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[JetValue]) -> JetValue> AnalyticField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        AnalyticField { dim, f }
    }

    pub fn value(&self, point: &[f64]) -> f64 {
        let xs: Vec<JetValue> = point.iter().map(|&v| JetValue::constant(v)).collect();
        (self.f)(&xs).value()
    }
}

impl<F: Fn(&[JetValue]) -> JetValue> Field for AnalyticField<F> {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn params(&self) -> &ParamStore {
        NO_PARAMS.get_or_init(ParamStore::new)
    }

    fn eval(&self, tape: &mut Tape<'_>, input: NodeId) -> Result<NodeId, crate::Error> {
        let x = tape.value(input);
        if x.cols() != self.dim {
            return Err(AutodiffError::Structural(format!(
                "field takes {} coordinates, got {}",
                self.dim,
                x.cols()
            ))
            .into());
        }
        let layout = x.layout().clone();
        let rows = x.rows();
        let mut out = JetTensor::zeros(layout.clone(), rows, 1);
        let mut args = vec![JetValue::constant(0.0); self.dim];
        for r in 0..rows {
            let value_of = |i: usize| x.plane(0)[[r, i]];
            if layout.directions() == 0 {
                args.iter_mut().enumerate().for_each(|(i, a)| *a = JetValue::constant(value_of(i)));
                out.plane_mut(0)[[r, 0]] = (self.f)(&args).value();
            }
            for d in 0..layout.directions() {
                let k = layout.order(d);
                for (i, a) in args.iter_mut().enumerate() {
                    let mut c = [value_of(i), 0.0, 0.0, 0.0, 0.0];
                    for (j, slot) in c.iter_mut().enumerate().take(k + 1).skip(1) {
                        *slot = x.plane(layout.channel(d, j))[[r, i]];
                    }
                    *a = JetValue::from_taylor(c);
                }
                let y = (self.f)(&args);
                out.plane_mut(0)[[r, 0]] = y.value();
                for j in 1..=k {
                    out.plane_mut(layout.channel(d, j))[[r, 0]] = y.taylor(j);
                }
            }
        }
        if !out.all_finite() {
            return Err(AutodiffError::Domain("analytic field produced a non-finite value".into()).into());
        }
        Ok(tape.leaf(out))
    }
}

fn check_order(order: usize) -> Result<(), AutodiffError> {
    if order == 0 || order > MAX_ORDER {
        return Err(AutodiffError::Structural(format!("order {order} outside 1..={MAX_ORDER}")));
    }
    Ok(())
}

fn truncate(j: JetValue, order: usize) -> JetValue {
    let mut c = j.taylor_coefficients();
    c.iter_mut().skip(order + 1).for_each(|v| *v = 0.0);
    JetValue::from_taylor(c)
}

/// Value and derivatives up to `order` of `f` at `point` along coordinate axis `direction`.
pub fn jet_eval<F>(f: F, point: &[f64], direction: usize, order: usize) -> Result<JetValue, AutodiffError>
where
    F: Fn(&[JetValue]) -> JetValue,
{
    if direction >= point.len() {
        return Err(AutodiffError::Structural(format!(
            "axis {direction} out of range for a {}-d point",
            point.len()
        )));
    }
    let mut seed = vec![0.0; point.len()];
    seed[direction] = 1.0;
    directional_jet(&f, point, &seed, order)
}

/// Like [`jet_eval`] along an arbitrary direction vector.
pub fn directional_jet<F>(f: &F, point: &[f64], direction: &[f64], order: usize) -> Result<JetValue, AutodiffError>
where
    F: Fn(&[JetValue]) -> JetValue,
{
    check_order(order)?;
    if direction.len() != point.len() {
        return Err(AutodiffError::Structural("direction and point dimensions differ".into()));
    }
    let xs: Vec<JetValue> = point.iter().zip(direction).map(|(&p, &d)| JetValue::variable(p, d)).collect();
    let y = f(&xs);
    if !y.is_finite() {
        return Err(AutodiffError::Domain(format!("non-finite jet at {point:?}")));
    }
    Ok(truncate(y, order))
}

/// Directional jet of a recorded [`Field`] at one point.
pub fn field_jet(field: &dyn Field, point: &[f64], direction: &[f64], order: usize) -> Result<JetValue, crate::Error> {
    check_order(order)?;
    if point.len() != field.input_dim() || direction.len() != point.len() {
        return Err(AutodiffError::Structural("point dimension differs from field input".into()).into());
    }
    let p = Array2::from_shape_vec((1, point.len()), point.to_vec()).expect("shape");
    let d = Array2::from_shape_vec((1, point.len()), direction.to_vec()).expect("shape");
    let input = JetTensor::seed(p.view(), &[(d.view(), order)])?;
    let mut tape = Tape::new(field.params());
    let x = tape.leaf(input);
    let y = field.eval(&mut tape, x)?;
    let out = tape.value(y);
    let mut c = [out.values()[[0, 0]], 0.0, 0.0, 0.0, 0.0];
    for (j, slot) in c.iter_mut().enumerate().take(order + 1).skip(1) {
        *slot = out.plane(out.layout().channel(0, j))[[0, 0]];
    }
    Ok(JetValue::from_taylor(c))
}

/// Mixed derivative along up to two directions, via polarization of
/// second-order directional jets when two are given.
fn mixed_from<J>(jet: J, point: &[f64], directions: &[Vec<f64>]) -> Result<f64, crate::Error>
where
    J: Fn(&[f64], usize) -> Result<JetValue, crate::Error>,
{
    match directions {
        [] => {
            let zero = vec![0.0; point.len()];
            Ok(jet(&zero, 1)?.value())
        }
        [a] => Ok(jet(a, 1)?.derivative(1)),
        [a, b] => {
            let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            let c2 = |d: &[f64]| jet(d, 2).map(|j| j.taylor(2));
            Ok(c2(&sum)? - c2(a)? - c2(b)?)
        }
        _ => Err(AutodiffError::Structural("mixed derivatives take at most two directions".into()).into()),
    }
}

/// `∂_{d1} ∂_{d2} f` (or `∂_{d1} f`, or `f`) for a closed-form `f`.
pub fn mixed_jet<F>(f: F, point: &[f64], directions: &[Vec<f64>]) -> Result<f64, crate::Error>
where
    F: Fn(&[JetValue]) -> JetValue,
{
    mixed_from(|d, k| Ok(directional_jet(&f, point, d, k)?), point, directions)
}

/// [`mixed_jet`] for a recorded field.
pub fn mixed_field_jet(field: &dyn Field, point: &[f64], directions: &[Vec<f64>]) -> Result<f64, crate::Error> {
    mixed_from(|d, k| field_jet(field, point, d, k), point, directions)
}

/// Outward unit normal of the unit circle at `point`.
pub fn disk_normal(point: &[f64]) -> Vec<f64> {
    let r = point.iter().map(|v| v * v).sum::<f64>().sqrt();
    point.iter().map(|v| v / r).collect()
}
