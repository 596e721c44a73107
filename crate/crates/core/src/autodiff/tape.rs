//! Tensor-level reverse-mode recording over jet-valued activations.
//!
//! Every activation is a [`JetTensor`]: a `rows × cols` block per Taylor
//! channel, stacked channel-major so that a linear layer is one matrix
//! product over all channels at once. Channel 0 holds values; each seeded
//! direction contributes `order` further channels with normalized Taylor
//! coefficients. Nonlinear primitives act elementwise through
//! [`compose`](super::jet::compose); the forward pass also keeps the series
//! of the slope `g'` so that the reverse sweep needs no transcendentals.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};

use super::jet::{compose, Primitive, FACTORIAL, MAX_ORDER};
use super::params::{ParamId, ParamStore};
use super::AutodiffError;

/// Taylor channel structure: one entry per seeded direction giving its order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Layout {
    orders: Vec<usize>,
}

impl Layout {
    /// Values only.
    pub fn plain() -> Self {
        Layout { orders: Vec::new() }
    }

    pub fn new(orders: Vec<usize>) -> Result<Self, AutodiffError> {
        if let Some(&bad) = orders.iter().find(|&&k| k == 0 || k > MAX_ORDER) {
            return Err(AutodiffError::Structural(format!(
                "direction order {bad} outside 1..={MAX_ORDER}"
            )));
        }
        Ok(Layout { orders })
    }

    pub fn channels(&self) -> usize {
        1 + self.orders.iter().sum::<usize>()
    }

    pub fn directions(&self) -> usize {
        self.orders.len()
    }

    pub fn order(&self, dir: usize) -> usize {
        self.orders[dir]
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    /// Channel holding coefficient `j ≥ 1` of direction `dir`.
    pub fn channel(&self, dir: usize, j: usize) -> usize {
        debug_assert!(j >= 1 && j <= self.orders[dir]);
        1 + self.orders[..dir].iter().sum::<usize>() + j - 1
    }

    fn is_plain(&self) -> bool {
        self.orders.is_empty()
    }
}

/// A batch of jets: `channels` stacked `rows × cols` planes.
#[derive(Clone, Debug, PartialEq)]
pub struct JetTensor {
    layout: Layout,
    rows: usize,
    data: Array2<f64>,
}

impl JetTensor {
    pub fn zeros(layout: Layout, rows: usize, cols: usize) -> Self {
        let data = Array2::zeros((layout.channels() * rows, cols));
        JetTensor { layout, rows, data }
    }

    /// Plain tensor wrapping `values`.
    pub fn plain(values: Array2<f64>) -> Self {
        let data = if values.is_standard_layout() { values } else { values.as_standard_layout().into_owned() };
        JetTensor { layout: Layout::plain(), rows: data.nrows(), data }
    }

    pub fn from_data(layout: Layout, rows: usize, data: Array2<f64>) -> Result<Self, AutodiffError> {
        if data.nrows() != layout.channels() * rows {
            return Err(AutodiffError::Structural(format!(
                "{} data rows for {} channels × {rows} rows",
                data.nrows(),
                layout.channels()
            )));
        }
        Ok(JetTensor { layout, rows, data: data.as_standard_layout().into_owned() })
    }

    /// Coordinate jets for `points` (`rows × dim`). Direction `d` moves each
    /// point with velocity `seeds[d].0` (`rows × dim`) and is carried to
    /// order `seeds[d].1`.
    pub fn seed(
        points: ArrayView2<'_, f64>,
        seeds: &[(ArrayView2<'_, f64>, usize)],
    ) -> Result<Self, AutodiffError> {
        let layout = Layout::new(seeds.iter().map(|s| s.1).collect())?;
        let rows = points.nrows();
        let mut t = JetTensor::zeros(layout, rows, points.ncols());
        t.plane_mut(0).assign(&points);
        for (d, (dir, _)) in seeds.iter().enumerate() {
            if dir.dim() != points.dim() {
                return Err(AutodiffError::Structural("seed shape differs from points".into()));
            }
            let c = t.layout.channel(d, 1);
            t.plane_mut(c).assign(dir);
        }
        Ok(t)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn plane(&self, channel: usize) -> ArrayView2<'_, f64> {
        self.data.slice(s![channel * self.rows..(channel + 1) * self.rows, ..])
    }

    pub fn plane_mut(&mut self, channel: usize) -> ndarray::ArrayViewMut2<'_, f64> {
        let r = self.rows;
        self.data.slice_mut(s![channel * r..(channel + 1) * r, ..])
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.plane(0)
    }

    /// `j`-th derivative plane along direction `dir` (`j = 0` gives values).
    pub fn derivative(&self, dir: usize, j: usize) -> Array2<f64> {
        if j == 0 {
            return self.values().to_owned();
        }
        self.plane(self.layout.channel(dir, j)).mapv(|v| v * FACTORIAL[j])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn plane_len(&self) -> usize {
        self.rows * self.cols()
    }
}

/// Handle to a recorded node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Per-row or shared coefficient in a [`Tape::combine`].
#[derive(Clone, Debug, PartialEq)]
pub enum Coef {
    Scalar(f64),
    PerRow(Vec<f64>),
}

impl Coef {
    #[inline]
    fn at(&self, row: usize) -> f64 {
        match self {
            Coef::Scalar(c) => *c,
            Coef::PerRow(v) => v[row],
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Affine { input: NodeId, weight: ParamId, bias: Option<ParamId> },
    Unary { input: NodeId, slopes: Vec<f64> },
    Mul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Shift(NodeId),
    Max(NodeId, NodeId),
    Clip { input: NodeId, lo: f64, hi: f64 },
    ColSlice { input: NodeId, start: usize },
    MeanCols(NodeId),
    Broadcast(NodeId),
    Extract { input: NodeId, channel: usize, scale: f64 },
    Combine { terms: Vec<(NodeId, Coef)> },
    SumSquares { input: NodeId, scale: f64 },
    Sum(Vec<NodeId>),
}

struct Node {
    value: JetTensor,
    op: Op,
    /// Whether any parameter lies upstream.
    grad: bool,
}

/// Append-only record of tensor operations over one parameter store.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &JetTensor {
        &self.nodes[id.0].value
    }

    /// Scalar held by a `1 × 1` plain node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.data[[0, 0]]
    }

    fn push(&mut self, value: JetTensor, op: Op) -> NodeId {
        let up = |id: &NodeId| self.nodes[id.0].grad;
        let grad = match &op {
            Op::Leaf => false,
            Op::Affine { .. } => true,
            Op::Unary { input, .. }
            | Op::Shift(input)
            | Op::Clip { input, .. }
            | Op::ColSlice { input, .. }
            | Op::MeanCols(input)
            | Op::Broadcast(input)
            | Op::Extract { input, .. }
            | Op::SumSquares { input, .. } => up(input),
            Op::Mul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Max(a, b) => up(a) || up(b),
            Op::Combine { terms } => terms.iter().any(|(id, _)| up(id)),
            Op::Sum(inputs) => inputs.iter().any(up),
        };
        self.nodes.push(Node { value, op, grad });
        NodeId(self.nodes.len() - 1)
    }

    fn get(&self, id: NodeId) -> Result<&JetTensor, AutodiffError> {
        self.nodes
            .get(id.0)
            .map(|n| &n.value)
            .ok_or_else(|| AutodiffError::Structural(format!("node {} not on tape", id.0)))
    }

    /// Record a constant (no gradient flows into it).
    pub fn leaf(&mut self, value: JetTensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// `x Wᵀ + b`, with the bias entering the value channel only.
    pub fn affine(
        &mut self,
        input: NodeId,
        weight: ParamId,
        bias: Option<ParamId>,
    ) -> Result<NodeId, AutodiffError> {
        let x = self.get(input)?;
        let w = self.params.view(weight);
        if x.cols() != w.ncols() {
            return Err(AutodiffError::Structural(format!(
                "affine `{}` expects {} inputs, got {}",
                self.params.entry(weight).name,
                w.ncols(),
                x.cols()
            )));
        }
        let mut data = Array2::zeros((x.data.nrows(), w.nrows()));
        general_mat_mul(1.0, &x.data, &w.t(), 0.0, &mut data);
        if let Some(b) = bias {
            let bv = self.params.slice(b);
            if bv.len() != w.nrows() {
                return Err(AutodiffError::Structural("bias length differs from weight rows".into()));
            }
            for mut row in data.slice_mut(s![..x.rows, ..]).rows_mut() {
                row.iter_mut().zip(bv).for_each(|(y, b)| *y += b);
            }
        }
        let value = JetTensor { layout: x.layout.clone(), rows: x.rows, data };
        Ok(self.push(value, Op::Affine { input, weight, bias }))
    }

    pub fn unary(&mut self, input: NodeId, prim: Primitive) -> Result<NodeId, AutodiffError> {
        let x = self.get(input)?;
        let n = x.plane_len();
        let xs = x.data.as_slice().expect("standard layout");
        if let Some(bad) = xs[..n].iter().find(|&&v| !prim.admits(v)) {
            return Err(AutodiffError::Domain(format!("{} at {bad:e}", prim.name())));
        }
        let mut out = vec![0.0; xs.len()];
        let mut slopes = vec![0.0; xs.len()];
        if x.layout.is_plain() {
            for e in 0..n {
                let (v, d) = primitive_value_slope(prim, xs[e]);
                out[e] = v;
                slopes[e] = d;
            }
        } else {
            let layout = &x.layout;
            let bases: Vec<(usize, usize)> =
                (0..layout.directions()).map(|d| (layout.channel(d, 1), layout.order(d))).collect();
            let mut a = [0.0; 5];
            let mut y = [0.0; 5];
            let mut z = [0.0; 5];
            for e in 0..n {
                let g = prim.derivatives(xs[e]);
                out[e] = g[0];
                slopes[e] = g[1];
                a[0] = xs[e];
                for &(base, k) in &bases {
                    for j in 1..=k {
                        a[j] = xs[(base + j - 1) * n + e];
                    }
                    compose(&g, &a, k, &mut y);
                    compose(&g[1..], &a, k, &mut z);
                    for j in 1..=k {
                        out[(base + j - 1) * n + e] = y[j];
                        slopes[(base + j - 1) * n + e] = z[j];
                    }
                }
            }
        }
        let value = JetTensor {
            layout: x.layout.clone(),
            rows: x.rows,
            data: Array2::from_shape_vec(x.data.raw_dim(), out).expect("shape"),
        };
        Ok(self.push(value, Op::Unary { input, slopes }))
    }

    pub fn tanh(&mut self, input: NodeId) -> Result<NodeId, AutodiffError> {
        self.unary(input, Primitive::Tanh)
    }

    pub fn sigmoid(&mut self, input: NodeId) -> Result<NodeId, AutodiffError> {
        self.unary(input, Primitive::Sigmoid)
    }

    pub fn exp(&mut self, input: NodeId) -> Result<NodeId, AutodiffError> {
        self.unary(input, Primitive::Exp)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<(), AutodiffError> {
        let (x, y) = (self.get(a)?, self.get(b)?);
        if x.layout != y.layout || x.data.dim() != y.data.dim() {
            return Err(AutodiffError::Structural(format!(
                "{what}: operand shapes {:?}/{:?} differ",
                x.data.dim(),
                y.data.dim()
            )));
        }
        Ok(())
    }

    /// Hadamard product with truncated Cauchy products per direction.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.same_shape(a, b, "mul")?;
        let (x, y) = (self.get(a)?, self.get(b)?);
        let n = x.plane_len();
        let xs = x.data.as_slice().expect("standard layout");
        let ys = y.data.as_slice().expect("standard layout");
        let mut out = vec![0.0; xs.len()];
        for ((o, a), b) in out[..n].iter_mut().zip(&xs[..n]).zip(&ys[..n]) {
            *o = a * b;
        }
        for d in 0..x.layout.directions() {
            let base = x.layout.channel(d, 1);
            let k = x.layout.order(d);
            for j in 1..=k {
                let o = &mut out[chan(base, j) * n..(chan(base, j) + 1) * n];
                for i in 0..=j {
                    let a = plane_of(xs, chan(base, i), n);
                    let b = plane_of(ys, chan(base, j - i), n);
                    for ((o, a), b) in o.iter_mut().zip(a).zip(b) {
                        *o += a * b;
                    }
                }
            }
        }
        let value = JetTensor {
            layout: x.layout.clone(),
            rows: x.rows,
            data: Array2::from_shape_vec(x.data.raw_dim(), out).expect("shape"),
        };
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.same_shape(a, b, "add")?;
        let (x, y) = (self.get(a)?, self.get(b)?);
        let value = JetTensor { layout: x.layout.clone(), rows: x.rows, data: &x.data + &y.data };
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.same_shape(a, b, "sub")?;
        let (x, y) = (self.get(a)?, self.get(b)?);
        let value = JetTensor { layout: x.layout.clone(), rows: x.rows, data: &x.data - &y.data };
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Adds the constant `c` to every value.
    pub fn shift(&mut self, input: NodeId, c: f64) -> Result<NodeId, AutodiffError> {
        let mut value = self.get(input)?.clone();
        value.plane_mut(0).mapv_inplace(|v| v + c);
        Ok(self.push(value, Op::Shift(input)))
    }

    /// Elementwise maximum selected by value; ties keep `a`.
    pub fn max(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.same_shape(a, b, "max")?;
        let (x, y) = (self.get(a)?, self.get(b)?);
        let n = x.plane_len();
        let xs = x.data.as_slice().expect("standard layout");
        let ys = y.data.as_slice().expect("standard layout");
        let mut out = xs.to_vec();
        for e in 0..n {
            if ys[e] > xs[e] {
                for c in 0..x.layout.channels() {
                    out[c * n + e] = ys[c * n + e];
                }
            }
        }
        let value = JetTensor {
            layout: x.layout.clone(),
            rows: x.rows,
            data: Array2::from_shape_vec(x.data.raw_dim(), out).expect("shape"),
        };
        Ok(self.push(value, Op::Max(a, b)))
    }

    /// Smallest distance, over every recorded `max` and `clip`, between an
    /// input value and the point where the selected branch would change.
    /// Values sitting exactly on the upper clip bound are structural (the
    /// stabilizer makes that argument exactly zero) and are ignored.
    pub fn branch_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            match &node.op {
                Op::Max(a, b) => {
                    let (x, y) = (self.nodes[a.0].value.values(), self.nodes[b.0].value.values());
                    for (u, v) in x.iter().zip(y.iter()) {
                        margin = margin.min((u - v).abs());
                    }
                }
                Op::Clip { input, lo, hi } => {
                    for &v in self.nodes[input.0].value.values().iter() {
                        margin = margin.min((v - lo).abs());
                        if v != *hi {
                            margin = margin.min((v - hi).abs());
                        }
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Clamp to `[lo, hi]`; outside the interval the output is constant.
    pub fn clip(&mut self, input: NodeId, lo: f64, hi: f64) -> Result<NodeId, AutodiffError> {
        let x = self.get(input)?;
        let n = x.plane_len();
        let xs = x.data.as_slice().expect("standard layout");
        let mut out = xs.to_vec();
        for e in 0..n {
            let v = xs[e];
            let clamped = if v <= lo {
                Some(lo)
            } else if v > hi {
                Some(hi)
            } else {
                None
            };
            if let Some(c) = clamped {
                out[e] = c;
                for ch in 1..x.layout.channels() {
                    out[ch * n + e] = 0.0;
                }
            }
        }
        let value = JetTensor {
            layout: x.layout.clone(),
            rows: x.rows,
            data: Array2::from_shape_vec(x.data.raw_dim(), out).expect("shape"),
        };
        Ok(self.push(value, Op::Clip { input, lo, hi }))
    }

    /// Columns `start..start + len`.
    pub fn col_slice(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId, AutodiffError> {
        let x = self.get(input)?;
        if start + len > x.cols() {
            return Err(AutodiffError::Structural("column slice out of range".into()));
        }
        let data = x.data.slice(s![.., start..start + len]).to_owned();
        let value = JetTensor { layout: x.layout.clone(), rows: x.rows, data };
        Ok(self.push(value, Op::ColSlice { input, start }))
    }

    /// Mean over columns, one column out.
    pub fn mean_cols(&mut self, input: NodeId) -> Result<NodeId, AutodiffError> {
        let x = self.get(input)?;
        let data = x.data.mean_axis(Axis(1)).expect("nonempty").insert_axis(Axis(1));
        let value = JetTensor { layout: x.layout.clone(), rows: x.rows, data };
        Ok(self.push(value, Op::MeanCols(input)))
    }

    /// Repeat a single-column tensor across `cols` columns.
    pub fn broadcast(&mut self, input: NodeId, cols: usize) -> Result<NodeId, AutodiffError> {
        let x = self.get(input)?;
        if x.cols() != 1 {
            return Err(AutodiffError::Structural("broadcast needs one column".into()));
        }
        let data = x.data.broadcast((x.data.nrows(), cols)).expect("broadcast").to_owned();
        let value = JetTensor { layout: x.layout.clone(), rows: x.rows, data };
        Ok(self.push(value, Op::Broadcast(input)))
    }

    /// The `order`-th derivative along direction `dir` as a plain tensor.
    pub fn derivative(&mut self, input: NodeId, dir: usize, order: usize) -> Result<NodeId, AutodiffError> {
        let x = self.get(input)?;
        let channel = if order == 0 {
            0
        } else {
            if dir >= x.layout.directions() || order > x.layout.order(dir) {
                return Err(AutodiffError::Structural(format!(
                    "derivative order {order} along direction {dir} was not seeded"
                )));
            }
            x.layout.channel(dir, order)
        };
        let scale = FACTORIAL[order];
        let data = x.plane(channel).mapv(|v| v * scale);
        Ok(self.push(JetTensor::plain(data), Op::Extract { input, channel, scale }))
    }

    /// `Σ_i coef_i[row] · x_i + offset[row]` over plain tensors of equal shape.
    pub fn combine(
        &mut self,
        terms: Vec<(NodeId, Coef)>,
        offset: Option<&[f64]>,
    ) -> Result<NodeId, AutodiffError> {
        let first = terms
            .first()
            .ok_or_else(|| AutodiffError::Structural("empty combination".into()))?
            .0;
        let (rows, cols) = self.get(first)?.data.dim();
        let mut data = Array2::zeros((rows, cols));
        for (id, coef) in &terms {
            let x = self.get(*id)?;
            if !x.layout.is_plain() || x.data.dim() != (rows, cols) {
                return Err(AutodiffError::Structural("combine expects equal plain operands".into()));
            }
            if let Coef::PerRow(v) = coef {
                if v.len() != rows {
                    return Err(AutodiffError::Structural("per-row coefficient length".into()));
                }
            }
            for (r, (mut out, inp)) in data.rows_mut().into_iter().zip(x.data.rows()).enumerate() {
                let c = coef.at(r);
                out.zip_mut_with(&inp, |o, i| *o += c * i);
            }
        }
        if let Some(off) = offset {
            if off.len() != rows {
                return Err(AutodiffError::Structural("offset length".into()));
            }
            for (mut row, o) in data.rows_mut().into_iter().zip(off) {
                row.mapv_inplace(|v| v + o);
            }
        }
        Ok(self.push(JetTensor::plain(data), Op::Combine { terms }))
    }

    /// `scale · Σ x²` over a plain tensor, as a `1 × 1` scalar.
    pub fn sum_squares(&mut self, input: NodeId, scale: f64) -> Result<NodeId, AutodiffError> {
        let x = self.get(input)?;
        if !x.layout.is_plain() {
            return Err(AutodiffError::Structural("sum_squares expects a plain tensor".into()));
        }
        let s: f64 = x.data.iter().map(|v| v * v).sum();
        let value = JetTensor::plain(Array2::from_elem((1, 1), scale * s));
        Ok(self.push(value, Op::SumSquares { input, scale }))
    }

    /// Elementwise sum of equally shaped tensors.
    pub fn sum(&mut self, inputs: Vec<NodeId>) -> Result<NodeId, AutodiffError> {
        let first = *inputs
            .first()
            .ok_or_else(|| AutodiffError::Structural("empty sum".into()))?;
        let mut value = self.get(first)?.clone();
        for &id in &inputs[1..] {
            self.same_shape(first, id, "sum")?;
            value.data += &self.get(id)?.data;
        }
        Ok(self.push(value, Op::Sum(inputs)))
    }

    /// Gradient of the scalar `output` with respect to every parameter.
    pub fn param_grad(&self, output: NodeId) -> Result<Vec<f64>, AutodiffError> {
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_grad(output, &mut grad)?;
        Ok(grad)
    }

    /// Adds the parameter gradient of `output` into `grad`.
    pub fn accumulate_grad(&self, output: NodeId, grad: &mut [f64]) -> Result<(), AutodiffError> {
        if self.nodes.is_empty() || output.0 >= self.nodes.len() {
            return Err(AutodiffError::Structural("tape does not contain the requested output".into()));
        }
        if grad.len() != self.params.len() {
            return Err(AutodiffError::Structural(format!(
                "gradient buffer of {} for {} parameters",
                grad.len(),
                self.params.len()
            )));
        }
        let out = &self.nodes[output.0].value;
        if out.data.dim() != (1, 1) || !out.layout.is_plain() {
            return Err(AutodiffError::Structural("gradient requested for a non-scalar node".into()));
        }
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Array2::from_elem((1, 1), 1.0));
        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if node.grad {
                self.backprop(node, g, &mut adj, grad);
            }
        }
        Ok(())
    }

    /// Adjoint buffer of `id`, or `None` when nothing upstream is trainable.
    fn slot<'a>(&self, adj: &'a mut [Option<Array2<f64>>], id: NodeId) -> Option<&'a mut [f64]> {
        let node = &self.nodes[id.0];
        if !node.grad {
            return None;
        }
        let buf = adj[id.0].get_or_insert_with(|| Array2::zeros(node.value.data.raw_dim()));
        Some(buf.as_slice_mut().expect("standard layout"))
    }

    fn pass(&self, adj: &mut [Option<Array2<f64>>], id: NodeId, contrib: Array2<f64>) {
        if !self.nodes[id.0].grad {
            return;
        }
        match &mut adj[id.0] {
            Some(acc) => *acc += &contrib,
            slot @ None => *slot = Some(contrib),
        }
    }

    fn backprop(&self, node: &Node, g: Array2<f64>, adj: &mut [Option<Array2<f64>>], grad: &mut [f64]) {
        let gs = g.as_slice().expect("standard layout");
        match &node.op {
            Op::Leaf => {}
            Op::Affine { input, weight, bias } => {
                let x = &self.nodes[input.0].value;
                let w = self.params.view(*weight);
                let e = self.params.entry(*weight);
                let mut gw = ndarray::ArrayViewMut2::from_shape(
                    (e.rows, e.cols),
                    &mut grad[e.offset..e.offset + e.len()],
                )
                .expect("entry shape");
                general_mat_mul(1.0, &g.t(), &x.data, 1.0, &mut gw);
                if let Some(b) = bias {
                    let e = self.params.entry(*b);
                    let gb = &mut grad[e.offset..e.offset + e.len()];
                    for row in g.slice(s![..x.rows, ..]).rows() {
                        gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                }
                if self.nodes[input.0].grad {
                    match &mut adj[input.0] {
                        Some(acc) => general_mat_mul(1.0, &g, &w, 1.0, acc),
                        slot @ None => {
                            let mut acc = Array2::zeros((g.nrows(), w.ncols()));
                            general_mat_mul(1.0, &g, &w, 0.0, &mut acc);
                            *slot = Some(acc);
                        }
                    }
                }
            }
            Op::Unary { input, slopes } => {
                let x = &self.nodes[input.0].value;
                if let Some(out) = self.slot(adj, *input) {
                    cauchy_adjoint(&x.layout, slopes, gs, x.plane_len(), out);
                }
            }
            Op::Mul(a, b) => {
                let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let n = x.plane_len();
                if let Some(out) = self.slot(adj, *a) {
                    cauchy_adjoint(&y.layout, y.data.as_slice().expect("standard layout"), gs, n, out);
                }
                if let Some(out) = self.slot(adj, *b) {
                    cauchy_adjoint(&x.layout, x.data.as_slice().expect("standard layout"), gs, n, out);
                }
            }
            Op::Add(a, b) => {
                self.pass(adj, *b, g.clone());
                self.pass(adj, *a, g);
            }
            Op::Sub(a, b) => {
                if let Some(out) = self.slot(adj, *b) {
                    out.iter_mut().zip(gs).for_each(|(o, v)| *o -= v);
                }
                self.pass(adj, *a, g);
            }
            Op::Shift(input) => self.pass(adj, *input, g),
            Op::Max(a, b) => {
                let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let n = x.plane_len();
                let channels = x.layout.channels();
                let xs = x.data.as_slice().expect("standard layout");
                let ys = y.data.as_slice().expect("standard layout");
                for (id, take_b) in [(*a, false), (*b, true)] {
                    if let Some(out) = self.slot(adj, id) {
                        for e in 0..n {
                            if (ys[e] > xs[e]) == take_b {
                                for c in 0..channels {
                                    out[c * n + e] += gs[c * n + e];
                                }
                            }
                        }
                    }
                }
            }
            Op::Clip { input, lo, hi } => {
                let x = &self.nodes[input.0].value;
                let n = x.plane_len();
                let channels = x.layout.channels();
                let xs = x.data.as_slice().expect("standard layout");
                if let Some(out) = self.slot(adj, *input) {
                    for e in 0..n {
                        let v = xs[e];
                        if v > *lo && v <= *hi {
                            for c in 0..channels {
                                out[c * n + e] += gs[c * n + e];
                            }
                        }
                    }
                }
            }
            Op::ColSlice { input, start } => {
                if self.nodes[input.0].grad {
                    let dim = self.nodes[input.0].value.data.raw_dim();
                    let acc = adj[input.0].get_or_insert_with(|| Array2::zeros(dim));
                    let mut view = acc.slice_mut(s![.., *start..*start + g.ncols()]);
                    view += &g;
                }
            }
            Op::MeanCols(input) => {
                let x = &self.nodes[input.0].value;
                let w = x.cols() as f64;
                let full = g.broadcast(x.data.raw_dim()).expect("broadcast").mapv(|v| v / w);
                self.pass(adj, *input, full);
            }
            Op::Broadcast(input) => {
                let col = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                self.pass(adj, *input, col);
            }
            Op::Extract { input, channel, scale } => {
                let n = g.len();
                if let Some(out) = self.slot(adj, *input) {
                    let dst = &mut out[channel * n..(channel + 1) * n];
                    dst.iter_mut().zip(gs).for_each(|(o, v)| *o += scale * v);
                }
            }
            Op::Combine { terms } => {
                let cols = g.ncols();
                for (id, coef) in terms {
                    if let Some(out) = self.slot(adj, *id) {
                        for (r, (o, v)) in out.chunks_mut(cols).zip(gs.chunks(cols)).enumerate() {
                            let c = coef.at(r);
                            o.iter_mut().zip(v).for_each(|(o, v)| *o += c * v);
                        }
                    }
                }
            }
            Op::SumSquares { input, scale } => {
                let x = &self.nodes[input.0].value;
                let k = 2.0 * scale * gs[0];
                if let Some(out) = self.slot(adj, *input) {
                    out.iter_mut().zip(x.data.iter()).for_each(|(o, v)| *o += k * v);
                }
            }
            Op::Sum(inputs) => {
                for id in inputs {
                    self.pass(adj, *id, g.clone());
                }
            }
        }
    }
}

/// Channel of coefficient `i` in a direction whose first channel is `base`.
#[inline]
fn chan(base: usize, i: usize) -> usize {
    if i == 0 {
        0
    } else {
        base + i - 1
    }
}

#[inline]
fn plane_of(s: &[f64], c: usize, n: usize) -> &[f64] {
    &s[c * n..(c + 1) * n]
}

#[inline]
fn primitive_value_slope(prim: Primitive, x: f64) -> (f64, f64) {
    match prim {
        Primitive::Tanh => {
            let t = x.tanh();
            (t, 1.0 - t * t)
        }
        Primitive::Sigmoid => {
            let s = super::jet::sigmoid(x);
            (s, s * (1.0 - s))
        }
        Primitive::Exp => {
            let v = x.exp();
            (v, v)
        }
        Primitive::LogSigmoid => (super::jet::log_sigmoid(x), super::jet::sigmoid(-x)),
        Primitive::Recip => (1.0 / x, -1.0 / (x * x)),
        Primitive::InvSqrt => {
            let r = 1.0 / x.sqrt();
            (r, -0.5 * r / x)
        }
    }
}

/// Adds the adjoint of a Cauchy product `y = a·b` with respect to `a` into
/// `out`, given `b` (`other`) and `ȳ` (`g`): `ā_i = Σ_{j≥i} ȳ_j b_{j-i}` per
/// direction, with every direction feeding the shared value slot.
fn cauchy_adjoint(layout: &Layout, other: &[f64], g: &[f64], n: usize, out: &mut [f64]) {
    {
        let o = &mut out[..n];
        for c in 0..layout.channels() {
            let (gc, bc) = (plane_of(g, c, n), plane_of(other, c, n));
            for ((o, a), b) in o.iter_mut().zip(gc).zip(bc) {
                *o += a * b;
            }
        }
    }
    for d in 0..layout.directions() {
        let base = layout.channel(d, 1);
        let k = layout.order(d);
        for i in 1..=k {
            let o = &mut out[chan(base, i) * n..(chan(base, i) + 1) * n];
            for j in i..=k {
                let (gj, bj) = (plane_of(g, chan(base, j), n), plane_of(other, chan(base, j - i), n));
                for ((o, a), b) in o.iter_mut().zip(gj).zip(bj) {
                    *o += a * b;
                }
            }
        }
    }
}
