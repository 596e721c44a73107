//! Benchmark problem definitions.
//!
//! Every problem is a list of [`Term`]s. Term 0 is the interior residual;
//! the rest are boundary or initial constraints. Each term applies a linear
//! differential operator (a weighted sum of directional derivatives) to the
//! field and subtracts a target, so a single recording routine serves PDE
//! residuals, Dirichlet, Neumann, Robin and curvature constraints alike.

use std::f64::consts::{E, PI};
use std::fmt;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{AnalyticField, Coef, Field, JetTensor, JetValue, NodeId, Tape};
use crate::{Error, Result};

/// Tolerance for deciding that a point lies on a boundary locus.
pub const LOCUS_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    UnitDisk,
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lo, .. } => lo.len(),
            Domain::UnitDisk => 2,
        }
    }

    /// Whether `p` lies in the closure, up to `tol`.
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        if p.len() != self.dim() {
            return false;
        }
        match self {
            Domain::Box { lo, hi } => p.iter().zip(lo.iter().zip(hi)).all(|(x, (a, b))| *x >= a - tol && *x <= b + tol),
            Domain::UnitDisk => (p[0] * p[0] + p[1] * p[1]).sqrt() <= 1.0 + tol,
        }
    }

    pub fn centroid(&self) -> Vec<f64> {
        match self {
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            Domain::UnitDisk => vec![0.0, 0.0],
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| rng.random_range(*a..*b)).collect(),
            Domain::UnitDisk => {
                let r = rng.random::<f64>().sqrt();
                let t = 2.0 * PI * rng.random::<f64>();
                vec![r * t.cos(), r * t.sin()]
            }
        }
    }
}

/// Where a term is enforced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Locus {
    Interior,
    /// The face `x[axis] = value` of a box domain.
    Edge { axis: usize, value: f64 },
    UnitCircle,
}

/// Differentiation direction for one operator part.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Axis(usize),
    /// Outward unit normal of the unit circle, `(x, y) / r`.
    Normal,
}

/// `coeff · ∂^order_dir u` (`order = 0` is the value itself).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffPart {
    pub coeff: f64,
    pub dir: Direction,
    pub order: usize,
}

impl DiffPart {
    pub fn value(coeff: f64) -> Self {
        DiffPart { coeff, dir: Direction::Axis(0), order: 0 }
    }

    pub fn axis(coeff: f64, axis: usize, order: usize) -> Self {
        DiffPart { coeff, dir: Direction::Axis(axis), order }
    }

    pub fn normal(coeff: f64, order: usize) -> Self {
        DiffPart { coeff, dir: Direction::Normal, order }
    }
}

type PointFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type JetFn = Box<dyn Fn(&[JetValue]) -> JetValue + Send + Sync>;

/// One residual or constraint: `Σ parts(u)(x) − target(x)` on `locus`.
pub struct Term {
    pub name: String,
    pub locus: Locus,
    pub parts: Vec<DiffPart>,
    pub target: PointFn,
    pub count: usize,
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Term")
            .field("name", &self.name)
            .field("locus", &self.locus)
            .field("parts", &self.parts)
            .field("count", &self.count)
            .finish()
    }
}

impl Term {
    fn new(name: &str, locus: Locus, parts: Vec<DiffPart>, count: usize, target: PointFn) -> Self {
        Term { name: name.to_string(), locus, parts, target, count }
    }

    /// Seeded directions `(direction, order)` the operator needs.
    pub fn directions(&self) -> Vec<(Direction, usize)> {
        let mut out: Vec<(Direction, usize)> = Vec::new();
        for p in self.parts.iter().filter(|p| p.order > 0) {
            match out.iter_mut().find(|(d, _)| *d == p.dir) {
                Some((_, k)) => *k = (*k).max(p.order),
                None => out.push((p.dir, p.order)),
            }
        }
        out
    }

    pub fn max_order(&self) -> usize {
        self.parts.iter().map(|p| p.order).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    PublishedClosedForm,
    DerivedClosedForm,
}

/// Closed-form solution written in jet arithmetic so it can be differentiated.
pub struct ReferenceField {
    field: AnalyticField<JetFn>,
    pub provenance: Provenance,
}

impl ReferenceField {
    fn new(dim: usize, provenance: Provenance, f: JetFn) -> Self {
        ReferenceField { field: AnalyticField::new(dim, f), provenance }
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        self.field.value(p)
    }

    pub fn as_field(&self) -> &dyn Field {
        &self.field
    }
}

/// Dense evaluation grid for error metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Grid {
    /// `nx × ny` nodes spanning a box, x fastest.
    Cartesian { lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize },
    /// Radii `i/(nr−1)` × angles `2πj/nθ`, mapped to Cartesian points.
    Polar { nr: usize, ntheta: usize },
    /// Cell midpoints of `[lo, hi]`.
    Line { lo: f64, hi: f64, n: usize },
}

impl Grid {
    pub fn points(&self) -> Array2<f64> {
        match *self {
            Grid::Cartesian { lo, hi, nx, ny } => {
                let mut out = Array2::zeros((nx * ny, 2));
                for j in 0..ny {
                    for i in 0..nx {
                        let r = j * nx + i;
                        out[[r, 0]] = lo[0] + (hi[0] - lo[0]) * i as f64 / (nx - 1) as f64;
                        out[[r, 1]] = lo[1] + (hi[1] - lo[1]) * j as f64 / (ny - 1) as f64;
                    }
                }
                out
            }
            Grid::Polar { nr, ntheta } => {
                let mut out = Array2::zeros((nr * ntheta, 2));
                for i in 0..nr {
                    let r = i as f64 / (nr - 1) as f64;
                    for j in 0..ntheta {
                        let t = 2.0 * PI * j as f64 / ntheta as f64;
                        out[[i * ntheta + j, 0]] = r * t.cos();
                        out[[i * ntheta + j, 1]] = r * t.sin();
                    }
                }
                out
            }
            Grid::Line { lo, hi, n } => {
                let h = (hi - lo) / n as f64;
                Array2::from_shape_fn((n, 1), |(i, _)| lo + (i as f64 + 0.5) * h)
            }
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Grid::Cartesian { nx, ny, .. } => format!("cartesian {nx}x{ny}"),
            Grid::Polar { nr, ntheta } => format!("polar {nr}x{ntheta}"),
            Grid::Line { n, .. } => format!("line {n}"),
        }
    }
}

/// Registry of benchmark problems, addressable by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Problem {
    #[serde(rename = "advection1d")]
    Advection1d,
    #[serde(rename = "laplace2d")]
    Laplace2d,
    DiskRobin {
        #[serde(default = "default_biot")]
        biot: f64,
    },
    PoissonBeam,
    SpectralProbe {
        #[serde(default = "default_k")]
        k: f64,
        #[serde(default)]
        phase: f64,
    },
}

fn default_biot() -> f64 {
    1.0
}

fn default_k() -> f64 {
    1.0
}

impl Problem {
    pub const NAMES: [&'static str; 5] = ["advection1d", "laplace2d", "disk-robin", "poisson-beam", "spectral-probe"];

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "advection1d" => Ok(Problem::Advection1d),
            "laplace2d" => Ok(Problem::Laplace2d),
            "disk-robin" => Ok(Problem::DiskRobin { biot: default_biot() }),
            "poisson-beam" => Ok(Problem::PoissonBeam),
            "spectral-probe" => Ok(Problem::SpectralProbe { k: default_k(), phase: 0.0 }),
            other => Err(Error::Config(format!(
                "unknown problem `{other}` (expected one of {})",
                Problem::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Problem::Advection1d => "advection1d",
            Problem::Laplace2d => "laplace2d",
            Problem::DiskRobin { .. } => "disk-robin",
            Problem::PoissonBeam => "poisson-beam",
            Problem::SpectralProbe { .. } => "spectral-probe",
        }
    }

    /// The four PDE benchmarks.
    pub fn benchmarks() -> Vec<Problem> {
        vec![Problem::Advection1d, Problem::Laplace2d, Problem::DiskRobin { biot: 1.0 }, Problem::PoissonBeam]
    }

    pub fn spec(&self) -> ProblemSpec {
        match *self {
            Problem::Advection1d => advection(),
            Problem::Laplace2d => laplace(),
            Problem::DiskRobin { biot } => disk(biot),
            Problem::PoissonBeam => beam(),
            Problem::SpectralProbe { k, phase } => plane_wave_problem(&[k], phase),
        }
    }
}

/// A fully specified benchmark.
#[derive(Debug)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Domain,
    pub terms: Vec<Term>,
    pub reference: ReferenceField,
    pub grid: Grid,
}

impl fmt::Debug for ReferenceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ReferenceField({:?})", self.provenance)
    }
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.name.clone()).collect()
    }

    pub fn reference(&self, p: &[f64]) -> f64 {
        self.reference.value(p)
    }

    pub fn on_locus(&self, term: usize, p: &[f64]) -> bool {
        let t = &self.terms[term];
        match t.locus {
            Locus::Interior => self.domain.contains(p, LOCUS_TOL),
            Locus::Edge { axis, value } => (p[axis] - value).abs() <= LOCUS_TOL && self.domain.contains(p, LOCUS_TOL),
            Locus::UnitCircle => ((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() <= LOCUS_TOL,
        }
    }

    fn sample_locus<R: Rng>(&self, locus: Locus, rng: &mut R) -> Vec<f64> {
        match locus {
            Locus::Interior => self.domain.sample(rng),
            Locus::Edge { axis, value } => {
                let mut p = self.domain.sample(rng);
                p[axis] = value;
                p
            }
            Locus::UnitCircle => {
                let t = 2.0 * PI * rng.random::<f64>();
                vec![t.cos(), t.sin()]
            }
        }
    }
}

/// One fixed point cloud per term.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSets {
    pub sets: Vec<Array2<f64>>,
}

impl SampleSets {
    pub fn total(&self) -> usize {
        self.sets.iter().map(|s| s.nrows()).sum()
    }

    /// SHA-256 over the bit patterns of every point, as hex.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.sets {
            h.update((s.nrows() as u64).to_le_bytes());
            for v in s.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Uniform i.i.d. samples for every term, deterministic in `seed`.
pub fn sample(spec: &ProblemSpec, seed: u64) -> SampleSets {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = spec.dim();
    let sets = spec
        .terms
        .iter()
        .map(|t| {
            let mut a = Array2::zeros((t.count, dim));
            for mut row in a.rows_mut() {
                let p = spec.sample_locus(t.locus, &mut rng);
                row.iter_mut().zip(p).for_each(|(r, v)| *r = v);
            }
            a
        })
        .collect();
    SampleSets { sets }
}

/// Record the residual of `term` for `field` at `points`; returns a plain `rows × 1` node.
pub fn record_term(tape: &mut Tape<'_>, field: &dyn Field, term: &Term, points: ArrayView2<'_, f64>) -> Result<NodeId> {
    let rows = points.nrows();
    let dim = points.ncols();
    let dirs = term.directions();
    let seeds: Vec<(Array2<f64>, usize)> = dirs
        .iter()
        .map(|&(d, k)| {
            let m = match d {
                Direction::Axis(a) => Array2::from_shape_fn((rows, dim), |(_, j)| if j == a { 1.0 } else { 0.0 }),
                Direction::Normal => {
                    let mut m = points.to_owned();
                    for mut row in m.rows_mut() {
                        let r = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                        row.mapv_inplace(|v| v / r);
                    }
                    m
                }
            };
            (m, k)
        })
        .collect();
    let views: Vec<_> = seeds.iter().map(|(m, k)| (m.view(), *k)).collect();
    let input = JetTensor::seed(points, &views)?;
    let x = tape.leaf(input);
    let u = field.eval(tape, x)?;
    let mut combo = Vec::with_capacity(term.parts.len());
    for p in &term.parts {
        let dir = if p.order == 0 {
            0
        } else {
            dirs.iter().position(|(d, _)| *d == p.dir).expect("direction collected")
        };
        let node = tape.derivative(u, dir, p.order)?;
        combo.push((node, Coef::Scalar(p.coeff)));
    }
    let offset: Vec<f64> = points.rows().into_iter().map(|r| -(term.target)(r.as_slice().expect("row"))).collect();
    Ok(tape.combine(combo, Some(&offset))?)
}

/// Residuals of `term` at many points, without gradients.
pub fn term_residuals(spec: &ProblemSpec, field: &dyn Field, term: usize, points: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let t = spec
        .terms
        .get(term)
        .ok_or_else(|| Error::Config(format!("problem {} has no term {term}", spec.name)))?;
    for p in points.rows() {
        let p = p.to_vec();
        if !spec.on_locus(term, &p) {
            return Err(Error::Domain(format!("{p:?} is not on the locus of `{}`", t.name)));
        }
    }
    let mut out = Vec::with_capacity(points.nrows());
    for chunk in points.axis_chunks_iter(ndarray::Axis(0), 512) {
        let mut tape = Tape::new(field.params());
        let r = record_term(&mut tape, field, t, chunk)?;
        out.extend(tape.value(r).values().iter().copied());
    }
    Ok(out)
}

/// Interior PDE residual at one point.
pub fn residual(spec: &ProblemSpec, field: &dyn Field, point: &[f64]) -> Result<f64> {
    let p = Array2::from_shape_vec((1, point.len()), point.to_vec())
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(term_residuals(spec, field, 0, p.view())?[0])
}

/// Residual of constraint `id` (a term index ≥ 1) at a point on its locus.
pub fn constraint_residual(spec: &ProblemSpec, field: &dyn Field, id: usize, point: &[f64]) -> Result<f64> {
    if id == 0 || id >= spec.terms.len() {
        return Err(Error::Config(format!("problem {} has no constraint {id}", spec.name)));
    }
    let p = Array2::from_shape_vec((1, point.len()), point.to_vec())
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(term_residuals(spec, field, id, p.view())?[0])
}

/// `x ↦ sin(2π k·x + φ)`.
pub fn plane_wave_target(k: &[f64], phase: f64) -> impl Fn(&[f64]) -> f64 + Send + Sync + Clone {
    let k = k.to_vec();
    move |x: &[f64]| (2.0 * PI * k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + phase).sin()
}

/// Advection coefficient `a` (drift) and reaction rate `b`.
pub const ADVECTION_A: f64 = -0.5;
pub const ADVECTION_B: f64 = 0.5;

fn advection() -> ProblemSpec {
    // coordinates (x, t)
    let (a, b) = (ADVECTION_A, ADVECTION_B);
    ProblemSpec {
        name: "advection1d".into(),
        domain: Domain::Box { lo: vec![0.0, 0.0], hi: vec![2.0, 1.0] },
        terms: vec![
            Term::new(
                "residual",
                Locus::Interior,
                vec![DiffPart::axis(1.0, 1, 1), DiffPart::axis(a, 0, 1), DiffPart::value(b)],
                3000,
                Box::new(|_| 0.0),
            ),
            Term::new(
                "initial t=0",
                Locus::Edge { axis: 1, value: 0.0 },
                vec![DiffPart::value(1.0)],
                250,
                Box::new(|p| 6.0 * (-3.0 * p[0]).exp()),
            ),
            Term::new(
                "inflow x=2",
                Locus::Edge { axis: 0, value: 2.0 },
                vec![DiffPart::value(1.0)],
                250,
                Box::new(|p| 6.0 * (-6.0 - 2.0 * p[1]).exp()),
            ),
        ],
        reference: ReferenceField::new(
            2,
            Provenance::PublishedClosedForm,
            Box::new(|x| 6.0 * (x[0] * -3.0 - x[1] * 2.0).exp()),
        ),
        grid: Grid::Cartesian { lo: [0.0, 0.0], hi: [2.0, 1.0], nx: 201, ny: 101 },
    }
}

fn laplace() -> ProblemSpec {
    let lap = vec![DiffPart::axis(1.0, 0, 2), DiffPart::axis(1.0, 1, 2)];
    ProblemSpec {
        name: "laplace2d".into(),
        domain: Domain::Box { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
        terms: vec![
            Term::new("residual", Locus::Interior, lap, 1000, Box::new(|_| 0.0)),
            Term::new("dirichlet y=0", Locus::Edge { axis: 1, value: 0.0 }, vec![DiffPart::value(1.0)], 1000, Box::new(|_| 0.0)),
            Term::new("dirichlet y=1", Locus::Edge { axis: 1, value: 1.0 }, vec![DiffPart::value(1.0)], 1000, Box::new(|_| 1.0)),
            Term::new("neumann x=0", Locus::Edge { axis: 0, value: 0.0 }, vec![DiffPart::axis(1.0, 0, 1)], 1000, Box::new(|_| 0.0)),
            Term::new("neumann x=1", Locus::Edge { axis: 0, value: 1.0 }, vec![DiffPart::axis(1.0, 0, 1)], 1000, Box::new(|_| 0.0)),
        ],
        reference: ReferenceField::new(2, Provenance::PublishedClosedForm, Box::new(|x| x[1])),
        grid: Grid::Cartesian { lo: [0.0, 0.0], hi: [1.0, 1.0], nx: 201, ny: 201 },
    }
}

/// Radial solution `θ*(r) = 1/4 + 1/(2 Bi) − r²/4` of `Δθ + 1 = 0`, `−∂_n θ = Bi θ`.
pub fn disk_reference(biot: f64, r: f64) -> f64 {
    0.25 + 0.5 / biot - 0.25 * r * r
}

fn disk(biot: f64) -> ProblemSpec {
    let c = 0.25 + 0.5 / biot;
    ProblemSpec {
        name: "disk-robin".into(),
        domain: Domain::UnitDisk,
        terms: vec![
            Term::new(
                "residual",
                Locus::Interior,
                vec![DiffPart::axis(1.0, 0, 2), DiffPart::axis(1.0, 1, 2)],
                3000,
                Box::new(|_| -1.0),
            ),
            Term::new(
                "robin r=1",
                Locus::UnitCircle,
                vec![DiffPart::normal(-1.0, 1), DiffPart::value(-biot)],
                500,
                Box::new(|_| 0.0),
            ),
        ],
        reference: ReferenceField::new(
            2,
            Provenance::DerivedClosedForm,
            Box::new(move |x| c - (x[0] * x[0] + x[1] * x[1]) * 0.25),
        ),
        grid: Grid::Polar { nr: 101, ntheta: 256 },
    }
}

/// Source of the anisotropic beam problem.
pub fn beam_source(x: f64, y: f64) -> f64 {
    (2.0 - x * x) * (-y).exp()
}

fn beam() -> ProblemSpec {
    let sq = |p: &[f64]| p[0] * p[0];
    ProblemSpec {
        name: "poisson-beam".into(),
        domain: Domain::Box { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
        terms: vec![
            Term::new(
                "residual",
                Locus::Interior,
                vec![DiffPart::axis(1.0, 0, 2), DiffPart::axis(-1.0, 1, 4)],
                1000,
                Box::new(|p| beam_source(p[0], p[1])),
            ),
            Term::new("u y=0", Locus::Edge { axis: 1, value: 0.0 }, vec![DiffPart::value(1.0)], 1000, Box::new(sq)),
            Term::new("u y=1", Locus::Edge { axis: 1, value: 1.0 }, vec![DiffPart::value(1.0)], 1000, Box::new(move |p| sq(p) / E)),
            Term::new("u_yy y=0", Locus::Edge { axis: 1, value: 0.0 }, vec![DiffPart::axis(1.0, 1, 2)], 1000, Box::new(sq)),
            Term::new("u_yy y=1", Locus::Edge { axis: 1, value: 1.0 }, vec![DiffPart::axis(1.0, 1, 2)], 1000, Box::new(move |p| sq(p) / E)),
            Term::new("u x=0", Locus::Edge { axis: 0, value: 0.0 }, vec![DiffPart::value(1.0)], 1000, Box::new(|_| 0.0)),
            Term::new("u x=1", Locus::Edge { axis: 0, value: 1.0 }, vec![DiffPart::value(1.0)], 1000, Box::new(|p| (-p[1]).exp())),
        ],
        reference: ReferenceField::new(
            2,
            Provenance::PublishedClosedForm,
            Box::new(|x| x[0] * x[0] * (-x[1]).exp()),
        ),
        grid: Grid::Cartesian { lo: [0.0, 0.0], hi: [1.0, 1.0], nx: 201, ny: 201 },
    }
}

/// Default number of regression points for the plane-wave probe.
pub const PLANE_WAVE_POINTS: usize = 512;
/// Midpoint cells used for L² norms on `[−1, 1]`.
pub const PLANE_WAVE_GRID: usize = 4096;

/// Pure regression onto `sin(2π k·x + φ)` over `[−1, 1]^d`.
pub fn plane_wave_problem(k: &[f64], phase: f64) -> ProblemSpec {
    plane_wave_problem_with(k, phase, PLANE_WAVE_POINTS)
}

pub fn plane_wave_problem_with(k: &[f64], phase: f64, points: usize) -> ProblemSpec {
    let d = k.len();
    let target = plane_wave_target(k, phase);
    let kv = k.to_vec();
    let jet_target = move |x: &[JetValue]| {
        let arg = kv.iter().zip(x).fold(JetValue::constant(phase), |acc, (k, xi)| acc + *xi * (2.0 * PI * k));
        sin_jet(arg)
    };
    ProblemSpec {
        name: "spectral-probe".into(),
        domain: Domain::Box { lo: vec![-1.0; d], hi: vec![1.0; d] },
        terms: vec![Term::new("data", Locus::Interior, vec![DiffPart::value(1.0)], points, Box::new(target))],
        reference: ReferenceField::new(d, Provenance::PublishedClosedForm, Box::new(jet_target)),
        grid: Grid::Line { lo: -1.0, hi: 1.0, n: PLANE_WAVE_GRID },
    }
}

/// Taylor composition of `sin` with a jet.
fn sin_jet(a: JetValue) -> JetValue {
    let c = a.taylor_coefficients();
    let (s, co) = c[0].sin_cos();
    let g = [s, co, -s, -co, s];
    let (a1, a2, a3, a4) = (c[1], c[2], c[3], c[4]);
    JetValue::from_taylor([
        g[0],
        g[1] * a1,
        g[1] * a2 + 0.5 * g[2] * a1 * a1,
        g[1] * a3 + g[2] * a1 * a2 + g[3] * a1 * a1 * a1 / 6.0,
        g[1] * a4 + g[2] * (a1 * a3 + 0.5 * a2 * a2) + 0.5 * g[3] * a1 * a1 * a2 + g[4] * a1.powi(4) / 24.0,
    ])
}

#[cfg(test)]
mod tests;
