//! Reference implementations written independently of the tape: the
//! unstabilized gated recurrence, a symbolic expansion of whole networks,
//! and central finite differences.

use ndarray::ArrayView2;

use super::symbolic::{affine, Expr};
use crate::autodiff::ParamStore;
use crate::model::{Architecture, GateMode, NetworkParams};
use crate::{Error, Result};

/// Recurrent state without the log-scale stabilizer.
#[derive(Clone, Debug, PartialEq)]
pub struct NaiveState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub n: Vec<f64>,
}

impl NaiveState {
    pub fn zero(width: usize) -> Self {
        NaiveState { h: vec![0.0; width], c: vec![0.0; width], n: vec![0.0; width] }
    }

    pub fn all_finite(&self) -> bool {
        [&self.h, &self.c, &self.n].iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec(m: ArrayView2<'_, f64>, x: &[f64]) -> Vec<f64> {
    m.rows().into_iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// One micro-step computed directly from the gate definitions, with the raw
/// gates `i`, `f` in place of their rescaled versions.
pub fn naive_micro_step(net: &NetworkParams, block: usize, u: &[f64], state: &NaiveState) -> Result<(Vec<f64>, NaiveState)> {
    let cfg = net.config();
    let w = cfg.width;
    let (gw, gu, gb, proj) = net.block_gates(block)?;
    let wu = matvec(gw, u);
    let uh = matvec(gu, &state.h);
    let g: Vec<f64> = (0..4 * w).map(|r| wu[r] + uh[r] + gb[r]).collect();
    let gate = |mode: GateMode, x: f64| match mode {
        GateMode::Exponential => x.exp(),
        GateMode::Sigmoid => sigmoid(x),
    };
    let mut next = NaiveState::zero(w);
    for j in 0..w {
        let i = gate(cfg.input_gate, g[j]);
        let f = gate(cfg.forget_gate, g[w + j]);
        let o = sigmoid(g[2 * w + j]);
        let z = g[3 * w + j].tanh();
        next.c[j] = f * state.c[j] + i * z;
        next.n[j] = f * state.n[j] + i;
        next.h[j] = o * next.c[j] / (next.n[j] + cfg.eps);
    }
    let ph = matvec(proj, &next.h);
    let u_next = u.iter().zip(ph).map(|(a, p)| a + p.tanh()).collect();
    Ok((u_next, next))
}

fn view<'a>(net: &'a NetworkParams, name: &str) -> Result<ArrayView2<'a, f64>> {
    let id = net.id(name).ok_or_else(|| Error::Config(format!("missing parameter {name}")))?;
    Ok(net.store().view(id))
}

fn dense(m: ArrayView2<'_, f64>, x: &[Expr], bias: Option<ArrayView2<'_, f64>>) -> Vec<Expr> {
    m.rows()
        .into_iter()
        .enumerate()
        .map(|(r, row)| affine(row.as_slice().expect("row"), x, bias.map_or(0.0, |b| b[[r, 0]])))
        .collect()
}

fn tanh_all(x: Vec<Expr>) -> Vec<Expr> {
    x.iter().map(Expr::tanh).collect()
}

/// The whole network as a symbolic expression in the input coordinates.
pub fn network_expr(net: &NetworkParams) -> Result<Expr> {
    let cfg = net.config();
    let w = cfg.width;
    let x: Vec<Expr> = (0..cfg.input_dim).map(Expr::var).collect();
    let mut u = tanh_all(dense(view(net, "embed.w")?, &x, Some(view(net, "embed.b")?)));
    for l in 0..cfg.blocks {
        u = match cfg.architecture {
            Architecture::Baseline => tanh_all(dense(
                view(net, &format!("layer{l}.w"))?,
                &u,
                Some(view(net, &format!("layer{l}.b"))?),
            )),
            Architecture::Xlstm => {
                let p = |s: &str| view(net, &format!("block{l}.{s}"));
                let (gw, gu, gb, proj) = (p("gate_w")?, p("gate_u")?, p("gate_b")?, p("proj")?);
                let mut h: Option<Vec<Expr>> = None;
                let mut c: Option<Vec<Expr>> = None;
                let mut n: Option<Vec<Expr>> = None;
                let mut m: Option<Vec<Expr>> = None;
                for _ in 0..cfg.micro_steps {
                    let mut g = dense(gw, &u, Some(gb));
                    if let Some(h) = &h {
                        g = g.into_iter().zip(dense(gu, h, None)).map(|(a, b)| a + b).collect();
                    }
                    let log_gate = |mode: GateMode, e: &Expr| match mode {
                        GateMode::Exponential => e.clone(),
                        GateMode::Sigmoid => e.log_sigmoid(),
                    };
                    let mut hn = Vec::with_capacity(w);
                    let mut cn = Vec::with_capacity(w);
                    let mut nn = Vec::with_capacity(w);
                    let mut mn = Vec::with_capacity(w);
                    for j in 0..w {
                        let log_i = log_gate(cfg.input_gate, &g[j]);
                        let mut log_f = log_gate(cfg.forget_gate, &g[w + j]);
                        if let Some(m) = &m {
                            log_f = log_f + m[j].clone();
                        }
                        let m_next = log_f.max(&log_i);
                        let f_bar = (log_f - m_next.clone()).clip(cfg.clip_lo, cfg.clip_hi).exp();
                        let i_bar = (log_i - m_next.clone()).clip(cfg.clip_lo, cfg.clip_hi).exp();
                        let o = g[2 * w + j].sigmoid();
                        let z = g[3 * w + j].tanh();
                        let iz = i_bar.clone() * z;
                        let c_next = match &c {
                            Some(c) => f_bar.clone() * c[j].clone() + iz,
                            None => iz,
                        };
                        let n_next = match &n {
                            Some(n) => f_bar * n[j].clone() + i_bar,
                            None => i_bar,
                        };
                        let ratio = c_next.clone() * (n_next.clone() + Expr::constant(cfg.eps)).recip();
                        hn.push(o * ratio);
                        cn.push(c_next);
                        nn.push(n_next);
                        mn.push(m_next);
                    }
                    let refine = tanh_all(dense(proj, &hn, None));
                    u = u.into_iter().zip(refine).map(|(a, b)| a + b).collect();
                    h = Some(hn);
                    c = Some(cn);
                    n = Some(nn);
                    m = Some(mn);
                }
                let a = tanh_all(dense(p("mix1")?, &u, None));
                let y = tanh_all(dense(p("mix2")?, &a, None));
                let gamma: Vec<Expr> = dense(p("mix_gate_w")?, &u, Some(p("mix_gate_b")?)).iter().map(Expr::sigmoid).collect();
                let mut plus: Vec<Expr> = u.iter().zip(gamma.into_iter().zip(y)).map(|(u, (g, y))| u.clone() + g * y).collect();
                if cfg.layer_norm {
                    let inv_w = 1.0 / w as f64;
                    let mean = plus.iter().fold(Expr::constant(0.0), |a, v| a + v.clone()).scale(inv_w);
                    let centered: Vec<Expr> = plus.iter().map(|v| v.clone() - mean.clone()).collect();
                    let var = centered.iter().fold(Expr::constant(0.0), |a, v| a + v.clone() * v.clone()).scale(inv_w);
                    let inv = (var + Expr::constant(1e-5)).inv_sqrt();
                    plus = centered.into_iter().map(|v| v * inv.clone()).collect();
                }
                tanh_all(dense(p("shape_w")?, &plus, Some(p("shape_b")?)))
            }
        };
    }
    let head = dense(view(net, "head.w")?, &u, Some(view(net, "head.b")?));
    Ok(head.into_iter().next().expect("one output"))
}

/// Five-point central differences of `f` over every parameter, step
/// `2e-4·max(1, |θ|)`.
pub fn fd_gradient<F>(store: &ParamStore, f: F) -> Result<Vec<f64>>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    let mut work = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for i in 0..store.len() {
        let theta = store.values()[i];
        let h = 2e-4 * theta.abs().max(1.0);
        let mut at = |k: f64| {
            work.values_mut()[i] = theta + k * h;
            f(&work)
        };
        let (p2, p1, m1, m2) = (at(2.0)?, at(1.0)?, at(-1.0)?, at(-2.0)?);
        work.values_mut()[i] = theta;
        out.push((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h));
    }
    Ok(out)
}

/// Worst `|a − b| / max(|a|, |b|, floor)` over two gradients.
pub fn worst_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
