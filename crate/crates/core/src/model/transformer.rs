// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention + MLP transformer with an exactly additive residual stream.
//!
//! There is no layer norm, so each receiver's input is the plain sum of the
//! outputs of the components before it. Every node is a function of that
//! sum; edges carry one sender's full `seq_len x model_dim` contribution.
//! Logits are read at the last position.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ComputationalGraph, NodeKind};
use crate::rng;
use crate::scalar::{argmax, log_softmax, softmax, Scalar};

use super::engine::{forward, EdgeModel};
use super::task::TaskDataset;
use super::{build_graph, ModelSpec, TransformerSpec};

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
struct HeadParams {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

#[derive(Clone, Copy, Debug)]
struct MlpParams {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Clone, Debug)]
struct Layout {
    tok: usize,
    pos: usize,
    heads: Vec<Vec<HeadParams>>,
    mlps: Vec<MlpParams>,
    unembed: usize,
    total: usize,
}

impl Layout {
    fn new(s: &TransformerSpec) -> Self {
        let (d, dh, m, v) = (s.model_dim, s.head_dim(), s.mlp_dim, s.vocab_size);
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let tok = take(v * d);
        let pos = take(s.context * d);
        let mut heads = Vec::new();
        let mut mlps = Vec::new();
        for _ in 0..s.layers {
            heads.push(
                (0..s.heads)
                    .map(|_| HeadParams { wq: take(d * dh), wk: take(d * dh), wv: take(d * dh), wo: take(dh * d) })
                    .collect(),
            );
            mlps.push(MlpParams { w1: take(d * m), b1: take(m), w2: take(m * d), b2: take(d) });
        }
        let unembed = take(d * v);
        Self { tok, pos, heads, mlps, unembed, total: at }
    }
}

// ---------------------------------------------------------------------------
// Dense helpers (row-major)
// ---------------------------------------------------------------------------

/// `a (n x k) * b (k x m)`.
fn matmul<S: Scalar>(a: &[S], b: &[S], n: usize, k: usize, m: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let x = a[i * k + p];
            if x == S::zero() {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for j in 0..m {
                row[j] += x * brow[j];
            }
        }
    }
    out
}

/// `a (n x m) * b^T` with `b` stored as `k x m`.
fn matmul_bt<S: Scalar>(a: &[S], b: &[S], n: usize, m: usize, k: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * k];
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        for p in 0..k {
            let brow = &b[p * m..(p + 1) * m];
            out[i * k + p] = arow.iter().zip(brow).fold(S::zero(), |acc, (x, y)| acc + *x * *y);
        }
    }
    out
}

/// `acc (k x m) += a^T * b` with `a` stored as `n x k`, `b` as `n x m`.
fn add_at_b<S: Scalar>(acc: &mut [S], a: &[S], b: &[S], n: usize, k: usize, m: usize) {
    for i in 0..n {
        for p in 0..k {
            let x = a[i * k + p];
            if x == S::zero() {
                continue;
            }
            let row = &mut acc[p * m..(p + 1) * m];
            for j in 0..m {
                row[j] += x * b[i * m + j];
            }
        }
    }
}

fn sum_inputs<S: Scalar>(ins: &[&[S]]) -> Vec<S> {
    let mut x = ins[0].to_vec();
    for v in &ins[1..] {
        for (a, b) in x.iter_mut().zip(v.iter()) {
            *a += *b;
        }
    }
    x
}

// ---------------------------------------------------------------------------
// Transformer
// ---------------------------------------------------------------------------

/// Role of each graph node.
#[derive(Clone, Copy, Debug)]
enum Role {
    Embed,
    Head(usize, usize),
    Mlp(usize),
    Unembed,
}

/// Small decoder-only transformer.
#[derive(Clone, Debug)]
pub struct Transformer<S> {
    spec: TransformerSpec,
    graph: ComputationalGraph,
    layout: Layout,
    roles: Vec<Role>,
    params: Vec<S>,
}

impl<S: Scalar> Transformer<S> {
    /// Seeded random initialization.
    pub fn new(spec: TransformerSpec) -> Result<Self> {
        let layout = Layout::new(&spec);
        let mut params = vec![S::zero(); layout.total];
        let mut r = rng::seeded(rng::derive_str(spec.seed, "init"));
        let mut fill = |params: &mut [S], at: usize, len: usize, std: f64| {
            let n = Normal::new(0.0, std).expect("positive std");
            for p in &mut params[at..at + len] {
                *p = S::lit(n.sample(&mut r));
            }
        };
        let (d, dh, m, v) = (spec.model_dim, spec.head_dim(), spec.mlp_dim, spec.vocab_size);
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        fill(&mut params, layout.tok, v * d, 1.0);
        fill(&mut params, layout.pos, spec.context * d, 1.0);
        for l in 0..spec.layers {
            for h in &layout.heads[l] {
                fill(&mut params, h.wq, d * dh, fan(d));
                fill(&mut params, h.wk, d * dh, fan(d));
                fill(&mut params, h.wv, d * dh, fan(d));
                fill(&mut params, h.wo, dh * d, fan(dh * spec.heads));
            }
            let mp = layout.mlps[l];
            fill(&mut params, mp.w1, d * m, fan(d));
            fill(&mut params, mp.w2, m * d, fan(m));
        }
        fill(&mut params, layout.unembed, d * v, fan(d));
        Self::from_params(spec, params)
    }

    /// Rebuild from a flat parameter vector.
    pub fn from_params(spec: TransformerSpec, params: Vec<S>) -> Result<Self> {
        let graph = build_graph(&ModelSpec::TrainedTransformer(spec.clone()))?;
        let layout = Layout::new(&spec);
        if params.len() != layout.total {
            return Err(Error::Spec(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Spec("non-finite parameter".into()));
        }
        let roles = graph
            .nodes()
            .iter()
            .map(|n| match n.kind {
                NodeKind::Input => Role::Embed,
                NodeKind::AttentionHead => Role::Head(n.layer as usize, n.index as usize),
                NodeKind::Mlp => Role::Mlp(n.layer as usize),
                _ => Role::Unembed,
            })
            .collect();
        Ok(Self { spec, graph, layout, roles, params })
    }

    pub fn spec(&self) -> &TransformerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn p(&self, at: usize, len: usize) -> &[S] {
        &self.params[at..at + len]
    }

    fn seq_len(&self, x: &[S]) -> usize {
        x.len() / self.spec.model_dim
    }

    /// Residual stream before the unembedding, computed directly without
    /// any edge bookkeeping.
    pub fn residual_stream(&self, tokens: &[u32]) -> Result<Vec<S>> {
        let mut x = self.embed(tokens)?;
        for l in 0..self.spec.layers {
            let mut delta = vec![S::zero(); x.len()];
            for h in 0..self.spec.heads {
                for (a, b) in delta.iter_mut().zip(self.head_forward(l, h, &x).out) {
                    *a += b;
                }
            }
            for (a, b) in x.iter_mut().zip(&delta) {
                *a += *b;
            }
            let m = self.mlp_forward(l, &x).out;
            for (a, b) in x.iter_mut().zip(m) {
                *a += b;
            }
        }
        Ok(x)
    }

    fn embed(&self, tokens: &[u32]) -> Result<Vec<S>> {
        let d = self.spec.model_dim;
        if tokens.is_empty() || tokens.len() > self.spec.context {
            return Err(Error::Shape(format!(
                "sequence length {} outside 1..={}",
                tokens.len(),
                self.spec.context
            )));
        }
        let mut x = Vec::with_capacity(tokens.len() * d);
        for (t, &tok) in tokens.iter().enumerate() {
            if tok as usize >= self.spec.vocab_size {
                return Err(Error::Shape(format!("token {tok} outside vocabulary")));
            }
            let e = self.p(self.layout.tok + tok as usize * d, d);
            let p = self.p(self.layout.pos + t * d, d);
            x.extend(e.iter().zip(p).map(|(a, b)| *a + *b));
        }
        Ok(x)
    }

    fn head_forward(&self, l: usize, h: usize, x: &[S]) -> HeadTrace<S> {
        let (d, dh) = (self.spec.model_dim, self.spec.head_dim());
        let t = self.seq_len(x);
        let hp = self.layout.heads[l][h];
        let q = matmul(x, self.p(hp.wq, d * dh), t, d, dh);
        let k = matmul(x, self.p(hp.wk, d * dh), t, d, dh);
        let v = matmul(x, self.p(hp.wv, d * dh), t, d, dh);
        let scale = S::one() / S::lit(dh as f64).sqrt();
        let mut attn = vec![S::zero(); t * t];
        for i in 0..t {
            let scores: Vec<S> = (0..=i)
                .map(|j| {
                    q[i * dh..(i + 1) * dh]
                        .iter()
                        .zip(&k[j * dh..(j + 1) * dh])
                        .fold(S::zero(), |a, (x, y)| a + *x * *y)
                        * scale
                })
                .collect();
            for (j, p) in softmax(&scores).into_iter().enumerate() {
                attn[i * t + j] = p;
            }
        }
        let z = matmul(&attn, &v, t, t, dh);
        let out = matmul(&z, self.p(hp.wo, dh * d), t, dh, d);
        HeadTrace { q, k, v, attn, z, out }
    }

    fn mlp_forward(&self, l: usize, x: &[S]) -> MlpTrace<S> {
        let (d, m) = (self.spec.model_dim, self.spec.mlp_dim);
        let t = self.seq_len(x);
        let mp = self.layout.mlps[l];
        let mut pre = matmul(x, self.p(mp.w1, d * m), t, d, m);
        let b1 = self.p(mp.b1, m);
        for row in pre.chunks_mut(m) {
            for (a, b) in row.iter_mut().zip(b1) {
                *a += *b;
            }
        }
        let act: Vec<S> = pre.iter().map(|&v| if v > S::zero() { v } else { S::zero() }).collect();
        let mut out = matmul(&act, self.p(mp.w2, m * d), t, m, d);
        let b2 = self.p(mp.b2, d);
        for row in out.chunks_mut(d) {
            for (a, b) in row.iter_mut().zip(b2) {
                *a += *b;
            }
        }
        MlpTrace { pre, act, out }
    }

    fn unembed(&self, x: &[S]) -> Vec<S> {
        let (d, v) = (self.spec.model_dim, self.spec.vocab_size);
        let t = self.seq_len(x);
        matmul(&x[(t - 1) * d..t * d], self.p(self.layout.unembed, d * v), 1, d, v)
    }

    /// Gradient of the node's output with respect to its summed input.
    /// Parameter gradients are accumulated into `pg` when given.
    fn node_backward(&self, node: usize, x: &[S], g: &[S], mut pg: Option<&mut [S]>) -> Vec<S> {
        let (d, dh, m, vsz) =
            (self.spec.model_dim, self.spec.head_dim(), self.spec.mlp_dim, self.spec.vocab_size);
        let t = self.seq_len(x);
        match self.roles[node] {
            Role::Embed => unreachable!("embedding has no inputs"),
            Role::Unembed => {
                let u = self.p(self.layout.unembed, d * vsz);
                let mut gx = vec![S::zero(); x.len()];
                let last = &mut gx[(t - 1) * d..t * d];
                for i in 0..d {
                    last[i] = (0..vsz).fold(S::zero(), |a, j| a + u[i * vsz + j] * g[j]);
                }
                if let Some(pg) = pg.as_deref_mut() {
                    let xl = &x[(t - 1) * d..t * d];
                    add_at_b(&mut pg[self.layout.unembed..self.layout.unembed + d * vsz], xl, g, 1, d, vsz);
                }
                gx
            }
            Role::Mlp(l) => {
                let mp = self.layout.mlps[l];
                let tr = self.mlp_forward(l, x);
                let mut dpre = matmul_bt(g, self.p(mp.w2, m * d), t, d, m);
                for (dp, p) in dpre.iter_mut().zip(&tr.pre) {
                    if *p <= S::zero() {
                        *dp = S::zero();
                    }
                }
                if let Some(pg) = pg.as_deref_mut() {
                    add_at_b(&mut pg[mp.w2..mp.w2 + m * d], &tr.act, g, t, m, d);
                    add_at_b(&mut pg[mp.w1..mp.w1 + d * m], x, &dpre, t, d, m);
                    for row in g.chunks(d) {
                        for (a, b) in pg[mp.b2..mp.b2 + d].iter_mut().zip(row) {
                            *a += *b;
                        }
                    }
                    for row in dpre.chunks(m) {
                        for (a, b) in pg[mp.b1..mp.b1 + m].iter_mut().zip(row) {
                            *a += *b;
                        }
                    }
                }
                matmul_bt(&dpre, self.p(mp.w1, d * m), t, m, d)
            }
            Role::Head(l, h) => {
                let hp = self.layout.heads[l][h];
                let tr = self.head_forward(l, h, x);
                let dz = matmul_bt(g, self.p(hp.wo, dh * d), t, d, dh);
                let scale = S::one() / S::lit(dh as f64).sqrt();
                let mut dq = vec![S::zero(); t * dh];
                let mut dk = vec![S::zero(); t * dh];
                let mut dv = vec![S::zero(); t * dh];
                for i in 0..t {
                    let dzi = &dz[i * dh..(i + 1) * dh];
                    let da: Vec<S> = (0..=i)
                        .map(|j| dzi.iter().zip(&tr.v[j * dh..(j + 1) * dh]).fold(S::zero(), |a, (x, y)| a + *x * *y))
                        .collect();
                    let mean = (0..=i).fold(S::zero(), |a, j| a + tr.attn[i * t + j] * da[j]);
                    for j in 0..=i {
                        let a = tr.attn[i * t + j];
                        for c in 0..dh {
                            dv[j * dh + c] += a * dzi[c];
                        }
                        let ds = a * (da[j] - mean) * scale;
                        if ds == S::zero() {
                            continue;
                        }
                        for c in 0..dh {
                            dq[i * dh + c] += ds * tr.k[j * dh + c];
                            dk[j * dh + c] += ds * tr.q[i * dh + c];
                        }
                    }
                }
                if let Some(pg) = pg.as_deref_mut() {
                    add_at_b(&mut pg[hp.wo..hp.wo + dh * d], &tr.z, g, t, dh, d);
                    add_at_b(&mut pg[hp.wq..hp.wq + d * dh], x, &dq, t, d, dh);
                    add_at_b(&mut pg[hp.wk..hp.wk + d * dh], x, &dk, t, d, dh);
                    add_at_b(&mut pg[hp.wv..hp.wv + d * dh], x, &dv, t, d, dh);
                }
                let mut gx = matmul_bt(&dq, self.p(hp.wq, d * dh), t, dh, d);
                for (w, dm) in [(hp.wk, &dk), (hp.wv, &dv)] {
                    for (a, b) in gx.iter_mut().zip(matmul_bt(dm, self.p(w, d * dh), t, dh, d)) {
                        *a += b;
                    }
                }
                gx
            }
        }
    }

    /// Cross-entropy at the last position and its parameter gradient,
    /// accumulated into `pg`. `scale[n]` multiplies node `n`'s output
    /// wherever it is read (dropout).
    fn loss_and_param_grad(&self, tokens: &[u32], label: usize, pg: &mut [S], scale: &[S]) -> Result<(S, bool)> {
        let g = &self.graph;
        let mut ys: Vec<Vec<S>> = Vec::with_capacity(g.num_nodes());
        let mut xs: Vec<Vec<S>> = Vec::with_capacity(g.num_nodes());
        for n in 0..g.num_nodes() {
            if g.in_edges(n).is_empty() {
                ys.push(self.embed(tokens)?);
                xs.push(Vec::new());
                continue;
            }
            let mut x = vec![S::zero(); ys[0].len()];
            for &e in g.in_edges(n) {
                let s = g.edge_ends(e).0;
                for (a, b) in x.iter_mut().zip(&ys[s]) {
                    *a += scale[s] * *b;
                }
            }
            ys.push(self.eval(n, &[&x]));
            xs.push(x);
        }
        let logits = &ys[g.output()];
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Shape("non-finite logits".into()));
        }
        let ls = log_softmax(logits);
        let loss = -ls[label];
        let correct = argmax(logits) == label;
        let mut dlogits = softmax(logits);
        dlogits[label] -= S::one();
        let mut grad_out: Vec<Option<Vec<S>>> = vec![None; g.num_nodes()];
        grad_out[g.output()] = Some(dlogits);
        for r in (0..g.num_nodes()).rev() {
            let Some(go) = grad_out[r].take() else { continue };
            if g.in_edges(r).is_empty() {
                let d = self.spec.model_dim;
                for (t, &tok) in tokens.iter().enumerate() {
                    let row = &go[t * d..(t + 1) * d];
                    let te = self.layout.tok + tok as usize * d;
                    let pe = self.layout.pos + t * d;
                    for c in 0..d {
                        pg[te + c] += row[c];
                        pg[pe + c] += row[c];
                    }
                }
                continue;
            }
            let gx = self.node_backward(r, &xs[r], &go, Some(pg));
            for &e in g.in_edges(r) {
                let s = g.edge_ends(e).0;
                let slot = grad_out[s].get_or_insert_with(|| vec![S::zero(); gx.len()]);
                for (a, b) in slot.iter_mut().zip(&gx) {
                    *a += scale[s] * *b;
                }
            }
        }
        Ok((loss, correct))
    }

    /// Fraction of examples whose argmax equals the label.
    pub fn accuracy(&self, examples: &[(Vec<u32>, usize)]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Task("no examples".into()));
        }
        let mut hits = 0usize;
        for (tokens, label) in examples {
            if argmax(forward(self, tokens)?.logits()) == *label {
                hits += 1;
            }
        }
        Ok(hits as f64 / examples.len() as f64)
    }

    /// Mini-batch Adam on last-position cross-entropy.
    pub fn train(&mut self, examples: &[(Vec<u32>, usize)], cfg: &TrainConfig) -> Result<TrainSummary> {
        if examples.is_empty() {
            return Err(Error::Task("no training examples".into()));
        }
        let mut r = rng::seeded(rng::derive_str(cfg.seed, "train"));
        let n = self.params.len();
        let mut m = vec![0.0f64; n];
        let mut v = vec![0.0f64; n];
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let mut pg = vec![S::zero(); n];
        let mut last_loss = f64::NAN;
        let mut steps_run = 0;
        if !(0.0..1.0).contains(&cfg.component_dropout) {
            return Err(Error::Training("component dropout must lie in [0, 1)".into()));
        }
        let droppable: Vec<bool> = (0..self.graph.num_nodes())
            .map(|n| matches!(self.roles[n], Role::Head(..) | Role::Mlp(_)))
            .collect();
        let keep_scale = S::lit(1.0 / (1.0 - cfg.component_dropout));
        let mut scale = vec![S::one(); droppable.len()];
        for step in 1..=cfg.steps {
            pg.iter_mut().for_each(|x| *x = S::zero());
            let mut loss = 0.0;
            for _ in 0..cfg.batch_size {
                let (tokens, label) = &examples[r.gen_range(0..examples.len())];
                if cfg.component_dropout > 0.0 {
                    for (s, &d) in scale.iter_mut().zip(&droppable) {
                        if d {
                            *s = if r.gen::<f64>() < cfg.component_dropout { S::zero() } else { keep_scale };
                        }
                    }
                }
                loss += self.loss_and_param_grad(tokens, *label, &mut pg, &scale)?.0.as_f64();
            }
            last_loss = loss / cfg.batch_size as f64;
            if !last_loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at step {step}")));
            }
            let lr = cfg.learning_rate * cosine(step, cfg.steps);
            let (c1, c2) = (1.0 - b1.powi(step as i32), 1.0 - b2.powi(step as i32));
            let inv = 1.0 / cfg.batch_size as f64;
            for i in 0..n {
                let gi = pg[i].as_f64() * inv;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let upd = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                let decay = lr * cfg.weight_decay * self.params[i].as_f64();
                self.params[i] -= S::lit(upd + decay);
            }
            steps_run = step;
            if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
                let probe = &examples[..examples.len().min(cfg.eval_examples)];
                if self.accuracy(probe)? >= cfg.early_stop_accuracy {
                    break;
                }
            }
        }
        Ok(TrainSummary { steps: steps_run, final_loss: last_loss, accuracy: f64::NAN })
    }
}

fn cosine(step: usize, total: usize) -> f64 {
    let frac = step as f64 / total.max(1) as f64;
    0.1 + 0.9 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

struct HeadTrace<S> {
    q: Vec<S>,
    k: Vec<S>,
    v: Vec<S>,
    attn: Vec<S>,
    z: Vec<S>,
    out: Vec<S>,
}

struct MlpTrace<S> {
    pre: Vec<S>,
    act: Vec<S>,
    out: Vec<S>,
}

impl<S: Scalar> EdgeModel<S> for Transformer<S> {
    fn graph(&self) -> &ComputationalGraph {
        &self.graph
    }

    fn source(&self, _node: usize, input: &[u32]) -> Result<Vec<S>> {
        self.embed(input)
    }

    fn eval(&self, node: usize, ins: &[&[S]]) -> Vec<S> {
        let x = sum_inputs(ins);
        match self.roles[node] {
            Role::Embed => unreachable!("embedding has no inputs"),
            Role::Head(l, h) => self.head_forward(l, h, &x).out,
            Role::Mlp(l) => self.mlp_forward(l, &x).out,
            Role::Unembed => self.unembed(&x),
        }
    }

    fn backprop(&self, node: usize, ins: &[&[S]], grad_out: &[S], _dir: Option<&[i8]>) -> Vec<Vec<S>> {
        let x = sum_inputs(ins);
        let gx = self.node_backward(node, &x, grad_out, None);
        vec![gx; ins.len()]
    }
}

// ---------------------------------------------------------------------------
// Training entry point
// ---------------------------------------------------------------------------

/// Optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Required accuracy on the training task.
    pub accuracy_floor: f64,
    /// Stop early once the probe accuracy reaches this value.
    pub early_stop_accuracy: f64,
    pub eval_every: usize,
    pub eval_examples: usize,
    /// Probability of zeroing each head and MLP output per example.
    pub component_dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 16,
            learning_rate: 3e-3,
            weight_decay: 0.0,
            accuracy_floor: 0.95,
            early_stop_accuracy: 0.995,
            eval_every: 100,
            eval_examples: 512,
            component_dropout: 0.0,
            seed: 0,
        }
    }
}

/// Outcome of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub final_loss: f64,
    pub accuracy: f64,
}

/// Every clean and corrupted input with its label.
pub fn labeled_examples(task: &TaskDataset) -> Vec<(Vec<u32>, usize)> {
    let mut out = Vec::with_capacity(task.len() * 2);
    for p in task.pairs() {
        out.push((p.clean.clone(), p.clean_label));
        if let Some(c) = &p.corrupted {
            out.push((c.clone(), p.corrupted_label));
        }
    }
    out
}

/// Train a transformer on `task` and require the configured accuracy.
pub fn make_trained_transformer<S: Scalar>(
    spec: &ModelSpec,
    task: &TaskDataset,
    cfg: &TrainConfig,
) -> Result<(Transformer<S>, TrainSummary)> {
    let ModelSpec::TrainedTransformer(ts) = spec else {
        return Err(Error::Spec(format!("{} is not trainable", spec.family())));
    };
    if ts.vocab_size < 2 {
        return Err(Error::Task("degenerate task: vocabulary needs at least 2 tokens".into()));
    }
    let mut model = Transformer::new(ts.clone())?;
    let examples = labeled_examples(task);
    let mut summary = model.train(&examples, cfg)?;
    summary.accuracy = model.accuracy(&examples)?;
    if summary.accuracy < cfg.accuracy_floor {
        return Err(Error::Training(format!(
            "accuracy {:.3} below floor {:.3} after {} steps",
            summary.accuracy, cfg.accuracy_floor, summary.steps
        )));
    }
    Ok((model, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::OutputLoss;
    use crate::model::engine::{edge_gradients, loss_with_edge_override};

    fn tiny() -> TransformerSpec {
        TransformerSpec { layers: 2, heads: 2, model_dim: 8, mlp_dim: 8, vocab_size: 5, context: 6, seed: 1 }
    }

    #[test]
    fn edge_decomposition_matches_plain_forward() {
        let t: Transformer<f64> = Transformer::new(tiny()).unwrap();
        let tokens = [1, 3, 0, 4, 2];
        let cache = forward(&t, &tokens).unwrap();
        let g = t.graph();
        let out_ins: Vec<&[f64]> = g.in_edges(g.output()).iter().map(|&e| cache.edge_value(e)).collect();
        let resid = t.residual_stream(&tokens).unwrap();
        let summed = sum_inputs(&out_ins);
        for (a, b) in summed.iter().zip(&resid) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_errors() {
        let t: Transformer<f64> = Transformer::new(tiny()).unwrap();
        assert!(forward(&t, &[9]).is_err());
        assert!(forward(&t, &[0; 7]).is_err());
        assert!(forward(&t, &[]).is_err());
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let spec = tiny();
        let t: Transformer<f64> = Transformer::new(spec.clone()).unwrap();
        let tokens = [1, 3, 0, 4, 2];
        let mut scale = vec![1.0; t.graph().num_nodes()];
        scale[1] = 0.0;
        scale[3] = 2.0;
        let mut pg = vec![0.0; t.num_params()];
        t.loss_and_param_grad(&tokens, 2, &mut pg, &scale).unwrap();
        let loss_at = |params: Vec<f64>| {
            let m = Transformer::from_params(spec.clone(), params).unwrap();
            let mut scratch = vec![0.0; m.num_params()];
            m.loss_and_param_grad(&tokens, 2, &mut scratch, &scale).unwrap().0
        };
        let ones = vec![1.0; t.graph().num_nodes()];
        let mut scratch = vec![0.0; t.num_params()];
        let plain = t.loss_and_param_grad(&tokens, 2, &mut scratch, &ones).unwrap().0;
        assert!((plain + log_softmax(forward(&t, &tokens).unwrap().logits())[2]).abs() < 1e-12);
        let mut r = rng::seeded(5);
        for _ in 0..40 {
            let i = r.gen_range(0..t.num_params());
            let h = 1e-5;
            let mut up = t.params().to_vec();
            let mut dn = t.params().to_vec();
            up[i] += h;
            dn[i] -= h;
            let fd = (loss_at(up) - loss_at(dn)) / (2.0 * h);
            assert!((fd - pg[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", pg[i]);
        }
    }

    #[test]
    fn edge_gradient_matches_finite_differences() {
        let t: Transformer<f64> = Transformer::new(tiny()).unwrap();
        let cache = forward(&t, &[1, 3, 0, 4, 2]).unwrap();
        let loss = OutputLoss::Nll { label: 2 };
        let grads = edge_gradients(&t, &cache, &loss, None).unwrap();
        let mut r = rng::seeded(9);
        for e in 0..t.graph().num_edges() {
            let base = cache.edge_value(e).to_vec();
            let c = r.gen_range(0..base.len());
            let h = 1e-5;
            let mut up = base.clone();
            let mut dn = base.clone();
            up[c] += h;
            dn[c] -= h;
            let fd = (loss_with_edge_override(&t, &cache, e, up, &loss).unwrap()
                - loss_with_edge_override(&t, &cache, e, dn, &loss).unwrap())
                / (2.0 * h);
            let an = grads.grad(e)[c];
            assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "edge {e}: {fd} vs {an}");
        }
    }

    #[test]
    fn vocab_of_one_is_degenerate() {
        let mut s = tiny();
        s.vocab_size = 1;
        let task = TaskDataset::new(vec![crate::model::TaskPair {
            clean: vec![0],
            corrupted: None,
            clean_label: 0,
            corrupted_label: 1,
        }])
        .unwrap();
        let err = make_trained_transformer::<f64>(&ModelSpec::TrainedTransformer(s), &task, &TrainConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("degenerate task"));
    }
}
