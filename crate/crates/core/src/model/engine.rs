// SPDX-License-Identifier: MIT OR Apache-2.0

//! Edge-level execution: clean forward passes, patched passes and
//! reverse-mode edge gradients.
//!
//! Every model exposes its graph plus a per-node evaluation rule through
//! [`EdgeModel`]. The functions here drive those rules in topological order,
//! so patching and differentiation are written once for every model family.
//!
//! # Patching semantics
//!
//! A patched pass starts from a *base* cache and a *donor* cache. An edge in
//! the retained set carries the sender's value as seen in the base run; any
//! other edge carries the donor's value. A receiver is recomputed only when
//! at least one of its in-edges differs from the base cache; otherwise it
//! keeps its base value. For caches produced by a forward pass this is the
//! same as recomputing everything. For ablation caches (zero or noise),
//! which are not the result of any input, it keeps untouched components at
//! their ablated values.

use crate::error::{Error, Result};
use crate::graph::{Circuit, ComputationalGraph, EdgeId, GraphId};
use crate::metric::OutputLoss;
use crate::scalar::Scalar;

/// A model whose computation is expressed over a [`ComputationalGraph`].
pub trait EdgeModel<S: Scalar>: Send + Sync {
    fn graph(&self) -> &ComputationalGraph;

    /// Value emitted by input node `node` for `input`.
    fn source(&self, node: usize, input: &[u32]) -> Result<Vec<S>>;

    /// Output of a non-input node given its in-edge values, in the order of
    /// [`ComputationalGraph::in_edges`]. The output node returns logits.
    fn eval(&self, node: usize, ins: &[&[S]]) -> Vec<S>;

    /// Gradient of the node output with respect to each in-edge value.
    ///
    /// `dir` optionally gives, per in-edge, the sign of the perturbation the
    /// caller is linearizing for; piecewise-linear nodes use it to pick the
    /// one-sided derivative at a kink.
    fn backprop(&self, node: usize, ins: &[&[S]], grad_out: &[S], dir: Option<&[i8]>) -> Vec<Vec<S>>;
}

// ---------------------------------------------------------------------------
// ActivationCache
// ---------------------------------------------------------------------------

/// Per-edge and per-node values for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationCache<S> {
    graph: GraphId,
    edge_values: Vec<Vec<S>>,
    node_values: Vec<Vec<S>>,
    logits: Vec<S>,
    live: bool,
}

impl<S: Scalar> ActivationCache<S> {
    /// Assemble an ablation cache from explicit edge values.
    ///
    /// Node values are recomputed from the given in-edge values so that
    /// every receiver's value is the combination of its in-edges.
    pub fn from_edge_values<M: EdgeModel<S> + ?Sized>(model: &M, edge_values: Vec<Vec<S>>) -> Result<Self> {
        let g = model.graph();
        if edge_values.len() != g.num_edges() {
            return Err(Error::Shape(format!(
                "{} edge values for {} edges",
                edge_values.len(),
                g.num_edges()
            )));
        }
        let mut node_values = vec![Vec::new(); g.num_nodes()];
        for n in 0..g.num_nodes() {
            let ins: Vec<&[S]> = g.in_edges(n).iter().map(|&e| edge_values[e].as_slice()).collect();
            if !ins.is_empty() {
                node_values[n] = model.eval(n, &ins);
            } else if let Some(&e) = g.out_edges(n).first() {
                node_values[n] = vec![S::zero(); edge_values[e].len()];
            }
        }
        let logits = node_values[g.output()].clone();
        Ok(Self { graph: g.id(), edge_values, node_values, logits, live: false })
    }

    pub fn graph_id(&self) -> GraphId {
        self.graph
    }

    pub fn edge_value(&self, edge: usize) -> &[S] {
        &self.edge_values[edge]
    }

    pub fn edge_values(&self) -> &[Vec<S>] {
        &self.edge_values
    }

    pub fn node_value(&self, node: usize) -> &[S] {
        &self.node_values[node]
    }

    pub fn logits(&self) -> &[S] {
        &self.logits
    }

    /// True when the cache came from a forward pass on an actual input.
    pub fn is_live(&self) -> bool {
        self.live
    }

    /// Lookup by edge id.
    pub fn value_of(&self, graph: &ComputationalGraph, edge: &EdgeId) -> Result<&[S]> {
        Ok(&self.edge_values[graph.require_edge(edge)?])
    }

    /// Same cache with one edge's value replaced.
    pub fn with_edge_value(&self, edge: usize, value: Vec<S>) -> Self {
        let mut c = self.clone();
        c.edge_values[edge] = value;
        c.live = false;
        c
    }
}

/// `dLoss / d(edge value)` for every edge.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeGradients<S> {
    graph: GraphId,
    grads: Vec<Vec<S>>,
}

impl<S: Scalar> EdgeGradients<S> {
    pub fn graph_id(&self) -> GraphId {
        self.graph
    }

    pub fn grad(&self, edge: usize) -> &[S] {
        &self.grads[edge]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn check_cache<S>(g: &ComputationalGraph, c: &ActivationCache<S>) -> Result<()> {
    if c.graph != g.id() || c.edge_values.len() != g.num_edges() {
        return Err(Error::GraphMismatch("cache was produced by a different graph".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

/// Clean forward pass with full edge capture.
pub fn forward<S: Scalar, M: EdgeModel<S> + ?Sized>(model: &M, input: &[u32]) -> Result<ActivationCache<S>> {
    let g = model.graph();
    let mut node_values: Vec<Vec<S>> = Vec::with_capacity(g.num_nodes());
    for n in 0..g.num_nodes() {
        let in_edges = g.in_edges(n);
        let v = if in_edges.is_empty() {
            model.source(n, input)?
        } else {
            let ins: Vec<&[S]> =
                in_edges.iter().map(|&e| node_values[g.edge_ends(e).0].as_slice()).collect();
            model.eval(n, &ins)
        };
        node_values.push(v);
    }
    let edge_values = (0..g.num_edges()).map(|e| node_values[g.edge_ends(e).0].clone()).collect();
    let logits = node_values[g.output()].clone();
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Shape("non-finite logits".into()));
    }
    Ok(ActivationCache { graph: g.id(), edge_values, node_values, logits, live: true })
}

/// Per-edge choice between the base-side and donor-side value.
#[derive(Clone, Copy)]
enum Mix<'a, S> {
    Retained(&'a [bool]),
    Weights(&'a [S]),
}

impl<S: Scalar> Mix<'_, S> {
    fn weight(&self, e: usize) -> S {
        match self {
            Mix::Retained(r) => {
                if r[e] {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Mix::Weights(w) => w[e],
        }
    }
}

/// Values recorded by a mixed pass for the backward sweep.
struct Tape<S> {
    /// In-edge values fed to each node.
    ins: Vec<Vec<Vec<S>>>,
    /// Base-side value of each edge (live sender output or base cache).
    src: Vec<Vec<S>>,
}

fn mixed_pass<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    base: &ActivationCache<S>,
    donor: &ActivationCache<S>,
    mix: Mix<'_, S>,
    record: bool,
) -> (Vec<S>, Option<Tape<S>>) {
    let g = model.graph();
    let n_nodes = g.num_nodes();
    let mut dirty = vec![false; n_nodes];
    let mut out: Vec<Vec<S>> = vec![Vec::new(); n_nodes];
    let mut tape = record.then(|| Tape {
        ins: vec![Vec::new(); n_nodes],
        src: vec![Vec::new(); g.num_edges()],
    });
    for r in 0..n_nodes {
        let in_edges = g.in_edges(r);
        if in_edges.is_empty() {
            continue;
        }
        let mut changed = false;
        let mut vals: Vec<std::borrow::Cow<'_, [S]>> = Vec::with_capacity(in_edges.len());
        for &e in in_edges {
            let s = g.edge_ends(e).0;
            let src: &[S] = if dirty[s] { &out[s] } else { &base.edge_values[e] };
            let w = mix.weight(e);
            let donor_v = &donor.edge_values[e];
            let v: std::borrow::Cow<'_, [S]> = if w == S::one() {
                changed |= dirty[s];
                std::borrow::Cow::Borrowed(src)
            } else if w == S::zero() {
                changed |= donor_v != &base.edge_values[e];
                std::borrow::Cow::Borrowed(donor_v.as_slice())
            } else {
                let mixed: Vec<S> =
                    src.iter().zip(donor_v).map(|(a, b)| w * *a + (S::one() - w) * *b).collect();
                changed |= mixed != base.edge_values[e];
                std::borrow::Cow::Owned(mixed)
            };
            if let Some(t) = tape.as_mut() {
                t.src[e] = src.to_vec();
            }
            vals.push(v);
        }
        let ins: Vec<&[S]> = vals.iter().map(|v| v.as_ref()).collect();
        let value = changed.then(|| model.eval(r, &ins));
        if let Some(t) = tape.as_mut() {
            t.ins[r] = ins.iter().map(|v| v.to_vec()).collect();
        }
        drop(ins);
        drop(vals);
        if let Some(v) = value {
            dirty[r] = true;
            out[r] = v;
        }
    }
    let o = g.output();
    let logits = if dirty[o] { out[o].clone() } else { base.logits.clone() };
    (logits, tape)
}

/// Output logits when `retained` edges carry base-side values and all other
/// edges carry donor values.
///
/// Noising runs use `(base = clean, donor = corrupted)`; denoising runs use
/// `(base = corrupted, donor = clean)`.
pub fn forward_patched<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    base: &ActivationCache<S>,
    donor: &ActivationCache<S>,
    retained: &Circuit,
) -> Result<Vec<S>> {
    let g = model.graph();
    check_cache(g, base)?;
    check_cache(g, donor)?;
    g.check(retained)?;
    Ok(mixed_pass(model, base, donor, Mix::Retained(retained.mask()), false).0)
}

/// Patched pass with per-edge interpolation weights in `[0, 1]`.
///
/// Weight 1 keeps the base-side value, weight 0 takes the donor value.
pub fn forward_weighted<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    base: &ActivationCache<S>,
    donor: &ActivationCache<S>,
    weights: &[S],
) -> Result<Vec<S>> {
    let g = model.graph();
    check_cache(g, base)?;
    check_cache(g, donor)?;
    if weights.len() != g.num_edges() {
        return Err(Error::Shape("one weight per edge required".into()));
    }
    Ok(mixed_pass(model, base, donor, Mix::Weights(weights), false).0)
}

/// Loss of a weighted patched pass and its gradient with respect to each
/// edge weight.
///
/// The backward sweep linearizes every receiver as a live function of its
/// inputs, including receivers the forward pass left at their base value.
pub fn weighted_loss_and_grad<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    base: &ActivationCache<S>,
    donor: &ActivationCache<S>,
    weights: &[S],
    loss: &OutputLoss<S>,
) -> Result<(S, Vec<S>)> {
    let g = model.graph();
    check_cache(g, base)?;
    check_cache(g, donor)?;
    if weights.len() != g.num_edges() {
        return Err(Error::Shape("one weight per edge required".into()));
    }
    let (logits, tape) = mixed_pass(model, base, donor, Mix::Weights(weights), true);
    let tape = tape.expect("recorded");
    let (value, dlogits) = loss.value_and_grad(&logits)?;
    let mut grad_out: Vec<Option<Vec<S>>> = vec![None; g.num_nodes()];
    grad_out[g.output()] = Some(dlogits);
    let mut grad_w = vec![S::zero(); g.num_edges()];
    for r in (0..g.num_nodes()).rev() {
        let in_edges = g.in_edges(r);
        if in_edges.is_empty() {
            continue;
        }
        let Some(go) = grad_out[r].take() else { continue };
        let ins: Vec<&[S]> = tape.ins[r].iter().map(Vec::as_slice).collect();
        let grads = model.backprop(r, &ins, &go, None);
        for (k, &e) in in_edges.iter().enumerate() {
            let gv = &grads[k];
            let src = &tape.src[e];
            let donor_v = &donor.edge_values[e];
            grad_w[e] = gv
                .iter()
                .zip(src.iter().zip(donor_v))
                .map(|(gg, (a, b))| *gg * (*a - *b))
                .fold(S::zero(), |acc, x| acc + x);
            let s = g.edge_ends(e).0;
            if !g.in_edges(s).is_empty() {
                let w = weights[e];
                let slot = grad_out[s].get_or_insert_with(|| vec![S::zero(); gv.len()]);
                for (acc, x) in slot.iter_mut().zip(gv) {
                    *acc += w * *x;
                }
            }
        }
    }
    Ok((value, grad_w))
}

// ---------------------------------------------------------------------------
// Edge gradients
// ---------------------------------------------------------------------------

/// `dLoss / d(edge value)` at the point described by `cache`, for every edge,
/// in one backward sweep.
///
/// When `direction` is given, each edge is linearized along
/// `direction - cache`; this only matters at kinks of piecewise-linear nodes.
pub fn edge_gradients<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    cache: &ActivationCache<S>,
    loss: &OutputLoss<S>,
    direction: Option<&ActivationCache<S>>,
) -> Result<EdgeGradients<S>> {
    let g = model.graph();
    check_cache(g, cache)?;
    if let Some(d) = direction {
        check_cache(g, d)?;
    }
    let ins_of = |r: usize| -> Vec<&[S]> {
        g.in_edges(r).iter().map(|&e| cache.edge_values[e].as_slice()).collect()
    };
    let o = g.output();
    let logits = model.eval(o, &ins_of(o));
    let (_, dlogits) = loss.value_and_grad(&logits)?;
    let mut grad_out: Vec<Option<Vec<S>>> = vec![None; g.num_nodes()];
    grad_out[o] = Some(dlogits);
    let mut grads = vec![Vec::new(); g.num_edges()];
    for r in (0..g.num_nodes()).rev() {
        let in_edges = g.in_edges(r);
        if in_edges.is_empty() {
            continue;
        }
        let go = match grad_out[r].take() {
            Some(v) => v,
            None => vec![S::zero(); model.eval(r, &ins_of(r)).len()],
        };
        let dir: Option<Vec<i8>> = direction.map(|d| {
            in_edges
                .iter()
                .map(|&e| {
                    let delta = d.edge_values[e]
                        .iter()
                        .zip(&cache.edge_values[e])
                        .fold(S::zero(), |acc, (a, b)| acc + (*a - *b));
                    if delta > S::zero() {
                        1
                    } else if delta < S::zero() {
                        -1
                    } else {
                        0
                    }
                })
                .collect()
        });
        let per_edge = model.backprop(r, &ins_of(r), &go, dir.as_deref());
        for (k, &e) in in_edges.iter().enumerate() {
            let s = g.edge_ends(e).0;
            if !g.in_edges(s).is_empty() {
                let slot = grad_out[s].get_or_insert_with(|| vec![S::zero(); per_edge[k].len()]);
                for (acc, x) in slot.iter_mut().zip(&per_edge[k]) {
                    *acc += *x;
                }
            }
            grads[e] = per_edge[k].clone();
        }
    }
    if grads.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Shape("non-finite edge gradient".into()));
    }
    Ok(EdgeGradients { graph: g.id(), grads })
}

/// Loss after overriding a single edge value and recomputing downstream.
///
/// This is the evaluation primitive behind finite-difference checks.
pub fn loss_with_edge_override<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    cache: &ActivationCache<S>,
    edge: usize,
    value: Vec<S>,
    loss: &OutputLoss<S>,
) -> Result<S> {
    let donor = cache.with_edge_value(edge, value);
    let mut retained = model.graph().full_circuit();
    retained.remove(edge);
    let logits = forward_patched(model, cache, &donor, &retained)?;
    Ok(loss.value_and_grad(&logits)?.0)
}
