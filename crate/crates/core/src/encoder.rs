//! Hard-assignment hierarchical encoder.
//!
//! Each layer scores nodes against `k` clusters, hardens the scores to a
//! one-hot assignment, runs a separate small GNN inside every induced
//! subgraph, and pools each subgraph to one node of the next, coarser graph.
//! Message passing never crosses a cluster boundary within a layer.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::normalize_adjacency_var;
use crate::matrix::Matrix;
use crate::nn::{maybe_dropout, propagate, Dropout};
use crate::params::{ParamId, ParamStore};
use std::sync::Arc;

/// Trainable tensors of one encoder layer.
///
/// `assign` is the assignment GNN weight at the first layer and the feature
/// projection at deeper layers. `w` and `d` hold one entry per cluster, or a
/// single shared entry.
#[derive(Clone, Debug)]
pub struct EncoderLayerParams {
    pub assign: ParamId,
    pub w: Vec<ParamId>,
    pub d: Vec<ParamId>,
    /// Per-layer weight producing subgraph log-variances, when learned.
    pub logvar: Option<ParamId>,
}

impl EncoderLayerParams {
    pub fn w(&self, cluster: usize) -> ParamId {
        if self.w.len() == 1 {
            self.w[0]
        } else {
            self.w[cluster]
        }
    }

    pub fn d(&self, cluster: usize) -> ParamId {
        if self.d.len() == 1 {
            self.d[0]
        } else {
            self.d[cluster]
        }
    }
}

/// One-hot matrix selecting each row's maximum, lowest column on ties.
pub fn harden_assignment(soft: &Matrix) -> Matrix {
    let mut hard = Matrix::zeros(soft.rows(), soft.cols());
    for r in 0..soft.rows() {
        let row = soft.row(r);
        let mut best = 0;
        for (c, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = c;
            }
        }
        if !row.is_empty() {
            hard.set(r, best, 1.0);
        }
    }
    hard
}

/// Sorted member lists per column of a one-hot assignment.
pub fn cluster_members(hard: &Matrix) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); hard.cols()];
    for r in 0..hard.rows() {
        if let Some(c) = hard.row(r).iter().position(|&v| v == 1.0) {
            members[c].push(r);
        }
    }
    members
}

/// Induced subgraph of one cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphView {
    pub nodes: Vec<usize>,
    pub x: Matrix,
    pub adj: Matrix,
}

/// Splits a graph into the induced subgraphs of a hard assignment. Edges
/// between clusters appear in no view.
pub fn extract_subgraphs(x: &Matrix, adj: &Matrix, hard: &Matrix) -> Vec<SubgraphView> {
    cluster_members(hard)
        .into_iter()
        .map(|nodes| SubgraphView {
            x: x.select_rows(&nodes),
            adj: adj.submatrix(&nodes),
            nodes,
        })
        .collect()
}

/// Row-stochastic soft assignment to `k` clusters. Layer 0 propagates over
/// the graph first; deeper layers project features directly.
pub fn compute_soft_assignment(
    tape: &mut Tape,
    store: &ParamStore,
    params: &EncoderLayerParams,
    layer: usize,
    x: Var,
    a_norm: Var,
    k: usize,
) -> Result<Var> {
    if k == 0 {
        return Err(Error::invalid("cluster count must be positive"));
    }
    let w = tape.param(store, params.assign);
    let w = tape.leading_cols(w, k)?;
    let logits = if layer == 0 {
        propagate(tape, a_norm, x, w)?
    } else {
        tape.matmul(x, w)?
    };
    Ok(tape.row_softmax(logits))
}

/// Outputs of [`coarsen_subgraph`].
#[derive(Clone, Copy, Debug)]
pub struct Coarsened {
    /// Node embeddings of the subgraph, `|V_j| x d_out`.
    pub z: Var,
    /// Pooling weights over the subgraph's nodes, `|V_j| x 1`.
    pub s: Var,
    /// Log-variances matching `z`, when learned.
    pub logvar: Option<Var>,
}

/// Embeds one subgraph with its own weights and computes the softmax pooling
/// weights over its nodes.
pub fn coarsen_subgraph(
    tape: &mut Tape,
    store: &ParamStore,
    params: &EncoderLayerParams,
    cluster: usize,
    x_j: Var,
    adj_j: Var,
) -> Result<Coarsened> {
    let a_norm = normalize_adjacency_var(tape, adj_j)?;
    let ax = tape.matmul(a_norm, x_j)?;
    let w = tape.param(store, params.w(cluster));
    let z = tape.matmul(ax, w)?;
    let d = tape.param(store, params.d(cluster));
    let logits = tape.matmul(ax, d)?;
    let s = tape.col_softmax(logits);
    let logvar = match params.logvar {
        Some(id) => {
            let v = tape.param(store, id);
            Some(tape.matmul(ax, v)?)
        }
        None => None,
    };
    Ok(Coarsened { z, s, logvar })
}

/// Pools node embeddings into cluster rows and coarsens the adjacency.
///
/// `z` and `s` are row-aligned with the input graph. Row `j` of the output
/// features is `sum_i S[i, j] * s[i] * z[i, :]`; the output adjacency is
/// `SᵀAS` with its diagonal cleared.
pub fn assemble_coarsened_graph(tape: &mut Tape, z: Var, s: Var, assignment: Var, adj: Var) -> Result<(Var, Var)> {
    let weighted = tape.scale_rows(z, s)?;
    let st = tape.transpose(assignment);
    let x_next = tape.matmul(st, weighted)?;
    let sa = tape.matmul(st, adj)?;
    let sas = tape.matmul(sa, assignment)?;
    Ok((x_next, tape.zero_diagonal(sas)))
}

/// Everything one encoder layer produced.
#[derive(Clone, Debug)]
pub struct EncoderLayerCache {
    pub x_in: Var,
    pub adj_in: Var,
    pub soft: Var,
    pub hard: Matrix,
    pub clusters: Vec<Vec<usize>>,
    /// Per cluster; `None` for empty clusters and for the soft variant.
    pub coarsened: Vec<Option<Coarsened>>,
    pub x_out: Var,
    pub adj_out: Var,
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    pub layers: Vec<EncoderLayerCache>,
}

impl EncoderCache {
    pub fn output(&self) -> (Var, Var) {
        let last = self.layers.last().expect("encoder has layers");
        (last.x_out, last.adj_out)
    }
}

/// How assignments and pooling are realised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderMode {
    /// Pool with the soft assignment and one shared GNN instead of hard
    /// clusters and per-subgraph GNNs.
    pub soft_pooling: bool,
    /// Let gradients reach the soft assignment through the hardening step.
    pub straight_through: bool,
}

/// Cluster members, per-cluster outputs, coarsened features and adjacency.
pub type HardLayerOutput = (Vec<Vec<usize>>, Vec<Option<Coarsened>>, Var, Var);

/// Runs one hard-assignment layer for a given assignment. The soft matrix,
/// if given, only serves as the straight-through gradient path.
pub fn hard_layer(
    tape: &mut Tape,
    store: &ParamStore,
    params: &EncoderLayerParams,
    x: Var,
    adj: Var,
    hard: &Matrix,
    soft_for_gradient: Option<Var>,
) -> Result<HardLayerOutput> {
    let n = tape.shape(x).0;
    let clusters = cluster_members(hard);
    let mut coarsened = Vec::with_capacity(clusters.len());
    let mut z_parts = Vec::new();
    let mut s_parts = Vec::new();
    for (j, nodes) in clusters.iter().enumerate() {
        if nodes.is_empty() {
            coarsened.push(None);
            continue;
        }
        let idx: Arc<[usize]> = Arc::from(nodes.as_slice());
        let x_j = tape.gather_rows(x, Arc::clone(&idx));
        let adj_j = tape.submatrix(adj, Arc::clone(&idx));
        let c = coarsen_subgraph(tape, store, params, j, x_j, adj_j)?;
        z_parts.push((c.z, Arc::clone(&idx)));
        s_parts.push((c.s, idx));
        coarsened.push(Some(c));
    }
    let d_out = store.get(params.w(0)).cols();
    let z = tape.scatter_rows(n, d_out, z_parts)?;
    let s = tape.scatter_rows(n, 1, s_parts)?;
    let assignment = match soft_for_gradient {
        Some(soft) => tape.straight_through(hard.clone(), soft)?,
        None => tape.constant(hard.clone()),
    };
    let (x_next, adj_next) = assemble_coarsened_graph(tape, z, s, assignment, adj)?;
    Ok((clusters, coarsened, x_next, adj_next))
}

/// Runs all encoder layers. `targets[l]` is the cluster count of layer `l`
/// before clamping to the current node count.
#[allow(clippy::too_many_arguments)]
pub fn encode(
    tape: &mut Tape,
    store: &ParamStore,
    layers: &[EncoderLayerParams],
    targets: &[usize],
    mode: EncoderMode,
    x: Var,
    adj: Var,
    dropout: &mut Option<Dropout<'_>>,
) -> Result<EncoderCache> {
    if layers.is_empty() || layers.len() != targets.len() {
        return Err(Error::Config(format!(
            "{} encoder layers for {} targets",
            layers.len(),
            targets.len()
        )));
    }
    let mut caches = Vec::with_capacity(layers.len());
    let (mut x, mut adj) = (x, adj);
    for (l, params) in layers.iter().enumerate() {
        let n = tape.shape(x).0;
        let k = targets[l].min(n);
        let x_drop = maybe_dropout(tape, x, dropout)?;
        let a_norm = normalize_adjacency_var(tape, adj)?;
        let soft = compute_soft_assignment(tape, store, params, l, x_drop, a_norm, k)?;
        let hard = harden_assignment(tape.value(soft));
        let cache = if mode.soft_pooling {
            let w = tape.param(store, params.w[0]);
            let z = propagate(tape, a_norm, x_drop, w)?;
            let st = tape.transpose(soft);
            let x_next = tape.matmul(st, z)?;
            let sa = tape.matmul(st, adj)?;
            let sas = tape.matmul(sa, soft)?;
            let adj_next = tape.zero_diagonal(sas);
            EncoderLayerCache {
                x_in: x,
                adj_in: adj,
                soft,
                clusters: cluster_members(&hard),
                hard,
                coarsened: Vec::new(),
                x_out: x_next,
                adj_out: adj_next,
            }
        } else {
            let st = mode.straight_through.then_some(soft);
            let (clusters, coarsened, x_next, adj_next) = hard_layer(tape, store, params, x_drop, adj, &hard, st)?;
            EncoderLayerCache {
                x_in: x,
                adj_in: adj,
                soft,
                hard,
                clusters,
                coarsened,
                x_out: x_next,
                adj_out: adj_next,
            }
        };
        x = cache.x_out;
        adj = cache.adj_out;
        caches.push(cache);
    }
    Ok(EncoderCache { layers: caches })
}
