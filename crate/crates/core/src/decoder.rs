//! Soft-assignment decoder that expands a coarse graph back to full size.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::normalize_adjacency_var;
use crate::nn::{maybe_dropout, propagate, Dropout};
use crate::params::{ParamId, ParamStore};

/// The two independent GNN blocks of one decoder layer.
#[derive(Clone, Copy, Debug)]
pub struct DecoderLayerParams {
    /// Re-assignment block, `d_in x width`.
    pub re: ParamId,
    /// Embedding block, `d_in x d_out`.
    pub emb: ParamId,
}

/// `softmax(Â X W_re)` restricted to the first `m` output nodes.
pub fn compute_reassignment(
    tape: &mut Tape,
    store: &ParamStore,
    params: &DecoderLayerParams,
    x: Var,
    a_norm: Var,
    m: usize,
) -> Result<Var> {
    let w = tape.param(store, params.re);
    let w = tape.leading_cols(w, m)?;
    let logits = propagate(tape, a_norm, x, w)?;
    Ok(tape.row_softmax(logits))
}

/// `relu(Â X W_emb)`.
pub fn compute_embedding(
    tape: &mut Tape,
    store: &ParamStore,
    params: &DecoderLayerParams,
    x: Var,
    a_norm: Var,
) -> Result<Var> {
    let w = tape.param(store, params.emb);
    let h = propagate(tape, a_norm, x, w)?;
    Ok(tape.relu(h))
}

/// `(S̄ᵀ Z̄, S̄ᵀ A S̄)`.
pub fn expand_layer(tape: &mut Tape, s_bar: Var, z_bar: Var, adj: Var) -> Result<(Var, Var)> {
    let st = tape.transpose(s_bar);
    let x = tape.matmul(st, z_bar)?;
    let sa = tape.matmul(st, adj)?;
    let a = tape.matmul(sa, s_bar)?;
    Ok((x, a))
}

#[derive(Clone, Debug)]
pub struct DecoderLayerCache {
    pub x_in: Var,
    pub adj_in: Var,
    pub s_bar: Var,
    pub z_bar: Var,
    pub x_out: Var,
    pub adj_out: Var,
}

#[derive(Clone, Debug)]
pub struct DecoderCache {
    pub layers: Vec<DecoderLayerCache>,
}

impl DecoderCache {
    /// Final reconstructed features and adjacency.
    pub fn output(&self) -> (Var, Var) {
        let last = self.layers.last().expect("decoder has layers");
        (last.x_out, last.adj_out)
    }
}

/// Expands `(x, adj)` through every layer; layer `i` produces `targets[i]`
/// nodes.
pub fn decode(
    tape: &mut Tape,
    store: &ParamStore,
    layers: &[DecoderLayerParams],
    targets: &[usize],
    x: Var,
    adj: Var,
    dropout: &mut Option<Dropout<'_>>,
) -> Result<DecoderCache> {
    if layers.is_empty() || layers.len() != targets.len() {
        return Err(Error::Config(format!(
            "{} decoder layers for {} targets",
            layers.len(),
            targets.len()
        )));
    }
    let mut caches = Vec::with_capacity(layers.len());
    let (mut x, mut adj) = (x, adj);
    for (params, &m) in layers.iter().zip(targets) {
        let x_drop = maybe_dropout(tape, x, dropout)?;
        let a_norm = normalize_adjacency_var(tape, adj)?;
        let s_bar = compute_reassignment(tape, store, params, x_drop, a_norm, m)?;
        let z_bar = compute_embedding(tape, store, params, x_drop, a_norm)?;
        let (x_out, adj_out) = expand_layer(tape, s_bar, z_bar, adj)?;
        caches.push(DecoderLayerCache {
            x_in: x,
            adj_in: adj,
            s_bar,
            z_bar,
            x_out,
            adj_out,
        });
        x = x_out;
        adj = adj_out;
    }
    Ok(DecoderCache { layers: caches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::row_softmax;
    use crate::graph::normalize_adjacency;
    use crate::matrix::Matrix;
    use crate::params::glorot_uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(d: usize, width: usize, d_out: usize, seed: u64) -> (ParamStore, DecoderLayerParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let re = store.push_glorot("re", d, width, &mut rng);
        let emb = store.push_glorot("emb", d, d_out, &mut rng);
        (store, DecoderLayerParams { re, emb })
    }

    fn tri_adj() -> Matrix {
        Matrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_rows_and_zero_embedding() {
        let (mut store, p) = setup(2, 4, 3, 0);
        store.set(p.re, Matrix::zeros(2, 4)).unwrap();
        store.set(p.emb, Matrix::zeros(2, 3)).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::filled(3, 2, 0.7));
        let a = tape.constant(tri_adj());
        let an = normalize_adjacency_var(&mut tape, a).unwrap();
        let s = compute_reassignment(&mut tape, &store, &p, x, an, 4).unwrap();
        assert!(tape.value(s).max_abs_diff(&Matrix::filled(3, 4, 0.25)) < 1e-15);
        let z = compute_embedding(&mut tape, &store, &p, x, an).unwrap();
        assert_eq!(*tape.value(z), Matrix::zeros(3, 3));
    }

    #[test]
    fn reassignment_matches_composition() {
        let (store, p) = setup(2, 4, 3, 1);
        let x0 = glorot_uniform(3, 2, &mut ChaCha8Rng::seed_from_u64(9));
        let want = row_softmax(
            &normalize_adjacency(&tri_adj())
                .unwrap()
                .matmul(&x0)
                .unwrap()
                .matmul(&store.get(p.re).leading_cols(3))
                .unwrap(),
        );
        let mut tape = Tape::new();
        let x = tape.constant(x0);
        let a = tape.constant(tri_adj());
        let an = normalize_adjacency_var(&mut tape, a).unwrap();
        let s = compute_reassignment(&mut tape, &store, &p, x, an, 3).unwrap();
        assert!(tape.value(s).max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn embedding_matches_composition() {
        let (store, p) = setup(2, 4, 3, 2);
        let x0 = glorot_uniform(3, 2, &mut ChaCha8Rng::seed_from_u64(10)).scale(4.0);
        let want = normalize_adjacency(&tri_adj())
            .unwrap()
            .matmul(&x0)
            .unwrap()
            .matmul(store.get(p.emb))
            .unwrap()
            .map(|v| v.max(0.0));
        let mut tape = Tape::new();
        let x = tape.constant(x0);
        let a = tape.constant(tri_adj());
        let an = normalize_adjacency_var(&mut tape, a).unwrap();
        let z = compute_embedding(&mut tape, &store, &p, x, an).unwrap();
        assert!(tape.value(z).max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn single_node_embedding() {
        let (store, p) = setup(3, 2, 2, 3);
        let x0 = Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(x0.clone());
        let a = tape.constant(Matrix::zeros(1, 1));
        let an = normalize_adjacency_var(&mut tape, a).unwrap();
        let z = compute_embedding(&mut tape, &store, &p, x, an).unwrap();
        let want = x0.matmul(store.get(p.emb)).unwrap().map(|v| v.max(0.0));
        assert_eq!(*tape.value(z), want);
    }

    #[test]
    fn permutation_expansion() {
        let perm = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap();
        let z0 = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let mut tape = Tape::new();
        let s = tape.constant(perm.clone());
        let z = tape.constant(z0.clone());
        let a = tape.constant(tri_adj());
        let (x, adj) = expand_layer(&mut tape, s, z, a).unwrap();
        // Row i of S̄ sends input node i to output column perm(i).
        assert_eq!(tape.value(x).row(1), z0.row(0));
        assert_eq!(tape.value(x).row(2), z0.row(1));
        assert_eq!(tape.value(x).row(0), z0.row(2));
        assert_eq!(
            *tape.value(adj),
            perm.t_matmul(&tri_adj()).unwrap().matmul(&perm).unwrap()
        );
    }

    #[test]
    fn uniform_expansion_spreads_total_mass() {
        let m = 5;
        let mut tape = Tape::new();
        let s = tape.constant(Matrix::filled(3, m, 1.0 / m as f64));
        let z = tape.constant(Matrix::zeros(3, 1));
        let a = tape.constant(tri_adj());
        let (_, adj) = expand_layer(&mut tape, s, z, a).unwrap();
        let want = tri_adj().sum() / (m * m) as f64;
        assert!(tape.value(adj).as_slice().iter().all(|v| (v - want).abs() < 1e-15));
    }

    #[test]
    fn decode_shape_law() {
        let (store, p) = setup(2, 4, 2, 4);
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::filled(2, 2, 0.3));
        let a = tape.constant(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        let cache = decode(&mut tape, &store, &[p], &[4], x, a, &mut None).unwrap();
        let (xo, ao) = cache.output();
        assert_eq!(tape.shape(xo), (4, 2));
        assert_eq!(tape.shape(ao), (4, 4));
    }
}
