//! Synthetic stochastic-block-model graphs.

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, Task};
use crate::matrix::Matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Mean offset separating the feature distributions of different blocks.
pub const FEATURE_SIGNAL: f64 = 1.0;

/// Samples an SBM graph. Node `i` of block `b` gets features
/// `N(FEATURE_SIGNAL * e_{b mod d}, I)` and node label `b`.
pub fn make_sbm(blocks: &[usize], p_in: f64, p_out: f64, feature_dim: usize, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sbm_with_rng(blocks, p_in, p_out, feature_dim, FEATURE_SIGNAL, true, &mut rng)
}

pub(crate) fn sbm_with_rng<R: Rng>(
    blocks: &[usize],
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    signal: f64,
    aligned: bool,
    rng: &mut R,
) -> Result<Graph> {
    if blocks.is_empty() || blocks.contains(&0) {
        return Err(Error::invalid("SBM blocks must be nonempty"));
    }
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=p_in).contains(&p_out) {
        return Err(Error::invalid(format!(
            "SBM probabilities need 0 <= p_out <= p_in <= 1, got p_in={p_in} p_out={p_out}"
        )));
    }
    if feature_dim == 0 {
        return Err(Error::invalid("SBM feature dimension must be positive"));
    }
    let block_of: Vec<usize> = blocks
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = block_of.len();
    let mut adj = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let p = if block_of[i] == block_of[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                adj.set(i, j, 1.0);
                adj.set(j, i, 1.0);
            }
        }
    }
    // Unaligned graphs keep the same multiset of feature prototypes but
    // scatter them across communities.
    let mut prototype = block_of.clone();
    if !aligned {
        prototype.shuffle(rng);
    }
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let x = Matrix::from_fn(n, feature_dim, |i, k| {
        let mean = if prototype[i] % feature_dim == k { signal } else { 0.0 };
        mean + noise.sample(rng)
    });
    Graph::new(x, adj)?.with_node_labels(block_of)
}

/// One class of a synthetic graph-classification corpus.
#[derive(Clone, Debug)]
pub struct ClassSpec {
    pub blocks: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    /// Whether feature prototypes follow the blocks or are shuffled
    /// across nodes.
    pub aligned: bool,
}

/// Recipe for [`make_sbm_corpus`].
#[derive(Clone, Debug)]
pub struct CorpusSpec {
    pub classes: Vec<ClassSpec>,
    pub graphs: usize,
    pub feature_dim: usize,
    /// Feature mean offset per block. Zero makes features pure noise.
    pub signal: f64,
    /// Each block size is jittered by up to this many nodes either way.
    pub size_jitter: usize,
}

impl Default for CorpusSpec {
    /// Two classes with identical block structure and identical feature
    /// multisets. In class 0 each community shares a feature prototype; in
    /// class 1 the prototypes are scattered, so only features read in their
    /// local neighbourhood separate the classes.
    fn default() -> Self {
        let class = |aligned| ClassSpec {
            blocks: vec![6, 6, 6],
            p_in: 0.7,
            p_out: 0.05,
            aligned,
        };
        Self {
            classes: vec![class(true), class(false)],
            graphs: 300,
            feature_dim: 3,
            signal: 2.0,
            size_jitter: 1,
        }
    }
}

/// Graph-classification corpus whose label is the generating class. Classes
/// alternate so that any prefix is balanced.
pub fn make_sbm_corpus(spec: &CorpusSpec, seed: u64) -> Result<Dataset> {
    if spec.classes.len() < 2 {
        return Err(Error::invalid("corpus needs at least two classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(spec.graphs);
    for i in 0..spec.graphs {
        let class = i % spec.classes.len();
        let c = &spec.classes[class];
        let blocks: Vec<usize> = c
            .blocks
            .iter()
            .map(|&b| {
                let j = spec.size_jitter as i64;
                let delta = if j > 0 { rng.random_range(-j..=j) } else { 0 };
                (b as i64 + delta).max(1) as usize
            })
            .collect();
        let g = sbm_with_rng(
            &blocks,
            c.p_in,
            c.p_out,
            spec.feature_dim,
            spec.signal,
            c.aligned,
            &mut rng,
        )?;
        graphs.push(g.with_label(class));
    }
    Dataset::new("SBM", Task::Graph, graphs, spec.classes.len())
}

/// Single-graph node-classification dataset built from [`make_sbm`].
pub fn make_sbm_node_dataset(
    blocks: &[usize],
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    seed: u64,
) -> Result<Dataset> {
    let g = make_sbm(blocks, p_in, p_out, feature_dim, seed)?;
    Dataset::new("SBM-node", Task::Node, vec![g], blocks.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_probabilities_give_two_triangles() {
        let g = make_sbm(&[3, 3], 1.0, 0.0, 2, 1).unwrap();
        let want = Matrix::from_fn(6, 6, |i, j| if i != j && i / 3 == j / 3 { 1.0 } else { 0.0 });
        assert_eq!(g.adj, want);
        assert_eq!(g.node_labels, Some(vec![0, 0, 0, 1, 1, 1]));
    }

    #[test]
    fn within_block_edges_match_binomial_expectation() {
        let g = make_sbm(&[50, 50], 0.3, 0.02, 4, 7).unwrap();
        let within: f64 = (0..100)
            .flat_map(|i| (i + 1..100).map(move |j| (i, j)))
            .filter(|(i, j)| i / 50 == j / 50)
            .map(|(i, j)| g.adj.get(i, j))
            .sum();
        let trials: f64 = 2.0 * (50.0 * 49.0 / 2.0);
        let mean = 0.3 * trials;
        let sd = (trials * 0.3 * 0.7).sqrt();
        assert!((within - mean).abs() <= 3.0 * sd, "{within} vs {mean}±{sd}");
    }

    #[test]
    fn same_seed_same_graph() {
        assert_eq!(
            make_sbm(&[5, 7], 0.4, 0.1, 3, 42).unwrap(),
            make_sbm(&[5, 7], 0.4, 0.1, 3, 42).unwrap()
        );
        assert_ne!(
            make_sbm(&[5, 7], 0.4, 0.1, 3, 42).unwrap(),
            make_sbm(&[5, 7], 0.4, 0.1, 3, 43).unwrap()
        );
    }

    #[test]
    fn invalid_arguments() {
        assert!(make_sbm(&[3, 0], 0.5, 0.1, 2, 0).is_err());
        assert!(make_sbm(&[3, 3], 0.1, 0.5, 2, 0).is_err());
        assert!(make_sbm(&[], 0.5, 0.1, 2, 0).is_err());
    }

    #[test]
    fn corpus_is_balanced() {
        let spec = CorpusSpec {
            graphs: 20,
            ..CorpusSpec::default()
        };
        let ds = make_sbm_corpus(&spec, 3).unwrap();
        assert_eq!(ds.graphs.len(), 20);
        assert_eq!(ds.labels().iter().filter(|&&c| c == 1).count(), 10);
    }
}
