//! Graphs, datasets and adjacency normalization.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Node features plus a dense symmetric adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub x: Matrix,
    pub adj: Matrix,
    pub label: Option<usize>,
    pub node_labels: Option<Vec<usize>>,
}

impl Graph {
    /// Validates shapes, symmetry, a zero diagonal and nonnegative entries.
    pub fn new(x: Matrix, adj: Matrix) -> Result<Self> {
        let n = x.rows();
        if adj.shape() != (n, n) {
            return Err(Error::Shape {
                op: "Graph::new",
                left: x.shape(),
                right: adj.shape(),
            });
        }
        if !x.is_finite() || !adj.is_finite() {
            return Err(Error::invalid("graph contains non-finite values"));
        }
        if !adj.is_symmetric(1e-9) {
            return Err(Error::invalid("adjacency is not symmetric"));
        }
        if (0..n).any(|i| adj.get(i, i) != 0.0) {
            return Err(Error::invalid("adjacency has a nonzero diagonal"));
        }
        if adj.as_slice().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("adjacency has negative entries"));
        }
        Ok(Self {
            x,
            adj,
            label: None,
            node_labels: None,
        })
    }

    /// Builds an unweighted graph from an undirected edge list.
    pub fn from_edges(x: Matrix, edges: &[(usize, usize)]) -> Result<Self> {
        let n = x.rows();
        let mut adj = Matrix::zeros(n, n);
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a != b {
                adj.set(a, b, 1.0);
                adj.set(b, a, 1.0);
            }
        }
        Self::new(x, adj)
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_node_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::invalid(format!(
                "{} node labels for {} nodes",
                labels.len(),
                self.n()
            )));
        }
        self.node_labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.x.cols()
    }

    /// Number of undirected edges, counting weights as multiplicities.
    pub fn edge_weight(&self) -> f64 {
        self.adj.sum() / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Graph,
    Node,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graph" => Ok(Task::Graph),
            "node" => Ok(Task::Node),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Graph => "graph",
            Task::Node => "node",
        })
    }
}

/// Labeled collection of graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub task: Task,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, task: Task, graphs: Vec<Graph>, num_classes: usize) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            task,
            graphs,
            num_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.graphs.is_empty() {
            return Err(Error::invalid("dataset has no graphs"));
        }
        let d = self.graphs[0].feature_dim();
        if self.graphs.iter().any(|g| g.feature_dim() != d) {
            return Err(Error::invalid("graphs disagree on feature dimension"));
        }
        match self.task {
            Task::Node => {
                if self.graphs.len() != 1 {
                    return Err(Error::invalid("node datasets hold exactly one graph"));
                }
                let labels = self.graphs[0]
                    .node_labels
                    .as_ref()
                    .ok_or_else(|| Error::invalid("node dataset without node labels"))?;
                if labels.iter().any(|&c| c >= self.num_classes) {
                    return Err(Error::invalid("node label out of range"));
                }
            }
            Task::Graph => {
                for (i, g) in self.graphs.iter().enumerate() {
                    match g.label {
                        Some(c) if c < self.num_classes => {}
                        Some(c) => return Err(Error::invalid(format!("graph {i} label {c} out of range"))),
                        None => return Err(Error::invalid(format!("graph {i} has no label"))),
                    }
                }
            }
        }
        Ok(())
    }

    /// Class label per evaluated item: graphs for the graph task, nodes for
    /// the node task.
    pub fn labels(&self) -> Vec<usize> {
        match self.task {
            Task::Graph => self.graphs.iter().map(|g| g.label.unwrap_or(0)).collect(),
            Task::Node => self.graphs[0].node_labels.clone().unwrap_or_default(),
        }
    }

    pub fn item_count(&self) -> usize {
        match self.task {
            Task::Graph => self.graphs.len(),
            Task::Node => self.graphs[0].n(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs[0].feature_dim()
    }

    pub fn max_nodes(&self) -> usize {
        self.graphs.iter().map(Graph::n).max().unwrap_or(0)
    }

    pub fn mean_nodes(&self) -> f64 {
        self.graphs.iter().map(|g| g.n() as f64).sum::<f64>() / self.graphs.len() as f64
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn normalize_adjacency(adj: &Matrix) -> Result<Matrix> {
    let n = adj.rows();
    if adj.cols() != n {
        return Err(Error::Shape {
            op: "normalize_adjacency",
            left: adj.shape(),
            right: adj.shape(),
        });
    }
    if adj.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("normalize_adjacency: negative entry"));
    }
    let inv_sqrt: Vec<f64> = adj.row_sums().iter().map(|d| (d + 1.0).powf(-0.5)).collect();
    Ok(Matrix::from_fn(n, n, |i, j| {
        let a = adj.get(i, j) + if i == j { 1.0 } else { 0.0 };
        a * inv_sqrt[i] * inv_sqrt[j]
    }))
}

/// Differentiable [`normalize_adjacency`] for adjacencies computed on a tape.
/// The input must be nonnegative.
pub fn normalize_adjacency_var(tape: &mut Tape, adj: Var) -> Result<Var> {
    let with_loops = tape.add_identity(adj)?;
    let deg = tape.row_sum(with_loops);
    let inv_sqrt = tape.powf(deg, -0.5);
    let rows = tape.scale_rows(with_loops, inv_sqrt)?;
    tape.scale_cols(rows, inv_sqrt)
}
