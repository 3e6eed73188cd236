//! Dataset loaders for the TU plain-text collection and citation networks.

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, Task};
use crate::matrix::Matrix;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

/// Highest degree with its own one-hot bucket for featureless graphs. Larger
/// degrees share this bucket.
pub const DEGREE_CAP: usize = 64;

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, tok: &str) -> Result<T> {
    tok.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse '{}'", tok.trim())))
}

fn parse_column<T: std::str::FromStr>(path: &Path) -> Result<Vec<T>> {
    let text = read(path)?;
    lines(&text).map(|(n, l)| parse_num(path, n, l)).collect()
}

/// Dense class ids for raw label values, assigned in sorted order.
fn remap<T: Ord + Clone>(raw: &[T]) -> (Vec<usize>, usize) {
    let uniq: BTreeSet<T> = raw.iter().cloned().collect();
    let index: BTreeMap<T, usize> = uniq.into_iter().enumerate().map(|(i, v)| (v, i)).collect();
    (raw.iter().map(|v| index[v]).collect(), index.len())
}

/// Finds `<prefix><suffix>` inside `dir`, returning the prefix.
fn find_by_suffix(dir: &Path, suffix: &str) -> Result<String> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(name) = entry.file_name().to_str() {
            if let Some(prefix) = name.strip_suffix(suffix) {
                found.push(prefix.to_string());
            }
        }
    }
    found.sort();
    found
        .into_iter()
        .next()
        .ok_or_else(|| Error::MissingFile(dir.join(format!("*{suffix}"))))
}

/// Loads a graph-classification dataset in the TU collection format.
///
/// Node features are, in order of preference: one-hot node labels
/// concatenated with node attributes when both exist, whichever of the two
/// exists, or a capped one-hot of node degree.
pub fn load_tu_dataset(dir: &Path) -> Result<Dataset> {
    let name = find_by_suffix(dir, "_A.txt")?;
    let file = |suffix: &str| -> PathBuf { dir.join(format!("{name}_{suffix}.txt")) };

    let indicator_path = file("graph_indicator");
    let indicator: Vec<usize> = parse_column(&indicator_path)?;
    if let Some(pos) = indicator.iter().position(|&g| g == 0) {
        return Err(parse_err(&indicator_path, pos + 1, "graph ids are 1-based"));
    }
    let labels_path = file("graph_labels");
    let raw_labels: Vec<i64> = parse_column(&labels_path)?;
    let graph_count = raw_labels.len();
    if let Some(&max) = indicator.iter().max() {
        if max > graph_count {
            return Err(Error::invalid(format!(
                "graph indicator references graph {max} but {} lists {graph_count} labels",
                labels_path.display()
            )));
        }
    }

    // Global node -> (graph, local position).
    let mut sizes = vec![0usize; graph_count];
    let local: Vec<usize> = indicator
        .iter()
        .map(|&g| {
            let pos = sizes[g - 1];
            sizes[g - 1] += 1;
            pos
        })
        .collect();
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::invalid(format!("graph {} has no nodes", empty + 1)));
    }
    let node_total = indicator.len();

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); graph_count];
    let a_path = file("A");
    let a_text = read(&a_path)?;
    for (line, l) in lines(&a_text) {
        let mut parts = l.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(&a_path, line, "expected 'a, b'"));
        };
        let a: usize = parse_num(&a_path, line, a)?;
        let b: usize = parse_num(&a_path, line, b)?;
        if a == 0 || b == 0 || a > node_total || b > node_total {
            return Err(parse_err(
                &a_path,
                line,
                format!("dangling node index in edge ({a}, {b})"),
            ));
        }
        let (ga, gb) = (indicator[a - 1], indicator[b - 1]);
        if ga != gb {
            return Err(parse_err(&a_path, line, "edge joins two different graphs"));
        }
        edges[ga - 1].push((local[a - 1], local[b - 1]));
    }

    let node_labels_path = file("node_labels");
    let node_labels = if node_labels_path.exists() {
        let raw: Vec<i64> = parse_column(&node_labels_path)?;
        if raw.len() != node_total {
            return Err(Error::invalid(format!(
                "{} has {} rows for {node_total} nodes",
                node_labels_path.display(),
                raw.len()
            )));
        }
        Some(remap(&raw))
    } else {
        None
    };

    let attr_path = file("node_attributes");
    let attributes = if attr_path.exists() {
        let text = read(&attr_path)?;
        let mut rows = Vec::with_capacity(node_total);
        for (line, l) in lines(&text) {
            let row: Vec<f64> = l
                .split(',')
                .map(|t| parse_num(&attr_path, line, t))
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        if rows.len() != node_total {
            return Err(Error::invalid(format!(
                "{} has {} rows for {node_total} nodes",
                attr_path.display(),
                rows.len()
            )));
        }
        Some(Matrix::from_rows(&rows)?)
    } else {
        None
    };

    // Node degrees within each graph, for featureless collections.
    let degree_features = node_labels.is_none() && attributes.is_none();
    let mut adjs: Vec<Matrix> = sizes.iter().map(|&n| Matrix::zeros(n, n)).collect();
    for (g, list) in edges.iter().enumerate() {
        for &(a, b) in list {
            if a != b {
                adjs[g].set(a, b, 1.0);
                adjs[g].set(b, a, 1.0);
            }
        }
    }
    let degree_dim = if degree_features {
        let max_deg = adjs.iter().flat_map(|a| a.row_sums()).fold(0.0f64, f64::max) as usize;
        max_deg.min(DEGREE_CAP) + 1
    } else {
        0
    };

    let label_dim = node_labels.as_ref().map_or(0, |(_, k)| *k);
    let attr_dim = attributes.as_ref().map_or(0, Matrix::cols);
    let dim = label_dim + attr_dim + degree_dim;

    let mut features: Vec<Matrix> = sizes.iter().map(|&n| Matrix::zeros(n, dim)).collect();
    for (node, (&g, &pos)) in indicator.iter().zip(&local).enumerate() {
        let row = features[g - 1].row_mut(pos);
        if let Some((ids, _)) = &node_labels {
            row[ids[node]] = 1.0;
        }
        if let Some(attr) = &attributes {
            row[label_dim..label_dim + attr_dim].copy_from_slice(attr.row(node));
        }
        if degree_features {
            let deg = adjs[g - 1].row(pos).iter().sum::<f64>() as usize;
            row[deg.min(DEGREE_CAP)] = 1.0;
        }
    }

    let (labels, classes) = remap(&raw_labels);
    let graphs = features
        .into_iter()
        .zip(adjs)
        .zip(labels)
        .map(|((x, a), y)| Graph::new(x, a).map(|g| g.with_label(y)))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(name, Task::Graph, graphs, classes)
}

/// Options for [`load_citation_dataset`].
#[derive(Clone, Copy, Debug, Default)]
pub struct CitationOptions {
    /// Drop edges that mention an id absent from the content file instead of
    /// failing. Some published citation dumps contain such edges.
    pub skip_unknown_edges: bool,
}

/// Loads a single-graph node-classification dataset from a `*.content` file
/// (`id feature... label`) and a `*.cites` file (`id id`).
pub fn load_citation_dataset(dir: &Path, opts: CitationOptions) -> Result<Dataset> {
    let name = find_by_suffix(dir, ".content")?;
    let content_path = dir.join(format!("{name}.content"));
    let cites_path = dir.join(format!("{name}.cites"));

    let content = read(&content_path)?;
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (line, l) in lines(&content) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 2 {
            return Err(parse_err(&content_path, line, "expected 'id features... label'"));
        }
        let id = toks[0].to_string();
        if ids.contains_key(&id) {
            return Err(parse_err(&content_path, line, format!("duplicate node id '{id}'")));
        }
        let feats = toks[1..toks.len() - 1]
            .iter()
            .map(|t| parse_num(&content_path, line, t))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != feats.len() {
                return Err(parse_err(&content_path, line, "inconsistent feature count"));
            }
        }
        ids.insert(id, rows.len());
        rows.push(feats);
        raw_labels.push(toks[toks.len() - 1].to_string());
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{} is empty", content_path.display())));
    }
    let n = rows.len();
    let x = Matrix::from_rows(&rows)?;

    let cites = read(&cites_path)?;
    let mut adj = Matrix::zeros(n, n);
    let mut skipped = 0usize;
    for (line, l) in lines(&cites) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(&cites_path, line, "expected 'id id'"));
        }
        match (ids.get(toks[0]), ids.get(toks[1])) {
            (Some(&a), Some(&b)) => {
                if a != b {
                    adj.set(a, b, 1.0);
                    adj.set(b, a, 1.0);
                }
            }
            _ if opts.skip_unknown_edges => skipped += 1,
            _ => {
                let missing = if ids.contains_key(toks[0]) { toks[1] } else { toks[0] };
                return Err(parse_err(&cites_path, line, format!("unknown node id '{missing}'")));
            }
        }
    }
    if skipped > 0 {
        log::warn!("{name}: skipped {skipped} edges with unknown endpoints");
    }

    let (labels, classes) = remap(&raw_labels);
    let graph = Graph::new(x, adj)?.with_node_labels(labels)?;
    Dataset::new(name, Task::Node, vec![graph], classes)
}

/// Dataset file layouts understood by [`load_dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Tu,
    Citation,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tu" => Ok(Format::Tu),
            "citation" => Ok(Format::Citation),
            other => Err(Error::Config(format!("unknown dataset format '{other}'"))),
        }
    }
}

pub fn load_dataset(dir: &Path, format: Format, opts: CitationOptions) -> Result<Dataset> {
    match format {
        Format::Tu => load_tu_dataset(dir),
        Format::Citation => load_citation_dataset(dir, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    /// Graph 1: path 0-1-2 with labels a,b,a. Graph 2: single edge, labels b,b.
    fn toy_tu(dir: &Path) {
        write(dir, "TOY_A.txt", "1, 2\n2, 1\n2, 3\n3, 2\n4, 5\n5, 4\n");
        write(dir, "TOY_graph_indicator.txt", "1\n1\n1\n2\n2\n");
        write(dir, "TOY_graph_labels.txt", "-1\n1\n");
        write(dir, "TOY_node_labels.txt", "3\n5\n3\n5\n5\n");
    }

    #[test]
    fn toy_tu_fixture() {
        let dir = tempfile::tempdir().unwrap();
        toy_tu(dir.path());
        let ds = load_tu_dataset(dir.path()).unwrap();
        assert_eq!(ds.name, "TOY");
        assert_eq!(ds.graphs.len(), 2);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.labels(), vec![0, 1]);
        let g = &ds.graphs[0];
        assert_eq!(
            g.adj,
            Matrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap()
        );
        assert_eq!(g.x, Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).unwrap());
        let h = &ds.graphs[1];
        assert_eq!(h.adj, Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        assert_eq!(h.x, Matrix::from_rows(&[[0.0, 1.0], [0.0, 1.0]]).unwrap());
    }

    #[test]
    fn featureless_graphs_get_degree_one_hot() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "S_A.txt", "1, 2\n1, 3\n");
        write(dir.path(), "S_graph_indicator.txt", "1\n1\n1\n");
        write(dir.path(), "S_graph_labels.txt", "0\n");
        let ds = load_tu_dataset(dir.path()).unwrap();
        // Degrees 2, 1, 1 with buckets 0..=2.
        assert_eq!(
            ds.graphs[0].x,
            Matrix::from_rows(&[[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]]).unwrap()
        );
    }

    #[test]
    fn high_degrees_share_the_cap_bucket() {
        let dir = tempfile::tempdir().unwrap();
        let n = DEGREE_CAP + 5;
        let edges: String = (2..=n).map(|j| format!("1, {j}\n")).collect();
        write(dir.path(), "H_A.txt", &edges);
        write(dir.path(), "H_graph_indicator.txt", &"1\n".repeat(n));
        write(dir.path(), "H_graph_labels.txt", "1\n");
        let ds = load_tu_dataset(dir.path()).unwrap();
        let x = &ds.graphs[0].x;
        assert_eq!(x.cols(), DEGREE_CAP + 1);
        assert_eq!(x.get(0, DEGREE_CAP), 1.0);
        assert_eq!(x.get(1, 1), 1.0);
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        toy_tu(dir.path());
        fs::remove_file(dir.path().join("TOY_graph_labels.txt")).unwrap();
        let err = load_tu_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("TOY_graph_labels.txt"), "{err}");
    }

    #[test]
    fn dangling_edge_rejected() {
        let dir = tempfile::tempdir().unwrap();
        toy_tu(dir.path());
        write(dir.path(), "TOY_A.txt", "1, 2\n2, 9\n");
        let err = load_tu_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("dangling"), "{err}");
    }

    #[test]
    fn loading_twice_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        toy_tu(dir.path());
        assert_eq!(
            load_tu_dataset(dir.path()).unwrap(),
            load_tu_dataset(dir.path()).unwrap()
        );
    }

    fn toy_citation(dir: &Path) {
        write(dir, "tiny.content", "p10 1 0 A\np20 0 1 B\np30 1 1 A\n");
        write(dir, "tiny.cites", "p10 p20\np20 p30\np30 p20\np20 p10\n");
    }

    #[test]
    fn citation_fixture() {
        let dir = tempfile::tempdir().unwrap();
        toy_citation(dir.path());
        let ds = load_citation_dataset(dir.path(), CitationOptions::default()).unwrap();
        assert_eq!(ds.task, Task::Node);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.labels(), vec![0, 1, 0]);
        assert_eq!(
            ds.graphs[0].adj,
            Matrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap()
        );
    }

    #[test]
    fn unknown_citation_id() {
        let dir = tempfile::tempdir().unwrap();
        toy_citation(dir.path());
        write(dir.path(), "tiny.cites", "p10 p20\np20 p99\n");
        let err = load_citation_dataset(dir.path(), CitationOptions::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("p99"), "{err}");
        let ds = load_citation_dataset(
            dir.path(),
            CitationOptions {
                skip_unknown_edges: true,
            },
        )
        .unwrap();
        assert_eq!(ds.graphs[0].edge_weight(), 1.0);
    }
}
