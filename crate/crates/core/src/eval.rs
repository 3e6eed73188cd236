//! Downstream evaluation: linear classifiers on frozen embeddings,
//! cross-validation, and over-smoothing diagnostics.

use crate::error::{Error, Result};
use crate::folds::{make_folds, FoldPlan};
use crate::graph::{normalize_adjacency, Dataset, Graph, Task};
use crate::matrix::Matrix;
use crate::model::{Model, Variant};
use crate::params::glorot_uniform;
use crate::train::{train, TrainConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Linear one-vs-rest SVM trained by mini-batch SGD on the hinge loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Inverse regularization strength; the L2 coefficient is `1 / (C N)`.
    pub c: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 1024,
            lr: 1e-2,
            c: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    pub classifier: ClassifierConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            classifier: ClassifierConfig::default(),
        }
    }
}

/// Per-dimension standardization fitted on training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix, rows: &[usize]) -> Self {
        let d = x.cols();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for &r in rows {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &r in rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        // Constant columns are centred but left unscaled.
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, x: &Matrix, rows: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), x.cols(), |i, j| {
            (x.get(rows[i], j) - self.mean[j]) * self.scale[j]
        })
    }
}

/// One weight row and bias per class.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn fit(x: &Matrix, y: &[usize], classes: usize, cfg: &ClassifierConfig, seed: u64) -> Result<Self> {
        let n = x.rows();
        if n != y.len() || n == 0 {
            return Err(Error::invalid(format!("{n} rows for {} labels", y.len())));
        }
        let mut present = vec![false; classes];
        for &c in y {
            if c >= classes {
                return Err(Error::invalid(format!("label {c} out of range")));
            }
            present[c] = true;
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::invalid("training labels contain a single class"));
        }
        if !(cfg.c > 0.0 && cfg.lr > 0.0) || cfg.batch_size == 0 {
            return Err(Error::Config("classifier c, lr and batch size must be positive".into()));
        }
        let d = x.cols();
        let lambda = 1.0 / (cfg.c * n as f64);
        let mut w = Matrix::zeros(classes, d);
        let mut b = vec![0.0; classes];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let inv = 1.0 / batch.len() as f64;
                let mut gw = w.scale(lambda);
                let mut gb = vec![0.0; classes];
                for &i in batch {
                    let xi = x.row(i);
                    for c in 0..classes {
                        let target = if y[i] == c { 1.0 } else { -1.0 };
                        let score: f64 = w.row(c).iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + b[c];
                        if target * score < 1.0 {
                            for (g, v) in gw.row_mut(c).iter_mut().zip(xi) {
                                *g -= inv * target * v;
                            }
                            gb[c] -= inv * target;
                        }
                    }
                }
                w.axpy(-cfg.lr, &gw)?;
                for (bc, g) in b.iter_mut().zip(&gb) {
                    *bc -= cfg.lr * g;
                }
            }
        }
        Ok(Self { weights: w, bias: b })
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        (0..x.rows())
            .map(|i| {
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for c in 0..self.weights.rows() {
                    let s: f64 = self
                        .weights
                        .row(c)
                        .iter()
                        .zip(x.row(i))
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        + self.bias[c];
                    if s > best_score {
                        best = c;
                        best_score = s;
                    }
                }
                best
            })
            .collect()
    }
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

/// Cross-validated accuracy summary.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub dataset: String,
    pub variant: String,
    pub task: Task,
    pub fold_accuracies: Vec<f64>,
    pub train_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    pub config_digest: String,
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalResult {
    /// `dataset, variant, fold, accuracy` rows and the closing
    /// `dataset, variant, mean, <acc>, <std>` summary.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dataset, variant, fold, accuracy\n");
        for (i, a) in self.fold_accuracies.iter().enumerate() {
            s.push_str(&format!("{}, {}, {}, {:.6}\n", self.dataset, self.variant, i + 1, a));
        }
        s.push_str(&self.summary_row());
        s.push('\n');
        s
    }

    pub fn summary_row(&self) -> String {
        format!(
            "{}, {}, mean, {:.6}, {:.6}",
            self.dataset, self.variant, self.mean, self.std
        )
    }
}

/// Frozen embeddings, one row per graph or node, with their labels.
pub fn embed_dataset(model: &Model, ds: &Dataset) -> Result<(Matrix, Vec<usize>)> {
    if ds.feature_dim() != model.spec.input_dim {
        return Err(Error::invalid(format!(
            "dataset has {} features, model expects {}",
            ds.feature_dim(),
            model.spec.input_dim
        )));
    }
    let x = match ds.task {
        Task::Graph => {
            let rows: Vec<Vec<f64>> = ds
                .graphs
                .par_iter()
                .map(|g| model.graph_embedding(g))
                .collect::<Result<_>>()?;
            Matrix::from_rows(&rows)?
        }
        Task::Node => model.node_embedding(&ds.graphs[0])?,
    };
    Ok((x, ds.labels()))
}

/// Fits a standardizer and classifier per fold on the training rows and
/// scores the held-out rows. Returns `(test, train)` accuracies.
pub fn cross_validate(
    x: &Matrix,
    y: &[usize],
    classes: usize,
    plan: &FoldPlan,
    cfg: &EvalConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if plan.items() != x.rows() || y.len() != x.rows() {
        return Err(Error::invalid("fold plan does not match the embeddings"));
    }
    let per_fold: Vec<(f64, f64)> = (0..plan.k())
        .into_par_iter()
        .map(|f| {
            let train_idx = plan.train(f);
            let test_idx = &plan.test[f];
            let z = Standardizer::fit(x, &train_idx);
            let xt = z.transform(x, &train_idx);
            let yt: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
            let clf = LinearClassifier::fit(&xt, &yt, classes, &cfg.classifier, cfg.seed.wrapping_add(f as u64))?;
            let xs = z.transform(x, test_idx);
            let ys: Vec<usize> = test_idx.iter().map(|&i| y[i]).collect();
            Ok((accuracy(&clf.predict(&xs), &ys), accuracy(&clf.predict(&xt), &yt)))
        })
        .collect::<Result<_>>()?;
    Ok(per_fold.into_iter().unzip())
}

/// Embeds `ds` with `model` and cross-validates a linear classifier.
pub fn evaluate_model(model: &Model, ds: &Dataset, cfg: &EvalConfig, config_digest: &str) -> Result<EvalResult> {
    let (x, y) = embed_dataset(model, ds)?;
    if !x.is_finite() {
        return Err(Error::invalid("embeddings contain non-finite values"));
    }
    let plan = make_folds(&y, cfg.folds, cfg.seed)?;
    let (test, train_acc) = cross_validate(&x, &y, ds.num_classes, &plan, cfg)?;
    let (mean, std) = mean_std(&test);
    Ok(EvalResult {
        dataset: ds.name.clone(),
        variant: model.spec.variant.to_string(),
        task: ds.task,
        fold_accuracies: test,
        train_accuracies: train_acc,
        mean,
        std,
        config_digest: config_digest.to_string(),
    })
}

/// Trains the hard-assignment model and its soft-pooling counterpart under
/// the same settings and evaluates both on the same folds.
pub fn ablate_soft_encoder(
    ds: &Dataset,
    train_cfg: &TrainConfig,
    eval_cfg: &EvalConfig,
) -> Result<(EvalResult, EvalResult)> {
    if ds.task != Task::Graph {
        return Err(Error::invalid("the ablation needs a graph-classification dataset"));
    }
    let run = |variant: Variant| -> Result<EvalResult> {
        let cfg = TrainConfig {
            variant,
            ..train_cfg.clone()
        };
        let trained = train(ds, &cfg)?;
        evaluate_model(&trained.model, ds, eval_cfg, "")
    };
    Ok((run(Variant::HcGae)?, run(Variant::SoftEncoder)?))
}

/// Mean cosine similarity over distinct row pairs. Pairs involving a zero
/// row count as 0. Returns 0 for fewer than two rows.
pub fn mean_pairwise_cosine(x: &Matrix) -> f64 {
    let n = x.rows();
    if n < 2 {
        return 0.0;
    }
    let norms: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let gram = x.matmul_t(x).expect("square gram");
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if norms[i] > 0.0 && norms[j] > 0.0 {
                total += (gram.get(i, j) / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            }
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// [`mean_pairwise_cosine`] of each matrix.
pub fn oversmoothing_metric(layers: &[Matrix]) -> Vec<f64> {
    layers.iter().map(mean_pairwise_cosine).collect()
}

/// Outputs of a plain stack of `depth` full-graph GCN layers
/// `relu(Â X W)` with Glorot weights drawn from `seed`.
pub fn gcn_reference_features(g: &Graph, hidden: usize, depth: usize, seed: u64) -> Result<Vec<Matrix>> {
    let a = normalize_adjacency(&g.adj)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = g.x.clone();
    let mut out = Vec::with_capacity(depth);
    for _ in 0..depth {
        let w = glorot_uniform(x.cols(), hidden, &mut rng);
        x = a.matmul(&x.matmul(&w)?)?.map(|v| v.max(0.0));
        out.push(x.clone());
    }
    Ok(out)
}

/// Per-layer similarity of the encoder outputs of `model` on `g`.
pub fn encoder_oversmoothing(model: &Model, g: &Graph) -> Result<Vec<f64>> {
    let feats = model.encoder_features(g)?;
    Ok(oversmoothing_metric(&feats[1..]))
}
