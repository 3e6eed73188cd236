//! Optimizer and self-supervised training loop.

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, Task};
use crate::loss::LossWeights;
use crate::matrix::Matrix;
use crate::model::{Model, ModelSpec, Variant};
use crate::nn::{Dropout, Readout};
use crate::params::{ParamId, ParamStore};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Hyperparameters of the auto-encoder and its training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub hidden: usize,
    pub dropout: f64,
    /// Graphs per optimizer step for the graph task. Node-task training is
    /// always full-graph.
    pub batch_size: usize,
    pub lr: f64,
    pub encoder_sizes: Vec<usize>,
    pub decoder_sizes: Vec<usize>,
    pub feature_weight: f64,
    pub structure_weight: f64,
    pub seed: u64,
    pub readout: Readout,
    pub variant: Variant,
    pub shared_subgraph_weights: bool,
    pub learn_logvar: bool,
    pub straight_through: bool,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_grad_norm: Option<f64>,
}

/// Loss of one graph and its parameter gradients.
type GraphStep = (f64, Vec<(ParamId, Matrix)>);

/// Clipping threshold used when clipping is switched on without a value.
pub const DEFAULT_CLIP: f64 = 5.0;

impl TrainConfig {
    pub fn for_task(task: Task) -> Self {
        let (batch_size, lr) = match task {
            Task::Node => (1024, 1e-2),
            Task::Graph => (64, 5e-4),
        };
        Self {
            epochs: 50,
            hidden: 128,
            dropout: 0.5,
            batch_size,
            lr,
            encoder_sizes: vec![128, 64, 32],
            decoder_sizes: vec![32, 64, 128],
            feature_weight: 1.0,
            structure_weight: 1.0,
            seed: 0,
            readout: Readout::Mean,
            variant: Variant::HcGae,
            shared_subgraph_weights: false,
            learn_logvar: false,
            straight_through: true,
            clip_grad_norm: None,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            feature: self.feature_weight,
            structure: self.structure_weight,
        }
    }

    /// Architecture for a dataset with the given feature width and largest
    /// graph.
    pub fn model_spec(&self, input_dim: usize, max_nodes: usize) -> ModelSpec {
        ModelSpec {
            input_dim,
            hidden: self.hidden,
            encoder_sizes: self.encoder_sizes.clone(),
            decoder_sizes: self.decoder_sizes.clone(),
            max_nodes,
            variant: self.variant,
            shared_subgraph_weights: self.shared_subgraph_weights,
            learn_logvar: self.learn_logvar,
            straight_through: self.straight_through,
            readout: self.readout,
        }
    }

    pub fn validate(&self) -> Result<Vec<String>> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.batch_size == 0 {
            return Err(Error::Config("learning rate and batch size must be positive".into()));
        }
        if self.feature_weight < 0.0 || self.structure_weight < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        if let Some(c) = self.clip_grad_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        if self.decoder_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "decoder sizes {:?} must strictly increase",
                self.decoder_sizes
            )));
        }
        self.model_spec(1, 1).validate()
    }
}

/// Adam with bias correction. Each parameter keeps its own step count and
/// is skipped on steps where it received no gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Option<Matrix>>,
    v: Vec<Option<Matrix>>,
    t: Vec<u64>,
}

impl Adam {
    pub fn new(lr: f64, params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![None; params],
            v: vec![None; params],
            t: vec![0; params],
        }
    }

    /// First and second moment of `id`, if it has been stepped.
    pub fn moments(&self, id: ParamId) -> Option<(&Matrix, &Matrix)> {
        Some((self.m[id.index()].as_ref()?, self.v[id.index()].as_ref()?))
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Matrix)]) -> Result<()> {
        for (id, g) in grads {
            let i = id.index();
            if i >= self.t.len() {
                return Err(Error::invalid(format!("parameter {i} unknown to the optimizer")));
            }
            let shape = store.get(*id).shape();
            if g.shape() != shape {
                return Err(Error::Shape {
                    op: "Adam::step",
                    left: shape,
                    right: g.shape(),
                });
            }
            let m = self.m[i].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1));
            let v = self.v[i].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1));
            self.t[i] += 1;
            let t = self.t[i] as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            let p = store.get_mut(*id);
            for k in 0..g.len() {
                let gk = g.as_slice()[k];
                let mk = &mut m.as_mut_slice()[k];
                let vk = &mut v.as_mut_slice()[k];
                *mk = self.beta1 * *mk + (1.0 - self.beta1) * gk;
                *vk = self.beta2 * *vk + (1.0 - self.beta2) * gk * gk;
                let m_hat = *mk / c1;
                let v_hat = *vk / c2;
                p.as_mut_slice()[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their joint Frobenius norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [(ParamId, Matrix)], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|(_, g)| g.frobenius_sq()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            *g = g.scale(s);
        }
    }
    norm
}

/// Adds `part` into `acc`, keeping first-seen parameter order.
fn merge_grads(acc: &mut Vec<(ParamId, Matrix)>, part: Vec<(ParamId, Matrix)>) -> Result<()> {
    for (id, g) in part {
        match acc.iter_mut().find(|(p, _)| *p == id) {
            Some((_, a)) => a.add_assign(&g)?,
            None => acc.push((id, g)),
        }
    }
    Ok(())
}

/// Dropout stream for one graph visit, independent of thread scheduling.
fn visit_rng(seed: u64, epoch: usize, item: usize, items: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d20f_0a7e_11e5);
    rng.set_stream((epoch as u64) * (items as u64) + item as u64);
    rng
}

/// Loss and parameter gradients for one graph.
fn graph_step(model: &Model, g: &Graph, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<GraphStep> {
    let mut tape = Tape::new();
    let mut dropout = if cfg.dropout > 0.0 {
        Some(Dropout::new(cfg.dropout, rng)?)
    } else {
        None
    };
    let report = model.loss_with(&model.store, &mut tape, g, cfg.weights(), &mut dropout)?;
    let grads = tape.backward(report.var)?.into_params();
    Ok((report.total, grads))
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Model,
    /// Mean per-graph training loss of every epoch.
    pub history: Vec<f64>,
}

/// Initialises a model for `ds` and trains it.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    let model = Model::init(cfg.model_spec(ds.feature_dim(), ds.max_nodes()), cfg.seed)?;
    train_model(model, ds, cfg)
}

/// Continues training `model` on `ds` for `cfg.epochs` epochs.
pub fn train_model(mut model: Model, ds: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    if ds.graphs.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let mut adam = Adam::new(cfg.lr, model.store.len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let items = ds.graphs.len();
    let mut order: Vec<usize> = (0..items).collect();
    let batch = match ds.task {
        Task::Graph => cfg.batch_size,
        Task::Node => items,
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let results: Vec<Result<GraphStep>> = chunk
                .par_iter()
                .map(|&i| {
                    let mut rng = visit_rng(cfg.seed, epoch, i, items);
                    graph_step(&model, &ds.graphs[i], cfg, &mut rng)
                })
                .collect();
            let mut grads = Vec::new();
            for r in results {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(Error::invalid(format!("non-finite loss in epoch {epoch}")));
                }
                epoch_loss += loss;
                merge_grads(&mut grads, g)?;
            }
            if let Some(max) = cfg.clip_grad_norm {
                clip_grad_norm(&mut grads, max);
            }
            adam.step(&mut model.store, &grads)?;
        }
        let mean = epoch_loss / items as f64;
        log::info!("epoch {:>3}  loss {mean:.6}", epoch + 1);
        history.push(mean);
    }
    Ok(Trained { model, history })
}
