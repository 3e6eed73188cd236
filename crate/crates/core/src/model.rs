//! Parameter layout and the full forward pass.

use crate::autodiff::{GradientFault, Tape};
use crate::decoder::{decode, DecoderCache, DecoderLayerParams};
use crate::encoder::{encode, EncoderCache, EncoderLayerParams, EncoderMode};
use crate::error::{Error, Result};
use crate::gradcheck::{check_gradients_with, GradCheckReport};
use crate::graph::Graph;
use crate::loss::{total_loss, LossReport, LossWeights};
use crate::matrix::Matrix;
use crate::nn::{readout, Dropout, Readout};
use crate::params::ParamStore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Encoder flavour.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Hard clusters with isolated per-subgraph GNNs.
    HcGae,
    /// Soft pooling over the whole graph with one shared GNN per layer.
    SoftEncoder,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hc-gae" => Ok(Variant::HcGae),
            "se" | "hc-gae-se" => Ok(Variant::SoftEncoder),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::HcGae => "hc-gae",
            Variant::SoftEncoder => "hc-gae-se",
        })
    }
}

/// Architecture hyperparameters plus the dataset facts that fix tensor
/// shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden: usize,
    /// Cluster count produced by each encoder layer.
    pub encoder_sizes: Vec<usize>,
    /// Node count entering each decoder layer; must mirror `encoder_sizes`.
    pub decoder_sizes: Vec<usize>,
    /// Largest graph the model must reconstruct.
    pub max_nodes: usize,
    pub variant: Variant,
    pub shared_subgraph_weights: bool,
    pub learn_logvar: bool,
    pub straight_through: bool,
    pub readout: Readout,
}

impl ModelSpec {
    /// Checks the size schedule. Returns warnings for legal but suspicious
    /// settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let depth = self.encoder_sizes.len();
        if depth == 0 {
            return Err(Error::Config("at least one encoder layer is required".into()));
        }
        if self.decoder_sizes.len() != depth {
            return Err(Error::Config(format!(
                "decoder depth {} must equal encoder depth {depth}",
                self.decoder_sizes.len()
            )));
        }
        if self.encoder_sizes.contains(&0) || self.input_dim == 0 || self.hidden == 0 || self.max_nodes == 0 {
            return Err(Error::Config("sizes and dimensions must be positive".into()));
        }
        if self.encoder_sizes.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(format!(
                "encoder sizes {:?} must strictly decrease",
                self.encoder_sizes
            )));
        }
        let mirrored: Vec<usize> = self.encoder_sizes.iter().rev().copied().collect();
        if self.decoder_sizes != mirrored {
            return Err(Error::Config(format!(
                "decoder sizes {:?} must mirror encoder sizes {:?}",
                self.decoder_sizes, self.encoder_sizes
            )));
        }
        if depth > 1 {
            warnings.push(format!(
                "feature width stays at {} across encoder layers; it does not strictly shrink",
                self.hidden
            ));
        }
        if self.variant == Variant::SoftEncoder && self.learn_logvar {
            warnings.push("the log-variance option has no effect on the soft encoder".into());
        }
        Ok(warnings)
    }

    pub fn depth(&self) -> usize {
        self.encoder_sizes.len()
    }

    /// Feature width entering each encoder layer, plus the output width.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(std::iter::repeat_n(self.hidden, self.depth()));
        d
    }

    /// Largest node count at each encoder input, starting with `max_nodes`.
    pub fn node_widths(&self) -> Vec<usize> {
        let mut w = vec![self.max_nodes];
        for &s in &self.encoder_sizes {
            let prev = *w.last().expect("nonempty");
            w.push(s.min(prev));
        }
        w
    }

    /// Node counts at each encoder input for a graph of `n` nodes, plus the
    /// final coarse size.
    pub fn node_schedule(&self, n: usize) -> Vec<usize> {
        let mut s = vec![n];
        for &k in &self.encoder_sizes {
            let prev = *s.last().expect("nonempty");
            s.push(k.min(prev));
        }
        s
    }
}

/// Parameters and their layout.
#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub store: ParamStore,
    pub encoder: Vec<EncoderLayerParams>,
    pub decoder: Vec<DecoderLayerParams>,
}

/// Forward caches of one graph.
pub struct Forward {
    pub encoder: EncoderCache,
    pub decoder: DecoderCache,
}

impl Model {
    /// Glorot-initialised parameters, deterministic per seed.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        for w in spec.validate()? {
            log::debug!("{w}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let dims = spec.dims();
        let widths = spec.node_widths();
        let depth = spec.depth();

        let mut encoder = Vec::with_capacity(depth);
        for l in 0..depth {
            let (d_in, d_out, k) = (dims[l], dims[l + 1], widths[l + 1]);
            let assign_name = if l == 0 { "assign" } else { "project" };
            let assign = store.push_glorot(format!("enc{l}.{assign_name}"), d_in, k, &mut rng);
            let layer = match spec.variant {
                Variant::SoftEncoder => EncoderLayerParams {
                    assign,
                    w: vec![store.push_glorot(format!("enc{l}.w"), d_in, d_out, &mut rng)],
                    d: Vec::new(),
                    logvar: None,
                },
                Variant::HcGae => {
                    let count = if spec.shared_subgraph_weights { 1 } else { k };
                    let w = (0..count)
                        .map(|j| store.push_glorot(format!("enc{l}.w{j}"), d_in, d_out, &mut rng))
                        .collect();
                    let d = (0..count)
                        .map(|j| store.push_glorot(format!("enc{l}.d{j}"), d_in, 1, &mut rng))
                        .collect();
                    let logvar = spec
                        .learn_logvar
                        .then(|| store.push_glorot(format!("enc{l}.logvar"), d_in, d_out, &mut rng));
                    EncoderLayerParams { assign, w, d, logvar }
                }
            };
            encoder.push(layer);
        }

        let mut decoder = Vec::with_capacity(depth);
        for i in 0..depth {
            let (d_in, d_out) = (dims[depth - i], dims[depth - 1 - i]);
            let width = widths[depth - 1 - i];
            let re = store.push_glorot(format!("dec{i}.re"), d_in, width, &mut rng);
            let emb = store.push_glorot(format!("dec{i}.emb"), d_in, d_out, &mut rng);
            decoder.push(DecoderLayerParams { re, emb });
        }
        Ok(Self {
            spec,
            store,
            encoder,
            decoder,
        })
    }

    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }

    fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.feature_dim() != self.spec.input_dim {
            return Err(Error::invalid(format!(
                "graph has {} features, model expects {}",
                g.feature_dim(),
                self.spec.input_dim
            )));
        }
        if g.n() > self.spec.max_nodes {
            return Err(Error::invalid(format!(
                "graph has {} nodes, model supports at most {}",
                g.n(),
                self.spec.max_nodes
            )));
        }
        if g.n() == 0 {
            return Err(Error::invalid("graph has no nodes"));
        }
        Ok(())
    }

    /// Encoder and decoder pass over `g`, using `store` for parameter values.
    pub fn forward_with(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        g: &Graph,
        dropout: &mut Option<Dropout<'_>>,
    ) -> Result<Forward> {
        self.check_graph(g)?;
        let x = tape.constant(g.x.clone());
        let adj = tape.constant(g.adj.clone());
        let mode = EncoderMode {
            soft_pooling: self.spec.variant == Variant::SoftEncoder,
            straight_through: self.spec.straight_through,
        };
        let encoder = encode(
            tape,
            store,
            &self.encoder,
            &self.spec.encoder_sizes,
            mode,
            x,
            adj,
            dropout,
        )?;
        let schedule = self.spec.node_schedule(g.n());
        let depth = self.spec.depth();
        let targets: Vec<usize> = (0..depth).map(|i| schedule[depth - 1 - i]).collect();
        let (xe, ae) = encoder.output();
        let decoder = decode(tape, store, &self.decoder, &targets, xe, ae, dropout)?;
        Ok(Forward { encoder, decoder })
    }

    pub fn forward(&self, tape: &mut Tape, g: &Graph, dropout: &mut Option<Dropout<'_>>) -> Result<Forward> {
        self.forward_with(&self.store, tape, g, dropout)
    }

    /// Records the forward pass and the loss of `g` on `tape`.
    pub fn loss_with(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        g: &Graph,
        weights: LossWeights,
        dropout: &mut Option<Dropout<'_>>,
    ) -> Result<LossReport> {
        let fwd = self.forward_with(store, tape, g, dropout)?;
        total_loss(tape, &fwd.encoder, &fwd.decoder, weights)
    }

    /// Deterministic loss of `g` without dropout.
    pub fn loss(&self, g: &Graph, weights: LossWeights) -> Result<LossReport> {
        let mut tape = Tape::new();
        self.loss_with(&self.store, &mut tape, g, weights, &mut None)
    }

    /// Finite-difference check of every parameter's gradient of the total
    /// loss on `g` (step 1e-5, tolerance 1e-4). Straight-through models are
    /// flagged by design, since their assignment gradients are surrogates.
    pub fn gradient_check(
        &self,
        g: &Graph,
        weights: LossWeights,
        fault: Option<GradientFault>,
    ) -> Result<GradCheckReport> {
        let ids: Vec<_> = self.store.ids().collect();
        check_gradients_with(&self.store, &ids, 1e-5, 1e-4, fault, |t, s| {
            Ok(self.loss_with(s, t, g, weights, &mut None)?.var)
        })
    }

    /// Readout of the final coarse features.
    pub fn graph_embedding(&self, g: &Graph) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, g, &mut None)?;
        readout(tape.value(fwd.encoder.output().0), self.spec.readout)
    }

    /// Final decoder features, one row per node of `g`.
    pub fn node_embedding(&self, g: &Graph) -> Result<Matrix> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, g, &mut None)?;
        Ok(tape.value(fwd.decoder.output().0).clone())
    }

    /// Feature matrices entering each encoder layer followed by the final
    /// coarse features.
    pub fn encoder_features(&self, g: &Graph) -> Result<Vec<Matrix>> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, g, &mut None)?;
        let mut out: Vec<Matrix> = fwd.encoder.layers.iter().map(|l| tape.value(l.x_in).clone()).collect();
        out.push(tape.value(fwd.encoder.output().0).clone());
        Ok(out)
    }
}
