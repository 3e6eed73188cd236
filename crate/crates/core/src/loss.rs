//! Training objective: a per-subgraph KL regularizer plus layer-paired
//! feature and structure reconstruction.

use crate::autodiff::{Tape, Var};
use crate::decoder::DecoderCache;
use crate::encoder::EncoderCache;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use std::sync::Arc;

/// Relative weights of the reconstruction terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub feature: f64,
    pub structure: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            feature: 1.0,
            structure: 1.0,
        }
    }
}

/// Scalar values of one loss evaluation plus the tape node of the total.
#[derive(Clone, Debug)]
pub struct LossReport {
    pub local: f64,
    pub global: f64,
    pub total: f64,
    /// Local term per encoder layer.
    pub local_per_layer: Vec<f64>,
    /// Weighted feature term per encoder layer.
    pub feature_per_layer: Vec<f64>,
    /// Weighted structure term per encoder layer.
    pub structure_per_layer: Vec<f64>,
    pub var: Var,
}

/// `KL(N(z, I) || N(0, I)) = ½‖z‖²` for every subgraph, or the full
/// diagonal-Gaussian form when log-variances are learned. Returns the total
/// node and the per-layer values.
pub fn local_kl(tape: &mut Tape, enc: &EncoderCache) -> Result<(Option<Var>, Vec<f64>)> {
    let mut total: Option<Var> = None;
    let mut per_layer = Vec::with_capacity(enc.layers.len());
    for layer in &enc.layers {
        let mut layer_sum = 0.0;
        for c in layer.coarsened.iter().flatten() {
            let sq = tape.sum_squares(c.z);
            let mut term = tape.scale(sq, 0.5);
            if let Some(lv) = c.logvar {
                // ½ Σ (exp(lv) - lv - 1)
                let e = tape.exp(lv);
                let diff = tape.sub(e, lv)?;
                let s = tape.sum(diff);
                let n = tape.value(lv).len() as f64;
                let shifted = tape.scale(s, 0.5);
                let offset = tape.constant(Matrix::scalar(-0.5 * n));
                let var_term = tape.add(shifted, offset)?;
                term = tape.add(term, var_term)?;
            }
            layer_sum += tape.value(term).item();
            total = Some(match total {
                Some(t) => tape.add(t, term)?,
                None => term,
            });
        }
        per_layer.push(layer_sum);
    }
    Ok((total, per_layer))
}

/// Indicator of positive entries.
pub fn binarize(adj: &Matrix) -> Matrix {
    adj.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

/// Pairs encoder input `l` with decoder output `L - 1 - l` (0-based) and
/// sums `λ_X · MSE` on features and `λ_A · BCE` with logits on adjacency.
/// Terms with zero weight are left off the tape.
pub fn global_reconstruction(
    tape: &mut Tape,
    enc: &EncoderCache,
    dec: &DecoderCache,
    weights: LossWeights,
) -> Result<(Option<Var>, Vec<f64>, Vec<f64>)> {
    let depth = enc.layers.len();
    if dec.layers.len() != depth {
        return Err(Error::Config(format!(
            "encoder depth {depth} differs from decoder depth {}",
            dec.layers.len()
        )));
    }
    let mut total: Option<Var> = None;
    let mut feat = Vec::with_capacity(depth);
    let mut stru = Vec::with_capacity(depth);
    for (l, e) in enc.layers.iter().enumerate() {
        let d = &dec.layers[depth - 1 - l];
        let (xs, xr) = (tape.shape(e.x_in), tape.shape(d.x_out));
        if xs != xr {
            return Err(Error::Shape {
                op: "feature reconstruction pairing",
                left: xs,
                right: xr,
            });
        }
        let mut add = |tape: &mut Tape, v: Var| -> Result<()> {
            total = Some(match total {
                Some(t) => tape.add(t, v)?,
                None => v,
            });
            Ok(())
        };
        if weights.feature != 0.0 {
            let mse = tape.mse(d.x_out, e.x_in)?;
            let term = tape.scale(mse, weights.feature);
            feat.push(tape.value(term).item());
            add(tape, term)?;
        } else {
            feat.push(0.0);
        }
        if weights.structure != 0.0 {
            let target = Arc::new(binarize(tape.value(e.adj_in)));
            let bce = tape.bce_with_logits(d.adj_out, target)?;
            let term = tape.scale(bce, weights.structure);
            stru.push(tape.value(term).item());
            add(tape, term)?;
        } else {
            stru.push(0.0);
        }
    }
    Ok((total, feat, stru))
}

/// Sum of [`local_kl`] and [`global_reconstruction`].
pub fn total_loss(tape: &mut Tape, enc: &EncoderCache, dec: &DecoderCache, weights: LossWeights) -> Result<LossReport> {
    let (local, local_per_layer) = local_kl(tape, enc)?;
    let (global, feature_per_layer, structure_per_layer) = global_reconstruction(tape, enc, dec, weights)?;
    let zero = |tape: &mut Tape| tape.constant(Matrix::scalar(0.0));
    let local = local.unwrap_or_else(|| zero(tape));
    let global = global.unwrap_or_else(|| zero(tape));
    let var = tape.add(local, global)?;
    Ok(LossReport {
        local: tape.value(local).item(),
        global: tape.value(global).item(),
        total: tape.value(var).item(),
        local_per_layer,
        feature_per_layer,
        structure_per_layer,
        var,
    })
}
