//! Line-oriented `key = value` settings with strict key checking.

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::graph::Task;
use crate::train::TrainConfig;
use std::fmt::Write as _;

/// Training plus evaluation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|t| num(key, t.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl Settings {
    pub fn for_task(task: Task) -> Self {
        Self {
            train: TrainConfig::for_task(task),
            eval: EvalConfig::default(),
        }
    }

    /// Every key understood by [`Settings::apply`].
    pub const KEYS: &'static [&'static str] = &[
        "epochs",
        "hidden",
        "dropout",
        "batch_size",
        "lr",
        "encoder_sizes",
        "decoder_sizes",
        "feature_weight",
        "structure_weight",
        "seed",
        "readout",
        "variant",
        "shared_subgraph_weights",
        "learn_logvar",
        "straight_through",
        "clip_grad_norm",
        "folds",
        "classifier_epochs",
        "classifier_batch_size",
        "classifier_lr",
        "classifier_c",
    ];

    /// Sets one key. Unknown keys are an error.
    pub fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        let e = &mut self.eval;
        match key {
            "epochs" => t.epochs = num(key, v)?,
            "hidden" => t.hidden = num(key, v)?,
            "dropout" => t.dropout = num(key, v)?,
            "batch_size" => t.batch_size = num(key, v)?,
            "lr" => t.lr = num(key, v)?,
            "encoder_sizes" => t.encoder_sizes = list(key, v)?,
            "decoder_sizes" => t.decoder_sizes = list(key, v)?,
            "feature_weight" => t.feature_weight = num(key, v)?,
            "structure_weight" => t.structure_weight = num(key, v)?,
            "seed" => {
                t.seed = num(key, v)?;
                e.seed = t.seed;
            }
            "readout" => t.readout = v.parse()?,
            "variant" => t.variant = v.parse()?,
            "shared_subgraph_weights" => t.shared_subgraph_weights = boolean(key, v)?,
            "learn_logvar" => t.learn_logvar = boolean(key, v)?,
            "straight_through" => t.straight_through = boolean(key, v)?,
            "clip_grad_norm" => {
                t.clip_grad_norm = match v {
                    "none" | "off" => None,
                    _ => Some(num(key, v)?),
                }
            }
            "folds" => e.folds = num(key, v)?,
            "classifier_epochs" => e.classifier.epochs = num(key, v)?,
            "classifier_batch_size" => e.classifier.batch_size = num(key, v)?,
            "classifier_lr" => e.classifier.lr = num(key, v)?,
            "classifier_c" => e.classifier.c = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (line, k, v) in parse_lines(text)? {
            self.apply(&k, &v)
                .map_err(|e| Error::Config(format!("line {line}: {e}")))?;
        }
        Ok(())
    }

    /// All effective values, one `key = value` per line, in a fixed order.
    /// Floats use the shortest representation that parses back exactly.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let e = &self.eval;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("epochs", t.epochs.to_string());
        put("hidden", t.hidden.to_string());
        put("dropout", format!("{:?}", t.dropout));
        put("batch_size", t.batch_size.to_string());
        put("lr", format!("{:?}", t.lr));
        put("encoder_sizes", join(&t.encoder_sizes));
        put("decoder_sizes", join(&t.decoder_sizes));
        put("feature_weight", format!("{:?}", t.feature_weight));
        put("structure_weight", format!("{:?}", t.structure_weight));
        put("seed", t.seed.to_string());
        put("readout", t.readout.to_string());
        put("variant", t.variant.to_string());
        put("shared_subgraph_weights", t.shared_subgraph_weights.to_string());
        put("learn_logvar", t.learn_logvar.to_string());
        put("straight_through", t.straight_through.to_string());
        put(
            "clip_grad_norm",
            t.clip_grad_norm.map_or("none".into(), |c| format!("{c:?}")),
        );
        put("folds", e.folds.to_string());
        put("classifier_epochs", e.classifier.epochs.to_string());
        put("classifier_batch_size", e.classifier.batch_size.to_string());
        put("classifier_lr", format!("{:?}", e.classifier.lr));
        put("classifier_c", format!("{:?}", e.classifier.c));
        s
    }
}
