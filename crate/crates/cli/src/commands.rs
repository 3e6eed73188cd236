use crate::{Common, DataFormat, ExportFormat};
use anyhow::{bail, Context, Result};
use hcgae::checkpoint::{tensors_to_bytes, Checkpoint};
use hcgae::eval::{
    ablate_soft_encoder, embed_dataset, encoder_oversmoothing, evaluate_model, gcn_reference_features,
    oversmoothing_metric,
};
use hcgae::io::{load_dataset, CitationOptions, Format};
use hcgae::loss::LossWeights;
use hcgae::synth::{make_sbm, make_sbm_corpus, make_sbm_node_dataset, CorpusSpec};
use hcgae::train::train_model;
use hcgae::{Dataset, Model, ModelSpec, Settings, Task, Variant};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Relative-error threshold reported by `diagnose`.
const GRAD_TOL: f64 = 1e-4;

fn load(c: &Common, seed: u64) -> Result<Dataset> {
    let ds = match c.format {
        DataFormat::Sbm => match c.task.unwrap_or(Task::Graph) {
            Task::Graph => make_sbm_corpus(&CorpusSpec::default(), seed)?,
            Task::Node => make_sbm_node_dataset(&[50, 50], 0.3, 0.05, 8, seed)?,
        },
        fmt => {
            let dir = c.dataset.as_ref().context("--dataset is required for this format")?;
            let format = if fmt == DataFormat::Tu {
                Format::Tu
            } else {
                Format::Citation
            };
            let opts = CitationOptions {
                skip_unknown_edges: c.skip_dangling_edges,
            };
            load_dataset(dir, format, opts).with_context(|| format!("loading {}", dir.display()))?
        }
    };
    if let Some(task) = c.task {
        if task != ds.task {
            bail!(
                "dataset {} is a {} task, but --task {} was given",
                ds.name,
                ds.task,
                task
            );
        }
    }
    Ok(ds)
}

/// Task defaults, then the config file, then flags.
fn settings_for(c: &Common, task: Task) -> Result<Settings> {
    let mut s = Settings::for_task(task);
    if let Some(path) = &c.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        s.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    apply_flags(c, &mut s)?;
    Ok(s)
}

fn apply_flags(c: &Common, s: &mut Settings) -> Result<()> {
    if let Some(seed) = c.seed {
        s.apply("seed", &seed.to_string())?;
    }
    if let Some(e) = c.epochs {
        s.train.epochs = e;
    }
    if let Some(lr) = c.lr {
        s.train.lr = lr;
    }
    if let Some(v) = c.variant {
        s.train.variant = v;
    }
    if let Some(f) = c.folds {
        s.eval.folds = f;
    }
    for kv in &c.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
        s.apply(k.trim(), v.trim())?;
    }
    for w in s.train.validate()? {
        log::info!("{w}");
    }
    Ok(())
}

fn out_dir(c: &Common) -> Result<&Path> {
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok(&c.out)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_resolved(dir: &Path, c: &Common, ds: &Dataset, s: &Settings) -> Result<()> {
    let mut text = format!("# dataset {} ({} task, {:?} format", ds.name, ds.task, c.format);
    if let Some(d) = &c.dataset {
        let _ = write!(text, ", {}", d.display());
    }
    text.push_str(")\n");
    text.push_str(&s.to_text());
    write(&dir.join("resolved-config"), text)
}

fn loss_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(s, "{},{l}", i + 1);
    }
    s
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Trains from scratch and persists the checkpoint and loss log.
fn train_and_save(dir: &Path, ds: &Dataset, s: &Settings) -> Result<Checkpoint> {
    let spec = s.train.model_spec(ds.feature_dim(), ds.max_nodes());
    let model = Model::init(spec, s.train.seed)?;
    log::info!("{} parameters", model.param_count());
    let trained = train_model(model, ds, &s.train)?;
    let ck = Checkpoint {
        settings: s.clone(),
        model: trained.model,
        epoch: trained.history.len(),
        history: trained.history,
    };
    ck.save(&dir.join("model.ckpt"))?;
    write(&dir.join("loss.csv"), loss_csv(&ck.history))?;
    Ok(ck)
}

/// Loads `--checkpoint` if given, otherwise trains. Evaluation flags
/// still apply to a loaded checkpoint; architecture flags must agree.
fn obtain(c: &Common, dir: &Path, ds: &Dataset) -> Result<Checkpoint> {
    let Some(path) = &c.checkpoint else {
        let s = settings_for(c, ds.task)?;
        write_resolved(dir, c, ds, &s)?;
        return train_and_save(dir, ds, &s);
    };
    let mut ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(v) = c.variant {
        if v != ck.model.spec.variant {
            bail!(
                "checkpoint holds a {} model, but --variant {v} was given",
                ck.model.spec.variant
            );
        }
    }
    if ds.feature_dim() != ck.model.spec.input_dim {
        bail!(
            "checkpoint expects {} input features, dataset {} has {}",
            ck.model.spec.input_dim,
            ds.name,
            ds.feature_dim()
        );
    }
    if let Some(f) = c.folds {
        ck.settings.eval.folds = f;
    }
    if let Some(seed) = c.seed {
        ck.settings.eval.seed = seed;
    }
    write_resolved(dir, c, ds, &ck.settings)?;
    Ok(ck)
}

fn dataset_seed(c: &Common) -> u64 {
    c.seed.unwrap_or(0)
}

pub fn train(c: &Common) -> Result<()> {
    if c.checkpoint.is_some() {
        bail!("train always starts from a fresh initialization; drop --checkpoint");
    }
    let ds = load(c, dataset_seed(c))?;
    let dir = out_dir(c)?;
    let s = settings_for(c, ds.task)?;
    write_resolved(dir, c, &ds, &s)?;
    let ck = train_and_save(dir, &ds, &s)?;
    match ck.history.last() {
        Some(l) => println!("final loss {l:.6} after {} epochs", ck.history.len()),
        None => println!("no epochs run; checkpoint holds the initialization"),
    }
    Ok(())
}

pub fn eval(c: &Common) -> Result<()> {
    let ds = load(c, dataset_seed(c))?;
    let dir = out_dir(c)?;
    let ck = obtain(c, dir, &ds)?;
    let result = evaluate_model(&ck.model, &ds, &ck.settings.eval, &hex(&ck.config_digest()))?;
    let table = result.to_csv();
    write(&dir.join("results.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn embeddings_csv(x: &hcgae::Matrix) -> String {
    let mut s = String::from("id");
    for j in 0..x.cols() {
        let _ = write!(s, ",dim{j}");
    }
    s.push('\n');
    for i in 0..x.rows() {
        let _ = write!(s, "{i}");
        for v in x.row(i) {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn export(c: &Common, format: ExportFormat) -> Result<()> {
    let ds = load(c, dataset_seed(c))?;
    let dir = out_dir(c)?;
    let ck = obtain(c, dir, &ds)?;
    let (x, _) = embed_dataset(&ck.model, &ds)?;
    let path = match format {
        ExportFormat::Csv => {
            let p = dir.join("embeddings.csv");
            write(&p, embeddings_csv(&x))?;
            p
        }
        ExportFormat::Bin => {
            let p = dir.join("embeddings.bin");
            write(&p, tensors_to_bytes(&[("embeddings".to_string(), x.clone())]))?;
            p
        }
    };
    println!("{} rows of width {} written to {}", x.rows(), x.cols(), path.display());
    Ok(())
}

/// Small model whose gradients are checked against finite differences.
fn gradcheck_spec(variant: Variant) -> ModelSpec {
    ModelSpec {
        input_dim: 3,
        hidden: 5,
        encoder_sizes: vec![4, 2],
        decoder_sizes: vec![2, 4],
        max_nodes: 6,
        variant,
        shared_subgraph_weights: false,
        learn_logvar: false,
        straight_through: false,
        readout: hcgae::nn::Readout::Mean,
    }
}

pub fn diagnose(c: &Common, corrupt: bool) -> Result<()> {
    let dir = out_dir(c)?;
    let seed = dataset_seed(c);
    let (g, s, model) = if c.dataset.is_some() || c.format != DataFormat::Sbm {
        let ds = load(c, seed)?;
        let ck = obtain(c, dir, &ds)?;
        (ds.graphs[0].clone(), ck.settings, ck.model)
    } else {
        let g = make_sbm(&[50, 50], 0.3, 0.05, 8, seed)?;
        let s = settings_for(c, Task::Graph)?;
        let model = Model::init(s.train.model_spec(g.feature_dim(), g.n()), s.train.seed)?;
        (g, s, model)
    };

    let hc = encoder_oversmoothing(&model, &g)?;
    let gcn = oversmoothing_metric(&gcn_reference_features(&g, s.train.hidden, hc.len(), s.train.seed)?);
    let mut report =
        String::from("# mean pairwise cosine similarity of node features per layer\nmodel,layer,similarity\n");
    for (name, sims) in [(model.spec.variant.to_string(), &hc), ("gcn".to_string(), &gcn)] {
        for (l, v) in sims.iter().enumerate() {
            let _ = writeln!(report, "{name},{},{v:.6}", l + 1);
        }
    }

    let small = make_sbm(&[3, 3], 0.8, 0.2, 3, seed)?;
    let probe = Model::init(gradcheck_spec(model.spec.variant), seed)?;
    let fault = corrupt.then_some(hcgae::autodiff::GradientFault::MatMulLeft);
    let check = probe.gradient_check(&small, LossWeights::default(), fault)?;
    let status = if check.passed() { "pass" } else { "fail" };
    let _ = write!(
        report,
        "\n# gradient check against central differences\nparameters,{}\nmax_relative_error,{:.3e}\ntolerance,{GRAD_TOL:e}\nstatus,{status}\n",
        check.params.len(),
        check.max_rel_error(),
    );
    write(&dir.join("diagnose.txt"), &report)?;
    print!("{report}");
    Ok(())
}

pub fn ablate(c: &Common) -> Result<()> {
    if c.checkpoint.is_some() {
        bail!("ablate trains both variants itself; drop --checkpoint");
    }
    let ds = load(c, dataset_seed(c))?;
    let dir = out_dir(c)?;
    let s = settings_for(c, ds.task)?;
    write_resolved(dir, c, &ds, &s)?;
    let (hc, se) = ablate_soft_encoder(&ds, &s.train, &s.eval)?;
    let mut table = hc.to_csv();
    table.extend(se.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
    write(&dir.join("ablation.csv"), &table)?;
    print!("{table}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_floats_keep_seventeen_digits() {
        let x = hcgae::Matrix::from_rows(&[[0.1, -1.0 / 3.0]]).unwrap();
        let text = embeddings_csv(&x);
        let row = text.lines().nth(1).unwrap();
        let vals: Vec<f64> = row.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals, vec![0.1, -1.0 / 3.0]);
    }

    #[test]
    fn loss_log_layout() {
        assert_eq!(loss_csv(&[2.5, 1.25]), "epoch,loss\n1,2.5\n2,1.25\n");
    }
}
