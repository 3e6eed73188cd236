//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "HCGA"  u32 version  [u8; 32] sha256(config)
//! u64 len, config text (utf-8 key = value lines)
//! u64 epoch  u64 count, f64 loss history
//! u64 tensors, then per tensor: u32 name len, name, u64 rows, u64 cols, f64 data
//! ```

use crate::config::{parse_lines, Settings};
use crate::error::{Error, Result};
use crate::graph::Task;
use crate::matrix::Matrix;
use crate::model::Model;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"HCGA";
pub const VERSION: u32 = 1;

/// A trained model with the settings that produced it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub settings: Settings,
    pub model: Model,
    pub epoch: usize,
    pub history: Vec<f64>,
}

impl Checkpoint {
    /// Settings followed by the dataset facts that fix tensor shapes.
    pub fn config_text(&self) -> String {
        format!(
            "{}input_dim = {}\nmax_nodes = {}\n",
            self.settings.to_text(),
            self.model.spec.input_dim,
            self.model.spec.max_nodes
        )
    }

    pub fn config_digest(&self) -> [u8; 32] {
        Sha256::digest(self.config_text().as_bytes()).into()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let config = self.config_text();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&Sha256::digest(config.as_bytes()));
        out.extend_from_slice(&(config.len() as u64).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        out.extend_from_slice(&(self.history.len() as u64).to_le_bytes());
        for v in &self.history {
            out.extend_from_slice(&v.to_le_bytes());
        }
        write_tensors(&mut out, self.model.store.iter().map(|(_, n, m)| (n, m)));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let digest = r.take(32)?.to_vec();
        let len = r.u64()? as usize;
        let config = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("config is not utf-8".into()))?
            .to_string();
        if Sha256::digest(config.as_bytes()).as_slice() != digest.as_slice() {
            return Err(Error::Checkpoint("config digest mismatch".into()));
        }
        let epoch = r.u64()? as usize;
        let count = r.u64()? as usize;
        let history = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let tensors = read_tensors(&mut r)?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }

        let mut settings = Settings::for_task(Task::Graph);
        let (mut input_dim, mut max_nodes) = (None, None);
        for (_, k, v) in parse_lines(&config)? {
            match k.as_str() {
                "input_dim" => input_dim = v.parse().ok(),
                "max_nodes" => max_nodes = v.parse().ok(),
                _ => settings.apply(&k, &v)?,
            }
        }
        let (Some(input_dim), Some(max_nodes)) = (input_dim, max_nodes) else {
            return Err(Error::Checkpoint("config lacks input_dim or max_nodes".into()));
        };
        let spec = settings.train.model_spec(input_dim, max_nodes);
        let mut model = Model::init(spec, settings.train.seed)?;
        if tensors.len() != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, model layout has {}",
                tensors.len(),
                model.store.len()
            )));
        }
        for (name, value) in tensors {
            let id = model
                .store
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor '{name}'")))?;
            model
                .store
                .set(id, value)
                .map_err(|e| Error::Checkpoint(format!("tensor '{name}': {e}")))?;
        }
        Ok(Self {
            settings,
            model,
            epoch,
            history,
        })
    }

    /// Writes via a temporary file so a failed write never leaves a
    /// truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Appends a tensor count followed by named matrices.
pub fn write_tensors<'a>(out: &mut Vec<u8>, tensors: impl Iterator<Item = (&'a str, &'a Matrix)>) {
    let tensors: Vec<_> = tensors.collect();
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (name, m) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub(crate) fn read_tensors(r: &mut Reader<'_>) -> Result<Vec<(String, Matrix)>> {
    let count = r.u64()? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?
            .to_string();
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?;
        if n.saturating_mul(8) > r.bytes.len() - r.pos {
            return Err(Error::Checkpoint("unexpected end of data".into()));
        }
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        out.push((name, Matrix::new(rows, cols, data)?));
    }
    Ok(out)
}

/// Standalone container of named tensors, as used for embedding export.
pub fn tensors_to_bytes(tensors: &[(String, Matrix)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    write_tensors(&mut out, tensors.iter().map(|(n, m)| (n.as_str(), m)));
    out
}

pub fn tensors_from_bytes(bytes: &[u8]) -> Result<Vec<(String, Matrix)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    read_tensors(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_sbm_corpus, CorpusSpec};
    use crate::train::train;

    fn trained() -> (Checkpoint, crate::Dataset) {
        let ds = make_sbm_corpus(
            &CorpusSpec {
                graphs: 6,
                ..CorpusSpec::default()
            },
            2,
        )
        .unwrap();
        let mut settings = Settings::for_task(Task::Graph);
        settings
            .apply_text("hidden = 6\nencoder_sizes = 5,2\ndecoder_sizes = 2,5\nepochs = 2\nlr = 0.01")
            .unwrap();
        let t = train(&ds, &settings.train).unwrap();
        let ck = Checkpoint {
            settings,
            epoch: t.history.len(),
            history: t.history,
            model: t.model,
        };
        (ck, ds)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (ck, ds) = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.history, ck.history);
        assert_eq!(back.settings, ck.settings);
        for g in &ds.graphs {
            assert_eq!(
                ck.model.graph_embedding(g).unwrap(),
                back.model.graph_embedding(g).unwrap()
            );
        }
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn corruption_detected() {
        let (ck, _) = trained();
        let mut bytes = ck.to_bytes();
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        let mut bytes = ck.to_bytes();
        bytes[50] ^= 1; // inside the config text
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn tensor_container_round_trip() {
        let t = vec![(
            "emb".to_string(),
            Matrix::from_fn(3, 2, |r, c| r as f64 / 3.0 - c as f64),
        )];
        assert_eq!(tensors_from_bytes(&tensors_to_bytes(&t)).unwrap(), t);
    }
}
