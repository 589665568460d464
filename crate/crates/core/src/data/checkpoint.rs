//! `.bngx` checkpoints.
//!
//! Layout (all integers little-endian):
//! `b"BNGX"`, `u32` version, `u32`-length-prefixed config JSON,
//! `u32`-length-prefixed metadata JSON, `u32` entry count, then per entry a
//! `u16`-length-prefixed name, `u8` role tag, `u8` trainable flag, `u8` rank,
//! `u32` dims and the `f32` values; finally `b"END!"`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::FocalLossConfig;
use crate::network::{build_network, BuildOptions, Model, NetworkConfig};
use crate::params::ParamRole;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"BNGX";
const TRAILER: &[u8; 4] = b"END!";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Meta {
    input_mean: Vec<f64>,
    focal: Option<FocalLossConfig>,
    log_tail: Vec<String>,
}

/// A restored model and the training-log lines saved with it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub log_tail: Vec<String>,
}

fn put_len(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

/// Writes every parameter and running statistic bitwise, the config and
/// the last lines of the training log.
pub fn save_checkpoint(model: &Model<f32>, log_tail: &[String], path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_len(&mut out, model.config.to_json()?.as_bytes());
    let meta = Meta { input_mean: model.input_mean.clone(), focal: Some(model.focal), log_tail: log_tail.to_vec() };
    put_len(&mut out, serde_json::to_string(&meta)?.as_bytes());
    out.extend_from_slice(&(model.store.len() as u32).to_le_bytes());
    for e in model.store.iter() {
        out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.push(e.role.tag());
        out.push(e.trainable as u8);
        out.push(e.value.rank() as u8);
        for &d in e.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in e.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(TRAILER);
    std::fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::CheckpointTruncated(format!("file ends inside {what} at byte {}", self.pos))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn text(&mut self, what: &str) -> Result<&'a str> {
        let n = self.u32(what)? as usize;
        std::str::from_utf8(self.take(n, what)?).map_err(|_| Error::CheckpointTruncated(format!("{what} is not UTF-8")))
    }
}

/// Restores a model; nothing is returned unless every entry of the rebuilt
/// architecture was read with a matching role and shape.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::CheckpointTruncated("missing BNGX magic".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
    }
    let config = NetworkConfig::from_json(r.text("config")?)?;
    let meta: Meta = serde_json::from_str(r.text("metadata")?)?;
    let opts = BuildOptions { seed: 0, focal: meta.focal.unwrap_or_default() };
    let mut model: Model<f32> = build_network(&config, &opts)?;
    let count = r.u32("entry count")? as usize;
    if count != model.store.len() {
        return Err(Error::CheckpointParam {
            name: "*".into(),
            detail: format!("{count} entries stored, architecture has {}", model.store.len()),
        });
    }
    for _ in 0..count {
        let n = r.u16("entry name")? as usize;
        let name = std::str::from_utf8(r.take(n, "entry name")?)
            .map_err(|_| Error::CheckpointTruncated("entry name is not UTF-8".into()))?
            .to_string();
        let tag = r.u8("role")?;
        let trainable = r.u8("trainable flag")? != 0;
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("shape")? as usize);
        }
        let entry = model.store.entry_mut(&name).map_err(|_| Error::CheckpointParam {
            name: name.clone(),
            detail: "not part of the architecture".into(),
        })?;
        let role = ParamRole::from_tag(tag);
        if role != Some(entry.role) {
            return Err(Error::CheckpointParam { name, detail: format!("role tag {tag} does not match {:?}", entry.role) });
        }
        if shape != entry.value.shape() {
            return Err(Error::CheckpointParam {
                name,
                detail: format!("stored shape {shape:?}, expected {:?}", entry.value.shape()),
            });
        }
        let raw = r.take(4 * entry.value.len(), "parameter data")?;
        for (v, chunk) in entry.value.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
        entry.trainable = trainable;
    }
    if r.take(4, "trailer")? != TRAILER || r.pos != bytes.len() {
        return Err(Error::CheckpointTruncated("bad trailer".into()));
    }
    if meta.input_mean.len() == config.input[2] {
        model.input_mean = meta.input_mean;
    }
    Ok(Checkpoint { model, log_tail: meta.log_tail })
}

/// [`load_checkpoint`] that also insists on the stored architecture.
pub fn load_checkpoint_as(path: impl AsRef<Path>, expected: &NetworkConfig) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if ck.model.config.name != expected.name || ck.model.config.stages != expected.stages {
        return Err(Error::CheckpointConfigMismatch { expected: expected.name.clone(), found: ck.model.config.name });
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::table2_config;

    fn model() -> Model<f32> {
        let cfg = table2_config("BReG-NeXt-32").unwrap().with_input(8, 8);
        let mut m: Model<f32> = build_network(&cfg, &BuildOptions { seed: 4, ..Default::default() }).unwrap();
        m.store.value_mut("unit01/alpha").unwrap().data_mut()[0] = 0.731;
        m.store.value_mut("unit03/bn2/running_var").unwrap().data_mut()[5] = 2.5;
        m.input_mean = vec![0.1, 0.2, 0.3];
        m
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bngx");
        let m = model();
        save_checkpoint(&m, &["1,0.1".into()], &path).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        for (a, b) in m.store.iter().zip(ck.model.store.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
        assert_eq!(ck.model.input_mean, m.input_mean);
        assert_eq!(ck.log_tail, vec!["1,0.1".to_string()]);
    }

    #[test]
    fn truncation_version_and_config_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bngx");
        save_checkpoint(&model(), &[], &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let cut = dir.path().join("cut.bngx");
        std::fs::write(&cut, &bytes[..bytes.len() - 37]).unwrap();
        assert!(matches!(load_checkpoint(&cut), Err(Error::CheckpointTruncated(_))));

        let mut bumped = bytes.clone();
        bumped[4] = 9;
        std::fs::write(&cut, &bumped).unwrap();
        assert!(matches!(load_checkpoint(&cut), Err(Error::CheckpointVersion { found: 9, .. })));

        let other = table2_config("BReG-NeXt-50").unwrap();
        assert!(matches!(load_checkpoint_as(&path, &other), Err(Error::CheckpointConfigMismatch { .. })));
    }
}
