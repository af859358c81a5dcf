//! Checkpoint container: an 8-byte magic, a little-endian u64 header length,
//! a self-describing JSON header (format version, kind, architecture config,
//! schedule constants, parameter index, seed, optional optimizer state), and
//! raw little-endian f32 payloads. Parameter bytes round-trip exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::params::ParameterSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DGCK0001";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    requires_grad: bool,
    /// Offset into the payload in f32 elements.
    offset: usize,
    len: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct OptEntry {
    name: String,
    shape: Vec<usize>,
    m_offset: usize,
    v_offset: usize,
    len: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct OptHeader {
    step: u64,
    entries: Vec<OptEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    arch: serde_json::Value,
    schedule: Option<NoiseSchedule>,
    seed: Option<u64>,
    params: Vec<ParamEntry>,
    opt: Option<OptHeader>,
}

/// Optimizer moments keyed by parameter name.
#[derive(Clone, Debug, Default)]
pub struct OptState<F: Scalar> {
    pub step: u64,
    pub moments: BTreeMap<String, (Tensor<F>, Tensor<F>)>,
}

/// In-memory checkpoint contents.
#[derive(Clone, Debug)]
pub struct Checkpoint<F: Scalar> {
    pub kind: String,
    pub arch: serde_json::Value,
    pub schedule: Option<NoiseSchedule>,
    pub seed: Option<u64>,
    pub params: ParameterSet<F>,
    pub opt: Option<OptState<F>>,
}

impl<F: Scalar> Checkpoint<F> {
    pub fn arch_as<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_value(self.arch.clone())?)
    }
}

pub fn save_checkpoint<F: Scalar>(path: &Path, ckpt: &Checkpoint<F>) -> Result<()> {
    let mut payload: Vec<f32> = Vec::new();
    let mut params = Vec::new();
    for (name, p) in ckpt.params.iter() {
        let offset = payload.len();
        payload.extend(p.tensor.data().iter().map(|v| v.into_f32()));
        params.push(ParamEntry {
            name: name.clone(),
            shape: p.tensor.shape().to_vec(),
            requires_grad: p.requires_grad,
            offset,
            len: p.tensor.len(),
        });
    }
    let opt = ckpt.opt.as_ref().map(|o| {
        let mut entries = Vec::new();
        for (name, (m, v)) in &o.moments {
            let m_offset = payload.len();
            payload.extend(m.data().iter().map(|x| x.into_f32()));
            let v_offset = payload.len();
            payload.extend(v.data().iter().map(|x| x.into_f32()));
            entries.push(OptEntry {
                name: name.clone(),
                shape: m.shape().to_vec(),
                m_offset,
                v_offset,
                len: m.len(),
            });
        }
        OptHeader {
            step: o.step,
            entries,
        }
    });

    let header = Header {
        format_version: CHECKPOINT_FORMAT_VERSION,
        kind: ckpt.kind.clone(),
        arch: ckpt.arch.clone(),
        schedule: ckpt.schedule.clone(),
        seed: ckpt.seed,
        params,
        opt,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    out.write_all(&header_bytes)?;
    for v in &payload {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<Checkpoint<F>> {
    let mut file = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic).map_err(|_| Error::Parse {
        line: 0,
        message: "checkpoint too short for magic".into(),
    })?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Parse {
            line: 0,
            message: format!("bad checkpoint magic {magic:?}"),
        });
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint format version {}",
            header.format_version
        )));
    }
    let mut payload_bytes = Vec::new();
    file.read_to_end(&mut payload_bytes)?;
    if payload_bytes.len() % 4 != 0 {
        return Err(Error::Parse {
            line: 0,
            message: "payload not a multiple of 4 bytes".into(),
        });
    }
    let payload: Vec<f32> = payload_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let slice = |offset: usize, len: usize| -> Result<Vec<F>> {
        payload
            .get(offset..offset + len)
            .map(|s| s.iter().map(|v| F::from_f32(*v)).collect())
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("payload slice {offset}..{} out of bounds", offset + len),
            })
    };

    let mut params = ParameterSet::new();
    for e in &header.params {
        let tensor = Tensor::new(e.shape.clone(), slice(e.offset, e.len)?)?;
        params.insert(&e.name, tensor, e.requires_grad)?;
    }
    let opt = match header.opt {
        Some(o) => {
            let mut moments = BTreeMap::new();
            for e in &o.entries {
                let m = Tensor::new(e.shape.clone(), slice(e.m_offset, e.len)?)?;
                let v = Tensor::new(e.shape.clone(), slice(e.v_offset, e.len)?)?;
                moments.insert(e.name.clone(), (m, v));
            }
            Some(OptState {
                step: o.step,
                moments,
            })
        }
        None => None,
    };

    Ok(Checkpoint {
        kind: header.kind,
        arch: header.arch,
        schedule: header.schedule,
        seed: header.seed,
        params,
        opt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleShape;
    use crate::rng::RngStream;

    fn sample_checkpoint() -> Checkpoint<f32> {
        let mut rng = RngStream::new(3);
        let mut params = ParameterSet::new();
        params.insert("b.weight", rng.normal_tensor(&[4, 3]), true).unwrap();
        params.insert("a.bias", rng.normal_tensor(&[4]), true).unwrap();
        params.insert("frozen", rng.normal_tensor(&[2]), false).unwrap();
        Checkpoint {
            kind: "denoiser".into(),
            arch: serde_json::json!({"depth": 2}),
            schedule: Some(NoiseSchedule::build(10, 1e-3, 0.2, ScheduleShape::Linear).unwrap()),
            seed: Some(17),
            params,
            opt: None,
        }
    }

    #[test]
    fn byte_exact_roundtrip() {
        let ck = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.ckpt");
        save_checkpoint(&path, &ck).unwrap();
        let loaded = load_checkpoint::<f32>(&path).unwrap();

        // names, shapes, values exact
        assert_eq!(loaded.params.len(), ck.params.len());
        for (name, p) in ck.params.iter() {
            let q = loaded.params.get(name).unwrap();
            assert_eq!(q.tensor.shape(), p.tensor.shape());
            assert_eq!(q.requires_grad, p.requires_grad);
            for (a, b) in q.tensor.data().iter().zip(p.tensor.data().iter()) {
                assert_eq!(a.to_bits(), b.to_bits(), "bitwise value mismatch");
            }
        }
        assert_eq!(loaded.seed, Some(17));
        assert_eq!(loaded.schedule.as_ref().unwrap().n_steps(), 10);

        // re-serialization is byte-identical
        let path2 = dir.path().join("d2.ckpt");
        save_checkpoint(&path2, &loaded).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn optimizer_state_roundtrip() {
        let mut ck = sample_checkpoint();
        let mut rng = RngStream::new(4);
        let mut moments = BTreeMap::new();
        moments.insert(
            "b.weight".to_string(),
            (rng.normal_tensor(&[4, 3]), rng.normal_tensor(&[4, 3])),
        );
        ck.opt = Some(OptState { step: 42, moments });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.ckpt");
        save_checkpoint(&path, &ck).unwrap();
        let loaded = load_checkpoint::<f32>(&path).unwrap();
        let o = loaded.opt.unwrap();
        assert_eq!(o.step, 42);
        assert!(o.moments.contains_key("b.weight"));
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        fs::write(&path, b"DGCK").unwrap();
        assert!(load_checkpoint::<f32>(&path).is_err());
        fs::write(&path, b"NOTMAGIC").unwrap();
        assert!(load_checkpoint::<f32>(&path).is_err());
    }
}
