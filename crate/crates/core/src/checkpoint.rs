//! Binary checkpoint format for trained models.
//!
//! Layout: `b"HYBL"` magic, a `u32` format version, a length-prefixed JSON
//! header (scalar width, free-form model metadata, and the parameter table),
//! then the raw little-endian values in header order. Parameters are matched
//! back by name, so the save order never matters to a loader.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Param;
use crate::scalar::{Scalar, ScalarWidth};

const MAGIC: &[u8; 4] = b"HYBL";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    scalar: String,
    model: serde_json::Value,
    params: Vec<EntryMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryMeta {
    name: String,
    shape: Vec<usize>,
}

/// One named tensor recovered from a checkpoint file.
#[derive(Debug, Clone)]
pub struct Entry<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Debug)]
pub struct Checkpoint<T> {
    /// Free-form model metadata (kind, dimensions, curvature, vocabulary
    /// sizes …) as written by the trainer.
    pub model: serde_json::Value,
    pub entries: Vec<Entry<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn entry(&self, name: &str) -> Option<&Entry<T>> {
        self.entries.iter().find(|e| e.name == name)
    }
}

pub fn save<T: Scalar>(
    path: &Path,
    model: &serde_json::Value,
    params: &[&Param<T>],
) -> Result<()> {
    let header = Header {
        scalar: T::WIDTH.name().to_string(),
        model: model.clone(),
        params: params
            .iter()
            .map(|p| EntryMeta {
                name: p.name().to_string(),
                shape: p.shape().to_vec(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Checkpoint(format!("header serialization failed: {e}")))?;

    let data_len: usize = params.iter().map(|p| p.numel()).sum();
    let mut out = Vec::with_capacity(16 + header_json.len() + data_len * T::WIDTH.bytes());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for p in params {
        for &v in p.values() {
            v.write_le(&mut out);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads only the stored scalar width, so a caller can pick the matching
/// [`load`] instantiation without decoding any parameter data.
pub fn stored_scalar(path: &Path) -> Result<ScalarWidth> {
    use std::io::Read;
    let fail = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let mut file = fs::File::open(path)?;
    let mut prefix = [0u8; 16];
    file.read_exact(&mut prefix)
        .map_err(|_| fail("not a checkpoint file (too short)".into()))?;
    if &prefix[..4] != MAGIC {
        return Err(fail("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(prefix[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(fail(format!(
            "format version {version} unsupported (expected {FORMAT_VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(prefix[8..16].try_into().unwrap()) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)
        .map_err(|_| fail("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(&header_bytes).map_err(|e| fail(format!("bad header JSON: {e}")))?;
    match header.scalar.as_str() {
        "f32" => Ok(ScalarWidth::F32),
        "f64" => Ok(ScalarWidth::F64),
        other => Err(fail(format!("unknown scalar width {other:?}"))),
    }
}

pub fn load<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path)?;
    let fail = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));

    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(fail("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(fail(format!(
            "format version {version} unsupported (expected {FORMAT_VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body_start = 16 + header_len;
    if bytes.len() < body_start {
        return Err(fail("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[16..body_start])
        .map_err(|e| fail(format!("bad header JSON: {e}")))?;
    if header.scalar != T::WIDTH.name() {
        return Err(fail(format!(
            "checkpoint stores {} values but {} was requested",
            header.scalar,
            T::WIDTH.name()
        )));
    }

    let width = T::WIDTH.bytes();
    let mut cursor = body_start;
    let mut entries = Vec::with_capacity(header.params.len());
    for meta in header.params {
        let numel: usize = meta.shape.iter().product();
        let end = cursor + numel * width;
        if bytes.len() < end {
            return Err(fail(format!("truncated data for parameter '{}'", meta.name)));
        }
        let data: Vec<T> = bytes[cursor..end]
            .chunks_exact(width)
            .map(T::read_le)
            .collect();
        cursor = end;
        entries.push(Entry {
            name: meta.name,
            shape: meta.shape,
            data,
        });
    }
    if cursor != bytes.len() {
        return Err(fail(format!(
            "{} trailing bytes after the last parameter",
            bytes.len() - cursor
        )));
    }
    Ok(Checkpoint {
        model: header.model,
        entries,
    })
}

/// Copy loaded values into live parameters, matching strictly by name.
/// Every parameter must be present with its exact shape, and every entry
/// must be consumed — silent partial restores hide real bugs.
pub fn restore<T: Scalar>(ckpt: &Checkpoint<T>, params: &mut [&mut Param<T>]) -> Result<()> {
    if ckpt.entries.len() != params.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, model expects {}",
            ckpt.entries.len(),
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let entry = ckpt.entry(p.name()).ok_or_else(|| {
            Error::Checkpoint(format!("checkpoint is missing parameter '{}'", p.name()))
        })?;
        if entry.shape != p.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter '{}' has shape {:?} in the checkpoint but {:?} in the model",
                p.name(),
                entry.shape,
                p.shape()
            )));
        }
        p.set_values(entry.data.clone());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamKind;
    use serde_json::json;

    fn sample_params() -> (Param<f64>, Param<f64>) {
        let emb = Param::new(
            "model.embeddings",
            vec![2, 3],
            vec![0.1, -0.2, 0.3, 1.5, 2.5, -3.5],
            ParamKind::LorentzSpatial,
        );
        let gain = Param::new("model.gain", vec![1], vec![2.5], ParamKind::Euclidean);
        (emb, gain)
    }

    #[test]
    fn save_load_restore_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (emb, gain) = sample_params();
        let meta = json!({"kind": "kg", "dim": 3, "curvature": -1.0});
        save(&path, &meta, &[&emb, &gain]).unwrap();

        let ckpt = load::<f64>(&path).unwrap();
        assert_eq!(ckpt.model["kind"], "kg");
        assert_eq!(ckpt.entries.len(), 2);

        // Restore into fresh parameters declared in a different order.
        let (mut emb2, mut gain2) = sample_params();
        emb2.set_values(vec![0.0; 6]);
        gain2.set_values(vec![0.0]);
        restore(&ckpt, &mut [&mut gain2, &mut emb2]).unwrap();
        assert_eq!(
            emb2.values()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            emb.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "restored values must be bitwise identical"
        );
        assert_eq!(gain2.values(), gain.values());
    }

    #[test]
    fn scalar_width_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (emb, _) = sample_params();
        save(&path, &json!({}), &[&emb]).unwrap();
        let err = load::<f32>(&path).unwrap_err();
        assert!(
            err.to_string().contains("f64"),
            "should name the stored width: {err}"
        );
        assert_eq!(
            stored_scalar(&path).unwrap(),
            ScalarWidth::F64,
            "the header peek should report the stored width"
        );
    }

    #[test]
    fn corrupt_inputs_are_descriptive_errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad_magic = dir.path().join("junk.ckpt");
        std::fs::write(&bad_magic, b"not a checkpoint at all").unwrap();
        assert!(load::<f64>(&bad_magic)
            .unwrap_err()
            .to_string()
            .contains("magic"));

        let (emb, _) = sample_params();
        let truncated = dir.path().join("short.ckpt");
        save(&truncated, &json!({}), &[&emb]).unwrap();
        let mut bytes = std::fs::read(&truncated).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&truncated, &bytes).unwrap();
        assert!(load::<f64>(&truncated)
            .unwrap_err()
            .to_string()
            .contains("truncated"));
    }

    #[test]
    fn restore_rejects_name_and_shape_mismatches() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (emb, gain) = sample_params();
        save(&path, &json!({}), &[&emb, &gain]).unwrap();
        let ckpt = load::<f64>(&path).unwrap();

        let mut renamed = Param::new("other.name", vec![2, 3], vec![0.0; 6], ParamKind::Euclidean);
        let (_, mut gain2) = sample_params();
        let err = restore(&ckpt, &mut [&mut renamed, &mut gain2]).unwrap_err();
        assert!(err.to_string().contains("other.name"), "{err}");

        let mut reshaped = Param::new(
            "model.embeddings",
            vec![3, 2],
            vec![0.0; 6],
            ParamKind::Euclidean,
        );
        let err = restore(&ckpt, &mut [&mut reshaped, &mut gain2]).unwrap_err();
        assert!(err.to_string().contains("shape"), "{err}");
    }
}
