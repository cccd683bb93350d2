//! Checkpoint container: magic string, JSON manifest (name → shape, dtype,
//! byte offset into the payload), then little-endian raw buffers.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;

pub const MAGIC: &[u8; 7] = b"RSEG3D1";

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
}

/// Save named tensors. `store_f32` trades precision for size; training
/// checkpoints default to full 64-bit storage.
pub fn save<T: Real>(
    path: &Path,
    entries: &BTreeMap<String, Tensor<T>>,
    store_f32: bool,
) -> Result<()> {
    let dtype = if store_f32 { "f32" } else { "f64" };
    let width = if store_f32 { 4 } else { 8 };
    let mut manifest = Vec::with_capacity(entries.len());
    let mut offset = 0u64;
    for (name, t) in entries {
        manifest.push(ManifestEntry {
            name: name.clone(),
            dtype: dtype.to_string(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += (t.len() * width) as u64;
    }
    let manifest_json = serde_json::to_vec(&manifest)
        .map_err(|e| Error::Checkpoint(format!("manifest encode: {e}")))?;

    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(&mut file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(manifest_json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&manifest_json).map_err(io)?;
    for t in entries.values() {
        for x in t.data().iter() {
            if store_f32 {
                w.write_all(&(x.as_f64() as f32).to_le_bytes()).map_err(io)?;
            } else {
                w.write_all(&x.as_f64().to_le_bytes()).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Load a checkpoint into name → (shape, values-as-f64).
pub fn load(path: &Path) -> Result<BTreeMap<String, (Vec<usize>, Vec<f64>)>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let mut pos = MAGIC.len();
    let mlen = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4;
    if bytes.len() < pos + mlen {
        return Err(Error::Checkpoint("truncated manifest".into()));
    }
    let manifest: Vec<ManifestEntry> = serde_json::from_slice(&bytes[pos..pos + mlen])
        .map_err(|e| Error::Checkpoint(format!("manifest decode: {e}")))?;
    pos += mlen;
    let payload = &bytes[pos..];

    let mut out = BTreeMap::new();
    for entry in manifest {
        let n: usize = entry.shape.iter().product();
        let width = match entry.dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => {
                return Err(Error::Checkpoint(format!(
                    "unsupported dtype '{other}' for {}",
                    entry.name
                )))
            }
        };
        let start = entry.offset as usize;
        let end = start + n * width;
        if end > payload.len() {
            return Err(Error::Checkpoint(format!("buffer for {} out of range", entry.name)));
        }
        let mut values = Vec::with_capacity(n);
        for chunk in payload[start..end].chunks_exact(width) {
            let v = if width == 4 {
                f32::from_le_bytes(chunk.try_into().unwrap()) as f64
            } else {
                f64::from_le_bytes(chunk.try_into().unwrap())
            };
            values.push(v);
        }
        out.insert(entry.name, (entry.shape, values));
    }
    Ok(out)
}
