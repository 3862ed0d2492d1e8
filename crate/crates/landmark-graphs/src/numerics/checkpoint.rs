//! Checkpoint files: a JSON manifest (parameter names, shapes, step
//! counter, config hash, payload digest) followed by each parameter's
//! little-endian f64 payload in manifest order.

use super::{NumericsError, ParamStore, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"LMGCKPT1";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestParam {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    step: u64,
    config_hash: String,
    payload_sha256: String,
    params: Vec<ManifestParam>,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub store: ParamStore,
    pub config_hash: String,
}

fn payload_of(store: &ParamStore) -> Vec<u8> {
    let mut payload = Vec::new();
    for name in store.names().map(str::to_string).collect::<Vec<_>>() {
        let tensor = store.get(&name).unwrap();
        for v in tensor.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    payload
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(
    store: &ParamStore,
    config_hash: &str,
    path: impl AsRef<Path>,
) -> Result<(), NumericsError> {
    let payload = payload_of(store);
    let manifest = Manifest {
        step: store.step(),
        config_hash: config_hash.to_string(),
        payload_sha256: hex(&Sha256::digest(&payload)),
        params: store
            .names()
            .map(|name| ManifestParam {
                name: name.to_string(),
                shape: store.get(name).unwrap().shape().to_vec(),
            })
            .collect(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest)
        .map_err(|e| NumericsError::Checkpoint(format!("manifest serialization: {e}")))?;

    let mut file = std::fs::File::create(path.as_ref())?;
    file.write_all(MAGIC)?;
    file.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&manifest_bytes)?;
    file.write_all(&payload)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, NumericsError> {
    let mut file = std::fs::File::open(path.as_ref())?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NumericsError::Checkpoint("bad magic bytes".into()));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let manifest_len = u64::from_le_bytes(len_bytes) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    file.read_exact(&mut manifest_bytes)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| NumericsError::Checkpoint(format!("manifest parse: {e}")))?;

    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    let digest = hex(&Sha256::digest(&payload));
    if digest != manifest.payload_sha256 {
        return Err(NumericsError::Checkpoint(format!(
            "manifest hash mismatch: payload digest {digest} does not match manifest {}",
            manifest.payload_sha256
        )));
    }

    let mut store = ParamStore::new();
    let mut offset = 0usize;
    for p in &manifest.params {
        let count: usize = p.shape.iter().product();
        let bytes = count * 8;
        if offset + bytes > payload.len() {
            return Err(NumericsError::Checkpoint(format!(
                "payload truncated at parameter {}",
                p.name
            )));
        }
        let data: Vec<f64> = payload[offset..offset + bytes]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += bytes;
        store.insert(&p.name, Tensor::from_vec(&p.shape, data)?);
    }
    if offset != payload.len() {
        return Err(NumericsError::Checkpoint(
            "payload longer than manifest describes".into(),
        ));
    }
    store.set_step(manifest.step);
    Ok(Checkpoint {
        store,
        config_hash: manifest.config_hash,
    })
}
