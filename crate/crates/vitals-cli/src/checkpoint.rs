//! Named-tensor checkpoint container.
//!
//! Layout (all integers little-endian): magic `VTCK`, `u32` version, `u32`
//! JSON length + JSON model-config block, then one record per tensor in
//! canonical order — `u32` name length, name bytes, `u32` rank, `u32`
//! extents, `f64` payload — and a trailing CRC32 over everything before it.

use std::collections::BTreeMap;
use std::path::Path;

use vitals_core::autodiff::Tensor;
use vitals_core::model::{init_params, ModelConfig, ModelParams};

use crate::config::ModelSection;
use crate::{read_file, write_file, CliError};

pub const MAGIC: &[u8; 4] = b"VTCK";
pub const VERSION: u32 = 1;

/// Upper bounds that keep a corrupt header from requesting huge allocations.
const MAX_NAME_LEN: u32 = 4096;
const MAX_RANK: u32 = 8;

/// A loaded checkpoint: the configuration it was saved with and its tensors.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
}

fn encode(json: &[u8], tensors: &[(String, &Tensor)]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(json);
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &e in &t.shape {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn save_checkpoint(
    path: &Path,
    cfg: &ModelConfig,
    params: &ModelParams,
) -> Result<(), CliError> {
    let json = serde_json::to_vec(&ModelSection::from_core(cfg)).expect("config serializes");
    let bytes = encode(&json, &params.named());
    write_file(path, &bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CliError> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::format(
                self.path,
                self.bytes.len() as u64,
                format!("truncated while reading {}", what),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CliError> {
        let s = self.take(4, what)?;
        Ok(u32::from_le_bytes(s.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = read_file(path)?;
    if bytes.len() < MAGIC.len() + 4 + 4 + 4 {
        return Err(CliError::format(path, bytes.len() as u64, "file too short"));
    }

    // Integrity first: everything before the trailing CRC32 must hash to it.
    let body_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_len]);
    if stored != computed {
        return Err(CliError::format(
            path,
            body_len as u64,
            format!(
                "checksum mismatch: stored {:#010x}, computed {:#010x} (corrupt checkpoint)",
                stored, computed
            ),
        ));
    }

    let mut r = Reader { bytes: &bytes[..body_len], pos: 0, path };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(CliError::format(path, 0, format!("bad magic {:?}", magic)));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CliError::format(
            path,
            4,
            format!("unsupported version {}, expected {}", version, VERSION),
        ));
    }
    let json_len = r.u32("config length")?;
    let json_offset = r.pos as u64;
    let json = r.take(json_len as usize, "config block")?;
    let section: ModelSection = serde_json::from_slice(json).map_err(|e| {
        CliError::format(path, json_offset, format!("bad embedded config: {}", e))
    })?;
    let config = section.to_core();
    config.validate().map_err(|e| {
        CliError::format(path, json_offset, format!("embedded config invalid: {}", e))
    })?;

    // Tensor records run to the CRC.
    let mut stored_tensors: Vec<(String, Tensor)> = Vec::new();
    while r.pos < body_len {
        let record_offset = r.pos as u64;
        let name_len = r.u32("tensor name length")?;
        if name_len == 0 || name_len > MAX_NAME_LEN {
            return Err(CliError::format(
                path,
                record_offset,
                format!("implausible tensor name length {}", name_len),
            ));
        }
        let name = core::str::from_utf8(r.take(name_len as usize, "tensor name")?)
            .map_err(|_| CliError::format(path, record_offset, "tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32("tensor rank")?;
        if rank == 0 || rank > MAX_RANK {
            return Err(CliError::format(
                path,
                record_offset,
                format!("implausible rank {} for tensor {:?}", rank, name),
            ));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut numel = 1usize;
        for _ in 0..rank {
            let e = r.u32("tensor extent")? as usize;
            numel = numel.checked_mul(e).ok_or_else(|| {
                CliError::format(path, record_offset, format!("extent overflow in {:?}", name))
            })?;
            shape.push(e);
        }
        if numel
            .checked_mul(8)
            .map(|b| r.pos + b > body_len)
            .unwrap_or(true)
        {
            return Err(CliError::format(
                path,
                record_offset,
                format!("tensor {:?} payload exceeds file", name),
            ));
        }
        let payload = r.take(numel * 8, "tensor payload")?;
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        stored_tensors.push((name, Tensor::new(shape, data)));
    }

    // Rebuild the structured parameters: the records must carry exactly the
    // canonical tensors of the embedded config, in canonical order.
    let template = init_params(&config, 0);
    let expected = template.named();
    if stored_tensors.len() != expected.len() {
        return Err(CliError::format(
            path,
            body_len as u64,
            format!(
                "checkpoint holds {} tensors, config implies {}",
                stored_tensors.len(),
                expected.len()
            ),
        ));
    }
    for ((stored_name, stored), (want_name, want)) in stored_tensors.iter().zip(&expected) {
        if stored_name != want_name {
            return Err(CliError::format(
                path,
                body_len as u64,
                format!("tensor {:?} out of order, expected {:?}", stored_name, want_name),
            ));
        }
        if stored.shape != want.shape {
            return Err(CliError::format(
                path,
                body_len as u64,
                format!(
                    "tensor {:?} has shape {:?}, config implies {:?}",
                    stored_name, stored.shape, want.shape
                ),
            ));
        }
    }
    let mut next = stored_tensors.into_iter();
    let params = template
        .try_map::<Tensor, CliError>(&mut |_| Ok(next.next().expect("record count checked").1))?;
    Ok(Checkpoint { config, params })
}

/// Require that a checkpoint's configuration matches the run config's model
/// section, listing every tensor whose shape disagrees.
pub fn require_matching_config(
    ckpt: &ModelConfig,
    expect: &ModelConfig,
) -> Result<(), CliError> {
    if ckpt == expect {
        return Ok(());
    }
    let shapes = |cfg: &ModelConfig| -> BTreeMap<String, Vec<usize>> {
        init_params(cfg, 0)
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.shape.clone()))
            .collect()
    };
    let a = shapes(ckpt);
    let b = shapes(expect);
    // Walk the checkpoint's canonical order so the first-listed tensor is the
    // earliest structural disagreement.
    let mut diffs: Vec<String> = Vec::new();
    for (name, t) in init_params(ckpt, 0).named() {
        match b.get(&name) {
            Some(shape) if *shape == t.shape => {}
            Some(shape) => diffs.push(format!("{} {:?} vs {:?}", name, t.shape, shape)),
            None => diffs.push(format!("{} {:?} vs (absent)", name, t.shape)),
        }
    }
    for name in b.keys() {
        if !a.contains_key(name) {
            diffs.push(format!("{} (absent) vs {:?}", name, b[name]));
        }
    }
    if diffs.is_empty() {
        // Same tensor shapes but different config (e.g. head count): still a
        // different model.
        diffs.push("configs disagree without shape changes (e.g. heads)".to_string());
    }
    let shown = diffs.len().min(6);
    let mut detail = format!(
        "checkpoint config does not fit run config; mismatched tensors: {}",
        diffs[..shown].join("; ")
    );
    if diffs.len() > shown {
        detail.push_str(&format!(" (+{} more)", diffs.len() - shown));
    }
    Err(CliError::Mismatch { detail })
}
