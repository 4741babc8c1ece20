//! Versioned binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "RPKGCKPT"
//! version    u32
//! meta       u32 count, then per entry: key len u32, key bytes,
//!                                        value len u32, value bytes
//! relations  u32 count, then per name: len u32, utf-8 bytes
//! params     u32 count, then per param: name len u32, name bytes,
//!            rows u64, cols u64, rows*cols f64 values (raw bits)
//! ```
//!
//! Floats are stored bit-exactly, so save/load round-trips are exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::matrix::Matrix;
use super::params::ParamStore;
use super::TensorError;

const MAGIC: &[u8; 8] = b"RPKGCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Header contents: free-form config echo plus the relation vocabulary the
/// parameters were trained against.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointHeader {
    pub meta: Vec<(String, String)>,
    pub relation_names: Vec<String>,
}

impl CheckpointHeader {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn save(
    path: &Path,
    header: &CheckpointHeader,
    store: &ParamStore,
) -> Result<(), TensorError> {
    let file = File::create(path).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| -> Result<(), TensorError> {
        w.write_all(bytes)
            .map_err(|e| TensorError::Checkpoint(e.to_string()))
    };

    write(MAGIC)?;
    write(&FORMAT_VERSION.to_le_bytes())?;

    write(&(header.meta.len() as u32).to_le_bytes())?;
    for (k, v) in &header.meta {
        write(&(k.len() as u32).to_le_bytes())?;
        write(k.as_bytes())?;
        write(&(v.len() as u32).to_le_bytes())?;
        write(v.as_bytes())?;
    }

    write(&(header.relation_names.len() as u32).to_le_bytes())?;
    for name in &header.relation_names {
        write(&(name.len() as u32).to_le_bytes())?;
        write(name.as_bytes())?;
    }

    write(&(store.len() as u32).to_le_bytes())?;
    for id in store.ids() {
        let name = store.name(id);
        let value = store.value(id);
        write(&(name.len() as u32).to_le_bytes())?;
        write(name.as_bytes())?;
        write(&(value.rows() as u64).to_le_bytes())?;
        write(&(value.cols() as u64).to_le_bytes())?;
        for &v in value.as_slice() {
            write(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| TensorError::Checkpoint(e.to_string()))
}

pub fn load(path: &Path) -> Result<(CheckpointHeader, ParamStore), TensorError> {
    let file = File::open(path).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(TensorError::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }

    let meta_count = read_u32(&mut r)? as usize;
    let mut meta = Vec::with_capacity(meta_count);
    for _ in 0..meta_count {
        let key = read_string(&mut r)?;
        let value = read_string(&mut r)?;
        meta.push((key, value));
    }

    let rel_count = read_u32(&mut r)? as usize;
    let mut relation_names = Vec::with_capacity(rel_count);
    for _ in 0..rel_count {
        relation_names.push(read_string(&mut r)?);
    }

    let param_count = read_u32(&mut r)? as usize;
    let mut store = ParamStore::new();
    for _ in 0..param_count {
        let name = read_string(&mut r)?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let mut data = vec![0.0f64; rows * cols];
        for v in &mut data {
            let mut buf = [0u8; 8];
            read_exact(&mut r, &mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        store.add(&name, Matrix::from_vec(rows, cols, data)?);
    }

    Ok((
        CheckpointHeader {
            meta,
            relation_names,
        },
        store,
    ))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), TensorError> {
    r.read_exact(buf)
        .map_err(|e| TensorError::Checkpoint(format!("truncated checkpoint: {e}")))
}

fn read_u32(r: &mut impl Read) -> Result<u32, TensorError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, TensorError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_string(r: &mut impl Read) -> Result<String, TensorError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(TensorError::Checkpoint(format!(
            "implausible string length {len}"
        )));
    }
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|e| TensorError::Checkpoint(e.to_string()))
}
