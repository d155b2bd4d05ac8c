//! Self-describing binary checkpoints.
//!
//! Layout, all integers little endian:
//!
//! ```text
//! "SVQA"  magic
//! u32     format version (1)
//! u32     tensor count
//! per tensor:
//!   u32   name length, then that many UTF-8 bytes
//!   u8    rank, then rank u64 extents
//!   f32   values, row major
//! u32     config text length, then that many UTF-8 bytes
//! ```
//!
//! The trailing config snapshot carries every resolved setting plus the
//! vocabulary line, so a checkpoint alone is enough to rebuild the model.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autograd::ParamSet;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SVQA";
const VERSION: u32 = 1;

fn io_at(path: &Path, e: std::io::Error) -> Error {
    Error::io_at(path.display().to_string(), e)
}

pub struct LoadedCheckpoint {
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
    pub config_text: String,
}

pub fn save_checkpoint(path: &Path, params: &ParamSet, config_text: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| io_at(path, e))?;
    let mut w = BufWriter::new(file);
    let mut out = || -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(params.len() as u32).to_le_bytes())?;
        for (_, p) in params.iter() {
            let name = p.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&[p.tensor.rank() as u8])?;
            for &e in p.tensor.shape() {
                w.write_all(&(e as u64).to_le_bytes())?;
            }
            for &v in p.tensor.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        let cfg = config_text.as_bytes();
        w.write_all(&(cfg.len() as u32).to_le_bytes())?;
        w.write_all(cfg)?;
        w.flush()
    };
    out().map_err(|e| io_at(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    let file = File::open(path).map_err(|e| io_at(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));

    let mut magic = [0u8; 4];
    read_exact(&mut r, path, &mut magic)?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r, path)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r, path)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r, path)? as usize;
        let mut name = vec![0u8; name_len];
        read_exact(&mut r, path, &mut name)?;
        let name = String::from_utf8(name).map_err(|e| bad(format!("tensor name: {e}")))?;
        let mut rank = [0u8; 1];
        read_exact(&mut r, path, &mut rank)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            let mut e = [0u8; 8];
            read_exact(&mut r, path, &mut e)?;
            shape.push(u64::from_le_bytes(e) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 4];
        for _ in 0..numel {
            read_exact(&mut r, path, &mut buf)?;
            data.push(f32::from_le_bytes(buf));
        }
        tensors.push((name, shape, data));
    }
    let cfg_len = read_u32(&mut r, path)? as usize;
    let mut cfg = vec![0u8; cfg_len];
    read_exact(&mut r, path, &mut cfg)?;
    let config_text = String::from_utf8(cfg).map_err(|e| bad(format!("config text: {e}")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| io_at(path, e))? != 0 {
        return Err(bad("trailing bytes after config text".into()));
    }
    Ok(LoadedCheckpoint {
        tensors,
        config_text,
    })
}

/// Copy checkpoint values into a parameter set built from the same config.
/// Every stored tensor must exist with the same shape, and every parameter
/// must be covered.
pub fn apply_checkpoint(params: &mut ParamSet, ck: &LoadedCheckpoint) -> Result<()> {
    if ck.tensors.len() != params.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} tensors, model has {} parameters",
            ck.tensors.len(),
            params.len()
        )));
    }
    for (name, shape, data) in &ck.tensors {
        let id = params
            .by_name(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        if params.tensor(id).shape() != &shape[..] {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: shape {:?} in file, {:?} in model",
                shape,
                params.tensor(id).shape()
            )));
        }
        params.load_values(name, data)?;
    }
    Ok(())
}

/// 64-bit FNV-1a over a file's bytes; used to fingerprint shared
/// initialization checkpoints in ablation reports.
pub fn file_fnv1a(path: &Path) -> Result<u64> {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let file = File::open(path).map_err(|e| io_at(path, e))?;
    let mut r = BufReader::new(file);
    let mut hash = OFFSET;
    let mut buf = [0u8; 8192];
    loop {
        let n = r.read(&mut buf).map_err(|e| io_at(path, e))?;
        if n == 0 {
            break;
        }
        for &b in &buf[..n] {
            hash ^= b as u64;
            hash = hash.wrapping_mul(PRIME);
        }
    }
    Ok(hash)
}

fn read_exact(r: &mut impl Read, path: &Path, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Checkpoint(format!("{}: truncated file", path.display()))
        } else {
            io_at(path, e)
        }
    })
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, path, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
