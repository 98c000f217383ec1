//! Checkpoint serialization.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "BWEX"
//! version u32      currently 1
//! u32 parameter record count, then that many records
//! u32 optimizer record count, then that many records
//!
//! record: u32 name length, UTF-8 name bytes,
//!         u32 rank, rank x u32 dims,
//!         prod(dims) x f32 little-endian payload
//! ```
//!
//! The parameter section holds every store entry (parameters and buffers) in
//! registration order. The optimizer section holds, per trainable parameter,
//! `<name>#m`, `<name>#v` with the parameter's dims and `<name>#step` as a
//! single-element record.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::store::ParamStore;
use super::NnError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BWEX";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> NnError {
    NnError::CheckpointIo {
        path: path.to_path_buf(),
        source,
    }
}

fn write_record<W: Write>(
    w: &mut W,
    name: &str,
    dims: &[usize],
    data: &[f32],
) -> std::io::Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct Record {
    name: String,
    dims: Vec<usize>,
    data: Vec<f32>,
}

fn read_record<R: Read>(r: &mut R) -> Result<Record, NnError> {
    let corrupt = |m: &str| NnError::CorruptCheckpoint(m.to_string());
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)
        .map_err(|_| corrupt("truncated record header"))?;
    let name_len = u32::from_le_bytes(u32buf) as usize;
    if name_len > 4096 {
        return Err(corrupt("implausible name length"));
    }
    let mut name_bytes = vec![0u8; name_len];
    r.read_exact(&mut name_bytes)
        .map_err(|_| corrupt("truncated name"))?;
    let name = String::from_utf8(name_bytes).map_err(|_| corrupt("name is not UTF-8"))?;
    r.read_exact(&mut u32buf)
        .map_err(|_| corrupt("truncated rank"))?;
    let rank = u32::from_le_bytes(u32buf) as usize;
    if rank > 8 {
        return Err(corrupt("implausible rank"));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut u32buf)
            .map_err(|_| corrupt("truncated dims"))?;
        dims.push(u32::from_le_bytes(u32buf) as usize);
    }
    let numel: usize = dims.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        r.read_exact(&mut u32buf)
            .map_err(|_| corrupt("truncated payload"))?;
        data.push(f32::from_le_bytes(u32buf));
    }
    Ok(Record { name, dims, data })
}

/// Writes all parameters, buffers, and optimizer state to `path`.
pub fn save_checkpoint(store: &ParamStore<f32>, path: &Path) -> Result<(), NnError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut run = || -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(store.len() as u32).to_le_bytes())?;
        for p in store.iter() {
            write_record(&mut w, &p.name, &p.dims, &p.data)?;
        }
        let trainable: Vec<_> = store.iter().filter(|p| p.trainable).collect();
        w.write_all(&((trainable.len() * 3) as u32).to_le_bytes())?;
        for p in trainable {
            let (m, v, step) = p.adam_state();
            write_record(&mut w, &format!("{}#m", p.name), &p.dims, m)?;
            write_record(&mut w, &format!("{}#v", p.name), &p.dims, v)?;
            write_record(&mut w, &format!("{}#step", p.name), &[1], &[step as f32])?;
        }
        w.flush()
    };
    run().map_err(|e| io_err(path, e))
}

/// Loads a checkpoint into a store that already has the same parameters
/// registered (same names and dims), e.g. a freshly built model.
pub fn load_checkpoint(store: &mut ParamStore<f32>, path: &Path) -> Result<(), NnError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| NnError::BadMagic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NnError::BadMagic);
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)
        .map_err(|_| NnError::CorruptCheckpoint("truncated version".into()))?;
    let version = u32::from_le_bytes(u32buf);
    if version != CHECKPOINT_VERSION {
        return Err(NnError::BadVersion(version));
    }

    r.read_exact(&mut u32buf)
        .map_err(|_| NnError::CorruptCheckpoint("truncated record count".into()))?;
    let n_params = u32::from_le_bytes(u32buf) as usize;
    if n_params != store.len() {
        return Err(NnError::CorruptCheckpoint(format!(
            "checkpoint has {n_params} parameters, store has {}",
            store.len()
        )));
    }
    for _ in 0..n_params {
        let rec = read_record(&mut r)?;
        let id = store
            .by_name(&rec.name)
            .ok_or_else(|| NnError::UnknownParam(rec.name.clone()))?;
        let p = store.get_mut(id);
        if p.dims != rec.dims {
            return Err(NnError::DimsMismatch {
                name: rec.name,
                expected: p.dims.clone(),
                got: rec.dims,
            });
        }
        p.data = rec.data;
    }

    r.read_exact(&mut u32buf)
        .map_err(|_| NnError::CorruptCheckpoint("truncated optimizer count".into()))?;
    let n_opt = u32::from_le_bytes(u32buf) as usize;
    for _ in 0..n_opt {
        let rec = read_record(&mut r)?;
        let (base, kind) = rec
            .name
            .rsplit_once('#')
            .ok_or_else(|| NnError::CorruptCheckpoint(format!("bad optimizer record {}", rec.name)))?;
        let id = store
            .by_name(base)
            .ok_or_else(|| NnError::UnknownParam(base.to_string()))?;
        let p = store.get_mut(id);
        match kind {
            "m" | "v" => {
                if rec.dims != p.dims {
                    return Err(NnError::DimsMismatch {
                        name: rec.name,
                        expected: p.dims.clone(),
                        got: rec.dims,
                    });
                }
                let (m, v, step) = p.adam_state();
                let (mut m, mut v, step) = (m.to_vec(), v.to_vec(), step);
                if kind == "m" {
                    m = rec.data;
                } else {
                    v = rec.data;
                }
                p.set_adam_state(m, v, step);
            }
            "step" => {
                let (m, v, _) = p.adam_state();
                let (m, v) = (m.to_vec(), v.to_vec());
                let step = rec.data.first().copied().unwrap_or(0.0) as u64;
                p.set_adam_state(m, v, step);
            }
            other => {
                return Err(NnError::CorruptCheckpoint(format!(
                    "unknown optimizer record kind {other}"
                )))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AdamConfig;

    fn demo_store() -> ParamStore<f32> {
        let mut store = ParamStore::new();
        store
            .register("layer.w", &[2, 1, 3], vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6], true)
            .unwrap();
        store.register("layer.b", &[2], vec![0.0, 0.25], true).unwrap();
        store
            .register("bn.running_mean", &[2], vec![1.5, -1.5], false)
            .unwrap();
        store
    }

    #[test]
    fn save_load_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut store = demo_store();
        // Take a couple of ADAM steps so the optimizer state is nontrivial.
        for _ in 0..3 {
            store.zero_grads();
            let id = store.by_name("layer.w").unwrap();
            store.accumulate_grad(id, &[0.1, 0.2, -0.1, 0.0, 0.3, -0.2]);
            let id = store.by_name("layer.b").unwrap();
            store.accumulate_grad(id, &[0.05, -0.05]);
            store.adam_step(&AdamConfig::with_lr(0.01)).unwrap();
        }
        save_checkpoint(&store, &path).unwrap();

        let mut restored = demo_store();
        load_checkpoint(&mut restored, &path).unwrap();
        for (a, b) in store.iter().zip(restored.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.data, b.data, "param {} drifted", a.name);
            assert_eq!(a.adam_state(), b.adam_state(), "opt state {}", a.name);
        }
    }

    #[test]
    fn saved_files_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let store = demo_store();
        save_checkpoint(&store, &p1).unwrap();
        save_checkpoint(&store, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOPE0000").unwrap();
        let mut store = demo_store();
        assert!(matches!(
            load_checkpoint(&mut store, &path),
            Err(NnError::BadMagic)
        ));
    }

    #[test]
    fn dims_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&demo_store(), &path).unwrap();
        let mut other = ParamStore::new();
        other
            .register("layer.w", &[3, 1, 2], vec![0.0; 6], true)
            .unwrap();
        other.register("layer.b", &[2], vec![0.0; 2], true).unwrap();
        other
            .register("bn.running_mean", &[2], vec![0.0; 2], false)
            .unwrap();
        assert!(matches!(
            load_checkpoint(&mut other, &path),
            Err(NnError::DimsMismatch { .. })
        ));
    }
}
