//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "LDRQNV01" | u32 format_version (=1) | u32 action_count
//! | u32 input_len | u32 input_width | u32 n_convs
//! | per conv: u32 kernel, u32 out_ch, u32 pool
//! | u32 hidden_dim | u64 params_version
//! | u64 value_count | value_count f64 parameter values
//! ```
//!
//! Parameter values follow the flat layout documented on
//! [`super::Layout`]. A JSON sidecar at `<path>.json` carries arbitrary
//! hyperparameters.

use super::{ConvSpec, NetSpec, NetworkParams};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"LDRQNV01";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint is corrupt: {0}")]
    Corrupt(String),
    #[error("sidecar json: {0}")]
    Sidecar(#[from] serde_json::Error),
}

fn write_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Write `params` to `path`, with hyperparameters in `<path>.json`.
pub fn save_checkpoint(
    params: &NetworkParams,
    path: &Path,
    hyperparameters: &serde_json::Value,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, FORMAT_VERSION)?;
    let spec = params.spec();
    write_u32(&mut w, spec.action_count as u32)?;
    write_u32(&mut w, spec.input_len as u32)?;
    write_u32(&mut w, spec.input_width as u32)?;
    write_u32(&mut w, spec.convs.len() as u32)?;
    for c in &spec.convs {
        write_u32(&mut w, c.kernel as u32)?;
        write_u32(&mut w, c.out_ch as u32)?;
        write_u32(&mut w, c.pool as u32)?;
    }
    write_u32(&mut w, spec.hidden_dim as u32)?;
    write_u64(&mut w, params.version())?;
    write_u64(&mut w, params.data().len() as u64)?;
    for v in params.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;

    let sidecar = path.with_extension(
        path.extension()
            .map(|e| format!("{}.json", e.to_string_lossy()))
            .unwrap_or_else(|| "json".to_string()),
    );
    let body = serde_json::json!({
        "format": "ladder-checkpoint",
        "format_version": FORMAT_VERSION,
        "action_count": spec.action_count,
        "params_version": params.version(),
        "hyperparameters": hyperparameters,
    });
    std::fs::write(sidecar, serde_json::to_string_pretty(&body)?)?;
    Ok(())
}

/// Read a checkpoint back into a fresh [`NetworkParams`].
pub fn load_checkpoint(path: &Path) -> Result<NetworkParams, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let fv = read_u32(&mut r)?;
    if fv != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(fv));
    }
    let action_count = read_u32(&mut r)? as usize;
    let input_len = read_u32(&mut r)? as usize;
    let input_width = read_u32(&mut r)? as usize;
    let n_convs = read_u32(&mut r)? as usize;
    if n_convs > 64 {
        return Err(CheckpointError::Corrupt(format!("{n_convs} conv layers")));
    }
    let mut convs = Vec::with_capacity(n_convs);
    for _ in 0..n_convs {
        convs.push(ConvSpec {
            kernel: read_u32(&mut r)? as usize,
            out_ch: read_u32(&mut r)? as usize,
            pool: read_u32(&mut r)? as usize,
        });
    }
    let hidden_dim = read_u32(&mut r)? as usize;
    let params_version = read_u64(&mut r)?;
    let count = read_u64(&mut r)? as usize;
    let spec = NetSpec { input_len, input_width, convs, hidden_dim, action_count };
    let expected = super::Layout::of(&spec).total;
    if count != expected {
        return Err(CheckpointError::Corrupt(format!(
            "value count {count} does not match the architecture ({expected})"
        )));
    }
    let mut data = vec![0.0f64; count];
    let mut buf = [0u8; 8];
    for v in &mut data {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    NetworkParams::restore(spec, data, params_version)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut params = NetworkParams::init_canonical(21, &mut rng).unwrap();
        params.update_in_place(|d| d[100] = 0.125);
        save_checkpoint(&params, &path, &serde_json::json!({"alpha": 1e-4})).unwrap();

        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, params);
        assert_eq!(loaded.version(), params.version());

        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("ckpt.json")).unwrap())
                .unwrap();
        assert_eq!(sidecar["hyperparameters"]["alpha"], serde_json::json!(1e-4));
        assert_eq!(sidecar["action_count"], serde_json::json!(21));
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::BadMagic)));
    }
}
