//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! 8 bytes   magic "KINNCKPT"
//! u32       format version
//! u32       length of the config JSON in bytes
//! ...       NetworkConfig as JSON
//! u64       number of parameters
//! f64 * n   parameters, blocks in `NetworkParams::blocks` order:
//!           lstm0.weights, lstm0.bias, lstm1.weights, ..., head.weights, head.bias
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Network, NetworkConfig, NetworkParams};
use crate::error::{KinnError, Result};

const MAGIC: &[u8; 8] = b"KINNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(net: &Network, mut w: W) -> std::io::Result<()> {
    let config = serde_json::to_vec(&net.config).map_err(std::io::Error::other)?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(&config)?;
    let flat = net.params.to_flat();
    w.write_all(&(flat.len() as u64).to_le_bytes())?;
    for v in flat {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| KinnError::CorruptCheckpoint(format!("truncated while reading {what}")))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Network> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(KinnError::CorruptCheckpoint("bad magic bytes".into()));
    }
    let mut word = [0u8; 4];
    read_exact(&mut r, &mut word, "version")?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(KinnError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    read_exact(&mut r, &mut word, "config length")?;
    let config_len = u32::from_le_bytes(word) as usize;
    if config_len > 1 << 20 {
        return Err(KinnError::CorruptCheckpoint("implausible config length".into()));
    }
    let mut config = vec![0u8; config_len];
    read_exact(&mut r, &mut config, "config")?;
    let config: NetworkConfig = serde_json::from_slice(&config)
        .map_err(|e| KinnError::CorruptCheckpoint(format!("config: {e}")))?;
    config
        .validate()
        .map_err(|e| KinnError::CorruptCheckpoint(e.to_string()))?;

    let mut params = NetworkParams::zeros(&config);
    let mut count = [0u8; 8];
    read_exact(&mut r, &mut count, "parameter count")?;
    let count = u64::from_le_bytes(count) as usize;
    if count != params.len() {
        return Err(KinnError::CorruptCheckpoint(format!(
            "{count} parameters stored, config implies {}",
            params.len()
        )));
    }
    let mut flat = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        read_exact(&mut r, &mut buf, "parameters")?;
        flat.push(f64::from_le_bytes(buf));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)
        .map_err(|e| KinnError::CorruptCheckpoint(e.to_string()))?;
    if !rest.is_empty() {
        return Err(KinnError::CorruptCheckpoint(format!("{} trailing bytes", rest.len())));
    }
    params.set_flat(&flat)?;
    Network::from_parts(config, params)
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| KinnError::io(path, e))?;
    write_checkpoint(net, BufWriter::new(file)).map_err(|e| KinnError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| KinnError::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
