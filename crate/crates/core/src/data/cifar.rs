//! CIFAR-10 binary-format parsing and writing.
//!
//! Fixed 3073-byte records: one label byte followed by 3072 channel-major
//! pixel bytes. Multiple batch files concatenate in the given order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::RawPool;

pub const CIFAR_FEATURES: usize = 3072;
const RECORD: usize = CIFAR_FEATURES + 1;

/// Reads one or more CIFAR-10 binary batch files into a flat pool
/// (features stay channel-major 3072-vectors).
pub fn load_cifar10_binary(paths: &[impl AsRef<Path>]) -> Result<RawPool> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let buf = fs::read(path)?;
        if buf.len() % RECORD != 0 {
            return Err(Error::Format {
                path: path.display().to_string(),
                message: format!("length {} is not a multiple of {}", buf.len(), RECORD),
                offset: buf.len() - buf.len() % RECORD,
            });
        }
        for record in buf.chunks_exact(RECORD) {
            labels.push(record[0]);
            pixels.extend_from_slice(&record[1..]);
        }
    }
    RawPool::new(labels.len(), CIFAR_FEATURES, pixels, labels)
}

/// Writes a pool with 3072-byte features back into one binary batch file.
pub fn save_cifar10_binary(path: impl AsRef<Path>, pool: &RawPool) -> Result<()> {
    if pool.m() != CIFAR_FEATURES {
        return Err(Error::Shape {
            context: "save_cifar10_binary",
            details: format!("feature width {} != {}", pool.m(), CIFAR_FEATURES),
        });
    }
    let mut buf = Vec::with_capacity(pool.n() * RECORD);
    for i in 0..pool.n() {
        buf.push(pool.labels()[i]);
        buf.extend_from_slice(pool.sample(i));
    }
    fs::write(path, buf)?;
    Ok(())
}
