//! Big-endian IDX image/label file parsing and writing.
//!
//! Image files: magic `0x00000803`, then count, rows, cols (u32 BE), then
//! `count * rows * cols` unsigned bytes. Label files: magic `0x00000801`,
//! then count, then `count` bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::RawPool;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Raw images straight out of an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, sample-major.
    pub pixels: Vec<u8>,
}

fn format_err(path: &Path, message: impl Into<String>, offset: usize) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: message.into(),
        offset,
    }
}

fn read_u32_be(buf: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if end > buf.len() {
        return Err(format_err(path, "truncated header", offset));
    }
    Ok(u32::from_be_bytes([buf[offset], buf[offset + 1], buf[offset + 2], buf[offset + 3]]))
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    let buf = fs::read(path)?;
    let magic = read_u32_be(&buf, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(format_err(
            path,
            format!("bad magic {:#010x}, expected {:#010x}", magic, IMAGE_MAGIC),
            0,
        ));
    }
    let count = read_u32_be(&buf, 4, path)? as usize;
    let rows = read_u32_be(&buf, 8, path)? as usize;
    let cols = read_u32_be(&buf, 12, path)? as usize;
    let expected = 16 + count * rows * cols;
    if buf.len() < expected {
        return Err(format_err(
            path,
            format!("truncated payload: {} bytes, {} expected", buf.len(), expected),
            buf.len(),
        ));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: buf[16..expected].to_vec(),
    })
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let buf = fs::read(path)?;
    let magic = read_u32_be(&buf, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(format_err(
            path,
            format!("bad magic {:#010x}, expected {:#010x}", magic, LABEL_MAGIC),
            0,
        ));
    }
    let count = read_u32_be(&buf, 4, path)? as usize;
    let expected = 8 + count;
    if buf.len() < expected {
        return Err(format_err(
            path,
            format!("truncated payload: {} bytes, {} expected", buf.len(), expected),
            buf.len(),
        ));
    }
    Ok(buf[8..expected].to_vec())
}

pub fn save_idx_images(path: impl AsRef<Path>, images: &IdxImages) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + images.pixels.len());
    buf.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    buf.extend_from_slice(&(images.count as u32).to_be_bytes());
    buf.extend_from_slice(&(images.rows as u32).to_be_bytes());
    buf.extend_from_slice(&(images.cols as u32).to_be_bytes());
    buf.extend_from_slice(&images.pixels);
    fs::write(path, buf)?;
    Ok(())
}

pub fn save_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + labels.len());
    buf.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    buf.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    buf.extend_from_slice(labels);
    fs::write(path, buf)?;
    Ok(())
}

/// Loads a matched image/label pair into a flat pool.
pub fn load_idx_pool(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<RawPool> {
    let images = load_idx_images(&images_path)?;
    let labels = load_idx_labels(&labels_path)?;
    if labels.len() != images.count {
        return Err(Error::Format {
            path: labels_path.as_ref().display().to_string(),
            message: format!("{} labels vs {} images", labels.len(), images.count),
            offset: 4,
        });
    }
    RawPool::new(images.count, images.rows * images.cols, images.pixels, labels)
}
