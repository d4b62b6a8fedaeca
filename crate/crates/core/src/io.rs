//! File helpers: atomic writes, PNG encoding and content hashing.

use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use image::{ImageEncoder, ImageFormat};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
#[error("{op} {path}: {source}")]
pub struct IoError {
    pub op: &'static str,
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

impl IoError {
    pub fn new(op: &'static str, path: &Path, source: std::io::Error) -> Self {
        Self {
            op,
            path: path.to_path_buf(),
            source,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| IoError::new("create directory", dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::new("create temp file in", dir, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::new("write", path, e))?;
    tmp.as_file().sync_all().map_err(|e| IoError::new("sync", path, e))?;
    tmp.persist(path).map_err(|e| IoError::new("rename into", path, e.error))?;
    Ok(())
}

pub fn create_dir_all(path: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(path).map_err(|e| IoError::new("create directory", path, e))
}

pub fn read(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::new("read", path, e))
}

/// Deterministic 8-bit PNG encoding.
pub fn encode_png<P>(img: &image::ImageBuffer<P, Vec<u8>>) -> Vec<u8>
where
    P: image::Pixel<Subpixel = u8> + image::PixelWithColorType,
{
    let mut buf = Cursor::new(Vec::new());
    image::codecs::png::PngEncoder::new(&mut buf)
        .write_image(img.as_raw(), img.width(), img.height(), P::COLOR_TYPE)
        .expect("in-memory PNG encoding cannot fail");
    buf.into_inner()
}

pub fn decode_png(bytes: &[u8]) -> image::ImageResult<image::DynamicImage> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png)
}
