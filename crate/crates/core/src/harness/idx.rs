//! The IDX container used by MNIST: a four-byte magic (two zero bytes, a
//! type code, a rank), one big-endian `u32` per dimension, then the payload.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Type code for unsigned bytes, the only payload type MNIST uses.
pub const IDX_UBYTE: u8 = 0x08;
pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// A parsed unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        ((IDX_UBYTE as u32) << 8) | self.dims.len() as u32
    }

    /// Serialize back to the on-disk layout.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&self.magic().to_be_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

fn format_err(path: &Path, offset: usize, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        detail: detail.into(),
    }
}

/// Parse IDX bytes. `path` only labels errors.
pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(format_err(
            path,
            bytes.len(),
            format!("header needs 4 magic bytes, file holds {}", bytes.len()),
        ));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err(path, 0, format!("bad magic {:02x?}", &bytes[..4])));
    }
    if bytes[2] != IDX_UBYTE {
        return Err(format_err(
            path,
            2,
            format!("unsupported element type 0x{:02x}, only unsigned bytes are read", bytes[2]),
        ));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(format_err(path, 3, "rank must be at least 1"));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(format_err(
            path,
            bytes.len(),
            format!("header needs {header} bytes, file holds {}", bytes.len()),
        ));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err(path, 4, "dimension product overflows"))?;
    let actual = bytes.len() - header;
    if actual != expected {
        let what = if actual < expected { "truncated payload" } else { "trailing bytes after payload" };
        return Err(format_err(
            path,
            header + actual.min(expected),
            format!("{what}: expected {expected} bytes for dims {dims:?}, found {actual}"),
        ));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Read an IDX file, inflating it first if it is gzip-compressed.
pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    parse_idx(&read_maybe_gz(path)?, path)
}

/// Write an uncompressed IDX file.
pub fn write_idx(array: &IdxArray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, array.encode()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

/// Images with their labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    /// `n × rows × cols` intensities, row-major per image.
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Vec<u8>, labels: Vec<u8>, rows: usize, cols: usize, split: Split) -> Result<Self> {
        let dim = rows * cols;
        if dim == 0 || images.len() != labels.len() * dim {
            return Err(Error::config(format!(
                "{} pixels do not make {} images of {rows}x{cols}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l >= 10) {
            return Err(Error::config(format!("label {} of example {i} is not a digit", labels[i])));
        }
        Ok(Dataset {
            images,
            labels,
            rows,
            cols,
            split,
        })
    }

    /// Pair an image file with a label file.
    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>, split: Split) -> Result<Self> {
        let (ip, lp) = (images.as_ref(), labels.as_ref());
        let img = load_idx(ip)?;
        let lab = load_idx(lp)?;
        if img.magic() != IMAGES_MAGIC {
            return Err(format_err(ip, 0, format!("expected magic 0x{IMAGES_MAGIC:08x}, found 0x{:08x}", img.magic())));
        }
        if lab.magic() != LABELS_MAGIC {
            return Err(format_err(lp, 0, format!("expected magic 0x{LABELS_MAGIC:08x}, found 0x{:08x}", lab.magic())));
        }
        if img.dims[0] != lab.dims[0] {
            return Err(format_err(
                lp,
                4,
                format!("{} labels for {} images in {}", lab.dims[0], img.dims[0], ip.display()),
            ));
        }
        Self::new(img.data, lab.data, img.dims[1], img.dims[2], split)
    }

    /// The standard MNIST file names inside `dir`, gzipped or not.
    pub fn load_mnist(dir: impl AsRef<Path>, split: Split) -> Result<Self> {
        let stem = match split {
            Split::Train => "train",
            Split::Test => "t10k",
        };
        let pick = |kind: &str| -> PathBuf {
            let plain = dir.as_ref().join(format!("{stem}-{kind}"));
            let gz = dir.as_ref().join(format!("{stem}-{kind}.gz"));
            if plain.exists() {
                plain
            } else {
                gz
            }
        };
        Self::load(pick("images-idx3-ubyte"), pick("labels-idx1-ubyte"), split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn pixels(&self, i: usize) -> &[u8] {
        let d = self.dim();
        &self.images[i * d..(i + 1) * d]
    }

    /// Keep the first `n` examples.
    pub fn truncate(&mut self, n: usize) {
        if n < self.len() {
            self.labels.truncate(n);
            self.images.truncate(n * self.dim());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros_image_file() -> IdxArray {
        IdxArray {
            dims: vec![1, 28, 28],
            data: vec![0; 784],
        }
    }

    #[test]
    fn single_zero_image_parses() {
        let bytes = zeros_image_file().encode();
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        let a = parse_idx(&bytes, Path::new("mem")).unwrap();
        assert_eq!(a.dims, vec![1, 28, 28]);
        assert_eq!(a.data.len(), 784);
        assert!(a.data.iter().all(|&p| p == 0));
        assert_eq!(a.encode(), bytes);
    }

    #[test]
    fn truncation_names_lengths_and_offset() {
        let mut bytes = zeros_image_file().encode();
        bytes.truncate(bytes.len() - 10);
        match parse_idx(&bytes, Path::new("mem")) {
            Err(Error::Format { offset, detail, .. }) => {
                assert_eq!(offset, 16 + 774);
                assert!(detail.contains("expected 784"), "{detail}");
                assert!(detail.contains("found 774"), "{detail}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected_at_offset_zero() {
        let mut bytes = zeros_image_file().encode();
        bytes[0] = 1;
        assert!(matches!(
            parse_idx(&bytes, Path::new("mem")),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bytes = zeros_image_file().encode();
        bytes[2] = 0x0d;
        assert!(matches!(
            parse_idx(&bytes, Path::new("mem")),
            Err(Error::Format { offset: 2, .. })
        ));
    }

    #[test]
    fn labels_must_be_digits() {
        assert!(Dataset::new(vec![0; 4], vec![10], 2, 2, Split::Train).is_err());
        assert!(Dataset::new(vec![0; 4], vec![9], 2, 2, Split::Train).is_ok());
    }
}
