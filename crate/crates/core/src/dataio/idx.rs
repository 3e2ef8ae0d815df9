//! IDX file parsing (big-endian magic, dimension sizes, unsigned bytes).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Parsed image/label pair, pixels normalized to [0, 1].
#[derive(Debug, Clone)]
pub struct MnistDataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.offset + 4;
        let slice = self.bytes.get(self.offset..end).ok_or(Error::Parse {
            offset: self.bytes.len(),
            detail: "file truncated inside header".into(),
        })?;
        let v = u32::from_be_bytes(slice.try_into().expect("4-byte slice"));
        self.offset = end;
        Ok(v)
    }

    fn payload(&mut self, expected: usize) -> Result<&'a [u8]> {
        let end = self.offset + expected;
        if self.bytes.len() != end {
            return Err(Error::Parse {
                offset: self.bytes.len().min(end),
                detail: format!(
                    "declared element count needs {} bytes, file holds {}",
                    end,
                    self.bytes.len()
                ),
            });
        }
        let slice = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(slice)
    }
}

fn read_images(path: &Path) -> Result<(Vec<Tensor>, usize, usize)> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, offset: 0 };
    let magic = r.u32()?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            detail: format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let data = r.payload(count * rows * cols)?;
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let pixels = &data[i * rows * cols..(i + 1) * rows * cols];
        images.push(Tensor::new(
            vec![rows, cols],
            pixels.iter().map(|&b| b as f64 / 255.0).collect(),
        )?);
    }
    Ok((images, rows, cols))
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, offset: 0 };
    let magic = r.u32()?;
    if magic != LABELS_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            detail: format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let count = r.u32()? as usize;
    Ok(r.payload(count)?.to_vec())
}

/// Load an IDX image/label pair. Pixels are normalized to [0, 1]; nothing
/// else is applied.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<MnistDataset> {
    let (images, rows, cols) = read_images(images_path)?;
    let labels = read_labels(labels_path)?;
    if images.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} images against {} labels",
            images.len(),
            labels.len()
        )));
    }
    Ok(MnistDataset { images, labels, rows, cols })
}

/// Serialize images/labels back to IDX bytes (used by the synthetic
/// fallback and tests; the format is symmetric).
pub fn write_idx_images(images: &[Tensor], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        out.extend(img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("idx-test-{}-{tag}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn write(path: &Path, bytes: &[u8]) {
        let mut f = fs::File::create(path).unwrap();
        f.write_all(bytes).unwrap();
    }

    #[test]
    fn round_trip_small_set() {
        let dir = temp_dir("round-trip");
        let images: Vec<Tensor> = (0..5)
            .map(|i| Tensor::filled(vec![4, 4], i as f64 / 10.0))
            .collect();
        let labels = vec![0u8, 1, 2, 3, 4];
        let ip = dir.join("imgs.idx");
        let lp = dir.join("labels.idx");
        write(&ip, &write_idx_images(&images, 4, 4));
        write(&lp, &write_idx_labels(&labels));
        let ds = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!(ds.images.len(), 5);
        assert_eq!(ds.labels, labels);
        assert_eq!(ds.rows, 4);
        // 0.1 quantizes to 26/255 on disk.
        assert!((ds.images[1].data()[0] - 26.0 / 255.0).abs() < 1e-12);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn bad_magic_is_a_parse_error() {
        let dir = temp_dir("magic");
        let p = dir.join("bad.idx");
        write(&p, &[0, 0, 9, 9, 0, 0, 0, 0]);
        let err = read_labels(&p).unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert_eq!(offset, 0),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = temp_dir("trunc");
        let p = dir.join("trunc.idx");
        let mut bytes = write_idx_labels(&[1, 2, 3, 4, 5]);
        bytes.truncate(bytes.len() - 2);
        write(&p, &bytes);
        let err = read_labels(&p).unwrap_err();
        match err {
            Error::Parse { offset, detail } => {
                assert_eq!(offset, 11);
                assert!(detail.contains("declared element count"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = temp_dir("mismatch");
        let ip = dir.join("i.idx");
        let lp = dir.join("l.idx");
        write(&ip, &write_idx_images(&[Tensor::zeros(vec![2, 2])], 2, 2));
        write(&lp, &write_idx_labels(&[0, 1]));
        assert!(load_mnist_idx(&ip, &lp).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }
}
