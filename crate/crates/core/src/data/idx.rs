use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::tensor::{RealMatrix, Scalar};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Raw unsigned-byte image tensor as stored in an IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    /// `count × (rows·cols)` matrix with pixels divided by 255.
    pub fn normalized<T: Scalar>(&self) -> RealMatrix<T> {
        let scale = T::of(1.0 / 255.0);
        let data = self.pixels.iter().map(|&p| T::of(p as f64) * scale).collect();
        RealMatrix::from_vec_unchecked(self.count, self.rows * self.cols, data)
    }
}

/// Reads a file, transparently inflating gzip content.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format(format!("{}: bad gzip stream: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(format!("truncated header: missing {what}")))
}

fn check_magic(found: u32, expected: u32) -> Result<()> {
    if found != expected {
        return Err(Error::format(format!(
            "bad magic 0x{found:08x}, expected 0x{expected:08x}"
        )));
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, expected: usize) -> Result<&[u8]> {
    let body = &bytes[header..];
    if body.len() < expected {
        return Err(Error::format(format!(
            "truncated payload: {} of {expected} bytes",
            body.len()
        )));
    }
    if body.len() > expected {
        return Err(Error::format(format!(
            "{} trailing bytes after payload",
            body.len() - expected
        )));
    }
    Ok(body)
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(be_u32(bytes, 0, "magic")?, IMAGE_MAGIC)?;
    let count = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "row count")? as usize;
    let cols = be_u32(bytes, 12, "column count")? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format("image dimensions overflow"))?;
    let pixels = payload(bytes, 16, len)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(be_u32(bytes, 0, "magic")?, LABEL_MAGIC)?;
    let count = be_u32(bytes, 4, "label count")? as usize;
    let labels = payload(bytes, 8, count)?;
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::format(format!(
            "label {} at index {pos} is not a digit",
            labels[pos]
        )));
    }
    Ok(labels.to_vec())
}

/// Loads an IDX image file (optionally gzipped) as normalized `N × rows·cols` rows.
pub fn load_idx_images<T: Scalar>(path: impl AsRef<Path>) -> Result<RealMatrix<T>> {
    let path = path.as_ref();
    let parsed = parse_idx_images(&read_maybe_gz(path)?)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    Ok(parsed.normalized())
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    parse_idx_labels(&read_maybe_gz(path)?)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

pub fn encode_idx_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != count * rows * cols {
        return Err(Error::dims(format!(
            "{} pixels for {count} images of {rows}x{cols}",
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn fixture_images() -> Vec<u8> {
        let pixels: Vec<u8> = (0..2 * 2 * 3).map(|v| (v * 20) as u8).collect();
        encode_idx_images(2, 2, 3, &pixels).unwrap()
    }

    #[test]
    fn image_fixture_round_trip() {
        let parsed = parse_idx_images(&fixture_images()).unwrap();
        assert_eq!((parsed.count, parsed.rows, parsed.cols), (2, 2, 3));
        let m = parsed.normalized::<f64>();
        assert_eq!(m.shape(), (2, 6));
        assert_eq!(m.get(1, 5), 220.0 / 255.0);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn label_fixture() {
        assert_eq!(parse_idx_labels(&encode_idx_labels(&[3, 7])).unwrap(), vec![3, 7]);
    }

    #[test]
    fn corrupted_inputs_are_format_errors() {
        let mut bad = encode_idx_labels(&[3, 7]);
        bad[3] = 0x03;
        assert!(matches!(parse_idx_labels(&bad), Err(Error::Format(_))));

        let mut bad = encode_idx_labels(&[3, 7]);
        bad[9] = 10;
        assert!(matches!(parse_idx_labels(&bad), Err(Error::Format(_))));

        let good = fixture_images();
        assert!(matches!(parse_idx_images(&good[..good.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(parse_idx_images(&good[..10]), Err(Error::Format(_))));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(parse_idx_images(&long), Err(Error::Format(_))));
        // Label file handed to the image parser.
        assert!(matches!(
            parse_idx_images(&encode_idx_labels(&[1])),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn gzip_is_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("imgs");
        let gz = dir.path().join("imgs.gz");
        fs::write(&plain, fixture_images()).unwrap();
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&fixture_images()).unwrap();
        fs::write(&gz, enc.finish().unwrap()).unwrap();
        let a: RealMatrix<f32> = load_idx_images(&plain).unwrap();
        let b: RealMatrix<f32> = load_idx_images(&gz).unwrap();
        assert_eq!(a, b);
    }
}
