//! IDX (MNIST/EMNIST layout) ingestion. Files ending in `.gz` are inflated
//! on the fly; byte offsets in errors refer to the decompressed stream.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::data::{LabeledDataset, Targets};
use crate::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxReader {
    inner: Box<dyn Read>,
    path: PathBuf,
    offset: u64,
}

impl IdxReader {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Ingestion {
            path: path.to_owned(),
            offset: 0,
            message: format!("cannot open: {e}"),
        })?;
        let buf = BufReader::new(file);
        let inner: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
            Box::new(GzDecoder::new(buf))
        } else {
            Box::new(buf)
        };
        Ok(IdxReader {
            inner,
            path: path.to_owned(),
            offset: 0,
        })
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Ingestion {
            path: self.path.clone(),
            offset: self.offset,
            message: message.into(),
        }
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        let mut read = 0;
        while read < buf.len() {
            match self.inner.read(&mut buf[read..]) {
                Ok(0) => {
                    self.offset += read as u64;
                    return Err(self.fail(format!(
                        "truncated: needed {} more bytes",
                        buf.len() - read
                    )));
                }
                Ok(n) => read += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => {
                    self.offset += read as u64;
                    return Err(self.fail(e.to_string()));
                }
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_be_bytes(b))
    }

    fn expect_magic(&mut self, magic: u32) -> Result<()> {
        let got = self.u32()?;
        if got != magic {
            self.offset -= 4;
            return Err(self.fail(format!("bad magic 0x{got:08x}, expected 0x{magic:08x}")));
        }
        Ok(())
    }
}

/// Loads an image/label IDX pair. Pixels are scaled to `[0, 1]`; the class
/// count is `max label + 1` (10 for digits).
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let mut img = IdxReader::open(images)?;
    img.expect_magic(IMAGES_MAGIC)?;
    let count = img.u32()? as usize;
    let rows = img.u32()? as usize;
    let cols = img.u32()? as usize;
    if rows == 0 || cols == 0 {
        return Err(img.fail(format!("empty image shape {rows}x{cols}")));
    }
    let mut pixels = vec![0u8; count * rows * cols];
    img.fill(&mut pixels)?;

    let mut lab = IdxReader::open(labels)?;
    lab.expect_magic(LABELS_MAGIC)?;
    let n_labels = lab.u32()? as usize;
    if n_labels != count {
        lab.offset -= 4;
        return Err(lab.fail(format!("label count {n_labels} does not match image count {count}")));
    }
    let mut raw = vec![0u8; count];
    lab.fill(&mut raw)?;

    let num_classes = raw.iter().copied().max().map_or(0, |m| m as usize + 1).max(2);
    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let name = images
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    LabeledDataset::new(
        name,
        features,
        rows * cols,
        Targets::Classes {
            labels: raw.into_iter().map(u32::from).collect(),
            num_classes,
        },
    )
}

/// Writes a classification dataset with features in `[0, 1]` as an IDX pair
/// of `side x side` images. `.gz` paths are compressed.
pub fn write_idx(data: &LabeledDataset, side: usize, images: &Path, labels: &Path) -> Result<()> {
    if side * side != data.n_features() {
        return Err(Error::DimensionMismatch {
            expected: side * side,
            got: data.n_features(),
        });
    }
    let Targets::Classes { labels: ys, .. } = data.targets() else {
        return Err(Error::param("IDX labels must be class indices"));
    };
    if ys.iter().any(|&y| y > 255) {
        return Err(Error::param("IDX labels must fit in one byte"));
    }

    let mut img = Vec::with_capacity(16 + data.features().len());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(data.len() as u32).to_be_bytes());
    img.extend_from_slice(&(side as u32).to_be_bytes());
    img.extend_from_slice(&(side as u32).to_be_bytes());
    img.extend(data.features().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));

    let mut lab = Vec::with_capacity(8 + ys.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ys.len() as u32).to_be_bytes());
    lab.extend(ys.iter().map(|&y| y as u8));

    write_maybe_gz(images, &img)?;
    write_maybe_gz(labels, &lab)
}

fn write_maybe_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?.flush()?;
    } else {
        let mut file = file;
        file.write_all(bytes)?;
        file.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        LabeledDataset::new(
            "tiny",
            vec![0.0, 1.0, 0.5, 0.25, 1.0, 0.0, 0.0, 1.0],
            4,
            Targets::Classes {
                labels: vec![3, 9],
                num_classes: 10,
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_plain_and_gz() {
        let dir = tempfile::tempdir().unwrap();
        for ext in ["", ".gz"] {
            let i = dir.path().join(format!("img{ext}"));
            let l = dir.path().join(format!("lab{ext}"));
            write_idx(&tiny(), 2, &i, &l).unwrap();
            let back = load_idx(&i, &l).unwrap();
            assert_eq!(back.len(), 2);
            assert_eq!(back.n_features(), 4);
            assert_eq!(back.num_classes(), Some(10));
            assert_eq!(back.row(0)[1], 1.0);
            assert!((back.row(0)[2] - 128.0 / 255.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let i = dir.path().join("img");
        let l = dir.path().join("lab");
        write_idx(&tiny(), 2, &i, &l).unwrap();
        // swapped files: label magic where image magic is expected
        let err = load_idx(&l, &i).unwrap_err();
        assert!(matches!(err, Error::Ingestion { offset: 0, .. }), "{err}");
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn truncated_and_mismatched_files() {
        let dir = tempfile::tempdir().unwrap();
        let i = dir.path().join("img");
        let l = dir.path().join("lab");
        write_idx(&tiny(), 2, &i, &l).unwrap();
        let mut bytes = std::fs::read(&i).unwrap();
        bytes.truncate(20);
        std::fs::write(&i, &bytes).unwrap();
        match load_idx(&i, &l).unwrap_err() {
            Error::Ingestion { offset, message, .. } => {
                assert_eq!(offset, 20);
                assert!(message.contains("truncated"));
            }
            e => panic!("{e}"),
        }

        write_idx(&tiny(), 2, &i, &l).unwrap();
        let mut lab = std::fs::read(&l).unwrap();
        lab[7] = 5;
        std::fs::write(&l, &lab).unwrap();
        match load_idx(&i, &l).unwrap_err() {
            Error::Ingestion { offset, message, .. } => {
                assert_eq!(offset, 4);
                assert!(message.contains("count"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn missing_file_is_ingestion_error() {
        let err = load_idx(Path::new("/nonexistent/a"), Path::new("/nonexistent/b")).unwrap_err();
        assert!(matches!(err, Error::Ingestion { .. }));
    }
}
