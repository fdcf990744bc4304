use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::Array2;

use super::{DataError, Dataset};
use crate::Scalar;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Unsigned-byte IDX payload with its dimension sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn read_all(path: &Path) -> Result<Vec<u8>, DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut bytes).map_err(io)?;
    } else {
        let mut file = file;
        file.read_to_end(&mut bytes).map_err(io)?;
    }
    Ok(bytes)
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Reads an unsigned-byte IDX file whose magic must equal `expected_magic`.
/// Files ending in `.gz` are decompressed first.
pub fn read_idx(path: impl AsRef<Path>, expected_magic: u32) -> Result<IdxArray, DataError> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let truncated = |expected| DataError::Truncated {
        path: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    let magic = be_u32(&bytes, 0).ok_or_else(|| truncated(4))?;
    if magic != expected_magic {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            expected: expected_magic,
            found: magic,
        });
    }
    // low byte of the magic is the number of dimensions
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    let dims: Vec<usize> = (0..ndim)
        .map(|k| be_u32(&bytes, 4 + 4 * k).map(|v| v as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| truncated(header))?;
    let payload: usize = dims.iter().product();
    if bytes.len() < header + payload {
        return Err(truncated(header + payload));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..header + payload].to_vec(),
    })
}

/// Loads an MNIST image/label pair. Pixels are scaled to `[0, 1]` by `/255`.
pub fn load_mnist_idx<S: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset<S>, DataError> {
    let images = read_idx(images_path.as_ref(), IMAGE_MAGIC)?;
    let labels = read_idx(labels_path.as_ref(), LABEL_MAGIC)?;
    let (n, rows, cols) = (images.dims[0], images.dims[1], images.dims[2]);
    if labels.dims[0] != n {
        return Err(DataError::CountMismatch {
            images: n,
            labels: labels.dims[0],
        });
    }
    let scale = S::lit(255.0);
    let pixels = images
        .data
        .iter()
        .map(|&b| S::from_u8(b).expect("byte fits") / scale)
        .collect();
    let features = Array2::from_shape_vec((n, rows * cols), pixels).expect("payload length checked");
    let labels: Vec<usize> = labels.data.iter().map(|&b| b as usize).collect();
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(DataError::BadLabel {
            row,
            label,
            classes: 10,
        });
    }
    let name = images_path
        .as_ref()
        .file_name()
        .map_or_else(|| "mnist".to_string(), |f| f.to_string_lossy().into_owned());
    Dataset::new(name, features, Some(labels))
}

/// Environment variable naming the directory that holds the MNIST files.
pub const MNIST_DIR_ENV: &str = "CDFKAN_MNIST_DIR";

const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

fn locate(dir: &Path, stem: &str) -> std::path::PathBuf {
    let plain = dir.join(stem);
    let gz = dir.join(format!("{stem}.gz"));
    if !plain.exists() && gz.exists() {
        gz
    } else {
        plain
    }
}

/// Training and test splits read from the four standard file names in `dir`,
/// plain or gzipped.
pub fn load_mnist_dir<S: Scalar>(dir: impl AsRef<Path>) -> Result<(Dataset<S>, Dataset<S>), DataError> {
    let dir = dir.as_ref();
    let [ti, tl, vi, vl] = MNIST_FILES.map(|f| locate(dir, f));
    let mut train = load_mnist_idx(ti, tl)?;
    let mut test = load_mnist_idx(vi, vl)?;
    train.name = "mnist-train".into();
    test.name = "mnist-test".into();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut out = magic.to_be_bytes().to_vec();
        for d in dims {
            out.extend(d.to_be_bytes());
        }
        out.extend(payload);
        out
    }

    fn write_pair(dir: &Path, n: u32, gzip: bool) -> (std::path::PathBuf, std::path::PathBuf) {
        let pixels: Vec<u8> = (0..n * 4).map(|i| (i * 37 % 256) as u8).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        let img = idx_bytes(IMAGE_MAGIC, &[n, 2, 2], &pixels);
        let lab = idx_bytes(LABEL_MAGIC, &[n], &labels);
        let ext = if gzip { ".gz" } else { "" };
        let (ip, lp) = (dir.join(format!("img{ext}")), dir.join(format!("lab{ext}")));
        for (p, b) in [(&ip, img), (&lp, lab)] {
            if gzip {
                let mut enc = GzEncoder::new(File::create(p).unwrap(), Compression::fast());
                enc.write_all(&b).unwrap();
                enc.finish().unwrap();
            } else {
                std::fs::write(p, b).unwrap();
            }
        }
        (ip, lp)
    }

    #[test]
    fn loads_plain_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        for gzip in [false, true] {
            let (ip, lp) = write_pair(dir.path(), 12, gzip);
            let d = load_mnist_idx::<f64>(&ip, &lp).unwrap();
            assert_eq!((d.len(), d.n_features()), (12, 4));
            assert_eq!(d.features()[[0, 1]], 37.0 / 255.0);
            assert_eq!(d.labels().unwrap()[11], 1);
            assert!(d.features().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_pair(dir.path(), 5, false);

        let bad = dir.path().join("bad");
        let mut bytes = std::fs::read(&ip).unwrap();
        bytes[3] = 0x02;
        std::fs::write(&bad, &bytes).unwrap();
        assert!(matches!(load_mnist_idx::<f64>(&bad, &lp), Err(DataError::BadMagic { found: 0x802, .. })));
        // images and labels swapped
        assert!(matches!(load_mnist_idx::<f64>(&lp, &ip), Err(DataError::BadMagic { .. })));

        let short = dir.path().join("short");
        let bytes = std::fs::read(&ip).unwrap();
        std::fs::write(&short, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_mnist_idx::<f64>(&short, &lp), Err(DataError::Truncated { .. })));
        std::fs::write(&short, &bytes[..6]).unwrap();
        assert!(matches!(load_mnist_idx::<f64>(&short, &lp), Err(DataError::Truncated { .. })));

        let (_, lp7) = {
            let sub = dir.path().join("seven");
            std::fs::create_dir(&sub).unwrap();
            write_pair(&sub, 7, false)
        };
        assert!(matches!(
            load_mnist_idx::<f64>(&ip, &lp7),
            Err(DataError::CountMismatch { images: 5, labels: 7 })
        ));

        assert!(matches!(
            load_mnist_idx::<f64>(dir.path().join("missing"), &lp),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn loads_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_pair(dir.path(), 6, true);
        std::fs::rename(&ip, dir.path().join("train-images-idx3-ubyte.gz")).unwrap();
        std::fs::rename(&lp, dir.path().join("train-labels-idx1-ubyte.gz")).unwrap();
        let (ip, lp) = write_pair(dir.path(), 3, false);
        std::fs::rename(&ip, dir.path().join("t10k-images-idx3-ubyte")).unwrap();
        std::fs::rename(&lp, dir.path().join("t10k-labels-idx1-ubyte")).unwrap();
        let (train, test) = load_mnist_dir::<f32>(dir.path()).unwrap();
        assert_eq!((train.len(), test.len()), (6, 3));
        assert_eq!(train.name, "mnist-train");
        let missing = tempfile::tempdir().unwrap();
        assert!(matches!(load_mnist_dir::<f64>(missing.path()), Err(DataError::Io { .. })));
    }
}
