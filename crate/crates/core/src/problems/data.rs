use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::DataError;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const SIDE: usize = 28;

/// Labelled samples stored row-major, `len × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        num_classes: usize,
    ) -> Result<Self, DataError> {
        if labels.is_empty() || dim == 0 || inputs.len() != labels.len() * dim {
            return Err(DataError::ShapeMismatch(format!(
                "{} inputs cannot hold {} samples of dimension {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::ShapeMismatch(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            inputs,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false; datasets hold at least one sample.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The first `n` samples (all of them if `n ≥ len`).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len()).max(1);
        Self {
            inputs: self.inputs[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }

    /// Samples `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> Self {
        Self {
            inputs: self.inputs[from * self.dim..to * self.dim].to_vec(),
            labels: self.labels[from..to].to_vec(),
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DataError::TruncatedFile {
            expected: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), DataError> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(DataError::BadMagic { expected, found });
    }
    Ok(())
}

/// Decodes an IDX image file and label file into `[0, 1]` pixels.
///
/// Returns the dataset and the image shape `(rows, cols)`.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<(Dataset, usize, usize), DataError> {
    check_magic(images, IMAGE_MAGIC)?;
    check_magic(labels, LABEL_MAGIC)?;
    let n_images = be_u32(images, 4)? as usize;
    let rows = be_u32(images, 8)? as usize;
    let cols = be_u32(images, 12)? as usize;
    let n_labels = be_u32(labels, 4)? as usize;
    if n_images != n_labels {
        return Err(DataError::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let dim = rows * cols;
    let image_end = 16 + n_images * dim;
    if images.len() < image_end {
        return Err(DataError::TruncatedFile {
            expected: image_end,
            found: images.len(),
        });
    }
    if labels.len() < 8 + n_labels {
        return Err(DataError::TruncatedFile {
            expected: 8 + n_labels,
            found: labels.len(),
        });
    }
    let inputs = images[16..image_end].iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = labels[8..8 + n_labels].iter().map(|&b| b as usize).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1).max(10);
    Ok((Dataset::new(inputs, labels, dim, classes)?, rows, cols))
}

/// Loads an IDX image/label file pair.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let img = read(images.as_ref())?;
    let lab = read(labels.as_ref())?;
    parse_idx(&img, &lab).map(|(d, _, _)| d)
}

/// Loads `train-images-idx3-ubyte` / `train-labels-idx1-ubyte` from `dir`.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let dir = dir.as_ref();
    load_idx(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
    )
}

/// Seeded stand-in for handwritten digits: ten classes of 28×28 gray
/// images, each class a fixed set of bright blobs, jittered and noised
/// per sample. Samples cycle through the classes.
pub fn synthetic_digits(n: usize, seed: u64) -> Dataset {
    const CLASSES: usize = 10;
    const BLOBS: usize = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<(f64, f64, f64)>> = (0..CLASSES)
        .map(|_| {
            (0..BLOBS)
                .map(|_| {
                    (
                        rng.random_range(6.0..22.0),
                        rng.random_range(6.0..22.0),
                        rng.random_range(2.0..3.5),
                    )
                })
                .collect()
        })
        .collect();
    let mut inputs = Vec::with_capacity(n * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % CLASSES;
        let dx: f64 = rng.random_range(-2.0..2.0);
        let dy: f64 = rng.random_range(-2.0..2.0);
        for r in 0..SIDE {
            for c in 0..SIDE {
                let mut v = 0.0;
                for &(cr, cc, width) in &prototypes[class] {
                    let d2 = (r as f64 - cr - dy).powi(2) + (c as f64 - cc - dx).powi(2);
                    v += (-d2 / (2.0 * width * width)).exp();
                }
                v += 0.15 * rng.sample::<f64, _>(StandardNormal);
                inputs.push(v.clamp(0.0, 1.0));
            }
        }
        labels.push(class);
    }
    Dataset::new(inputs, labels, SIDE * SIDE, CLASSES).expect("shapes agree")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut out = IMAGE_MAGIC.to_be_bytes().to_vec();
        for v in [n, rows, cols] {
            out.extend(v.to_be_bytes());
        }
        out.extend_from_slice(pixels);
        out
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut out = LABEL_MAGIC.to_be_bytes().to_vec();
        out.extend((labels.len() as u32).to_be_bytes());
        out.extend_from_slice(labels);
        out
    }

    #[test]
    fn two_image_fixture() {
        let images = idx_images(2, 2, 2, &[0, 255, 51, 0, 255, 255, 0, 0]);
        let (d, rows, cols) = parse_idx(&images, &idx_labels(&[3, 9])).unwrap();
        assert_eq!((d.len(), rows, cols), (2, 2, 2));
        assert_eq!(d.sample(0), &[0.0, 1.0, 0.2, 0.0]);
        assert_eq!(d.sample(1), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(d.labels(), &[3, 9]);
    }

    #[test]
    fn header_of_test_split_shape() {
        let pixels = vec![7u8; 10_000 * 28 * 28];
        let images = idx_images(10_000, 28, 28, &pixels);
        let labels = idx_labels(&vec![1; 10_000]);
        let (d, rows, cols) = parse_idx(&images, &labels).unwrap();
        assert_eq!((d.len(), rows, cols), (10_000, 28, 28));
    }

    #[test]
    fn error_paths() {
        let images = idx_images(2, 2, 2, &[0; 8]);
        let truncated = &images[..images.len() - 1];
        assert!(matches!(
            parse_idx(truncated, &idx_labels(&[0, 1])),
            Err(DataError::TruncatedFile { .. })
        ));
        assert!(matches!(
            parse_idx(&images[..6], &idx_labels(&[0, 1])),
            Err(DataError::TruncatedFile { .. })
        ));
        assert!(matches!(
            parse_idx(&idx_labels(&[0, 1]), &idx_labels(&[0, 1])),
            Err(DataError::BadMagic { found: 0x801, .. })
        ));
        assert!(matches!(
            parse_idx(&images, &idx_labels(&[0])),
            Err(DataError::CountMismatch { images: 2, labels: 1 })
        ));
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("train-images-idx3-ubyte"), idx_images(1, 1, 2, &[255, 0])).unwrap();
        std::fs::write(dir.path().join("train-labels-idx1-ubyte"), idx_labels(&[4])).unwrap();
        let d = load_mnist_dir(dir.path()).unwrap();
        assert_eq!(d.sample(0), &[1.0, 0.0]);
        assert!(matches!(load_mnist_dir(dir.path().join("missing")), Err(DataError::Io { .. })));
    }

    #[test]
    fn synthetic_is_seeded_and_in_range() {
        let a = synthetic_digits(50, 3);
        assert_eq!(a, synthetic_digits(50, 3));
        assert_ne!(a, synthetic_digits(50, 4));
        assert_eq!(a.dim(), 784);
        assert!((0..a.len()).all(|i| a.sample(i).iter().all(|p| (0.0..=1.0).contains(p))));
        assert_eq!(a.label(13), 3);
    }
}
