//! Datasets: seeded Gaussian blobs and the IDX binary image format.

use std::fs;
use std::io::{self, Cursor, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::nn::LabeledExample;
use crate::rng::SeededRng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Fraction of each class that goes to the training split.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub name: String,
}

impl Dataset {
    /// Validates labels and feature widths.
    pub fn new(
        name: impl Into<String>,
        examples: Vec<LabeledExample>,
        num_classes: usize,
        feature_dim: usize,
    ) -> Result<Self> {
        for (i, ex) in examples.iter().enumerate() {
            if ex.label >= num_classes {
                return Err(Error::Label {
                    label: ex.label,
                    classes: num_classes,
                });
            }
            if ex.features.len() != feature_dim {
                return Err(Error::Shape {
                    context: "dataset features",
                    expected: feature_dim,
                    actual: ex.features.len(),
                });
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Consistency(format!("example {i} has non-finite features")));
            }
        }
        Ok(Self {
            examples,
            num_classes,
            feature_dim,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for ex in &self.examples {
            counts[ex.label] += 1;
        }
        counts
    }

    /// Per-class split in dataset order: the first `round(0.8 n)` examples of
    /// each class (at least one) train, the rest test.
    pub fn split_train_test(&self) -> (Dataset, Dataset) {
        let counts = self.class_counts();
        let quota: Vec<usize> = counts
            .iter()
            .map(|&n| {
                if n == 0 {
                    0
                } else {
                    ((n as f64 * TRAIN_FRACTION).round() as usize).clamp(1, n)
                }
            })
            .collect();
        let mut taken = vec![0; self.num_classes];
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for ex in &self.examples {
            if taken[ex.label] < quota[ex.label] {
                taken[ex.label] += 1;
                train.push(ex.clone());
            } else {
                test.push(ex.clone());
            }
        }
        let part = |examples, suffix: &str| Dataset {
            examples,
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            name: format!("{}-{suffix}", self.name),
        };
        (part(train, "train"), part(test, "test"))
    }
}

/// Isotropic Gaussian blobs, one per class.
///
/// Centers come first from the generator, uniform in `[-1, 1)^dim`, class by
/// class. Examples follow class-major: class 0's `per_class` points, then
/// class 1's, each `center + spread * N(0, 1)` per coordinate.
pub fn synth_blobs(num_classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if num_classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::Config("synthetic blob counts must all be >= 1".into()));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::Config(format!("spread must be > 0, got {spread}")));
    }
    let mut rng = SeededRng::new(seed);
    let centers = blob_centers(&mut rng, num_classes, dim);
    let mut examples = Vec::with_capacity(num_classes * per_class);
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            let features = center.iter().map(|c| c + spread * rng.gaussian()).collect();
            examples.push(LabeledExample::new(features, label));
        }
    }
    Dataset::new(
        format!("blobs-{num_classes}x{per_class}-d{dim}-s{seed}"),
        examples,
        num_classes,
        dim,
    )
}

/// The centers `synth_blobs` would use for this seed.
pub fn synth_blob_centers(num_classes: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    blob_centers(&mut SeededRng::new(seed), num_classes, dim)
}

fn blob_centers(rng: &mut SeededRng, num_classes: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..num_classes)
        .map(|_| (0..dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
        .collect()
}

/// Loads an IDX image file (magic `0x00000803`, dims count/rows/cols) and its
/// label file (magic `0x00000801`, dim count). Pixels are scaled by `1/255`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let image_bytes = fs::read(images_path.as_ref())?;
    let label_bytes = fs::read(labels_path.as_ref())?;
    let images = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if images.count != labels.len() {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let feature_dim = images.rows * images.cols;
    let num_classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let examples = images
        .pixels
        .chunks_exact(feature_dim.max(1))
        .take(images.count)
        .zip(&labels)
        .map(|(px, &label)| LabeledExample::new(px.iter().map(|&b| f64::from(b) / 255.0).collect(), label as usize))
        .collect();
    let name = images_path
        .as_ref()
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(name, examples, num_classes, feature_dim)
}

/// Decoded IDX image payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.read_u32::<BigEndian>()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "image file magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = cur.read_u32::<BigEndian>()? as usize;
    let rows = cur.read_u32::<BigEndian>()? as usize;
    let cols = cur.read_u32::<BigEndian>()? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    cur.read_exact(&mut pixels)?;
    expect_end(&cur, "image")?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.read_u32::<BigEndian>()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "label file magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let count = cur.read_u32::<BigEndian>()? as usize;
    let mut labels = vec![0u8; count];
    cur.read_exact(&mut labels)?;
    expect_end(&cur, "label")?;
    Ok(labels)
}

fn expect_end(cur: &Cursor<&[u8]>, what: &str) -> Result<()> {
    let extra = cur.get_ref().len() as u64 - cur.position();
    if extra == 0 {
        Ok(())
    } else {
        Err(Error::Format(format!("{extra} trailing bytes after {what} payload")))
    }
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for word in [
        IDX_IMAGES_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.write_u32::<BigEndian>(word).expect("writing to a Vec");
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.write_u32::<BigEndian>(IDX_LABELS_MAGIC).expect("writing to a Vec");
    out.write_u32::<BigEndian>(labels.len() as u32)
        .expect("writing to a Vec");
    out.extend_from_slice(labels);
    out
}

/// Writes a dataset back out as an IDX pair. Features are quantized to bytes
/// with `round(255 x)`; they must lie in `[0, 1]` and labels must fit a byte.
pub fn write_idx(
    dataset: &Dataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    if rows * cols != dataset.feature_dim {
        return Err(Error::Shape {
            context: "idx image size",
            expected: dataset.feature_dim,
            actual: rows * cols,
        });
    }
    let mut pixels = Vec::with_capacity(dataset.len() * dataset.feature_dim);
    let mut labels = Vec::with_capacity(dataset.len());
    for ex in &dataset.examples {
        for &v in &ex.features {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Format(format!("pixel value {v} outside [0, 1]")));
            }
            pixels.push((v * 255.0).round() as u8);
        }
        let label =
            u8::try_from(ex.label).map_err(|_| Error::Format(format!("label {} does not fit in a byte", ex.label)))?;
        labels.push(label);
    }
    let images = IdxImages {
        count: dataset.len(),
        rows,
        cols,
        pixels,
    };
    write_file(images_path.as_ref(), &encode_idx_images(&images))?;
    write_file(labels_path.as_ref(), &encode_idx_labels(&labels))?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> io::Result<()> {
    fs::write(path, bytes)
}
