//! Dataset ingestion and preprocessing for IDX-format image files.
//!
//! The IDX layout is the one MNIST ships in: a big-endian magic word
//! (0x00000803 for image files, 0x00000801 for label files), big-endian
//! u32 dimension sizes, then the raw unsigned bytes. Pixels are scaled to
//! `[0, 1]` by division by 255. Images are optionally grown from 28x28 to
//! 32x32, either by zero-padding a 2-pixel border (the default, which
//! preserves pixel sums) or by bilinear interpolation.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Magic word of an IDX file holding unsigned-byte images.
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Magic word of an IDX file holding unsigned-byte labels.
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Standard file names inside an MNIST directory.
pub const MNIST_FILES: [(&str, &str); 2] = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset.checked_add(4).filter(|&e| e <= bytes.len());
    match end {
        Some(e) => {
            let mut word = [0u8; 4];
            word.copy_from_slice(&bytes[offset..e]);
            Ok(u32::from_be_bytes(word))
        }
        None => Err(Error::format(
            bytes.len() as u64,
            format!("file truncated inside the 4-byte field at offset {offset}"),
        )),
    }
}

/// Images decoded from one IDX file: `count` images of `rows x cols`
/// pixels in `[0, 1]`. Each image is flattened column-major (pixel
/// `(r, c)` at `r + rows*c`) into one column of `pixels`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: DMatrix<f64>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.ncols()
    }
}

/// Parses an IDX image file.
pub fn load_idx_images(path: &Path) -> Result<IdxImages> {
    decode_idx_images(&fs::read(path)?)
}

/// Parses IDX image bytes; see [`load_idx_images`].
pub fn decode_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            0,
            format!("magic {magic:#010x} is not the image magic {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    let pixel_count = count
        .checked_mul(rows)
        .and_then(|p| p.checked_mul(cols))
        .and_then(|p| p.checked_add(16))
        .ok_or_else(|| Error::format(4, "dimension product overflows"))?;
    if bytes.len() != pixel_count {
        return Err(Error::format(
            bytes.len().min(pixel_count) as u64,
            format!(
                "{count} images of {rows}x{cols} need {pixel_count} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    // The stream is image-major, row-major within an image; re-lay each
    // image column-major.
    let mut pixels = DMatrix::zeros(rows * cols, count);
    let mut at = 16;
    for i in 0..count {
        for r in 0..rows {
            for c in 0..cols {
                pixels[(r + rows * c, i)] = bytes[at] as f64 / 255.0;
                at += 1;
            }
        }
    }
    Ok(IdxImages { rows, cols, pixels })
}

/// Parses an IDX label file, checking every label against `num_classes`.
pub fn load_idx_labels(path: &Path, num_classes: usize) -> Result<Vec<usize>> {
    decode_idx_labels(&fs::read(path)?, num_classes)
}

/// Parses IDX label bytes; see [`load_idx_labels`].
pub fn decode_idx_labels(bytes: &[u8], num_classes: usize) -> Result<Vec<usize>> {
    if num_classes == 0 {
        return Err(Error::invalid("num_classes must be at least 1"));
    }
    let magic = read_u32_be(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            0,
            format!("magic {magic:#010x} is not the label magic {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let expected = count
        .checked_add(8)
        .ok_or_else(|| Error::format(4, "label count overflows"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            bytes.len().min(expected) as u64,
            format!("{count} labels need {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let mut labels = Vec::with_capacity(count);
    for &byte in &bytes[8..] {
        let label = byte as usize;
        if label >= num_classes {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        labels.push(label);
    }
    Ok(labels)
}

/// How 28x28 inputs become 32x32.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMode {
    /// Two-pixel zero border on every side; preserves pixel sums.
    ZeroPad,
    /// Bilinear interpolation onto the 32x32 grid.
    Bilinear,
}

/// Zero-pads one column-major 28x28 image to column-major 32x32.
pub fn pad_to_32(image: &[f64]) -> Result<Vec<f64>> {
    if image.len() != 28 * 28 {
        return Err(Error::shape(format!(
            "expected a 28x28 image (784 values), got {}",
            image.len()
        )));
    }
    let mut out = vec![0.0; 32 * 32];
    for c in 0..28 {
        for r in 0..28 {
            out[(r + 2) + 32 * (c + 2)] = image[r + 28 * c];
        }
    }
    Ok(out)
}

/// Bilinearly interpolates one column-major 28x28 image onto a 32x32
/// grid (half-pixel-centered sampling, edge-clamped).
pub fn bilinear_to_32(image: &[f64]) -> Result<Vec<f64>> {
    if image.len() != 28 * 28 {
        return Err(Error::shape(format!(
            "expected a 28x28 image (784 values), got {}",
            image.len()
        )));
    }
    let scale = 28.0 / 32.0;
    let coords: Vec<(usize, usize, f64)> = (0..32)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, 27.0);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(27);
            (lo, hi, src - lo as f64)
        })
        .collect();
    let mut out = vec![0.0; 32 * 32];
    for (oc, &(c0, c1, tc)) in coords.iter().enumerate() {
        for (or, &(r0, r1, tr)) in coords.iter().enumerate() {
            let v00 = image[r0 + 28 * c0];
            let v10 = image[r1 + 28 * c0];
            let v01 = image[r0 + 28 * c1];
            let v11 = image[r1 + 28 * c1];
            let left = v00 + (v10 - v00) * tr;
            let right = v01 + (v11 - v01) * tr;
            out[or + 32 * oc] = left + (right - left) * tc;
        }
    }
    Ok(out)
}

/// Applies the chosen 28->32 resize to every image column.
pub fn resize_images(images: &IdxImages, mode: ResizeMode) -> Result<DMatrix<f64>> {
    if images.rows != 28 || images.cols != 28 {
        return Err(Error::shape(format!(
            "resize expects 28x28 images, got {}x{}",
            images.rows, images.cols
        )));
    }
    let count = images.count();
    let mut out = DMatrix::zeros(32 * 32, count);
    for i in 0..count {
        let col: Vec<f64> = images.pixels.column(i).iter().copied().collect();
        let grown = match mode {
            ResizeMode::ZeroPad => pad_to_32(&col)?,
            ResizeMode::Bilinear => bilinear_to_32(&col)?,
        };
        out.column_mut(i).copy_from_slice(&grown);
    }
    Ok(out)
}

/// One split of a classification dataset: feature columns in `[0, 1]`
/// paired with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    images: DMatrix<f64>,
    labels: Vec<usize>,
}

impl DatasetSplit {
    /// `images` is `features x samples`; every entry must lie in `[0, 1]`.
    pub fn new(images: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if images.ncols() != labels.len() {
            return Err(Error::shape(format!(
                "{} image columns but {} labels",
                images.ncols(),
                labels.len()
            )));
        }
        if images.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid("image values must lie in [0, 1]"));
        }
        Ok(DatasetSplit { images, labels })
    }

    /// Feature matrix, `features x samples`.
    pub fn images(&self) -> &DMatrix<f64> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.images.nrows()
    }

    /// The first `n` samples as a new split.
    pub fn take(&self, n: usize) -> Result<DatasetSplit> {
        if n > self.len() {
            return Err(Error::invalid(format!(
                "cannot take {n} samples from a split of {}",
                self.len()
            )));
        }
        Ok(DatasetSplit {
            images: self.images.columns(0, n).into_owned(),
            labels: self.labels[..n].to_vec(),
        })
    }
}

/// Loads an image/label IDX pair of 28x28 digits, resizes to 32x32, and
/// checks labels against the ten MNIST classes.
pub fn load_mnist_split(
    images_path: &Path,
    labels_path: &Path,
    mode: ResizeMode,
) -> Result<DatasetSplit> {
    let images = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path, 10)?;
    if images.count() != labels.len() {
        return Err(Error::shape(format!(
            "{} images but {} labels",
            images.count(),
            labels.len()
        )));
    }
    DatasetSplit::new(resize_images(&images, mode)?, labels)
}

/// Loads the train and test splits from a directory laid out with the
/// standard MNIST file names.
pub fn load_mnist_dir(dir: &Path, mode: ResizeMode) -> Result<(DatasetSplit, DatasetSplit)> {
    let [(train_x, train_y), (test_x, test_y)] = MNIST_FILES;
    Ok((
        load_mnist_split(&dir.join(train_x), &dir.join(train_y), mode)?,
        load_mnist_split(&dir.join(test_x), &dir.join(test_y), mode)?,
    ))
}

/// Writes images (one `rows*cols` column-major byte image per entry) in
/// IDX format.
pub fn write_idx_images(path: &Path, rows: usize, cols: usize, images: &[Vec<u8>]) -> Result<()> {
    for (i, img) in images.iter().enumerate() {
        if img.len() != rows * cols {
            return Err(Error::shape(format!(
                "image {i} has {} pixels, expected {}",
                img.len(),
                rows * cols
            )));
        }
    }
    let mut bytes = Vec::with_capacity(16 + images.len() * rows * cols);
    bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        // Emit the stream row-major, as the format expects.
        for r in 0..rows {
            for c in 0..cols {
                bytes.push(img[r + rows * c]);
            }
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes labels in IDX format.
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    fs::write(path, bytes)?;
    Ok(())
}
