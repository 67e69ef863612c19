//! Dataset ingestion and preparation: bit-exact IDX parsing and writing,
//! [0,1] normalization, deterministic train/validation splitting, rotation
//! augmentation with auxiliary labels, and per-epoch mini-batch plans.
//!
//! The IDX container is parsed byte for byte: big-endian magic
//! (0x00000803 for u8 images, 0x00000801 for labels), big-endian u32
//! dimension sizes, then the raw payload. A second image variant with magic
//! 0x00000D03 carries f64 pixels (big-endian), used for perturbed test sets
//! whose values are no longer byte-quantized.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Vector};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_F64_MAGIC: u32 = 0x0000_0D03;

/// A labelled image set. Pixels are raw 0-255 values straight after
/// loading and live in [0,1] after `normalize`; auxiliary labels (0-4)
/// appear only on rotation-augmented sets. Perturbed evaluation sets may
/// carry pixels outside [0,1] by design.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Vector>,
    pub labels: Vec<u8>,
    pub aux_labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// How to carve a validation subset out of a training set.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub validation_count: usize,
    pub shuffle_seed: u64,
}

struct IdxReader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> IdxReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(
                self.path,
                format!(
                    "truncated at byte offset {}: wanted {} more bytes, file has {}",
                    self.pos,
                    n,
                    self.buf.len() - self.pos
                ),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32_be(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn expect_magic(&mut self, want: u32) -> Result<()> {
        let got = self.u32_be()?;
        if got != want {
            return Err(Error::format(
                self.path,
                format!("bad magic {got:#010x}, expected {want:#010x}"),
            ));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(
                self.path,
                format!("{} trailing bytes after payload", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// (count, rows, cols, pixels) from a u8 image file.
fn parse_images_u8(path: &Path, buf: &[u8]) -> Result<(usize, usize, usize, Vec<Vector>)> {
    let mut r = IdxReader { path, buf, pos: 0 };
    r.expect_magic(IMAGE_MAGIC)?;
    let count = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let pixels = rows.checked_mul(cols).and_then(|p| p.checked_mul(count)).ok_or_else(|| {
        Error::format(path, format!("dimension product {count}x{rows}x{cols} overflows"))
    })?;
    let payload = r.take(pixels)?;
    r.finish()?;
    let per = rows * cols;
    let images = payload
        .chunks_exact(per.max(1))
        .map(|chunk| Vector::from_vec(chunk.iter().map(|&b| b as f64).collect()))
        .collect();
    Ok((count, rows, cols, images))
}

fn parse_labels(path: &Path, buf: &[u8]) -> Result<Vec<u8>> {
    let mut r = IdxReader { path, buf, pos: 0 };
    r.expect_magic(LABEL_MAGIC)?;
    let count = r.u32_be()? as usize;
    let payload = r.take(count)?;
    r.finish()?;
    if let Some(&bad) = payload.iter().find(|&&l| l > 9) {
        return Err(Error::format(path, format!("label {bad} outside the 0-9 class range")));
    }
    Ok(payload.to_vec())
}

/// Loads a u8 image file and its label file. Pixel values stay as raw
/// 0-255 counts (stored as f64) until `normalize` is applied.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let ibuf = read_file(images_path)?;
    let (count, _, _, images) = parse_images_u8(images_path, &ibuf)?;
    let lbuf = read_file(labels_path)?;
    let labels = parse_labels(labels_path, &lbuf)?;
    if labels.len() != count {
        return Err(Error::InvalidInput(format!(
            "{} images but {} labels ({} vs {})",
            count,
            labels.len(),
            images_path.display(),
            labels_path.display(),
        )));
    }
    Ok(Dataset { images, labels, aux_labels: None })
}

/// Loads the f64 image variant (magic 0x00000D03) with its label file.
pub fn load_idx_f64(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let buf = read_file(images_path)?;
    let mut r = IdxReader { path: images_path, buf: &buf, pos: 0 };
    r.expect_magic(IMAGE_F64_MAGIC)?;
    let count = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let per = rows * cols;
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        let chunk = r.take(per * 8)?;
        images.push(Vector::from_vec(
            chunk
                .chunks_exact(8)
                .map(|c| f64::from_be_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                .collect(),
        ));
    }
    r.finish()?;
    let lbuf = read_file(labels_path)?;
    let labels = parse_labels(labels_path, &lbuf)?;
    if labels.len() != count {
        return Err(Error::InvalidInput(format!(
            "{} images but {} labels ({} vs {})",
            count,
            labels.len(),
            images_path.display(),
            labels_path.display(),
        )));
    }
    Ok(Dataset { images, labels, aux_labels: None })
}

fn idx_image_header(magic: u32, count: usize, rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&magic.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out
}

/// Writes u8 images. Every pixel must be an integer in 0-255 (i.e. raw,
/// un-normalized data); this is what makes load-then-write lossless.
pub fn write_idx(
    path: impl AsRef<Path>,
    images: &[Vector],
    rows: usize,
    cols: usize,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = idx_image_header(IMAGE_MAGIC, images.len(), rows, cols);
    for (i, img) in images.iter().enumerate() {
        if img.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "image {i} has {} pixels, expected {}x{}",
                img.len(),
                rows,
                cols
            )));
        }
        for &p in img.as_slice() {
            if !(0.0..=255.0).contains(&p) || p.fract() != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "image {i} holds non-byte pixel {p}; only raw 0-255 data can be written as u8"
                )));
            }
            out.push(p as u8);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes the f64 image variant (magic 0x00000D03, big-endian payload).
pub fn write_idx_f64(
    path: impl AsRef<Path>,
    images: &[Vector],
    rows: usize,
    cols: usize,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = idx_image_header(IMAGE_F64_MAGIC, images.len(), rows, cols);
    for (i, img) in images.iter().enumerate() {
        if img.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "image {i} has {} pixels, expected {}x{}",
                img.len(),
                rows,
                cols
            )));
        }
        for &p in img.as_slice() {
            out.extend_from_slice(&p.to_be_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Divides every pixel by 255. Refuses data that already looks normalized
/// (max pixel <= 1), since dividing twice silently destroys the images.
pub fn normalize(raw: Dataset) -> Result<Dataset> {
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for img in &raw.images {
        for &p in img.as_slice() {
            max = max.max(p);
            min = min.min(p);
        }
    }
    if !raw.images.is_empty() {
        if min < 0.0 || max > 255.0 {
            return Err(Error::InvalidInput(format!(
                "pixel range [{min}, {max}] is outside raw byte range 0-255"
            )));
        }
        if max <= 1.0 {
            return Err(Error::InvalidInput(format!(
                "max pixel is {max}: data already looks normalized, refusing to divide twice"
            )));
        }
    }
    let images = raw
        .images
        .into_iter()
        .map(|img| Vector::from_vec(img.as_slice().iter().map(|&p| p / 255.0).collect()))
        .collect();
    Ok(Dataset { images, labels: raw.labels, aux_labels: raw.aux_labels })
}

/// Deterministic split into (train, validation): indices are shuffled by
/// the seed, the first `validation_count` become validation, the rest keep
/// their shuffled order as the training set. Disjoint and exhaustive.
pub fn split(ds: Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    if spec.validation_count >= ds.len() {
        return Err(Error::InvalidInput(format!(
            "validation count {} must be below the {} available samples",
            spec.validation_count,
            ds.len()
        )));
    }
    let mut order: Vec<u32> = (0..ds.len() as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.shuffle_seed);
    order.shuffle(&mut rng);

    let pick = |indices: &[u32]| -> Dataset {
        Dataset {
            images: indices.iter().map(|&i| ds.images[i as usize].clone()).collect(),
            labels: indices.iter().map(|&i| ds.labels[i as usize]).collect(),
            aux_labels: ds
                .aux_labels
                .as_ref()
                .map(|aux| indices.iter().map(|&i| aux[i as usize]).collect()),
        }
    };
    let validation = pick(&order[..spec.validation_count]);
    let train = pick(&order[spec.validation_count..]);
    Ok((train, validation))
}

/// (magic, count, rows, cols) from an image file header, either the u8 or
/// the f64 variant. Lets callers dispatch on the payload type and carry a
/// set's geometry through to derived files without holding the pixels.
pub fn peek_image_dims(path: impl AsRef<Path>) -> Result<(u32, usize, usize, usize)> {
    let path = path.as_ref();
    let buf = read_file(path)?;
    let mut r = IdxReader { path, buf: &buf, pos: 0 };
    let magic = r.u32_be()?;
    if magic != IMAGE_MAGIC && magic != IMAGE_F64_MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic {magic:#010x}, expected {IMAGE_MAGIC:#010x} or {IMAGE_F64_MAGIC:#010x}"),
        ));
    }
    Ok((magic, r.u32_be()? as usize, r.u32_be()? as usize, r.u32_be()? as usize))
}

/// Rotation angles in degrees and their auxiliary class labels. Positive
/// angles rotate counterclockwise ("left").
pub const ROTATIONS: [(f64, u8); 5] = [(0.0, 0), (15.0, 1), (30.0, 2), (-15.0, 3), (-30.0, 4)];

/// Rotates one 28x28 image by `degrees` (counterclockwise for positive)
/// about the pixel-grid center (13.5, 13.5), sampling with inverse-mapped
/// bilinear interpolation, zero fill outside the frame, output clamped to
/// [0,1].
fn rotate_image(img: &Vector, degrees: f64) -> Vector {
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let c_mid = 13.5;
    let mut out = vec![0.0f64; 28 * 28];
    for r in 0..28 {
        for c in 0..28 {
            // Visual frame: x right, y up. The source location is the
            // output location rotated back by -theta.
            let x = c as f64 - c_mid;
            let y = c_mid - r as f64;
            let sx = x * cos + y * sin;
            let sy = -x * sin + y * cos;
            let src_col = c_mid + sx;
            let src_row = c_mid - sy;

            let r0 = src_row.floor();
            let c0 = src_col.floor();
            let dr = src_row - r0;
            let dc = src_col - c0;
            let at = |rr: f64, cc: f64| -> f64 {
                if (0.0..28.0).contains(&rr) && (0.0..28.0).contains(&cc) {
                    img[rr as usize * 28 + cc as usize]
                } else {
                    0.0
                }
            };
            let v = (1.0 - dr) * (1.0 - dc) * at(r0, c0)
                + (1.0 - dr) * dc * at(r0, c0 + 1.0)
                + dr * (1.0 - dc) * at(r0 + 1.0, c0)
                + dr * dc * at(r0 + 1.0, c0 + 1.0);
            out[r * 28 + c] = v.clamp(0.0, 1.0);
        }
    }
    Vector::from_vec(out)
}

/// Expands every sample into five rotated copies (0, +15, +30, -15, -30
/// degrees), interleaved per source image, tagging each with its rotation
/// class as the auxiliary label. Digit labels are preserved; the 0-degree
/// copy is pixel-identical to the source.
pub fn rotation_augment(ds: &Dataset) -> Result<Dataset> {
    let mut images = Vec::with_capacity(ds.len() * 5);
    let mut labels = Vec::with_capacity(ds.len() * 5);
    let mut aux = Vec::with_capacity(ds.len() * 5);
    for (img, &label) in ds.images.iter().zip(&ds.labels) {
        if img.len() != 784 {
            return Err(Error::InvalidInput(format!(
                "rotation augmentation needs 28x28 images, got {} pixels",
                img.len()
            )));
        }
        for (degrees, class) in ROTATIONS {
            let rotated = if degrees == 0.0 { img.clone() } else { rotate_image(img, degrees) };
            images.push(rotated);
            labels.push(label);
            aux.push(class);
        }
    }
    Ok(Dataset { images, labels, aux_labels: Some(aux) })
}

/// One epoch's worth of shuffled mini-batch index slices. The shuffle is a
/// pure function of the seed; the final batch may be short.
pub struct BatchPlan {
    order: Vec<u32>,
    batch_size: usize,
}

impl BatchPlan {
    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.order.chunks(self.batch_size)
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

pub fn batches(ds: &Dataset, batch_size: usize, epoch_seed: u64) -> BatchPlan {
    assert!(batch_size >= 1, "batch size must be >= 1");
    let mut order: Vec<u32> = (0..ds.len() as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    order.shuffle(&mut rng);
    BatchPlan { order, batch_size }
}

/// Copies the indexed samples into a row-per-sample matrix and a label
/// buffer, reusing the caller's allocations.
pub(crate) fn gather(
    ds: &Dataset,
    indices: &[u32],
    images_out: &mut Matrix,
    labels_out: &mut Vec<usize>,
) {
    debug_assert_eq!(images_out.rows(), indices.len());
    labels_out.clear();
    for (row, &i) in indices.iter().enumerate() {
        images_out.row_mut(row).copy_from_slice(ds.images[i as usize].as_slice());
        labels_out.push(ds.labels[i as usize] as usize);
    }
}
