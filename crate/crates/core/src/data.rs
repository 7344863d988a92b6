//! MNIST ingestion: IDX parsing, reproducible subsets, input encoding and
//! mini-batch ordering.
//!
//! Pixels are encoded as `pixel / 255`, so every input component lies in
//! `[0, 1]`. Inputs are not recentred to `[-1, 1]`; this only rescales the
//! first-layer preactivations and hence the effective range of the stretch
//! parameter for that layer.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{self, StreamPurpose};
use crate::scalar::Scalar;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

/// Images of an IDX3 file, stored contiguously in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::TruncatedFile { expected: offset + 4, found: bytes.len() })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::MagicMismatch { expected, found });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile { expected, found: bytes.len() });
    }
    Ok(IdxImages { count, rows, cols, pixels: bytes[16..expected].to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile { expected, found: bytes.len() });
    }
    let labels = bytes[8..expected].to_vec();
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= NUM_CLASSES) {
        return Err(Error::LabelOutOfRange { index, label });
    }
    Ok(labels)
}

pub fn write_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for word in [IMAGE_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Labelled images; `pixels` holds `len() * rows * cols` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl RawDataset {
    pub fn new(images: IdxImages, labels: Vec<u8>) -> Result<Self> {
        if images.count != labels.len() {
            return Err(Error::CountMismatch { images: images.count, labels: labels.len() });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= NUM_CLASSES) {
            return Err(Error::LabelOutOfRange { index, label });
        }
        Ok(Self { rows: images.rows, cols: images.cols, pixels: images.pixels, labels })
    }

    /// Load an image file and its label file.
    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        let images = parse_idx_images(&fs::read(images)?)?;
        let labels = parse_idx_labels(&fs::read(labels)?)?;
        Self::new(images, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[index * size..(index + 1) * size]
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn to_idx(&self) -> (IdxImages, Vec<u8>) {
        let images = IdxImages { count: self.len(), rows: self.rows, cols: self.cols, pixels: self.pixels.clone() };
        (images, self.labels.clone())
    }

    fn select(&self, indices: &[usize]) -> Self {
        let mut pixels = Vec::with_capacity(indices.len() * self.rows * self.cols);
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self { rows: self.rows, cols: self.cols, pixels, labels }
    }

    /// `n` samples drawn without replacement, determined by `seed` alone.
    pub fn subset(&self, n: usize, seed: u64) -> Result<Self> {
        if n > self.len() {
            return Err(Error::SubsetTooLarge { requested: n, available: self.len() });
        }
        let mut rng = rng::derived_stream(seed, StreamPurpose::Subset, 0, 0, 0);
        let mut indices: Vec<usize> = (0..self.len()).collect();
        // partial Fisher-Yates: the first n slots end up a uniform n-subset
        for i in 0..n {
            let j = i + rng::uniform_index(&mut rng, self.len() - i);
            indices.swap(i, j);
        }
        indices.truncate(n);
        Ok(self.select(&indices))
    }

    pub fn encode<T: Scalar>(&self) -> EncodedDataset<T> {
        let dim = self.rows * self.cols;
        let inputs = self.pixels.iter().map(|&p| encode_pixel(p)).collect();
        EncodedDataset { dim, inputs, labels: self.labels.clone() }
    }
}

fn encode_pixel<T: Scalar>(p: u8) -> T {
    T::of(p as f64 / 255.0)
}

/// Flatten an image row-major into an input vector with components `pixel / 255`.
pub fn encode<T: Scalar>(image: &[u8]) -> Vec<T> {
    image.iter().map(|&p| encode_pixel(p)).collect()
}

/// Network-ready samples: `inputs` holds `len() * dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset<T> {
    dim: usize,
    inputs: Vec<T>,
    labels: Vec<u8>,
}

impl<T: Scalar> EncodedDataset<T> {
    pub fn from_parts(dim: usize, inputs: Vec<T>, labels: Vec<u8>) -> Result<Self> {
        if inputs.len() != dim * labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} input values for {} samples of dimension {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self { dim, inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input(&self, index: usize) -> &[T] {
        &self.inputs[index * self.dim..(index + 1) * self.dim]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index] as usize
    }
}

/// Seed-determined visiting order for one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub epoch_seed: u64,
    pub batch_size: usize,
    pub order: Vec<usize>,
}

impl BatchPlan {
    pub fn new(count: usize, batch_size: usize, epoch_seed: u64) -> Self {
        assert!(batch_size >= 1, "batch size must be positive");
        let mut order: Vec<usize> = (0..count).collect();
        rng::shuffle(&mut order, &mut rng::stream(epoch_seed));
        Self { epoch_seed, batch_size, order }
    }

    pub fn batches(&self) -> std::slice::Chunks<'_, usize> {
        self.order.chunks(self.batch_size)
    }
}

/// Index batches covering a seed-determined permutation of `0..count`.
pub fn shuffled_batches(count: usize, batch_size: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
    BatchPlan::new(count, batch_size, epoch_seed).batches().map(<[usize]>::to_vec).collect()
}
