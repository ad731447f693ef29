//! Datasets, augmentations and mini-batching.
//!
//! Ground-truth labels travel with a [`Dataset`] but training code only ever
//! receives a [`SampleView`], which has no way to reach them.

mod augment;
mod batch;
mod cifar;
mod pnm;
mod synthetic;
mod ucds;

pub use augment::{augment, Augmentation, AugmentationSpec};
pub use batch::{Batch, BatchIter};
pub use pnm::{encode_pgm, encode_ppm, signed_unit_to_byte, unit_to_byte};
pub use cifar::{read_cifar10_batch, write_cifar10_batch, CIFAR_PIXELS, CIFAR_RECORD};
pub use synthetic::{gen_subspace_mixture, SubspaceMixture};
pub use ucds::{decode_ucds, encode_ucds, read_ucds, write_ucds, UCDS_MAGIC, UCDS_VERSION};

use crate::error::{Error, Result};
use crate::Matrix;

/// Channel-major image layout `(channels, height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Known image layouts by flattened length.
    pub fn for_dim(d: usize) -> Option<Self> {
        match d {
            3072 => Some(Self { channels: 3, height: 32, width: 32 }),
            1024 => Some(Self { channels: 1, height: 32, width: 32 }),
            784 => Some(Self { channels: 1, height: 28, width: 28 }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Matrix,
    labels: Option<Vec<usize>>,
    num_classes: usize,
    unit_norm: bool,
    image: Option<ImageShape>,
    pub description: String,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Option<Vec<usize>>, num_classes: usize, description: impl Into<String>) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::NonFinite("Dataset"));
        }
        if let Some(l) = &labels {
            if l.len() != x.cols() {
                return Err(Error::LengthMismatch(l.len(), x.cols()));
            }
            if let Some(&bad) = l.iter().find(|&&c| c >= num_classes) {
                return Err(Error::IndexOutOfRange {
                    index: bad,
                    limit: num_classes,
                });
            }
        }
        let unit_norm = x.cols() > 0 && (0..x.cols()).all(|j| (x.col_norm(j) - 1.0).abs() <= 1e-8);
        Ok(Self {
            image: ImageShape::for_dim(x.rows()),
            x,
            labels,
            num_classes,
            unit_norm,
            description: description.into(),
        })
    }

    pub fn with_image_shape(mut self, shape: Option<ImageShape>) -> Self {
        self.image = shape;
        self
    }

    pub fn samples(&self) -> SampleView<'_> {
        SampleView {
            x: &self.x,
            unit_norm: self.unit_norm,
            image: self.image,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.x.rows()
    }

    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.cols() == 0
    }

    pub fn is_unit_norm(&self) -> bool {
        self.unit_norm
    }

    pub fn image_shape(&self) -> Option<ImageShape> {
        self.image
    }

    /// Same samples with the given labels; used by tests that check labels
    /// never reach training.
    pub fn relabeled(&self, labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |&m| m + 1).max(self.num_classes);
        let mut d = Self::new(self.x.clone(), Some(labels), k, self.description.clone())?;
        d.image = self.image;
        Ok(d)
    }
}

/// Label-free view handed to training code.
#[derive(Clone, Copy, Debug)]
pub struct SampleView<'a> {
    x: &'a Matrix,
    unit_norm: bool,
    image: Option<ImageShape>,
}

impl<'a> SampleView<'a> {
    pub fn matrix(&self) -> &'a Matrix {
        self.x
    }

    pub fn dim(&self) -> usize {
        self.x.rows()
    }

    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.cols() == 0
    }

    pub fn is_unit_norm(&self) -> bool {
        self.unit_norm
    }

    pub fn image_shape(&self) -> Option<ImageShape> {
        self.image
    }

    pub fn sample(&self, i: usize) -> Vec<f64> {
        self.x.col(i)
    }
}
