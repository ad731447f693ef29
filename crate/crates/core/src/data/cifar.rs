//! CIFAR-10 binary batches: each record is one label byte followed by 3072
//! pixel bytes laid out as three 1024-byte row-major planes (R, G, B).

use std::fs;
use std::path::Path;

use crate::data::{Dataset, ImageShape};
use crate::error::{Error, Result};
use crate::Matrix;

pub const CIFAR_PIXELS: usize = 3072;
pub const CIFAR_RECORD: usize = CIFAR_PIXELS + 1;
const CIFAR_CLASSES: usize = 10;

fn byte_to_unit(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

fn unit_to_byte(v: f64) -> u8 {
    (127.5 * (v + 1.0)).round().clamp(0.0, 255.0) as u8
}

/// Parses a batch file; pixels map to `[-1, 1]` via `v / 127.5 − 1`.
pub fn read_cifar10_batch(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::BadRecordSize {
            len: bytes.len() as u64,
            record: CIFAR_RECORD as u64,
        });
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut x = Matrix::zeros(CIFAR_PIXELS, n);
    let mut labels = Vec::with_capacity(n);
    for (j, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = rec[0] as usize;
        if label >= CIFAR_CLASSES {
            return Err(Error::format("CIFAR-10", format!("record {j} has label {label}")));
        }
        labels.push(label);
        for (i, &b) in rec[1..].iter().enumerate() {
            x[(i, j)] = byte_to_unit(b);
        }
    }
    let shape = ImageShape {
        channels: 3,
        height: 32,
        width: 32,
    };
    Ok(Dataset::new(x, Some(labels), CIFAR_CLASSES, format!("CIFAR-10 batch {}", path.display()))?
        .with_image_shape(Some(shape)))
}

/// Writes a dataset in the batch layout; values are quantised with
/// `round(127.5·(v + 1))`. Unlabeled samples are written with label 0.
pub fn write_cifar10_batch(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if data.dim() != CIFAR_PIXELS {
        return Err(Error::dims("write_cifar10_batch", CIFAR_PIXELS, data.dim()));
    }
    let x = data.samples().matrix();
    let mut out = Vec::with_capacity(data.len() * CIFAR_RECORD);
    for j in 0..data.len() {
        let label = data.labels().map_or(0, |l| l[j]);
        out.push(u8::try_from(label).map_err(|_| Error::format("CIFAR-10", "label exceeds u8"))?);
        out.extend((0..CIFAR_PIXELS).map(|i| unit_to_byte(x[(i, j)])));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
