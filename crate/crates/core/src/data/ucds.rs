//! `UCDS` dataset container, little-endian:
//! magic `"UCDS"`, version `u32`, `D u32`, `N u32`, `k u32`, then `D·N`
//! `f64` samples column-major, then `N` labels as `u16` (`0xFFFF` = absent).

use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::Matrix;

pub const UCDS_MAGIC: &[u8; 4] = b"UCDS";
pub const UCDS_VERSION: u32 = 1;
const NO_LABEL: u16 = 0xFFFF;

pub fn encode_ucds(data: &Dataset) -> Result<Vec<u8>> {
    let (d, n) = (data.dim(), data.len());
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::format("UCDS", format!("{what} {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(20 + d * n * 8 + n * 2);
    out.extend_from_slice(UCDS_MAGIC);
    out.extend_from_slice(&UCDS_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(d, "D")?.to_le_bytes());
    out.extend_from_slice(&to_u32(n, "N")?.to_le_bytes());
    out.extend_from_slice(&to_u32(data.num_classes(), "k")?.to_le_bytes());
    let x = data.samples().matrix();
    for j in 0..n {
        for i in 0..d {
            out.extend_from_slice(&x[(i, j)].to_le_bytes());
        }
    }
    for j in 0..n {
        let l = match data.labels() {
            Some(l) => u16::try_from(l[j])
                .ok()
                .filter(|&v| v != NO_LABEL)
                .ok_or_else(|| Error::format("UCDS", "label does not fit u16"))?,
            None => NO_LABEL,
        };
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_ucds(bytes: &[u8]) -> Result<Dataset> {
    let fail = |m: String| Error::format("UCDS", m);
    if bytes.len() < 20 || &bytes[0..4] != UCDS_MAGIC {
        return Err(fail("missing UCDS magic".into()));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let version = word(4) as u32;
    if version != UCDS_VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let (d, n, k) = (word(8), word(12), word(16));
    let expected = 20 + d * n * 8 + n * 2;
    if bytes.len() != expected {
        return Err(fail(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut x = Matrix::zeros(d, n);
    let mut off = 20;
    for j in 0..n {
        for i in 0..d {
            x[(i, j)] = f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
            off += 8;
        }
    }
    let raw: Vec<u16> = (0..n)
        .map(|j| u16::from_le_bytes(bytes[off + 2 * j..off + 2 * j + 2].try_into().expect("2 bytes")))
        .collect();
    let labels = if raw.iter().all(|&l| l == NO_LABEL) && n > 0 {
        None
    } else if raw.iter().any(|&l| l == NO_LABEL) {
        return Err(fail("mix of labeled and unlabeled samples".into()));
    } else {
        Some(raw.into_iter().map(usize::from).collect())
    };
    Dataset::new(x, labels, k, "UCDS container")
}

pub fn write_ucds(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ucds(data)?).map_err(|e| Error::io(path, e))
}

pub fn read_ucds(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut d = decode_ucds(&bytes)?;
    d.description = format!("UCDS {}", path.display());
    Ok(d)
}
