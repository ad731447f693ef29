//! `UCTL` checkpoint, little-endian:
//!
//! ```text
//! "UCTL" | version u32 | config hash [u8; 32] | iteration u64
//! network count u32, then per network:
//!     name (u16 length + UTF-8) | layer count u32 | activation code u32 per layer
//!     optimizer flag u8 | optimizer step u64 (only when the flag is 1)
//! tensor count u32, then per tensor:
//!     name (u16 length + UTF-8) | rank u32 | dims u32 × rank | f64 × Π dims
//! ```
//!
//! Tensors come network by network: `{net}.{layer}.weight` (`out × in`) and
//! `{net}.{layer}.bias` for every layer, then, with an optimizer,
//! `{tensor}.adam_m` and `{tensor}.adam_v` for each of those in the same order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Activation, Layer, Moments};
use crate::numerics::Mat;
use crate::trainer::TrainState;
use crate::{AdamState, Network};

pub const UCTL_MAGIC: &[u8; 4] = b"UCTL";
pub const UCTL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct StoredNetwork {
    pub name: String,
    pub network: Network,
    pub optimizer: Option<AdamState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: [u8; 32],
    pub iteration: u64,
    pub networks: Vec<StoredNetwork>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn count(&mut self, v: usize) -> Result<()> {
        self.u32(u32::try_from(v).map_err(|_| Error::format("UCTL", format!("count {v} exceeds u32")))?);
        Ok(())
    }
    fn name(&mut self, s: &str) -> Result<()> {
        let len = u16::try_from(s.len()).map_err(|_| Error::format("UCTL", "name too long"))?;
        self.u16(len);
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
    fn tensor(&mut self, name: &str, dims: &[usize], data: &[f64]) -> Result<()> {
        self.name(name)?;
        self.count(dims.len())?;
        for &d in dims {
            self.count(d)?;
        }
        for v in data {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format("UCTL", format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn name(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::format("UCTL", "name is not UTF-8"))
    }
    /// Reads a tensor, checking its name; returns its shape and data.
    fn any_tensor(&mut self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        let got = self.name()?;
        if got != name {
            return Err(Error::format("UCTL", format!("expected tensor {name}, found {got}")));
        }
        let rank = self.u32()? as usize;
        let dims = (0..rank).map(|_| self.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let len = dims
            .iter()
            .try_fold(8usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format("UCTL", "tensor too large"))?;
        let raw = self.take(len)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok((dims, data))
    }

    fn tensor(&mut self, name: &str, dims: &[usize]) -> Result<Vec<f64>> {
        let (shape, data) = self.any_tensor(name)?;
        if shape != dims {
            return Err(Error::format("UCTL", format!("tensor {name}: shape {shape:?}, expected {dims:?}")));
        }
        Ok(data)
    }
}

fn tensor_names(net: &str, layers: usize) -> Vec<String> {
    (0..layers)
        .flat_map(|l| [format!("{net}.{l}.weight"), format!("{net}.{l}.bias")])
        .collect()
}

fn tensor_dims(layers: &[Layer<f64>]) -> Vec<Vec<usize>> {
    layers
        .iter()
        .flat_map(|l| [vec![l.out_dim(), l.in_dim()], vec![l.out_dim()]])
        .collect()
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(UCTL_MAGIC);
        w.u32(UCTL_VERSION);
        w.0.extend_from_slice(&self.config_hash);
        w.u64(self.iteration);
        w.count(self.networks.len())?;
        for s in &self.networks {
            w.name(&s.name)?;
            w.count(s.network.layers().len())?;
            for l in s.network.layers() {
                w.u32(l.activation.code());
            }
            match &s.optimizer {
                Some(opt) => {
                    w.u8(1);
                    w.u64(opt.step);
                }
                None => w.u8(0),
            }
        }
        let tensors: usize = self
            .networks
            .iter()
            .map(|s| s.network.layers().len() * 2 * if s.optimizer.is_some() { 3 } else { 1 })
            .sum();
        w.count(tensors)?;
        for s in &self.networks {
            let names = tensor_names(&s.name, s.network.layers().len());
            let dims = tensor_dims(s.network.layers());
            let params = s.network.params();
            for ((name, d), p) in names.iter().zip(&dims).zip(&params) {
                w.tensor(name, d, p)?;
            }
            if let Some(opt) = &s.optimizer {
                if opt.moments.len() != params.len() {
                    return Err(Error::ShapeMismatch(format!("{} optimizer moments for {} tensors", opt.moments.len(), params.len())));
                }
                for ((name, d), m) in names.iter().zip(&dims).zip(&opt.moments) {
                    w.tensor(&format!("{name}.adam_m"), d, &m.m)?;
                    w.tensor(&format!("{name}.adam_v"), d, &m.v)?;
                }
            }
        }
        Ok(w.0)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != UCTL_MAGIC {
            return Err(Error::format("UCTL", "missing UCTL magic"));
        }
        let version = r.u32()?;
        if version != UCTL_VERSION {
            return Err(Error::format("UCTL", format!("unsupported version {version}")));
        }
        let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let iteration = r.u64()?;
        let count = r.u32()? as usize;
        let mut headers = Vec::new();
        for _ in 0..count {
            let name = r.name()?;
            let layers = r.u32()? as usize;
            let acts = (0..layers)
                .map(|_| {
                    let code = r.u32()?;
                    Activation::from_code(code).ok_or_else(|| Error::format("UCTL", format!("unknown activation code {code}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let step = match r.u8()? {
                0 => None,
                1 => Some(r.u64()?),
                f => return Err(Error::format("UCTL", format!("bad optimizer flag {f}"))),
            };
            headers.push((name, acts, step));
        }
        let expected: usize = headers.iter().map(|(_, a, s)| a.len() * 2 * if s.is_some() { 3 } else { 1 }).sum();
        let tensors = r.u32()? as usize;
        if tensors != expected {
            return Err(Error::format("UCTL", format!("{tensors} tensors, expected {expected}")));
        }
        let mut networks = Vec::new();
        for (name, acts, step) in headers {
            let mut layers = Vec::new();
            for (l, &activation) in acts.iter().enumerate() {
                let wname = format!("{name}.{l}.weight");
                let (dims, data) = r.any_tensor(&wname)?;
                let [rows, cols] = dims[..] else {
                    return Err(Error::format("UCTL", format!("tensor {wname} has rank {}", dims.len())));
                };
                let weight = Mat::from_vec(rows, cols, data)?;
                let bias = r.tensor(&format!("{name}.{l}.bias"), &[rows])?;
                layers.push(Layer {
                    weight,
                    bias,
                    activation,
                });
            }
            let network = Network::new(layers)?;
            let optimizer = match step {
                None => None,
                Some(step) => {
                    let names = tensor_names(&name, network.layers().len());
                    let dims = tensor_dims(network.layers());
                    let moments = names
                        .iter()
                        .zip(&dims)
                        .map(|(n, d)| {
                            Ok(Moments {
                                m: r.tensor(&format!("{n}.adam_m"), d)?,
                                v: r.tensor(&format!("{n}.adam_v"), d)?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Some(AdamState { step, moments })
                }
            };
            networks.push(StoredNetwork {
                name,
                network,
                optimizer,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::format("UCTL", format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            config_hash,
            iteration,
            networks,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Loads and checks the config hash unless `force` is set.
    pub fn load_checked(path: impl AsRef<Path>, expected_hash: &[u8; 32], force: bool) -> Result<Self> {
        let c = Self::load(path)?;
        if !force && &c.config_hash != expected_hash {
            return Err(Error::ConfigHashMismatch);
        }
        Ok(c)
    }

    pub fn from_state(state: &TrainState, config_hash: [u8; 32]) -> Self {
        Self {
            config_hash,
            iteration: state.iteration,
            networks: vec![
                StoredNetwork {
                    name: "encoder".into(),
                    network: state.encoder.clone(),
                    optimizer: Some(state.encoder_opt.clone()),
                },
                StoredNetwork {
                    name: "decoder".into(),
                    network: state.decoder.clone(),
                    optimizer: Some(state.decoder_opt.clone()),
                },
            ],
        }
    }

    pub fn network(&self, name: &str) -> Result<&StoredNetwork> {
        self.networks
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::format("UCTL", format!("no network named {name}")))
    }

    /// Training state with empty telemetry.
    pub fn to_state(&self) -> Result<TrainState> {
        let enc = self.network("encoder")?;
        let dec = self.network("decoder")?;
        let mut state = TrainState::from_networks(enc.network.clone(), dec.network.clone());
        if let Some(o) = &enc.optimizer {
            state.encoder_opt = o.clone();
        }
        if let Some(o) = &dec.optimizer {
            state.decoder_opt = o.clone();
        }
        state.iteration = self.iteration;
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn sample() -> Checkpoint {
        let mut rng = Rng::new(3);
        let enc = Network::encoder(5, 4, 3, &mut rng).unwrap();
        let dec = Network::decoder(3, 4, 5, &mut rng).unwrap();
        let mut state = TrainState::from_networks(enc, dec);
        state.iteration = 17;
        state.encoder_opt.step = 17;
        state.encoder_opt.moments[0].m[1] = 0.25;
        let mut c = Checkpoint::from_state(&state, [7; 32]);
        c.networks.push(StoredNetwork {
            name: "head".into(),
            network: Network::cluster_head(3, 2, &mut rng).unwrap(),
            optimizer: None,
        });
        c
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let c = sample();
        let bytes = c.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.encode().unwrap(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().encode().unwrap();
        assert_eq!(&bytes[..4], b"UCTL");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), UCTL_VERSION);
        assert_eq!(&bytes[8..40], &[7u8; 32]);
        assert_eq!(u64::from_le_bytes(bytes[40..48].try_into().unwrap()), 17);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample().encode().unwrap();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Checkpoint::decode(&magic).is_err());
    }

    #[test]
    fn state_round_trip() {
        let c = sample();
        let s = c.to_state().unwrap();
        assert_eq!(s.iteration, 17);
        assert_eq!(s.encoder_opt.moments[0].m[1], 0.25);
    }
}
