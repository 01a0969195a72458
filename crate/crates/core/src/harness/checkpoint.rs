//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! magic "MSCMTCKP" | version u32 | payload length u64 | payload
//! payload = fingerprint [32] | stage u8 | epoch u64
//!         | rng seed [32] | rng stream u64 | rng word position u128
//!         | loss trace (u32 count, f64 each)
//!         | config text (u32 length, UTF-8)
//!         | parameters (u32 count; each: u16 name length, name,
//!           u8 rank, u32 dims, f32 values, f32 momentum)
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::pipeline::{Stage, Trained};
use super::train::TrainState;
use crate::diffcore::ParamStore;
use crate::error::{CheckpointFault, Error, Result};
use crate::nets::{build_mscmt_net, build_region_net};

const MAGIC: &[u8; 8] = b"MSCMTCKP";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;

/// A trained network plus everything needed to resume it bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub stage: Stage,
    pub state: TrainState,
    pub params: ParamStore<f32>,
}

fn fault(f: CheckpointFault, detail: impl Into<String>) -> Error {
    Error::checkpoint(f, detail)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| fault(CheckpointFault::CorruptLength, "payload ends early"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).unwrap_or(usize::MAX))?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect())
    }
}

impl Checkpoint {
    pub fn from_trained(t: &Trained, cfg: &RunConfig) -> Self {
        Checkpoint {
            config: cfg.clone(),
            stage: t.stage,
            state: t.state.clone(),
            params: t.net.params().clone(),
        }
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        self.config.fingerprint()
    }

    pub fn epoch(&self) -> usize {
        self.state.epoch
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut p = Vec::new();
        p.extend_from_slice(&self.fingerprint());
        p.push(self.stage.code());
        p.extend_from_slice(&(self.state.epoch as u64).to_le_bytes());
        let rng = &self.state.rng;
        p.extend_from_slice(&rng.get_seed());
        p.extend_from_slice(&rng.get_stream().to_le_bytes());
        p.extend_from_slice(&rng.get_word_pos().to_le_bytes());
        p.extend_from_slice(&(self.state.loss_trace.len() as u32).to_le_bytes());
        for l in &self.state.loss_trace {
            p.extend_from_slice(&l.to_le_bytes());
        }
        let text = self.config.to_text();
        p.extend_from_slice(&(text.len() as u32).to_le_bytes());
        p.extend_from_slice(text.as_bytes());
        p.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for param in self.params.iter() {
            p.extend_from_slice(&(param.name.len() as u16).to_le_bytes());
            p.extend_from_slice(param.name.as_bytes());
            p.push(param.shape.len() as u8);
            for &d in &param.shape {
                p.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in param.value.iter().chain(&param.momentum) {
                p.extend_from_slice(&v.to_le_bytes());
            }
        }

        let mut out = Vec::with_capacity(HEADER_LEN + p.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        out.extend_from_slice(&p);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(fault(CheckpointFault::BadMagic, "not a checkpoint file"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(fault(CheckpointFault::CorruptLength, "truncated header"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(fault(
                CheckpointFault::UnsupportedVersion,
                format!("format version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        let declared = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let actual = (bytes.len() - HEADER_LEN) as u64;
        if declared != actual {
            return Err(fault(
                CheckpointFault::CorruptLength,
                format!("payload is {actual} bytes, header says {declared}"),
            ));
        }

        let mut r = Reader {
            buf: &bytes[HEADER_LEN..],
            pos: 0,
        };
        let fingerprint: [u8; 32] = r.array()?;
        let stage = Stage::from_code(r.u8()?)
            .ok_or_else(|| fault(CheckpointFault::ParameterMismatch, "unknown stage code"))?;
        let epoch = r.u64()? as usize;
        let seed: [u8; 32] = r.array()?;
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.array()?);
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        let n_loss = r.u32()? as usize;
        let loss_trace = (0..n_loss)
            .map(|_| r.u64().map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;

        let text_len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(text_len)?)
            .map_err(|_| fault(CheckpointFault::ParameterMismatch, "config is not UTF-8"))?;
        let config = RunConfig::parse(text)?;
        if config.fingerprint() != fingerprint {
            return Err(fault(
                CheckpointFault::FingerprintMismatch,
                "stored fingerprint does not match the stored config",
            ));
        }

        let n_params = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..n_params {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| {
                fault(
                    CheckpointFault::ParameterMismatch,
                    "parameter name is not UTF-8",
                )
            })?;
            let rank = r.u8()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let value = r.f32s(n)?;
            let momentum = r.f32s(n)?;
            let id = params
                .add(name, shape, value)
                .map_err(|e| fault(CheckpointFault::ParameterMismatch, e.to_string()))?;
            params.get_mut(id).momentum = momentum;
        }
        if r.pos != r.buf.len() {
            return Err(fault(
                CheckpointFault::CorruptLength,
                format!("{} trailing bytes", r.buf.len() - r.pos),
            ));
        }
        Ok(Checkpoint {
            config,
            stage,
            state: TrainState {
                epoch,
                rng,
                loss_trace,
            },
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads a checkpoint for continuing or reusing under `cfg`; refuses one
    /// written under a different configuration.
    pub fn load_for(path: &Path, cfg: &RunConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.check_fingerprint(cfg)?;
        Ok(ck)
    }

    pub fn check_fingerprint(&self, cfg: &RunConfig) -> Result<()> {
        if self.fingerprint() != cfg.fingerprint() {
            return Err(fault(
                CheckpointFault::FingerprintMismatch,
                format!(
                    "checkpoint config {} differs from run config {}",
                    &self.config.fingerprint_hex()[..12],
                    &cfg.fingerprint_hex()[..12]
                ),
            ));
        }
        Ok(())
    }

    /// Rebuilds the network with the stored weights and training state.
    pub fn to_trained(&self) -> Result<Trained> {
        let mut net = match self.stage {
            Stage::Region => build_region_net(&self.config.region_network(), 0)?,
            Stage::Main => build_mscmt_net(&self.config.network, 0)?,
        };
        net.load_params(self.params.clone())
            .map_err(|e| fault(CheckpointFault::ParameterMismatch, e.to_string()))?;
        Ok(Trained {
            stage: self.stage,
            net,
            state: self.state.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::desk();
        cfg.apply("image_size = 32\nhalf_window = 8\nregion_channels = 2,2,2,2\nbase_channels = 2,2,2,2\nfc_hidden = 4")
            .unwrap();
        cfg
    }

    fn sample_checkpoint() -> Checkpoint {
        let cfg = small_cfg();
        let mut t = Trained::fresh(Stage::Main, &cfg).unwrap();
        t.state.epoch = 3;
        t.state.loss_trace = vec![0.5, 0.25, f64::MIN_POSITIVE];
        t.net.params_mut().iter_mut().next().unwrap().momentum[0] = 1.5;
        Checkpoint::from_trained(&t, &cfg)
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let ck = sample_checkpoint();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        assert!(back.to_trained().is_ok());
    }

    #[test]
    fn faults_are_distinct() {
        let bytes = sample_checkpoint().to_bytes();
        let code = |b: &[u8]| match Checkpoint::from_bytes(b) {
            Err(Error::Checkpoint { fault, .. }) => fault,
            other => panic!("expected checkpoint fault, got {other:?}"),
        };
        assert_eq!(
            code(&bytes[..bytes.len() - 1]),
            CheckpointFault::CorruptLength
        );
        assert_eq!(code(&bytes[..15]), CheckpointFault::CorruptLength);
        let mut v = bytes.clone();
        v[8] = 9;
        assert_eq!(code(&v), CheckpointFault::UnsupportedVersion);
        let mut m = bytes.clone();
        m[0] = b'X';
        assert_eq!(code(&m), CheckpointFault::BadMagic);
        let mut f = bytes.clone();
        f[HEADER_LEN] ^= 1;
        assert_eq!(code(&f), CheckpointFault::FingerprintMismatch);
        let mut trailing = bytes;
        trailing.push(0);
        assert_eq!(code(&trailing), CheckpointFault::CorruptLength);
    }

    #[test]
    fn refuses_other_config() {
        let ck = sample_checkpoint();
        let mut other = ck.config.clone();
        assert!(ck.check_fingerprint(&other).is_ok());
        other.epochs += 5;
        assert!(ck.check_fingerprint(&other).is_ok());
        other.network.base_channels = [4, 4, 4, 4];
        assert!(matches!(
            ck.check_fingerprint(&other),
            Err(Error::Checkpoint {
                fault: CheckpointFault::FingerprintMismatch,
                ..
            })
        ));
    }
}
