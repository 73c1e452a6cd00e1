//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        b"SSCK"
//! version      u32
//! seed         u64
//! config_hash  u64
//! config_len   u32, then config_len bytes of UTF-8 (canonical key=value lines)
//! n_records    u32
//! per record:  name_len u32, name bytes, ndim u32, ndim × u64 dims,
//!              prod(dims) × f64 data
//! ```

use std::fs;
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SSCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub seed: u64,
    pub config_hash: u64,
    pub config: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ParamStore,
}

impl Checkpoint {
    /// Fails unless the stored config hash equals `expected`.
    pub fn verify_hash(&self, expected: u64) -> Result<()> {
        if self.header.config_hash != expected {
            return Err(Error::ConfigHash {
                found: self.header.config_hash,
                expected,
            });
        }
        Ok(())
    }
}

pub fn encode(params: &ParamStore, seed: u64, config_hash: u64, config: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.numel() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&config_hash.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(r.corrupt(0, "bad magic; not a checkpoint file"));
    }
    let format_version = r.u32("version")?;
    if format_version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: format_version,
            expected: FORMAT_VERSION,
        });
    }
    let seed = r.u64("seed")?;
    let config_hash = r.u64("config hash")?;
    let config_len = r.u32("config length")? as usize;
    let at = r.pos;
    let config = String::from_utf8(r.take(config_len, "config")?.to_vec())
        .map_err(|_| r.corrupt(at, "config text is not UTF-8"))?;
    let n_records = r.u32("record count")?;

    let mut params = ParamStore::new();
    for _ in 0..n_records {
        let start = r.pos;
        let name_len = r.u32("name length")? as usize;
        let name = String::from_utf8(r.take(name_len, "name")?.to_vec())
            .map_err(|_| r.corrupt(start, "parameter name is not UTF-8"))?;
        let ndim = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64("dimension")? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| r.corrupt(start, "size overflow"))?, "data")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.insert(name, Tensor::new(&shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(r.corrupt(r.pos, "trailing bytes after last record"));
    }
    Ok(Checkpoint {
        header: CheckpointHeader {
            format_version,
            seed,
            config_hash,
            config,
        },
        params,
    })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ParamStore,
    seed: u64,
    config_hash: u64,
    config: &str,
) -> Result<()> {
    fs::write(path, encode(params, seed, config_hash, config))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode(&fs::read(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, offset: usize, message: &str) -> Error {
        Error::CorruptCheckpoint {
            offset,
            message: message.to_string(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt(self.pos, &format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamStore::new();
        p.insert_uniform("a.weight", &[3, 2], &mut rng);
        p.insert_uniform("a.bias", &[3], &mut rng);
        p.insert("scalar", Tensor::scalar(-0.0));
        p
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = sample();
        let ck = decode(&encode(&p, 42, 0xdead_beef, "d_model=4\n")).unwrap();
        assert_eq!(ck.header.seed, 42);
        assert_eq!(ck.header.config, "d_model=4\n");
        for ((n1, t1), (n2, t2)) in p.iter().zip(ck.params.iter()) {
            assert_eq!(n1, n2);
            let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn truncated_file_reports_offset() {
        let bytes = encode(&sample(), 1, 2, "");
        let err = decode(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::CorruptCheckpoint { offset, .. } if offset > 0), "{err}");
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let mut bytes = encode(&sample(), 1, 2, "");
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        let msg = decode(&bytes).unwrap_err().to_string();
        assert!(msg.contains('7') && msg.contains('1'), "{msg}");
    }

    #[test]
    fn hash_mismatch_prints_both_hashes() {
        let ck = decode(&encode(&sample(), 1, 0xabc, "")).unwrap();
        assert!(ck.verify_hash(0xabc).is_ok());
        let msg = ck.verify_hash(0x123).unwrap_err().to_string();
        assert!(msg.contains("abc") && msg.contains("123"), "{msg}");
    }
}
