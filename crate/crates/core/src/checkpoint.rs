//! Versioned binary container for trained models.
//!
//! Layout (little endian):
//!
//! ```text
//! magic   8 bytes  "CFAUGCKP"
//! version u32
//! header  u64 length + UTF-8 JSON (kind, schema hash, config, telemetry, ...)
//! arrays  u32 count, then per array: u64 length + f64 values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CFAUGCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: serde_json::Value,
    pub arrays: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn new<H: Serialize>(header: &H, arrays: Vec<Vec<f64>>) -> Result<Self> {
        Ok(Checkpoint {
            header: serde_json::to_value(header)?,
            arrays,
        })
    }

    pub fn header_as<H: DeserializeOwned>(&self) -> Result<H> {
        Ok(serde_json::from_value(self.header.clone())?)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::Checkpoint(format!("write failed: {e}"));
        let header = serde_json::to_vec(&self.header)?;
        out.write_all(MAGIC).map_err(io)?;
        out.write_u32::<LittleEndian>(VERSION).map_err(io)?;
        out.write_u64::<LittleEndian>(header.len() as u64).map_err(io)?;
        out.write_all(&header).map_err(io)?;
        out.write_u32::<LittleEndian>(self.arrays.len() as u32).map_err(io)?;
        for a in &self.arrays {
            out.write_u64::<LittleEndian>(a.len() as u64).map_err(io)?;
            for &v in a {
                out.write_f64::<LittleEndian>(v).map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::Checkpoint(format!("read failed: {e}"));
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = input.read_u32::<LittleEndian>().map_err(io)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let len = input.read_u64::<LittleEndian>().map_err(io)? as usize;
        let mut header = vec![0u8; len];
        input.read_exact(&mut header).map_err(io)?;
        let header = serde_json::from_slice(&header)?;
        let count = input.read_u32::<LittleEndian>().map_err(io)?;
        let mut arrays = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let n = input.read_u64::<LittleEndian>().map_err(io)? as usize;
            let mut a = vec![0.0; n];
            input.read_f64_into::<LittleEndian>(&mut a).map_err(io)?;
            arrays.push(a);
        }
        Ok(Checkpoint { header, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f))
    }
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serde adapter for `Vec<f64>` that writes `NaN` as `null` and reads it back,
/// since JSON has no `NaN`.
pub mod nan_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opts: Vec<Option<f64>> = v.iter().map(|x| (!x.is_nan()).then_some(*x)).collect();
        opts.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opts = Vec::<Option<f64>>::deserialize(d)?;
        Ok(opts.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_in_memory() {
        let c = Checkpoint::new(
            &serde_json::json!({"kind": "test", "n": 3}),
            vec![vec![1.0, -2.5, f64::MIN_POSITIVE], vec![]],
        )
        .unwrap();
        let mut buf = Vec::new();
        c.write(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(Checkpoint::read(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::read(&b"not a checkpoint"[..]).is_err());
    }
}
