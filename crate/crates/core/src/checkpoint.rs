//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SPHH"                  magic
//! u32 version             currently 1
//! u32 len, [u8; len]      architecture descriptor (UTF-8 `key = value` lines)
//! u32 count               number of parameter records
//! per record:
//!   u32 len, [u8; len]    parameter name
//!   u32 rank
//!   u64 * rank            dims
//!   f64 * prod(dims)      row-major payload
//! ```

use std::path::Path;

use crate::autograd::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SPHH";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub descriptor: String,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Snapshot of every parameter whose name starts with `prefix`.
    pub fn from_store(descriptor: String, store: &ParamStore, prefix: &str) -> Self {
        let params = store
            .iter()
            .filter(|(_, p)| p.name.starts_with(prefix))
            .map(|(_, p)| (p.name.clone(), p.value.clone()))
            .collect();
        Self { descriptor, params }
    }

    pub fn to_store(&self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for (name, t) in &self.params {
            store.add(name.clone(), t.clone())?;
        }
        Ok(store)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_bytes(&mut out, self.descriptor.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            put_bytes(&mut out, name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let descriptor = r.string()?;
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            params.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { descriptor, params })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let ck = Checkpoint {
            descriptor: "k = v".into(),
            params: vec![("w".into(), Tensor::vector(vec![1.0]))],
        };
        let b = ck.to_bytes();
        assert_eq!(&b[..4], b"SPHH");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &5u32.to_le_bytes());
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let ck = Checkpoint {
            descriptor: String::new(),
            params: vec![("w".into(), Tensor::zeros(&[2, 2]))],
        };
        let b = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }

    proptest! {
        #[test]
        fn bit_exact_round_trip(
            raw in proptest::collection::vec(
                ("[a-z.]{1,12}", proptest::collection::vec(1usize..4, 0..3),
                 proptest::collection::vec(any::<u64>(), 27)),
                0..5),
        ) {
            let params: Vec<(String, Tensor)> = raw
                .into_iter()
                .map(|(name, shape, bits)| {
                    let n: usize = shape.iter().product();
                    let data = bits[..n].iter().map(|&b| f64::from_bits(b)).collect();
                    (name, Tensor::new(shape, data).unwrap())
                })
                .collect();
            let ck = Checkpoint { descriptor: "encoder = sage".into(), params };
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
