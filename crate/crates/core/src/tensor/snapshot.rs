//! Flat binary weight snapshots.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"TLWS"
//! version u32 = 1
//! count   u32                      number of parameters
//! count x { name_len u32, name utf8, ndim u32, dims u64 x ndim }
//! values  f64 x sum(prod(dims))    concatenated in table order
//! ```
//!
//! The SHA-256 of these bytes is the snapshot checksum.

use super::tape::ParamStore;
use super::{Result as TensorResult, TensorError};
use sha2::{Digest, Sha256};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"TLWS";
const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("not a weight snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("snapshot truncated at byte {0}")]
    Truncated(usize),
    #[error("parameter name is not valid UTF-8")]
    BadName,
    #[error("{0} trailing bytes after snapshot payload")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSnapshot {
    entries: Vec<Entry>,
}

impl WeightSnapshot {
    pub fn capture(store: &ParamStore) -> Self {
        let entries = store
            .iter()
            .map(|p| Entry {
                name: p.name().to_string(),
                shape: p.value().shape().to_vec(),
                values: p.value().data().to_vec(),
            })
            .collect();
        Self { entries }
    }

    /// Writes the stored values back. Names and shapes must line up with the
    /// store's parameter table.
    pub fn apply(&self, store: &mut ParamStore) -> TensorResult<()> {
        if store.len() != self.entries.len() {
            return Err(TensorError::Invalid(format!(
                "snapshot has {} parameters, model has {}",
                self.entries.len(),
                store.len()
            )));
        }
        let ids: Vec<_> = store.ids().collect();
        for (id, e) in ids.into_iter().zip(&self.entries) {
            let p = store.get(id);
            if p.name() != e.name || p.value().shape() != e.shape.as_slice() {
                return Err(TensorError::ShapeMismatch {
                    layer: e.name.clone(),
                    expected: format!("{} {:?}", p.name(), p.value().shape()),
                    found: e.shape.clone(),
                });
            }
            store.value_mut(id).data_mut().copy_from_slice(&e.values);
        }
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n_values: usize = self.entries.iter().map(|e| e.values.len()).sum();
        let mut out = Vec::with_capacity(64 + 8 * n_values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for e in &self.entries {
            for v in &e.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(SnapshotError::Version(version));
        }
        let count = r.u32()? as usize;
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| SnapshotError::BadName)?
                .to_string();
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            table.push((name, shape));
        }
        let mut entries = Vec::with_capacity(count);
        for (name, shape) in table {
            let n: usize = shape.iter().product();
            let values = (0..n)
                .map(|_| r.u64().map(f64::from_bits))
                .collect::<Result<Vec<_>, _>>()?;
            entries.push(Entry { name, shape, values });
        }
        if r.pos != bytes.len() {
            return Err(SnapshotError::Trailing(bytes.len() - r.pos));
        }
        Ok(Self { entries })
    }

    /// Lowercase hex SHA-256 of [`Self::to_bytes`].
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).ok_or(SnapshotError::Truncated(self.pos))?;
        let s = self.bytes.get(self.pos..end).ok_or(SnapshotError::Truncated(self.pos))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Network, NetworkSpec, RngState};

    #[test]
    fn bytes_round_trip_and_checksum_is_stable() {
        let net = Network::new(NetworkSpec::forecaster(4), &mut RngState::new(1, "init")).unwrap();
        let snap = net.snapshot();
        let bytes = snap.to_bytes();
        assert_eq!(&bytes[..4], MAGIC);
        let back = WeightSnapshot::from_bytes(&bytes).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.checksum(), snap.checksum());
        assert_eq!(snap.checksum().len(), 64);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let net = Network::new(NetworkSpec::forecaster(2), &mut RngState::new(1, "init")).unwrap();
        let bytes = net.snapshot().to_bytes();
        assert_eq!(WeightSnapshot::from_bytes(b"XXXX"), Err(SnapshotError::BadMagic));
        assert!(matches!(
            WeightSnapshot::from_bytes(&bytes[..bytes.len() - 3]),
            Err(SnapshotError::Truncated(_))
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(WeightSnapshot::from_bytes(&extra), Err(SnapshotError::Trailing(1)));
    }

    #[test]
    fn restore_rejects_foreign_layout() {
        let a = Network::new(NetworkSpec::forecaster(2), &mut RngState::new(1, "a")).unwrap();
        let mut b = Network::new(NetworkSpec::forecaster(3), &mut RngState::new(1, "b")).unwrap();
        assert!(b.restore(&a.snapshot()).is_err());
    }
}
