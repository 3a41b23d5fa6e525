use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Named parameter arrays in insertion order. Every mutation bumps a
/// version counter, which is how stale tapes are detected.
#[derive(Debug)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    uid: u64,
    version: u64,
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.clone(),
            uid: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.tensors == other.tensors
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            uid: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        self.version += 1;
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        self.version += 1;
        &mut self.tensors[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub(crate) fn stamp(&self) -> (u64, u64) {
        (self.uid, self.version)
    }

    /// Replaces every tensor, keeping names; shapes must match.
    pub fn assign(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != self.tensors.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter count",
                expected: self.tensors.len(),
                got: values.len(),
            });
        }
        for (cur, new) in self.tensors.iter().zip(&values) {
            if cur.shape() != new.shape() {
                return Err(Error::DimensionMismatch {
                    what: "parameter shape",
                    expected: cur.len(),
                    got: new.len(),
                });
            }
        }
        self.tensors = values;
        self.version += 1;
        Ok(())
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.iter() {
            h.update(name.as_bytes());
            h.update((t.rows() as u64).to_le_bytes());
            h.update((t.cols() as u64).to_le_bytes());
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        crate::body::skeleton::hex16(&h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_tracks_values_and_names() {
        let mut a = ParamStore::new();
        let id = a.add("w", Tensor::row(vec![1.0, 2.0]));
        let mut b = ParamStore::new();
        b.add("w", Tensor::row(vec![1.0, 2.0]));
        assert_eq!(a.digest(), b.digest());
        a.get_mut(id).data_mut()[0] = 1.5;
        assert_ne!(a.digest(), b.digest());
        let mut c = ParamStore::new();
        c.add("v", Tensor::row(vec![1.0, 2.0]));
        assert_ne!(c.digest(), b.digest());
        assert_eq!(a.id("w"), Some(id));
        assert_eq!(a.scalar_count(), 2);
    }

    #[test]
    fn assign_checks_shapes() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(2, 2));
        assert!(s.assign(vec![Tensor::zeros(1, 4)]).is_err());
        assert!(s.assign(vec![]).is_err());
        s.assign(vec![Tensor::filled(2, 2, 3.0)]).unwrap();
        assert_eq!(s.get(s.id("w").unwrap()).data(), &[3.0; 4]);
    }
}
