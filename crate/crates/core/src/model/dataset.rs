use crate::error::{Error, Result};
use sha2::{Digest, Sha256};

/// `n` i.i.d. observations of dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    data: Vec<f64>,
    /// Identifies the RNG stream that produced the samples.
    pub seed_tag: u64,
}

impl Dataset {
    pub fn from_flat(n: usize, d: usize, data: Vec<f64>, seed_tag: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Invalid("dataset needs n >= 1 and d >= 1".into()));
        }
        if data.len() != n * d {
            return Err(Error::Invalid(format!(
                "dataset buffer has {} values, expected {}",
                data.len(),
                n * d
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value in row {}", i / d)));
        }
        Ok(Self { n, d, data, seed_tag })
    }

    pub fn from_rows(rows: &[Vec<f64>], seed_tag: u64) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Invalid("ragged dataset rows".into()));
        }
        Self::from_flat(rows.len(), d, rows.concat(), seed_tag)
    }

    /// Convenience for one-dimensional data.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(values.len(), 1, values.to_vec(), 0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// First eight bytes of a SHA-256 over the raw sample bits.
    pub fn content_hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.d as u64).to_le_bytes());
        for v in &self.data {
            h.update(v.to_bits().to_le_bytes());
        }
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().expect("digest is 32 bytes"))
    }
}
