use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter of a one-vs-all linear classifier: `k` blocks (rows) of length `d`,
/// one per class, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    k: usize,
    d: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(k: usize, d: usize) -> Self {
        WeightMatrix {
            k,
            d,
            data: vec![0.0; k * d],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::invalid("weight matrix needs at least one block"));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("weight matrix blocks have unequal lengths"));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("weight matrix entries must be finite"));
        }
        Ok(WeightMatrix { k, d, data })
    }

    pub fn from_flat(k: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * d {
            return Err(Error::invalid(format!(
                "flat buffer has {} entries, expected {}x{}",
                data.len(),
                k,
                d
            )));
        }
        Ok(WeightMatrix { k, d, data })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn block(&self, y: usize) -> &[f64] {
        &self.data[y * self.d..(y + 1) * self.d]
    }

    pub fn block_mut(&mut self, y: usize) -> &mut [f64] {
        &mut self.data[y * self.d..(y + 1) * self.d]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d.max(1)).take(self.k)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &WeightMatrix) -> bool {
        self.k == other.k && self.d == other.d
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm of each block.
    pub fn block_norms(&self) -> Vec<f64> {
        self.blocks().map(norm2).collect()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &WeightMatrix) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn sub(&self, other: &WeightMatrix) -> WeightMatrix {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        WeightMatrix {
            k: self.k,
            d: self.d,
            data,
        }
    }

    pub fn add(&self, other: &WeightMatrix) -> WeightMatrix {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        WeightMatrix {
            k: self.k,
            d: self.d,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> WeightMatrix {
        WeightMatrix {
            k: self.k,
            d: self.d,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &WeightMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// Convex combination `(1 - t) * self + t * other`.
    pub fn lerp(&self, other: &WeightMatrix, t: f64) -> WeightMatrix {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        WeightMatrix {
            k: self.k,
            d: self.d,
            data,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
