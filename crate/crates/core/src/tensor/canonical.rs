use rayon::prelude::*;

use crate::error::{Error, Result};

/// One weighted rank-one term `weight · x ⊗ y ⊗ z`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOneTerm {
    pub weight: f64,
    /// Folded quadrature index the term was generated from.
    pub index: usize,
    pub factors: [Vec<f64>; 3],
}

/// Rank-R separable function on an `n × n × n` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalTensor {
    pub n: usize,
    pub terms: Vec<RankOneTerm>,
}

const MAGIC: &[u8; 4] = b"PBCT";
const VERSION: u32 = 1;

impl CanonicalTensor {
    pub fn new(n: usize) -> Self {
        Self { n, terms: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn push(&mut self, term: RankOneTerm) {
        debug_assert!(term.factors.iter().all(|f| f.len() == self.n));
        self.terms.push(term);
    }

    pub fn eval(&self, i: usize, j: usize, k: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight * t.factors[0][i] * t.factors[1][j] * t.factors[2][k])
            .sum()
    }

    /// Dense node field with `z` fastest.
    pub fn materialize(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n * n];
        out.par_chunks_mut(n * n).enumerate().for_each(|(i, slab)| {
            for t in &self.terms {
                let wx = t.weight * t.factors[0][i];
                if wx == 0.0 {
                    continue;
                }
                let (fy, fz) = (&t.factors[1], &t.factors[2]);
                for (j, row) in slab.chunks_mut(n).enumerate() {
                    let wxy = wx * fy[j];
                    if wxy == 0.0 {
                        continue;
                    }
                    for (v, z) in row.iter_mut().zip(fz) {
                        *v += wxy * z;
                    }
                }
            }
        });
        out
    }

    /// Flat little-endian container: magic, version, `n`, rank, then per term
    /// the weight, quadrature index and the three factor vectors.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.rank() * (16 + 24 * self.n));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.rank() as u64).to_le_bytes());
        for t in &self.terms {
            out.extend_from_slice(&t.weight.to_le_bytes());
            out.extend_from_slice(&(t.index as u64).to_le_bytes());
            for f in &t.factors {
                for v in f {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteCursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("not a canonical tensor container".into()));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported tensor version {version}")));
        }
        let n = cur.u64()? as usize;
        let rank = cur.u64()? as usize;
        let mut t = CanonicalTensor::new(n);
        for _ in 0..rank {
            let weight = cur.f64()?;
            let index = cur.u64()? as usize;
            let mut factors: [Vec<f64>; 3] = Default::default();
            for f in &mut factors {
                *f = (0..n).map(|_| cur.f64()).collect::<Result<_>>()?;
            }
            t.push(RankOneTerm {
                weight,
                index,
                factors,
            });
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after tensor".into()));
        }
        Ok(t)
    }
}

pub(crate) struct ByteCursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
