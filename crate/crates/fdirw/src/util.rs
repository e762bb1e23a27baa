//! Small numeric helpers shared across modules.

use rayon::prelude::*;

/// Chunk width for deterministic summation. Fixed so that the reduction
/// tree depends only on the input length, never on the worker count.
const SUM_CHUNK: usize = 4096;

/// Below this many elements a parallel dispatch costs more than it saves.
pub(crate) const PAR_THRESHOLD: usize = 4096;

fn pairwise(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        acc
    } else {
        let mid = values.len() / 2;
        pairwise(&values[..mid]) + pairwise(&values[mid..])
    }
}

/// Deterministic pairwise sum: a fixed-shape reduction tree over 4096-wide
/// chunks, each chunk itself summed pairwise. The result is bit-identical
/// for any rayon worker count because the tree shape depends only on the
/// input length.
pub fn det_sum(values: &[f64]) -> f64 {
    if values.len() <= SUM_CHUNK {
        return pairwise(values);
    }
    let partials: Vec<f64> = values.par_chunks(SUM_CHUNK).map(pairwise).collect();
    pairwise(&partials)
}

/// Deterministic pairwise sum of `field[i]` over an index list.
pub fn det_sum_indexed(field: &[f64], indices: &[u32]) -> f64 {
    fn gather_pairwise(field: &[f64], idx: &[u32]) -> f64 {
        if idx.len() <= 16 {
            let mut acc = 0.0;
            for &i in idx {
                acc += field[i as usize];
            }
            acc
        } else {
            let mid = idx.len() / 2;
            gather_pairwise(field, &idx[..mid]) + gather_pairwise(field, &idx[mid..])
        }
    }
    if indices.len() <= SUM_CHUNK {
        return gather_pairwise(field, indices);
    }
    let partials: Vec<f64> = indices
        .par_chunks(SUM_CHUNK)
        .map(|chunk| gather_pairwise(field, chunk))
        .collect();
    pairwise(&partials)
}

/// 64-bit FNV-1a, used to fingerprint geometry so a transfer matrix can be
/// tied to the exact domain it was preconditioned for.
pub struct Fnv1a(u64);

impl Fnv1a {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;

    pub fn new() -> Self {
        Fnv1a(Self::OFFSET)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(Self::PRIME);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    pub fn write_f64(&mut self, v: f64) {
        self.write_u64(v.to_bits());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}
